#include "memoria/retrieval.hpp"

#include <algorithm>
#include <future>
#include <queue>

#include "memoria/error.hpp"

namespace memoria {

namespace {

constexpr std::size_t kParallelThreshold = 4096;

std::string join_words(const std::vector<std::string>& words) {
  std::string out;
  for (const auto& w : words) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

std::size_t slot(Substore s) { return static_cast<std::size_t>(s); }

constexpr std::array<Substore, 3> kSubstores = {Substore::procedural, Substore::semantic,
                                                Substore::episodic};

}  // namespace

void RetrievalQuery::validate() const {
  if (k_procedural < 0 || k_semantic < 0 || k_episodic < 0) {
    fail(ErrorCode::reject_invalid, "top-k values must be non-negative");
  }
  if (start && end && *start > *end) {
    fail(ErrorCode::reject_invalid, "retrieval window start is after its end");
  }
}

bool RetrievalQuery::admits(Timestamp t) const {
  return (!start || *start <= t) && (!end || t <= *end);
}

int RetrievalQuery::k_for(Substore s) const {
  switch (s) {
    case Substore::procedural: return k_procedural;
    case Substore::semantic: return k_semantic;
    case Substore::episodic: return k_episodic;
  }
  return 0;
}

std::vector<RetrievalHit>& RetrievalResult::group(Substore s) {
  switch (s) {
    case Substore::procedural: return procedural;
    case Substore::semantic: return semantic;
    case Substore::episodic: return episodic;
  }
  return semantic;
}

const std::vector<RetrievalHit>& RetrievalResult::group(Substore s) const {
  return const_cast<RetrievalResult*>(this)->group(s);
}

std::vector<MemoryRef> RetrievalResult::refs() const {
  std::vector<MemoryRef> out;
  for (const auto s : kSubstores) {
    for (const auto& h : group(s)) out.push_back(h.ref);
  }
  return out;
}

bool ranks_before(const RetrievalHit& a, const RetrievalHit& b) {
  if (a.score != b.score) return a.score > b.score;
  if (a.created_at != b.created_at) return a.created_at > b.created_at;
  return a.ref.id < b.ref.id;
}

IndexRecord index_record(const SemanticEntry& e) {
  return {e.id, Substore::semantic, e.content + ' ' + join_words(e.keywords), e.created_at};
}

IndexRecord index_record(const EpisodicEntry& e) {
  return {e.id, Substore::episodic, e.summary + ' ' + join_words(e.keywords), e.created_at};
}

IndexRecord index_record(const ProceduralEntry& e) {
  return {e.id, Substore::procedural, e.sentence + ' ' + e.key, e.updated_at};
}

std::vector<IndexRecord> index_records(const MemoryStore& store) {
  std::vector<IndexRecord> out;
  for (const auto& e : store.semantic()) out.push_back(index_record(e));
  for (const auto& e : store.episodic()) out.push_back(index_record(e));
  for (const auto& [key, e] : store.procedural()) out.push_back(index_record(e));
  return out;
}

MemoryIndex::MemoryIndex(std::shared_ptr<const EmbeddingProvider> embedder)
    : embedder_(std::move(embedder)) {
  if (!embedder_) fail(ErrorCode::reject_invalid, "index needs an embedding provider");
}

void MemoryIndex::upsert(std::span<const IndexRecord> records) {
  std::set<MemoryRef> batch;
  for (const auto& r : records) {
    const MemoryRef ref{r.substore, r.id};
    if (contains(ref) || !batch.insert(ref).second) {
      fail(ErrorCode::reject_invalid,
           "duplicate index record " + std::string(to_string(r.substore)) + "/" +
               std::to_string(r.id));
    }
  }
  std::vector<Entry> prepared;
  prepared.reserve(records.size());
  for (const auto& r : records) {
    auto v = embedder_->embed(r.text);
    const double norm = l2_norm(v);
    prepared.push_back(Entry{r, std::move(v), norm});
  }

  auto order = [](const Entry& a, const Entry& b) {
    if (a.record.created_at != b.record.created_at) return a.record.created_at < b.record.created_at;
    return a.record.id < b.record.id;
  };
  for (auto& e : prepared) {
    auto& g = group(e.record.substore);
    g.insert(std::upper_bound(g.begin(), g.end(), e, order), std::move(e));
  }
}

void MemoryIndex::remove(MemoryRef ref) {
  auto& g = group(ref.substore);
  std::erase_if(g, [&](const Entry& e) { return e.record.id == ref.id; });
}

bool MemoryIndex::contains(MemoryRef ref) const {
  const auto& g = group(ref.substore);
  return std::any_of(g.begin(), g.end(), [&](const Entry& e) { return e.record.id == ref.id; });
}

std::size_t MemoryIndex::size() const {
  std::size_t n = 0;
  for (const auto& g : groups_) n += g.size();
  return n;
}

std::vector<RetrievalHit> MemoryIndex::search_group(Substore s, const RetrievalQuery& query,
                                                    const Embedding& probe, double probe_norm,
                                                    const std::set<MemoryRef>& exclude) const {
  const auto k = static_cast<std::size_t>(query.k_for(s));
  if (k == 0) return {};
  const auto& g = group(s);

  auto first = g.begin();
  auto last = g.end();
  // Canonical procedural entries are matched regardless of the event window.
  if (s != Substore::procedural) {
    if (query.start) {
      first = std::lower_bound(g.begin(), g.end(), *query.start, [](const Entry& e, Timestamp t) {
        return e.record.created_at < t;
      });
    }
    if (query.end) {
      last = std::upper_bound(first, g.end(), *query.end, [](Timestamp t, const Entry& e) {
        return t < e.record.created_at;
      });
    }
  }

  // Max-heap on "worst kept hit" so the weakest is evicted first.
  std::priority_queue<RetrievalHit, std::vector<RetrievalHit>, decltype(&ranks_before)> heap(
      &ranks_before);
  for (auto it = first; it != last; ++it) {
    const MemoryRef ref{s, it->record.id};
    if (exclude.contains(ref)) continue;
    // Same arithmetic as oracle_scan so scores agree bit for bit.
    const double denom = probe_norm * it->norm;
    const double score = denom > 0.0 ? dot(probe, it->vector) / denom : 0.0;
    RetrievalHit hit{ref, score, it->record.created_at, {}};
    if (heap.size() < k) {
      hit.text = it->record.text;
      heap.push(std::move(hit));
    } else if (ranks_before(hit, heap.top())) {
      hit.text = it->record.text;
      heap.pop();
      heap.push(std::move(hit));
    }
  }
  std::vector<RetrievalHit> out;
  out.reserve(heap.size());
  while (!heap.empty()) {
    out.push_back(heap.top());
    heap.pop();
  }
  std::reverse(out.begin(), out.end());
  return out;
}

RetrievalResult MemoryIndex::search(const RetrievalQuery& query,
                                    const std::set<MemoryRef>& exclude) const {
  query.validate();
  const Embedding probe = embedder_->embed(query.keywords);
  const double probe_norm = l2_norm(probe);
  RetrievalResult result;
  if (size() >= kParallelThreshold) {
    std::array<std::future<std::vector<RetrievalHit>>, 3> jobs;
    for (const auto s : kSubstores) {
      jobs[slot(s)] = std::async(std::launch::async, [&, s] {
        return search_group(s, query, probe, probe_norm, exclude);
      });
    }
    for (const auto s : kSubstores) result.group(s) = jobs[slot(s)].get();
  } else {
    for (const auto s : kSubstores) result.group(s) = search_group(s, query, probe, probe_norm, exclude);
  }
  return result;
}

RetrievalResult MemoryIndex::oracle_scan(const RetrievalQuery& query,
                                         const std::set<MemoryRef>& exclude) const {
  query.validate();
  const Embedding probe = embedder_->embed(query.keywords);
  const double probe_norm = l2_norm(probe);
  RetrievalResult result;
  for (const auto s : kSubstores) {
    std::vector<RetrievalHit> all;
    for (const auto& e : group(s)) {
      const bool in_window = s == Substore::procedural || query.admits(e.record.created_at);
      if (!in_window || exclude.contains(MemoryRef{s, e.record.id})) continue;
      const double denom = probe_norm * l2_norm(e.vector);
      const double cosine = denom > 0.0 ? dot(probe, e.vector) / denom : 0.0;
      all.push_back(RetrievalHit{{s, e.record.id}, cosine, e.record.created_at, e.record.text});
    }
    std::stable_sort(all.begin(), all.end(), [](const RetrievalHit& a, const RetrievalHit& b) {
      if (a.score != b.score) return a.score > b.score;
      if (a.created_at != b.created_at) return a.created_at > b.created_at;
      return a.ref.id < b.ref.id;
    });
    const auto k = static_cast<std::size_t>(query.k_for(s));
    if (all.size() > k) all.resize(k);
    result.group(s) = std::move(all);
  }
  return result;
}

std::vector<IndexRecord> MemoryIndex::records() const {
  std::vector<IndexRecord> out;
  for (const auto& g : groups_) {
    for (const auto& e : g) out.push_back(e.record);
  }
  return out;
}

std::vector<VisualMatch> visual_match(std::span<const std::string> descriptors,
                                      const MemoryStore& store, const EmbeddingProvider& embedder,
                                      double threshold) {
  std::vector<std::pair<const SemanticEntry*, Embedding>> concepts;
  for (const auto& e : store.semantic()) {
    if (e.category == SemanticCategory::visual_concept && e.visual_ref) {
      concepts.emplace_back(&e, embedder.embed(e.visual_ref->description));
    }
  }
  std::vector<VisualMatch> out;
  if (concepts.empty()) return out;
  for (const auto& descriptor : descriptors) {
    const Embedding probe = embedder.embed(descriptor);
    std::optional<RetrievalHit> best;
    for (const auto& [entry, vec] : concepts) {
      RetrievalHit hit{{Substore::semantic, entry->id}, dot(probe, vec), entry->created_at, {}};
      if (!best || ranks_before(hit, *best)) best = hit;
    }
    if (best && best->score >= threshold) {
      out.push_back(VisualMatch{descriptor, best->ref.id, best->score});
    }
  }
  return out;
}

}  // namespace memoria
