#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "memoria/embedding.hpp"
#include "memoria/memory_store.hpp"
#include "memoria/timestamp.hpp"

namespace memoria {

struct RetrievalQuery {
  static constexpr int kDefaultProcedural = 2;
  static constexpr int kDefaultSemantic = 4;
  static constexpr int kDefaultEpisodic = 2;

  std::string keywords;
  std::optional<Timestamp> start;
  std::optional<Timestamp> end;
  int k_procedural = kDefaultProcedural;
  int k_semantic = kDefaultSemantic;
  int k_episodic = kDefaultEpisodic;

  // Throws reject_invalid for negative k or start > end.
  void validate() const;
  bool admits(Timestamp t) const;
  int k_for(Substore s) const;
  bool operator==(const RetrievalQuery&) const = default;
};

struct RetrievalHit {
  MemoryRef ref;
  double score = 0.0;
  Timestamp created_at;
  std::string text;
  bool operator==(const RetrievalHit&) const = default;
};

struct RetrievalResult {
  std::vector<RetrievalHit> procedural;
  std::vector<RetrievalHit> semantic;
  std::vector<RetrievalHit> episodic;

  std::vector<RetrievalHit>& group(Substore s);
  const std::vector<RetrievalHit>& group(Substore s) const;
  std::vector<MemoryRef> refs() const;
  bool empty() const { return procedural.empty() && semantic.empty() && episodic.empty(); }
  bool operator==(const RetrievalResult&) const = default;
};

// Ranking within a group: higher score, then newer, then lower id.
bool ranks_before(const RetrievalHit& a, const RetrievalHit& b);

struct IndexRecord {
  std::int64_t id = 0;
  Substore substore = Substore::semantic;
  std::string text;
  Timestamp created_at;
  bool operator==(const IndexRecord&) const = default;
};

IndexRecord index_record(const SemanticEntry& e);
IndexRecord index_record(const EpisodicEntry& e);
IndexRecord index_record(const ProceduralEntry& e);
std::vector<IndexRecord> index_records(const MemoryStore& store);

// Embedding index over the three retrievable substores. Each substore keeps
// its records ordered by (created_at, id) so time windows are resolved by
// binary search before scoring.
//
// Const members are safe to call concurrently; mutation needs exclusive access.
class MemoryIndex {
 public:
  explicit MemoryIndex(std::shared_ptr<const EmbeddingProvider> embedder);

  // All-or-nothing; duplicate (substore, id), in the index or within the
  // batch, throws reject_invalid.
  void upsert(std::span<const IndexRecord> records);
  void remove(MemoryRef ref);
  bool contains(MemoryRef ref) const;
  std::size_t size() const;

  RetrievalResult search(const RetrievalQuery& query, const std::set<MemoryRef>& exclude = {}) const;
  // Exhaustive reference scan: exact cosine against every record, full sort.
  RetrievalResult oracle_scan(const RetrievalQuery& query,
                              const std::set<MemoryRef>& exclude = {}) const;

  // Records in (substore, created_at, id) order.
  std::vector<IndexRecord> records() const;
  const EmbeddingProvider& embedder() const { return *embedder_; }
  std::shared_ptr<const EmbeddingProvider> embedder_ptr() const { return embedder_; }

 private:
  struct Entry {
    IndexRecord record;
    Embedding vector;
    double norm = 0.0;
  };
  using Group = std::vector<Entry>;

  Group& group(Substore s) { return groups_[static_cast<std::size_t>(s)]; }
  const Group& group(Substore s) const { return groups_[static_cast<std::size_t>(s)]; }
  std::vector<RetrievalHit> search_group(Substore s, const RetrievalQuery& query,
                                         const Embedding& probe, double probe_norm,
                                         const std::set<MemoryRef>& exclude) const;

  std::shared_ptr<const EmbeddingProvider> embedder_;
  std::array<Group, 3> groups_;
};

inline constexpr double kVisualMatchThreshold = 0.35;

struct VisualMatch {
  std::string descriptor;
  std::int64_t semantic_id = 0;
  double score = 0.0;
  bool operator==(const VisualMatch&) const = default;
};

// Best visual-concept entry per descriptor, compared against the stored
// description; descriptors whose best score is below `threshold` yield nothing.
std::vector<VisualMatch> visual_match(std::span<const std::string> descriptors,
                                      const MemoryStore& store, const EmbeddingProvider& embedder,
                                      double threshold = kVisualMatchThreshold);

}  // namespace memoria
