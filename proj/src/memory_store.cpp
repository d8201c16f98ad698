#include "memoria/memory_store.hpp"

#include <algorithm>
#include <set>

#include "memoria/error.hpp"

namespace memoria {

namespace {

constexpr std::string_view kImageObjectMarker = "(Image Object:";

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

}  // namespace

std::string_view to_string(Substore s) {
  switch (s) {
    case Substore::semantic: return "semantic";
    case Substore::episodic: return "episodic";
    case Substore::procedural: return "procedural";
  }
  return "semantic";
}

Substore substore_from_string(std::string_view s) {
  if (s == "semantic") return Substore::semantic;
  if (s == "episodic") return Substore::episodic;
  if (s == "procedural") return Substore::procedural;
  fail(ErrorCode::reject_invalid, "unknown substore '" + std::string(s) + "'");
}

std::string_view to_string(CoreBlock b) { return b == CoreBlock::human ? "human" : "persona"; }

std::string_view to_string(CrudKind k) {
  switch (k) {
    case CrudKind::create: return "create";
    case CrudKind::update: return "update";
    case CrudKind::remove: return "delete";
  }
  return "update";
}

std::string_view to_string(SemanticCategory c) {
  switch (c) {
    case SemanticCategory::explicit_directive: return "explicit-directive";
    case SemanticCategory::core_fact: return "core-fact";
    case SemanticCategory::preference_habit: return "preference-habit";
    case SemanticCategory::visual_concept: return "visual-concept";
  }
  return "core-fact";
}

SemanticCategory semantic_category_from_string(std::string_view s) {
  if (s == "explicit-directive") return SemanticCategory::explicit_directive;
  if (s == "core-fact") return SemanticCategory::core_fact;
  if (s == "preference-habit") return SemanticCategory::preference_habit;
  if (s == "visual-concept") return SemanticCategory::visual_concept;
  fail(ErrorCode::reject_invalid, "unknown semantic category '" + std::string(s) + "'");
}

std::string_view to_string(ProceduralKind k) { return k == ProceduralKind::goal ? "goal" : "habit"; }

ProceduralKind procedural_kind_from_string(std::string_view s) {
  if (s == "goal") return ProceduralKind::goal;
  if (s == "habit") return ProceduralKind::habit;
  fail(ErrorCode::reject_invalid, "unknown procedural kind '" + std::string(s) + "'");
}

CoreMemory CoreMemory::with_name(std::string name) {
  CoreMemory core;
  core.human["name"] = std::move(name);
  return core;
}

std::string visual_concept_content(std::string_view description, std::string_view object_class) {
  std::string out(trim(description));
  out += " (Image Object: ";
  out += trim(object_class);
  out += ')';
  return out;
}

std::optional<std::pair<std::string, std::string>> split_visual_concept(std::string_view content) {
  content = trim(content);
  const auto pos = content.rfind(kImageObjectMarker);
  if (pos == std::string_view::npos || content.empty() || content.back() != ')') return std::nullopt;
  const auto description = trim(content.substr(0, pos));
  const auto cls = trim(content.substr(pos + kImageObjectMarker.size(),
                                       content.size() - 1 - pos - kImageObjectMarker.size()));
  if (description.empty() || cls.empty() || cls.find(')') != std::string_view::npos) {
    return std::nullopt;
  }
  return std::make_pair(std::string(description), std::string(cls));
}

CoreMemory apply_core_crud(const CoreMemory& core, std::span<const CoreOp> ops) {
  CoreMemory next = core;
  for (const auto& op : ops) {
    auto& block = next.block(op.block);
    const std::string where = std::string(to_string(op.block)) + "." + op.key;
    if (op.key.empty()) fail(ErrorCode::reject_invalid, "empty core key");
    const bool is_name = op.block == CoreBlock::human && op.key == "name";
    switch (op.kind) {
      case CrudKind::create:
        if (block.contains(op.key)) fail(ErrorCode::reject_invalid, "key already exists", where);
        if (op.value.empty()) fail(ErrorCode::reject_invalid, "empty value", where);
        block.emplace(op.key, op.value);
        break;
      case CrudKind::update: {
        auto it = block.find(op.key);
        if (it == block.end()) fail(ErrorCode::key_not_found, "no such core key", where);
        if (op.value.empty()) fail(ErrorCode::reject_invalid, "empty value", where);
        it->second = op.value;
        break;
      }
      case CrudKind::remove:
        if (is_name) fail(ErrorCode::reject_invalid, "the name field is mandatory", where);
        if (block.erase(op.key) == 0) fail(ErrorCode::key_not_found, "no such core key", where);
        break;
    }
    if (block.size() > CoreMemory::kMaxEntriesPerBlock) {
      fail(ErrorCode::capacity_exceeded, "core block exceeds 16 entries", where);
    }
  }
  auto name = next.human.find("name");
  if (name == next.human.end() || name->second.empty()) {
    fail(ErrorCode::reject_invalid, "human block needs a non-empty name");
  }
  return next;
}

MemoryStore::MemoryStore(CoreMemory core) : core_(std::move(core)) {
  const auto name = core_.human.find("name");
  if (name == core_.human.end() || name->second.empty()) {
    fail(ErrorCode::reject_invalid, "human block needs a non-empty name");
  }
}

const SemanticEntry* MemoryStore::find_semantic(std::int64_t id) const {
  if (id < 0 || id >= static_cast<std::int64_t>(semantic_.size())) return nullptr;
  return &semantic_[static_cast<std::size_t>(id)];
}

const EpisodicEntry* MemoryStore::find_episode(std::int64_t id) const {
  if (id < 0 || id >= static_cast<std::int64_t>(episodic_.size())) return nullptr;
  return &episodic_[static_cast<std::size_t>(id)];
}

const ProceduralEntry* MemoryStore::find_procedural(std::int64_t id) const {
  for (const auto& [key, entry] : procedural_) {
    if (entry.id == id) return &entry;
  }
  return nullptr;
}

void MemoryStore::validate_semantic(const SemanticEntry& entry) {
  if (trim(entry.content).empty()) fail(ErrorCode::reject_invalid, "semantic content is empty");
  if (entry.keywords.empty()) fail(ErrorCode::reject_invalid, "semantic keywords are empty");
  for (const auto& k : entry.keywords) {
    if (trim(k).empty()) fail(ErrorCode::reject_invalid, "empty semantic keyword");
  }
  const bool visual = entry.category == SemanticCategory::visual_concept;
  if (visual != entry.visual_ref.has_value()) {
    fail(ErrorCode::reject_invalid, "visual_ref must be present exactly for visual concepts");
  }
  if (visual) {
    const auto parts = split_visual_concept(entry.content);
    if (!parts) {
      fail(ErrorCode::reject_invalid,
           "visual concept content must read 'description (Image Object: class)'");
    }
    if (parts->second != entry.visual_ref->object_class) {
      fail(ErrorCode::reject_invalid, "visual concept class does not match visual_ref");
    }
  }
}

void MemoryStore::validate_episode(const EpisodicEntry& entry) const {
  if (entry.turn_indices.empty()) fail(ErrorCode::reject_invalid, "episode has no turn indices");
  if (!std::is_sorted(entry.turn_indices.begin(), entry.turn_indices.end()) ||
      std::adjacent_find(entry.turn_indices.begin(), entry.turn_indices.end()) !=
          entry.turn_indices.end()) {
    fail(ErrorCode::reject_invalid, "episode turn indices must be strictly increasing");
  }
  const auto n = static_cast<std::int64_t>(dialogue_.size());
  if (entry.turn_indices.front() < 0 || entry.turn_indices.back() >= n) {
    fail(ErrorCode::reject_invalid, "episode turn index out of range");
  }
  if (trim(entry.summary).empty()) fail(ErrorCode::reject_invalid, "episode summary is empty");
}

std::int64_t MemoryStore::append_semantic(SemanticEntry entry) {
  validate_semantic(entry);
  entry.id = static_cast<std::int64_t>(semantic_.size());
  semantic_.push_back(std::move(entry));
  return semantic_.back().id;
}

std::int64_t MemoryStore::append_episode(EpisodicEntry entry) {
  validate_episode(entry);
  entry.id = static_cast<std::int64_t>(episodic_.size());
  episodic_.push_back(std::move(entry));
  return episodic_.back().id;
}

std::int64_t MemoryStore::append_turn(Turn turn) {
  if (!dialogue_.empty()) {
    const auto& last = dialogue_.back();
    if (turn.query.timestamp < last.query.timestamp) {
      fail(ErrorCode::reject_invalid, "turn timestamp precedes the previous turn");
    }
    if (turn.session_id < last.session_id) fail(ErrorCode::reject_invalid, "session id regressed");
  }
  turn.index = static_cast<std::int64_t>(dialogue_.size());
  dialogue_.push_back(std::move(turn));
  return dialogue_.back().index;
}

const CoreMemory& MemoryStore::apply_core_crud(std::span<const CoreOp> ops) {
  core_ = memoria::apply_core_crud(core_, ops);
  return core_;
}

const ProceduralMap& MemoryStore::apply_procedural_crud(std::span<const ProceduralOp> ops,
                                                        Timestamp now) {
  ProceduralMap next = procedural_;
  std::int64_t next_id = next_procedural_id_;
  for (const auto& op : ops) {
    if (trim(op.key).empty()) fail(ErrorCode::reject_invalid, "empty procedural key");
    switch (op.kind) {
      case CrudKind::create:
        if (next.contains(op.key)) fail(ErrorCode::reject_invalid, "key already exists", op.key);
        if (trim(op.sentence).empty()) fail(ErrorCode::reject_invalid, "empty sentence", op.key);
        if (next.size() >= kMaxProcedural) {
          fail(ErrorCode::capacity_exceeded, "procedural memory holds at most 5 entries", op.key);
        }
        next.emplace(op.key, ProceduralEntry{next_id++, op.key, op.sentence, op.entry_kind, now});
        break;
      case CrudKind::update: {
        auto it = next.find(op.key);
        if (it == next.end()) fail(ErrorCode::key_not_found, "no such procedural key", op.key);
        if (trim(op.sentence).empty()) fail(ErrorCode::reject_invalid, "empty sentence", op.key);
        it->second = ProceduralEntry{next_id++, op.key, op.sentence, op.entry_kind, now};
        break;
      }
      case CrudKind::remove:
        if (next.erase(op.key) == 0) {
          fail(ErrorCode::key_not_found, "no such procedural key", op.key);
        }
        break;
    }
  }
  procedural_ = std::move(next);
  next_procedural_id_ = next_id;
  return procedural_;
}

void MemoryStore::mark_session_consolidated(std::int64_t session_id) {
  consolidated_through_ = std::max(consolidated_through_, session_id);
}

std::vector<std::int64_t> MemoryStore::session_turn_indices(std::int64_t session_id) const {
  std::vector<std::int64_t> out;
  for (const auto& t : dialogue_) {
    if (t.session_id == session_id) out.push_back(t.index);
  }
  return out;
}

MemoryStore MemoryStore::restore(CoreMemory core, std::vector<SemanticEntry> semantic,
                                 std::vector<EpisodicEntry> episodic, ProceduralMap procedural,
                                 std::vector<Turn> dialogue, std::int64_t next_procedural_id,
                                 std::int64_t consolidated_through) {
  MemoryStore store(std::move(core));
  if (store.core_.human.size() > CoreMemory::kMaxEntriesPerBlock ||
      store.core_.persona.size() > CoreMemory::kMaxEntriesPerBlock) {
    fail(ErrorCode::reject_invalid, "core block over capacity");
  }
  for (auto& t : dialogue) {
    const auto expected = static_cast<std::int64_t>(store.dialogue_.size());
    if (t.index != expected) fail(ErrorCode::reject_invalid, "dialogue indices are not dense");
    store.append_turn(std::move(t));
  }
  for (auto& e : semantic) {
    if (e.id != static_cast<std::int64_t>(store.semantic_.size())) {
      fail(ErrorCode::reject_invalid, "semantic ids are not dense");
    }
    store.append_semantic(std::move(e));
  }
  for (auto& e : episodic) {
    if (e.id != static_cast<std::int64_t>(store.episodic_.size())) {
      fail(ErrorCode::reject_invalid, "episodic ids are not dense");
    }
    store.append_episode(std::move(e));
  }
  if (procedural.size() > kMaxProcedural) fail(ErrorCode::reject_invalid, "procedural over capacity");
  std::set<std::int64_t> ids;
  for (const auto& [key, entry] : procedural) {
    if (key != entry.key) fail(ErrorCode::reject_invalid, "procedural key mismatch");
    if (entry.id < 0 || entry.id >= next_procedural_id || !ids.insert(entry.id).second) {
      fail(ErrorCode::reject_invalid, "procedural version ids inconsistent");
    }
  }
  store.procedural_ = std::move(procedural);
  store.next_procedural_id_ = next_procedural_id;
  store.consolidated_through_ = consolidated_through;
  return store;
}

}  // namespace memoria
