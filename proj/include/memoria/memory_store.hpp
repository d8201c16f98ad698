#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "memoria/timestamp.hpp"

namespace memoria {

enum class Substore { semantic, episodic, procedural };

std::string_view to_string(Substore s);
Substore substore_from_string(std::string_view s);

// Identifies one record in one of the retrievable substores.
struct MemoryRef {
  Substore substore = Substore::semantic;
  std::int64_t id = 0;
  auto operator<=>(const MemoryRef&) const = default;
};

struct Query {
  std::string text;
  std::optional<std::string> image;             // opaque relative locator
  std::vector<std::string> image_descriptors;   // labels from an upstream detector
  Timestamp timestamp;
  bool operator==(const Query&) const = default;
};

struct Turn {
  std::int64_t index = 0;
  std::int64_t session_id = 0;
  Query query;
  std::string response;
  std::string trace_id;
  bool operator==(const Turn&) const = default;
};

enum class CoreBlock { human, persona };
enum class CrudKind { create, update, remove };

std::string_view to_string(CoreBlock b);
std::string_view to_string(CrudKind k);

struct CoreMemory {
  static constexpr std::size_t kMaxEntriesPerBlock = 16;

  std::map<std::string, std::string> human;
  std::map<std::string, std::string> persona;

  static CoreMemory with_name(std::string name);

  std::map<std::string, std::string>& block(CoreBlock b) {
    return b == CoreBlock::human ? human : persona;
  }
  const std::map<std::string, std::string>& block(CoreBlock b) const {
    return b == CoreBlock::human ? human : persona;
  }
  bool operator==(const CoreMemory&) const = default;
};

struct CoreOp {
  CrudKind kind = CrudKind::update;
  CoreBlock block = CoreBlock::human;
  std::string key;
  std::string value;  // unused for remove
  bool operator==(const CoreOp&) const = default;
};

// Applies ops in order to a copy of `core`; the input is never modified.
// Throws key_not_found, reject_invalid (duplicate create, touching "name")
// or capacity_exceeded (a block over kMaxEntriesPerBlock).
CoreMemory apply_core_crud(const CoreMemory& core, std::span<const CoreOp> ops);

enum class SemanticCategory { explicit_directive, core_fact, preference_habit, visual_concept };

std::string_view to_string(SemanticCategory c);
SemanticCategory semantic_category_from_string(std::string_view s);

struct VisualRef {
  std::string description;
  std::string locator;       // relative path of the image crop; never decoded
  std::string object_class;
  bool operator==(const VisualRef&) const = default;
};

struct SemanticEntry {
  std::int64_t id = 0;
  Timestamp created_at;
  std::string content;
  std::vector<std::string> keywords;
  SemanticCategory category = SemanticCategory::core_fact;
  std::optional<VisualRef> visual_ref;
  bool operator==(const SemanticEntry&) const = default;
};

// Builds the "description (Image Object: class)" content string.
std::string visual_concept_content(std::string_view description, std::string_view object_class);

// Splits visual-concept content back into (description, class).
std::optional<std::pair<std::string, std::string>> split_visual_concept(std::string_view content);

struct EpisodicEntry {
  std::int64_t id = 0;
  std::int64_t session_id = 0;
  Timestamp created_at;
  std::string summary;
  std::vector<std::string> keywords;
  std::vector<std::int64_t> turn_indices;
  bool operator==(const EpisodicEntry&) const = default;
};

enum class ProceduralKind { goal, habit };

std::string_view to_string(ProceduralKind k);
ProceduralKind procedural_kind_from_string(std::string_view s);

struct ProceduralEntry {
  // Version id: every create/update gets a fresh one so retrieval hits and
  // traces refer to the exact sentence that was shown.
  std::int64_t id = 0;
  std::string key;
  std::string sentence;
  ProceduralKind kind = ProceduralKind::habit;
  Timestamp updated_at;
  bool operator==(const ProceduralEntry&) const = default;
};

struct ProceduralOp {
  CrudKind kind = CrudKind::create;
  std::string key;
  std::string sentence;
  ProceduralKind entry_kind = ProceduralKind::habit;
  bool operator==(const ProceduralOp&) const = default;
};

using ProceduralMap = std::map<std::string, ProceduralEntry>;

// Four typed substores plus the raw dialogue log.
//
// Semantic, episodic and dialogue are append-only; core and procedural keep a
// single canonical version. Not internally synchronized: callers serialize
// writers and hand readers copies.
class MemoryStore {
 public:
  static constexpr std::size_t kMaxProcedural = 5;

  MemoryStore() : core_(CoreMemory::with_name("User")) {}
  explicit MemoryStore(CoreMemory core);

  const CoreMemory& core() const { return core_; }
  const std::vector<SemanticEntry>& semantic() const { return semantic_; }
  const std::vector<EpisodicEntry>& episodic() const { return episodic_; }
  const ProceduralMap& procedural() const { return procedural_; }
  const std::vector<Turn>& dialogue() const { return dialogue_; }

  const SemanticEntry* find_semantic(std::int64_t id) const;
  const EpisodicEntry* find_episode(std::int64_t id) const;
  const ProceduralEntry* find_procedural(std::int64_t id) const;

  // `entry.id` is ignored and replaced with the next id.
  std::int64_t append_semantic(SemanticEntry entry);
  std::int64_t append_episode(EpisodicEntry entry);
  // `turn.index` is ignored and replaced with the next index.
  std::int64_t append_turn(Turn turn);

  const CoreMemory& apply_core_crud(std::span<const CoreOp> ops);
  // All-or-nothing. Created/updated entries get `now` as updated_at.
  const ProceduralMap& apply_procedural_crud(std::span<const ProceduralOp> ops, Timestamp now);

  // Highest session id whose end-of-session consolidation has run, -1 if none.
  std::int64_t consolidated_through_session() const { return consolidated_through_; }
  void mark_session_consolidated(std::int64_t session_id);

  std::int64_t next_procedural_id() const { return next_procedural_id_; }

  // Indices of the turns belonging to `session_id`, in order.
  std::vector<std::int64_t> session_turn_indices(std::int64_t session_id) const;

  // Rebuilds a store from persisted parts, validating every invariant.
  // Throws reject_invalid on violation.
  static MemoryStore restore(CoreMemory core, std::vector<SemanticEntry> semantic,
                             std::vector<EpisodicEntry> episodic, ProceduralMap procedural,
                             std::vector<Turn> dialogue, std::int64_t next_procedural_id,
                             std::int64_t consolidated_through);

  bool operator==(const MemoryStore&) const = default;

 private:
  static void validate_semantic(const SemanticEntry& entry);
  void validate_episode(const EpisodicEntry& entry) const;

  CoreMemory core_;
  std::vector<SemanticEntry> semantic_;
  std::vector<EpisodicEntry> episodic_;
  ProceduralMap procedural_;
  std::vector<Turn> dialogue_;
  std::int64_t next_procedural_id_ = 0;
  std::int64_t consolidated_through_ = -1;
};

}  // namespace memoria
