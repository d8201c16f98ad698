#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "memoria/backend.hpp"
#include "memoria/prompts.hpp"
#include "memoria/state.hpp"

namespace memoria {

struct TurnUpdateReport {
  std::int64_t turn_index = 0;
  std::optional<TurnPersonality> inferred;
  bool profile_changed = false;
  std::optional<std::int64_t> semantic_id;
  std::vector<std::string> problems;  // sub-updates skipped after a failed repair
};

struct SessionUpdateReport {
  std::int64_t session_id = 0;
  std::vector<CoreOp> core_ops;
  bool core_applied = false;
  std::vector<ProceduralOp> procedural_ops;
  bool procedural_applied = false;
  std::vector<std::int64_t> episode_ids;
  std::vector<std::string> problems;
};

// Per-turn half of the update stage: personality EMA step and semantic
// extraction for the logged turn `turn_index`. Never touches core or
// procedural memory. Each sub-update is best effort: a reply that still fails
// to parse after one repair prompt is skipped and reported. Backend transport
// errors propagate.
TurnUpdateReport per_turn_update(std::int64_t turn_index, UserState& state,
                                 const PromptLibrary& prompts, ChatBackend& backend);

// Session-end half: core CRUD, procedural CRUD and topic segmentation into
// episodes for `session_id`; marks the session consolidated. Never touches
// the personality profile.
SessionUpdateReport end_of_session_update(std::int64_t session_id, UserState& state,
                                          const PromptLibrary& prompts, ChatBackend& backend);

// Category for a newly extracted fact; see the rule order in the source.
SemanticCategory infer_semantic_category(std::string_view content, std::string_view query_text);

}  // namespace memoria
