#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "memoria/backend.hpp"
#include "memoria/memory_store.hpp"
#include "memoria/pem.hpp"
#include "memoria/prompts.hpp"
#include "memoria/retrieval.hpp"
#include "memoria/tag_parser.hpp"

namespace memoria {

inline constexpr std::int64_t kSessionGapMinutes = 60;

// True iff the gap is at least kSessionGapMinutes. Throws reject_invalid if
// `now` precedes `previous`.
bool session_boundary(Timestamp previous, Timestamp now);

// Prior turns with |t_i - now| <= kSessionGapMinutes, in log order.
std::vector<Turn> build_context(std::span<const Turn> log, Timestamp now);

enum class StepKind {
  answer,
  retrieve,
  malformed,          // reply failed to parse; a repair prompt followed
  degraded_answer,    // final: raw model text used as the answer (unparseable, or a
                      // retrieve after the budget ran out)
};

std::string_view to_string(StepKind k);

struct TraceStep {
  StepKind kind = StepKind::answer;
  std::string prompt_digest;   // fnv1a64 of the rendered request
  std::string model_text;
  std::string think;
  std::optional<RetrievalQuery> retrieve;  // conditions when kind is retrieve
  std::string parse_error;
  std::vector<RetrievalHit> hits;
  std::vector<MemoryRef> excluded;  // refs withheld by the dedup filter
  bool forced = false;              // request carried the retrieval-exhausted instruction
  bool operator==(const TraceStep&) const = default;
};

struct AgentTrace {
  std::string trace_id;
  std::vector<TraceStep> steps;
  std::string final_answer;
  int retrieval_attempts = 0;
  int model_calls = 0;
  bool degraded = false;
  bool repaired = false;
  std::vector<VisualMatch> visual_matches;

  // Every ref fed to the model this trajectory, in feed order.
  std::vector<MemoryRef> fed_refs() const;
  bool operator==(const AgentTrace&) const = default;
};

struct AgentConfig {
  int max_steps = 4;        // model calls per trajectory
  int max_retrievals = 3;
  double temperature = 0.0;
  int max_output_tokens = 1024;
  int k_procedural = RetrievalQuery::kDefaultProcedural;
  int k_semantic = RetrievalQuery::kDefaultSemantic;
  int k_episodic = RetrievalQuery::kDefaultEpisodic;
  double visual_threshold = kVisualMatchThreshold;
};

struct AgentContext {
  const MemoryStore& store;
  const PersonalityProfile& profile;
  const MemoryIndex& index;
  const PromptLibrary& prompts;
  ChatBackend& backend;
};

// Reason -> retrieve -> answer loop for one query. Makes at most
// config.max_steps model calls and executes at most config.max_retrievals
// searches; no memory ref is fed twice. Throws reject_invalid for a query
// older than the last logged turn and lets backend errors propagate.
AgentTrace respond(const Query& query, const AgentContext& ctx, const AgentConfig& config,
                   std::string trace_id);

}  // namespace memoria
