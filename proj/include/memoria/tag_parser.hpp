#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "memoria/memory_store.hpp"
#include "memoria/pem.hpp"
#include "memoria/retrieval.hpp"

namespace memoria {

// One `key: value` line of a model reply. `comment` holds a stripped trailing
// `// ...` so callers can use inline annotations such as "// PERSONA Aspect".
struct KvPair {
  std::string key;
  std::string value;
  std::string comment;
  std::size_t line = 0;  // 1-based
  bool operator==(const KvPair&) const = default;
};

using KvList = std::vector<KvPair>;

// Blank lines and lines made only of braces are skipped. Throws malformed
// with the line number for a line that has no colon.
KvList parse_kv_block(std::string_view text);

struct AnswerAction {
  std::string text;
  bool operator==(const AnswerAction&) const = default;
};

struct RetrieveAction {
  std::string keywords;
  std::string start_text;
  std::string end_text;
  RetrievalQuery query;
  bool operator==(const RetrieveAction&) const = default;
};

struct AgentStep {
  std::string think;
  std::variant<AnswerAction, RetrieveAction> action;
  std::vector<std::string> warnings;  // stray text outside the tags

  bool is_answer() const { return std::holds_alternative<AnswerAction>(action); }
  const AnswerAction& answer() const { return std::get<AnswerAction>(action); }
  const RetrieveAction& retrieve() const { return std::get<RetrieveAction>(action); }
};

// <think>...</think> followed by exactly one <answer> or <retrieve> block.
// Throws malformed (or reject_invalid for an inverted retrieve window).
AgentStep parse_agent_step(std::string_view text);

// 1 iff parse_agent_step accepts `text`.
int format_score(std::string_view text);

// Keys keywords/start_time/end_time; "null" in any casing means unbounded.
RetrievalQuery parse_retrieve_conditions(const KvList& kv);

// Inverse of the retrieve block body; parse(render(q)) == q for default k.
std::string render_retrieve_block(const RetrievalQuery& query);

TurnPersonality parse_personality(const KvList& kv);

struct SemanticExtraction {
  std::string reason;
  bool decision = false;
  std::string content;
  std::string keywords;
  bool operator==(const SemanticExtraction&) const = default;
};

SemanticExtraction parse_semantic_extraction(const KvList& kv);

// Comma-separated keyword text to a trimmed, non-empty list.
std::vector<std::string> split_keywords(std::string_view text);

struct Topic {
  std::string summary;
  std::string keywords;
  std::vector<std::int64_t> source_dialog_indices;
  bool operator==(const Topic&) const = default;
};

using TopicSegmentation = std::vector<Topic>;

// Each "topic_summary" key opens a new topic.
TopicSegmentation parse_topics(std::string_view text);

// The reply lists the whole updated profile. Keys present become create or
// update ops; keys of `current` that are absent become removals, except
// "name". An empty reply changes nothing. A block is chosen by a "human." /
// "persona." key prefix, then a HUMAN / PERSONA comment, then the block the
// key already lives in, else human.
std::vector<CoreOp> parse_core_profile(const KvList& kv, const CoreMemory& current);

// Same full-replacement reading for procedural memory; an empty reply (or
// "{}") changes nothing.
std::vector<ProceduralOp> parse_procedural(const KvList& kv, const ProceduralMap& current);

// Surface rule: goal wording ("goal", "plans to", "wants to", ...) => goal,
// otherwise habit.
ProceduralKind infer_procedural_kind(std::string_view key, std::string_view sentence,
                                     std::string_view comment = {});

}  // namespace memoria
