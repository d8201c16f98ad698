#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "memoria/agent.hpp"
#include "memoria/backend.hpp"
#include "memoria/consolidation.hpp"
#include "memoria/state.hpp"

namespace memoria {

struct ScriptedTurn {
  std::string text;
  Timestamp timestamp;
  std::optional<std::string> image;
  std::vector<std::string> image_descriptors;
};

// A dialogue plus the canned model replies that drive it.
struct ReplayFixture {
  std::string user = "replay";
  std::vector<ScriptedTurn> turns;
  ScriptFixture script;
  bool end_session = false;  // consolidate the last session after the final turn

  static ReplayFixture from_json(const nlohmann::json& j);
  static ReplayFixture load(const std::filesystem::path& path);
};

struct ReplayOutcome {
  std::vector<AgentTrace> traces;
  std::vector<SessionUpdateReport> consolidations;
};

// Runs every turn through a synchronous session rooted at `state_dir` (or in
// memory when empty). Fixture mismatches propagate.
ReplayOutcome replay(const ReplayFixture& fixture, const std::filesystem::path& state_dir,
                     std::shared_ptr<const EmbeddingProvider> embedder,
                     std::shared_ptr<const PromptLibrary> prompts, const AgentConfig& agent = {});

struct JudgeScores {
  double accuracy = 0.0;
  double consistency = 0.0;
};

class Judge {
 public:
  virtual ~Judge() = default;
  // Both scores in [0, 1]. Throws reward_unavailable when no judgement can be made.
  virtual JudgeScores score(std::string_view query, std::string_view gold_answer,
                            const AgentTrace& trace) = 0;
};

// Accuracy: normalized final answer equals the normalized gold answer (or
// names the same option letter). Consistency: 1 unless the trace degraded.
class ExactMatchJudge final : public Judge {
 public:
  JudgeScores score(std::string_view query, std::string_view gold_answer,
                    const AgentTrace& trace) override;
};

// Asks a chat backend with the "judge" template and parses
// "accuracy"/"consistency" key-value lines.
class LlmJudge final : public Judge {
 public:
  LlmJudge(std::shared_ptr<ChatBackend> backend, std::shared_ptr<const PromptLibrary> prompts);
  JudgeScores score(std::string_view query, std::string_view gold_answer,
                    const AgentTrace& trace) override;

 private:
  std::shared_ptr<ChatBackend> backend_;
  std::shared_ptr<const PromptLibrary> prompts_;
};

// 1 iff every model output in the trace parses as an agent step.
int trace_format_score(const AgentTrace& trace);

// accuracy * consistency + 0.5 * format
double reward_value(double accuracy, double consistency, int format);

double reward(const AgentTrace& trace, std::string_view gold_answer, std::string_view query,
              Judge& judge);

std::string normalize_answer(std::string_view text);

// Option index chosen by `answer`: a leading letter ("B", "(B)", "B. ...")
// or the full text of an option.
std::optional<std::size_t> match_option(std::string_view answer,
                                        std::span<const std::string> options);

struct Probe {
  std::size_t after_turn = 0;  // asked once this many turns have been replayed
  std::string question;
  std::vector<std::string> options;
  std::size_t gold = 0;  // index into options
  std::vector<MemoryRef> gold_memory;
  std::string aspect;
  std::optional<Timestamp> timestamp;  // defaults to the preceding turn's time
};

struct EvalCase {
  std::string name;
  std::string user_name = "User";
  std::vector<ScriptedTurn> turns;
  ScriptFixture script;
  std::vector<Probe> probes;

  // Throws reject_invalid for a probe past the dialogue end or a gold index
  // outside the options.
  void validate() const;
  static EvalCase from_json(const nlohmann::json& j);
};

std::vector<EvalCase> load_suite(const std::filesystem::path& path);

struct ProbeOutcome {
  std::string case_name;
  std::size_t probe_index = 0;
  std::string aspect;
  std::optional<std::size_t> chosen;
  bool correct = false;
  std::optional<double> precision;  // undefined when nothing was retrieved
  std::optional<double> recall;     // undefined when there is no gold memory
  double reward = 0.0;
  AgentTrace trace;
};

struct AspectStats {
  std::size_t probes = 0;
  std::size_t correct = 0;
  double accuracy() const { return probes == 0 ? 0.0 : double(correct) / double(probes); }
};

struct Metrics {
  std::vector<ProbeOutcome> outcomes;
  std::size_t cases = 0;
  std::map<std::string, AspectStats> by_aspect;

  std::size_t probes() const { return outcomes.size(); }
  std::optional<double> accuracy() const;
  std::optional<double> mean_precision() const;
  std::optional<double> mean_recall() const;
  std::optional<double> mean_reward() const;
};

// Precision/recall of retrieved refs against gold refs.
std::pair<std::optional<double>, std::optional<double>> retrieval_precision_recall(
    std::span<const MemoryRef> retrieved, std::span<const MemoryRef> gold);

struct EvalOptions {
  AgentConfig agent;
  std::shared_ptr<const EmbeddingProvider> embedder;
  std::shared_ptr<const PromptLibrary> prompts;
  // Exact-match judge when null.
  std::shared_ptr<Judge> judge;
};

Metrics replay_and_score(const EvalCase& eval_case, const EvalOptions& options);
// Cases run concurrently on isolated states; results are merged in input order.
Metrics run_suite(std::span<const EvalCase> cases, const EvalOptions& options);

std::string format_metrics_table(const Metrics& metrics);
nlohmann::json metrics_to_json(const Metrics& metrics);

}  // namespace memoria
