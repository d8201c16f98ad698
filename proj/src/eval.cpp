#include "memoria/eval.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <future>
#include <set>
#include <sstream>
#include <thread>

#include "memoria/engine.hpp"
#include "memoria/error.hpp"
#include "memoria/persistence.hpp"
#include "memoria/serialization.hpp"
#include "memoria/tag_parser.hpp"

namespace memoria {

namespace {

constexpr int kSuiteFormatVersion = 1;

ScriptedTurn scripted_turn_from_json(const json& j) {
  ScriptedTurn t;
  t.text = j.at("text").get<std::string>();
  t.timestamp = timestamp_from_json(j.at("timestamp"));
  if (j.contains("image") && !j["image"].is_null()) t.image = j["image"].get<std::string>();
  if (j.contains("image_descriptors")) t.image_descriptors = j["image_descriptors"].get<std::vector<std::string>>();
  return t;
}

std::vector<ScriptedTurn> turns_from_json(const json& j) {
  std::vector<ScriptedTurn> out;
  for (const auto& t : j) out.push_back(scripted_turn_from_json(t));
  for (std::size_t i = 1; i < out.size(); ++i) {
    if (out[i].timestamp < out[i - 1].timestamp) {
      fail(ErrorCode::reject_invalid, "turn timestamps go backwards", "turns/" + std::to_string(i));
    }
  }
  return out;
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::malformed, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorCode::malformed, e.what(), path.string());
  }
}

template <class F>
auto guarded(std::string_view what, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const json::exception& e) {
    fail(ErrorCode::malformed, std::string(what) + ": " + e.what());
  }
}

ChatInput chat_input(const ScriptedTurn& t) { return {t.text, t.image, t.image_descriptors, t.timestamp}; }

std::unique_ptr<UserSession> fresh_session(const std::string& user, std::shared_ptr<ChatBackend> backend,
                                           std::shared_ptr<const EmbeddingProvider> embedder,
                                           std::shared_ptr<const PromptLibrary> prompts,
                                           const AgentConfig& agent,
                                           std::optional<std::filesystem::path> dir) {
  EngineConfig config;
  config.agent = agent;
  config.synchronous_updates = true;
  return std::make_unique<UserSession>(user, UserState(std::move(embedder), MemoryStore(CoreMemory::with_name(user))),
                                       std::move(backend), std::move(prompts), config, std::move(dir));
}

// "B", "(B)", "B.", "B) text", "Answer: B" -> 'B'. Uppercase only so the
// article "a" is not read as option A.
std::optional<char> leading_letter(std::string_view text) {
  std::string s(text);
  const auto begin = s.find_first_not_of(" \t\n*");
  if (begin == std::string::npos) return std::nullopt;
  s = s.substr(begin);
  for (const char* prefix : {"Answer:", "answer:", "ANSWER:"}) {
    if (s.rfind(prefix, 0) == 0) {
      s = s.substr(std::string_view(prefix).size());
      const auto b = s.find_first_not_of(" \t");
      if (b == std::string::npos) return std::nullopt;
      s = s.substr(b);
    }
  }
  std::size_t i = 0;
  if (s[i] == '(') ++i;
  if (i >= s.size() || !std::isupper(static_cast<unsigned char>(s[i]))) return std::nullopt;
  const char letter = s[i++];
  if (s[0] == '(') {
    if (i >= s.size() || s[i] != ')') return std::nullopt;
    return letter;
  }
  if (i == s.size() || s[i] == '.' || s[i] == ')' || s[i] == ':' ) return letter;
  return std::nullopt;
}

std::string lettered_options(std::span<const std::string> options) {
  std::string out;
  for (std::size_t i = 0; i < options.size(); ++i) {
    out += "\n";
    out += static_cast<char>('A' + i);
    out += ". " + options[i];
  }
  return out;
}

template <class Get>
std::optional<double> mean_of(const std::vector<ProbeOutcome>& outcomes, Get get) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& o : outcomes) {
    if (const std::optional<double> v = get(o)) {
      sum += *v;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / double(n);
}

}  // namespace

ReplayFixture ReplayFixture::from_json(const json& j) {
  return guarded("replay fixture", [&] {
    ReplayFixture f;
    f.user = j.value("user", std::string("replay"));
    if (!Engine::valid_user_id(f.user)) fail(ErrorCode::reject_invalid, "invalid user id", "user");
    f.turns = turns_from_json(j.at("turns"));
    f.script = ScriptFixture::from_json_text(j.at("script").dump());
    f.end_session = j.value("end_session", false);
    return f;
  });
}

ReplayFixture ReplayFixture::load(const std::filesystem::path& path) { return from_json(read_json_file(path)); }

ReplayOutcome replay(const ReplayFixture& fixture, const std::filesystem::path& state_dir,
                     std::shared_ptr<const EmbeddingProvider> embedder,
                     std::shared_ptr<const PromptLibrary> prompts, const AgentConfig& agent) {
  std::optional<std::filesystem::path> dir;
  if (!state_dir.empty()) {
    if (state_exists(state_dir)) fail(ErrorCode::reject_invalid, "state directory already holds a user", state_dir.string());
    dir = state_dir;
  }
  auto backend = std::make_shared<ScriptedBackend>(fixture.script);
  auto session = fresh_session(fixture.user, backend, std::move(embedder), std::move(prompts), agent, dir);
  ReplayOutcome out;
  for (const auto& turn : fixture.turns) {
    const auto result = session->chat(chat_input(turn));
    if (result.consolidation) out.consolidations.push_back(*result.consolidation);
    out.traces.push_back(*session->trace(result.trace_id));
  }
  if (fixture.end_session) {
    if (auto report = session->end_session()) out.consolidations.push_back(*report);
  }
  return out;
}

std::string normalize_answer(std::string_view text) {
  std::string out;
  bool space = false;
  for (const char c : text) {
    const auto u = static_cast<unsigned char>(c);
    if (std::isalnum(u)) {
      if (space && !out.empty()) out += ' ';
      out += static_cast<char>(std::tolower(u));
      space = false;
    } else if (std::isspace(u) || c == '-' || c == '_' || c == '/') {
      space = true;
    }
  }
  return out;
}

std::optional<std::size_t> match_option(std::string_view answer, std::span<const std::string> options) {
  const auto norm = normalize_answer(answer);
  for (std::size_t i = 0; i < options.size(); ++i) {
    if (norm == normalize_answer(options[i])) return i;
  }
  if (const auto letter = leading_letter(answer)) {
    const auto i = static_cast<std::size_t>(*letter - 'A');
    if (i < options.size()) return i;
  }
  std::optional<std::size_t> found;
  for (std::size_t i = 0; i < options.size(); ++i) {
    const auto opt = normalize_answer(options[i]);
    if (opt.empty() || (" " + norm + " ").find(" " + opt + " ") == std::string::npos) continue;
    if (found) return std::nullopt;  // ambiguous
    found = i;
  }
  return found;
}

JudgeScores ExactMatchJudge::score(std::string_view, std::string_view gold_answer, const AgentTrace& trace) {
  const auto answer = normalize_answer(trace.final_answer);
  bool accurate = !answer.empty() && answer == normalize_answer(gold_answer);
  if (!accurate) {
    if (const auto gold_letter = leading_letter(gold_answer)) {
      // gold of the form "B. text": accept the letter or the option text
      const auto dot = gold_answer.find_first_of(".)");
      const auto text = dot == std::string_view::npos ? std::string_view{} : gold_answer.substr(dot + 1);
      accurate = leading_letter(trace.final_answer) == gold_letter ||
                 (!text.empty() && answer == normalize_answer(text));
    }
  }
  return {accurate ? 1.0 : 0.0, trace.degraded ? 0.0 : 1.0};
}

LlmJudge::LlmJudge(std::shared_ptr<ChatBackend> backend, std::shared_ptr<const PromptLibrary> prompts)
    : backend_(std::move(backend)), prompts_(std::move(prompts)) {}

JudgeScores LlmJudge::score(std::string_view query, std::string_view gold_answer, const AgentTrace& trace) {
  std::string reasoning;
  for (const auto& s : trace.steps) {
    if (s.think.empty()) continue;
    if (!reasoning.empty()) reasoning += "\n";
    reasoning += s.think;
  }
  PromptVars vars{{"UserQuery", std::string(query)},
                  {"ReferenceAnswer", std::string(gold_answer)},
                  {"Reasoning", reasoning.empty() ? "None" : reasoning},
                  {"Answer", trace.final_answer}};
  ChatRequest req;
  req.template_id = std::string(prompt_id::judge);
  req.messages.push_back({Role::system, prompts_->render(prompt_id::judge, vars), {}, {}});
  req.messages.push_back({Role::user, "Grade the answer.", {}, {}});
  std::string reply;
  try {
    reply = backend_->chat(req);
  } catch (const Error& e) {
    fail(ErrorCode::reward_unavailable, std::string("judge backend: ") + e.what());
  }
  std::optional<double> acc, cons;
  try {
    for (const auto& kv : parse_kv_block(reply)) {
      std::optional<double>* slot = kv.key == "accuracy" ? &acc : kv.key == "consistency" ? &cons : nullptr;
      if (!slot) continue;
      std::size_t used = 0;
      const double v = std::stod(kv.value, &used);
      if (used != kv.value.size() || !(v >= 0.0 && v <= 1.0)) {
        fail(ErrorCode::reward_unavailable, "judge score out of range: " + kv.value);
      }
      *slot = v;
    }
  } catch (const std::invalid_argument&) {
    fail(ErrorCode::reward_unavailable, "judge score is not a number");
  } catch (const std::out_of_range&) {
    fail(ErrorCode::reward_unavailable, "judge score is not a number");
  } catch (const Error& e) {
    if (e.code() == ErrorCode::reward_unavailable) throw;
    fail(ErrorCode::reward_unavailable, std::string("judge reply: ") + e.what());
  }
  if (!acc || !cons) fail(ErrorCode::reward_unavailable, "judge reply lacks accuracy or consistency");
  return {*acc, *cons};
}

int trace_format_score(const AgentTrace& trace) {
  if (trace.steps.empty()) return 0;
  for (const auto& s : trace.steps) {
    if (format_score(s.model_text) == 0) return 0;
  }
  return 1;
}

double reward_value(double accuracy, double consistency, int format) {
  return accuracy * consistency + 0.5 * static_cast<double>(format);
}

double reward(const AgentTrace& trace, std::string_view gold_answer, std::string_view query, Judge& judge) {
  if (trace.steps.empty()) fail(ErrorCode::reject_invalid, "trace has no steps");
  const auto s = judge.score(query, gold_answer, trace);
  return reward_value(s.accuracy, s.consistency, trace_format_score(trace));
}

std::pair<std::optional<double>, std::optional<double>> retrieval_precision_recall(
    std::span<const MemoryRef> retrieved, std::span<const MemoryRef> gold) {
  const std::set<MemoryRef> r(retrieved.begin(), retrieved.end());
  const std::set<MemoryRef> g(gold.begin(), gold.end());
  std::size_t both = 0;
  for (const auto& ref : r) both += g.contains(ref) ? 1 : 0;
  std::optional<double> precision, recall;
  if (!r.empty()) precision = double(both) / double(r.size());
  if (!g.empty()) recall = double(both) / double(g.size());
  return {precision, recall};
}

void EvalCase::validate() const {
  if (name.empty()) fail(ErrorCode::reject_invalid, "case without a name");
  for (std::size_t i = 0; i < probes.size(); ++i) {
    const auto& p = probes[i];
    const std::string where = name + "/probes/" + std::to_string(i);
    if (p.after_turn > turns.size()) fail(ErrorCode::reject_invalid, "probe after the dialogue end", where);
    if (p.options.empty() || p.gold >= p.options.size()) {
      fail(ErrorCode::reject_invalid, "gold option outside the options", where);
    }
    if (p.after_turn == 0 && !p.timestamp && turns.empty()) {
      fail(ErrorCode::reject_invalid, "probe needs a timestamp", where);
    }
  }
}

EvalCase EvalCase::from_json(const json& j) {
  auto c = guarded("eval case", [&] {
    EvalCase c;
    c.name = j.at("name").get<std::string>();
    c.user_name = j.value("user_name", std::string("User"));
    c.turns = turns_from_json(j.value("turns", json::array()));
    c.script = ScriptFixture::from_json_text(j.value("script", json::object()).dump());
    for (const auto& p : j.value("probes", json::array())) {
      Probe probe;
      probe.after_turn = p.at("after_turn").get<std::size_t>();
      probe.question = p.at("question").get<std::string>();
      probe.options = p.at("options").get<std::vector<std::string>>();
      probe.gold = p.at("gold").get<std::size_t>();
      for (const auto& r : p.value("gold_memory", json::array())) probe.gold_memory.push_back(memory_ref_from_json(r));
      probe.aspect = p.value("aspect", std::string());
      if (p.contains("timestamp")) probe.timestamp = timestamp_from_json(p["timestamp"]);
      c.probes.push_back(std::move(probe));
    }
    return c;
  });
  c.validate();
  return c;
}

std::vector<EvalCase> load_suite(const std::filesystem::path& path) {
  const auto j = read_json_file(path);
  return guarded("suite", [&] {
    const int version = j.at("version").get<int>();
    if (version != kSuiteFormatVersion) {
      fail(ErrorCode::unsupported_version, "suite version " + std::to_string(version), path.string());
    }
    std::vector<EvalCase> cases;
    for (const auto& c : j.at("cases")) cases.push_back(EvalCase::from_json(c));
    return cases;
  });
}

std::optional<double> Metrics::accuracy() const {
  return mean_of(outcomes, [](const ProbeOutcome& o) { return std::optional<double>(o.correct ? 1.0 : 0.0); });
}
std::optional<double> Metrics::mean_precision() const {
  return mean_of(outcomes, [](const ProbeOutcome& o) { return o.precision; });
}
std::optional<double> Metrics::mean_recall() const {
  return mean_of(outcomes, [](const ProbeOutcome& o) { return o.recall; });
}
std::optional<double> Metrics::mean_reward() const {
  return mean_of(outcomes, [](const ProbeOutcome& o) { return std::optional<double>(o.reward); });
}

Metrics replay_and_score(const EvalCase& eval_case, const EvalOptions& options) {
  eval_case.validate();
  auto embedder = options.embedder ? options.embedder : std::make_shared<HashEmbedding>();
  auto prompts = options.prompts ? options.prompts : std::make_shared<PromptLibrary>(PromptLibrary::builtin());
  std::shared_ptr<Judge> judge = options.judge ? options.judge : std::make_shared<ExactMatchJudge>();
  auto backend = std::make_shared<ScriptedBackend>(eval_case.script);
  auto session = fresh_session(eval_case.user_name, backend, embedder, prompts, options.agent, std::nullopt);

  Metrics metrics;
  metrics.cases = 1;
  std::vector<std::size_t> order(eval_case.probes.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return eval_case.probes[a].after_turn < eval_case.probes[b].after_turn;
  });

  std::size_t replayed = 0;
  for (const auto pi : order) {
    const Probe& probe = eval_case.probes[pi];
    while (replayed < probe.after_turn) session->chat(chat_input(eval_case.turns[replayed++]));

    const Timestamp when = probe.timestamp ? *probe.timestamp
                           : replayed > 0  ? eval_case.turns[replayed - 1].timestamp
                                           : eval_case.turns.front().timestamp;
    // A probe after a long gap sees the same consolidated state the next turn would.
    {
      const auto snap = session->snapshot();
      const auto& log = snap.store.dialogue();
      if (!log.empty() && session_boundary(log.back().query.timestamp, when) &&
          log.back().session_id > snap.store.consolidated_through_session()) {
        session->end_session();
      }
    }
    const UserState state = session->snapshot();
    const Query query{probe.question + lettered_options(probe.options), std::nullopt, {}, when};
    const AgentContext ctx{state.store, state.profile, state.index, *prompts, *backend};
    AgentTrace trace = respond(query, ctx, options.agent,
                               "probe-" + eval_case.name + "-" + std::to_string(pi));

    ProbeOutcome out;
    out.case_name = eval_case.name;
    out.probe_index = pi;
    out.aspect = probe.aspect;
    out.chosen = match_option(trace.final_answer, probe.options);
    out.correct = out.chosen == probe.gold;
    std::vector<MemoryRef> retrieved;
    for (const auto& s : trace.steps) {
      for (const auto& h : s.hits) retrieved.push_back(h.ref);
    }
    std::tie(out.precision, out.recall) = retrieval_precision_recall(retrieved, probe.gold_memory);
    const std::string gold_answer =
        std::string(1, static_cast<char>('A' + probe.gold)) + ". " + probe.options[probe.gold];
    out.reward = reward(trace, gold_answer, query.text, *judge);
    out.trace = std::move(trace);

    auto& stats = metrics.by_aspect[probe.aspect.empty() ? "untagged" : probe.aspect];
    ++stats.probes;
    stats.correct += out.correct ? 1 : 0;
    metrics.outcomes.push_back(std::move(out));
  }
  std::sort(metrics.outcomes.begin(), metrics.outcomes.end(),
            [](const ProbeOutcome& a, const ProbeOutcome& b) { return a.probe_index < b.probe_index; });
  return metrics;
}

Metrics run_suite(std::span<const EvalCase> cases, const EvalOptions& options) {
  const std::size_t workers = std::max<std::size_t>(1, std::thread::hardware_concurrency());
  std::vector<Metrics> parts(cases.size());
  for (std::size_t start = 0; start < cases.size(); start += workers) {
    std::vector<std::future<Metrics>> batch;
    const std::size_t end = std::min(cases.size(), start + workers);
    for (std::size_t i = start; i < end; ++i) {
      batch.push_back(std::async(std::launch::async, [&, i] { return replay_and_score(cases[i], options); }));
    }
    for (std::size_t i = start; i < end; ++i) parts[i] = batch[i - start].get();
  }
  Metrics total;
  for (auto& m : parts) {
    total.cases += m.cases;
    for (auto& o : m.outcomes) total.outcomes.push_back(std::move(o));
    for (const auto& [aspect, s] : m.by_aspect) {
      total.by_aspect[aspect].probes += s.probes;
      total.by_aspect[aspect].correct += s.correct;
    }
  }
  return total;
}

std::string format_metrics_table(const Metrics& metrics) {
  const auto fmt = [](std::optional<double> v) {
    if (!v) return std::string("n/a");
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f", *v);
    return std::string(buf);
  };
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof line, "%-22s %10s\n", "metric", "value");
  out << line;
  const std::pair<const char*, std::string> rows[] = {
      {"cases", std::to_string(metrics.cases)},
      {"probes", std::to_string(metrics.probes())},
      {"accuracy", fmt(metrics.accuracy())},
      {"retrieval_precision", fmt(metrics.mean_precision())},
      {"retrieval_recall", fmt(metrics.mean_recall())},
      {"mean_reward", fmt(metrics.mean_reward())},
  };
  for (const auto& [name, value] : rows) {
    std::snprintf(line, sizeof line, "%-22s %10s\n", name, value.c_str());
    out << line;
  }
  if (!metrics.by_aspect.empty()) {
    std::snprintf(line, sizeof line, "\n%-22s %10s %10s %10s\n", "aspect", "probes", "correct", "accuracy");
    out << line;
    for (const auto& [aspect, s] : metrics.by_aspect) {
      std::snprintf(line, sizeof line, "%-22s %10zu %10zu %10s\n", aspect.c_str(), s.probes, s.correct,
                    fmt(s.accuracy()).c_str());
      out << line;
    }
  }
  return out.str();
}

json metrics_to_json(const Metrics& metrics) {
  const auto opt = [](std::optional<double> v) { return v ? json(*v) : json(nullptr); };
  json aspects = json::object();
  for (const auto& [aspect, s] : metrics.by_aspect) {
    aspects[aspect] = {{"probes", s.probes}, {"correct", s.correct}, {"accuracy", s.accuracy()}};
  }
  json outcomes = json::array();
  for (const auto& o : metrics.outcomes) {
    outcomes.push_back({{"case", o.case_name},
                        {"probe", o.probe_index},
                        {"aspect", o.aspect},
                        {"chosen", o.chosen ? json(*o.chosen) : json(nullptr)},
                        {"correct", o.correct},
                        {"precision", opt(o.precision)},
                        {"recall", opt(o.recall)},
                        {"reward", o.reward},
                        {"trace_id", o.trace.trace_id}});
  }
  return {{"cases", metrics.cases},
          {"probes", metrics.probes()},
          {"accuracy", opt(metrics.accuracy())},
          {"retrieval_precision", opt(metrics.mean_precision())},
          {"retrieval_recall", opt(metrics.mean_recall())},
          {"mean_reward", opt(metrics.mean_reward())},
          {"aspects", aspects},
          {"outcomes", outcomes}};
}

}  // namespace memoria
