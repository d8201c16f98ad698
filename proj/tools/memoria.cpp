// Command-line front end: repl, replay, eval, inspect, serve.

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "memoria/engine.hpp"
#include "memoria/error.hpp"
#include "memoria/eval.hpp"
#include "memoria/persistence.hpp"
#include "memoria/serialization.hpp"
#include "memoria/service.hpp"

namespace fs = std::filesystem;
using namespace memoria;

namespace {

constexpr int kExitError = 1;
constexpr int kExitUsage = 2;
constexpr int kExitFixtureMismatch = 3;

struct Common {
  std::string prompts_dir;
  std::string embedding_url;
  std::size_t embedding_dim = HashEmbedding::kDefaultDimension;
  std::string log_level = "warn";
};

std::shared_ptr<const EmbeddingProvider> make_embedder(const Common& c) {
  if (!c.embedding_url.empty()) return std::make_shared<HttpEmbeddingProvider>(c.embedding_url, c.embedding_dim);
  return std::make_shared<HashEmbedding>(c.embedding_dim);
}

std::shared_ptr<const PromptLibrary> make_prompts(const Common& c) {
  if (c.prompts_dir.empty()) return std::make_shared<PromptLibrary>(PromptLibrary::builtin());
  return std::make_shared<PromptLibrary>(PromptLibrary::load_directory(c.prompts_dir));
}

// "scripted:FILE" or "http".
std::shared_ptr<ChatBackend> make_backend(const std::string& choice) {
  if (choice.rfind("scripted:", 0) == 0) {
    return std::make_shared<ScriptedBackend>(ScriptFixture::load(choice.substr(9)));
  }
  if (choice == "http") return std::make_shared<HttpBackend>(HttpBackendConfig::from_env());
  throw CLI::ValidationError("--backend", "expected scripted:FILE or http");
}

std::unique_ptr<UserSession> open_single(const fs::path& dir, const std::string& user, const Common& common,
                                         std::shared_ptr<ChatBackend> backend, bool synchronous) {
  auto embedder = make_embedder(common);
  EngineConfig config;
  config.synchronous_updates = synchronous;
  UserState state = state_exists(dir) ? load_state(dir, embedder)
                                      : UserState(embedder, MemoryStore(CoreMemory::with_name(user)));
  if (!state_exists(dir)) save_state(state, dir);
  return std::make_unique<UserSession>(user, std::move(state), std::move(backend), make_prompts(common), config,
                                       dir);
}

json memory_dump(const UserState& state, const std::string& type) {
  const auto& store = state.store;
  json out = json::array();
  if (type == "core") return to_json(store.core());
  if (type == "profile") return to_json(state.profile);
  if (type == "semantic") {
    for (const auto& e : store.semantic()) out.push_back(to_json(e));
  } else if (type == "episodic") {
    for (const auto& e : store.episodic()) out.push_back(to_json(e));
  } else if (type == "procedural") {
    for (const auto& [key, e] : store.procedural()) out.push_back(to_json(e));
  } else if (type == "dialogue") {
    for (const auto& t : store.dialogue()) out.push_back(to_json(t));
  }
  return out;
}

void print_consolidation(const SessionUpdateReport& r) {
  std::cout << "[session " << r.session_id << " consolidated: " << r.core_ops.size() << " core ops"
            << (r.core_applied ? "" : " (not applied)") << ", " << r.procedural_ops.size() << " procedural ops"
            << (r.procedural_applied ? "" : " (not applied)") << ", " << r.episode_ids.size() << " episodes]\n";
  for (const auto& p : r.problems) std::cout << "  warning: " << p << "\n";
}

int run_repl(const fs::path& dir, const std::string& user, const std::string& backend_spec,
             const std::string& start, const Common& common) {
  auto session = open_single(dir, user, common, make_backend(backend_spec), true);
  const auto existing = session->snapshot();
  Timestamp clock = !start.empty()                        ? Timestamp::parse(start)
                    : !existing.store.dialogue().empty() ? existing.store.dialogue().back().query.timestamp
                                                         : Timestamp::now();
  std::cout << "clock " << clock.str() << "; /advance 90m, /end, /flush, /profile, /memory TYPE, /quit\n";
  std::string line;
  while (std::cout << "> " << std::flush, std::getline(std::cin, line)) {
    if (line.empty()) continue;
    try {
      if (line == "/quit" || line == "/exit") break;
      if (line.rfind("/advance", 0) == 0) {
        clock = clock.plus_minutes(parse_duration_minutes(line.size() > 9 ? line.substr(9) : ""));
        std::cout << "clock " << clock.str() << "\n";
      } else if (line == "/end") {
        if (const auto r = session->end_session()) print_consolidation(*r);
        else std::cout << "nothing to consolidate\n";
      } else if (line == "/flush") {
        session->flush();
      } else if (line == "/profile") {
        std::cout << render_profile(session->snapshot().profile) << "\n";
      } else if (line.rfind("/memory", 0) == 0) {
        const std::string type = line.size() > 8 ? line.substr(8) : "core";
        std::cout << memory_dump(session->snapshot(), type).dump(2) << "\n";
      } else if (line.front() == '/') {
        std::cout << "unknown command\n";
      } else {
        const auto result = session->chat({line, std::nullopt, {}, clock});
        if (result.consolidation) print_consolidation(*result.consolidation);
        std::cout << result.response << "\n";
      }
    } catch (const Error& e) {
      if (e.code() == ErrorCode::fixture_mismatch) throw;
      std::cout << "error: " << e.what() << "\n";
    }
  }
  session->flush();
  return 0;
}

int run_replay(const fs::path& fixture_path, const fs::path& dir, bool force, const std::string& out_path,
               const Common& common) {
  const auto fixture = ReplayFixture::load(fixture_path);
  if (force && state_exists(dir)) fs::remove_all(dir);
  const auto outcome = replay(fixture, dir, make_embedder(common), make_prompts(common));
  std::ofstream file;
  if (!out_path.empty()) file.open(out_path, std::ios::binary | std::ios::trunc);
  std::ostream& out = out_path.empty() ? std::cout : file;
  for (const auto& t : outcome.traces) out << json{{"trace", to_json(t)}}.dump() << "\n";
  for (const auto& c : outcome.consolidations) out << json{{"consolidation", to_json(c)}}.dump() << "\n";
  return out ? 0 : kExitError;
}

int run_eval(const fs::path& suite, const std::string& judge, const std::string& json_out,
             const Common& common) {
  EvalOptions options;
  options.embedder = make_embedder(common);
  options.prompts = make_prompts(common);
  if (judge == "llm") options.judge = std::make_shared<LlmJudge>(make_backend("http"), options.prompts);
  const auto cases = load_suite(suite);
  const auto metrics = run_suite(cases, options);
  std::cout << format_metrics_table(metrics);
  if (!json_out.empty()) {
    std::ofstream f(json_out, std::ios::binary | std::ios::trunc);
    f << metrics_to_json(metrics).dump(2) << "\n";
  }
  return 0;
}

Service* g_service = nullptr;

int run_serve(const fs::path& root, const std::string& host, int port, const std::string& backend_spec,
              const std::string& static_dir, bool async_updates, const Common& common) {
  EngineConfig config;
  config.synchronous_updates = !async_updates;
  config.state_root = root;
  auto engine = std::make_shared<Engine>(config, make_backend(backend_spec), make_embedder(common),
                                         make_prompts(common));
  Service service(engine);
  if (!static_dir.empty() && !service.mount_static(static_dir)) {
    std::cerr << "static directory not found: " << static_dir << "\n";
    return kExitUsage;
  }
  g_service = &service;
  std::signal(SIGINT, [](int) { if (g_service) g_service->stop(); });
  std::signal(SIGTERM, [](int) { if (g_service) g_service->stop(); });
  spdlog::info("listening on {}:{}", host, port);
  std::cerr << "listening on " << host << ":" << port << "\n";
  const bool ok = service.listen(host, port);
  g_service = nullptr;
  return ok ? 0 : kExitError;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"memoria: personalized memory assistant engine"};
  app.require_subcommand(1);
  Common common;
  app.add_option("--prompts", common.prompts_dir, "Directory of <id>.txt prompt overrides");
  app.add_option("--embedding-url", common.embedding_url, "Remote embedding endpoint (default: hashed features)");
  app.add_option("--embedding-dim", common.embedding_dim, "Embedding dimension")->check(CLI::PositiveNumber);
  app.add_option("--log-level", common.log_level, "trace|debug|info|warn|error|off");

  std::string state, backend = "http", user = "User", start, fixture, out, suite, judge = "exact", json_out,
              type = "semantic", host = "127.0.0.1", static_dir;
  bool force = false, async_updates = false;
  int port = 8080;

  auto* repl = app.add_subcommand("repl", "Interactive chat on a virtual clock");
  repl->add_option("--state", state, "User state directory")->required();
  repl->add_option("--backend", backend, "scripted:FILE or http");
  repl->add_option("--user", user, "Name for a new user");
  repl->add_option("--start", start, "Initial clock, \"YYYY-MM-DD HH:MM\"");

  auto* replay_cmd = app.add_subcommand("replay", "Run a scripted dialogue and print the trace log");
  replay_cmd->add_option("--fixture", fixture, "Replay fixture (JSON)")->required()->check(CLI::ExistingFile);
  replay_cmd->add_option("--state", state, "Output state directory")->required();
  replay_cmd->add_flag("--force", force, "Replace an existing state directory");
  replay_cmd->add_option("--out", out, "Write the trace log here instead of stdout");

  auto* eval_cmd = app.add_subcommand("eval", "Score an evaluation suite");
  eval_cmd->add_option("--suite", suite, "Suite file (JSON)")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--judge", judge, "exact or llm")->check(CLI::IsMember({"exact", "llm"}));
  eval_cmd->add_option("--json", json_out, "Also write a machine-readable report");

  auto* inspect = app.add_subcommand("inspect", "Dump stored records");
  inspect->add_option("--state", state, "User state directory")->required()->check(CLI::ExistingDirectory);
  inspect->add_option("--type", type, "Record type")
      ->check(CLI::IsMember({"core", "semantic", "episodic", "procedural", "dialogue", "profile"}));

  auto* serve = app.add_subcommand("serve", "HTTP service");
  serve->add_option("--root", state, "Directory holding one state directory per user")->required();
  serve->add_option("--host", host, "Bind address");
  serve->add_option("--port", port, "Port")->check(CLI::Range(1, 65535));
  serve->add_option("--backend", backend, "scripted:FILE or http");
  serve->add_option("--static", static_dir, "Serve a browser front end from this directory");
  serve->add_flag("--async-updates", async_updates, "Run per-turn updates after responding");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }
  spdlog::set_default_logger(spdlog::stderr_color_mt("memoria"));
  spdlog::set_level(spdlog::level::from_str(common.log_level));

  try {
    if (*repl) return run_repl(state, user, backend, start, common);
    if (*replay_cmd) return run_replay(fixture, state, force, out, common);
    if (*eval_cmd) return run_eval(suite, judge, json_out, common);
    if (*inspect) {
      if (!state_exists(state)) {
        std::cerr << "no state in " << state << "\n";
        return kExitError;
      }
      std::cout << memory_dump(load_state(state, make_embedder(common)), type).dump(2) << "\n";
      return 0;
    }
    if (*serve) return run_serve(state, host, port, backend, static_dir, async_updates, common);
  } catch (const CLI::ValidationError& e) {
    std::cerr << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    std::cerr << e.what() << "\n";
    return e.code() == ErrorCode::fixture_mismatch ? kExitFixtureMismatch : kExitError;
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return kExitError;
  }
  return kExitUsage;
}
