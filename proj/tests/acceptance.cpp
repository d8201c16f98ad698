// Acceptance suite: one PASS/FAIL line per criterion with its runtime.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <set>

#include <spdlog/spdlog.h>

#include "memoria/agent.hpp"
#include "memoria/consolidation.hpp"
#include "memoria/engine.hpp"
#include "memoria/error.hpp"
#include "memoria/eval.hpp"
#include "memoria/pem.hpp"
#include "memoria/persistence.hpp"
#include "memoria/tag_parser.hpp"
#include "parser_corpus.hpp"
#include "support.hpp"

using namespace memoria;
using namespace memoria::testing;
namespace fs = std::filesystem;

namespace {

struct Check {
  bool ok = true;
  std::string why;
  void require(bool cond, const std::string& what) {
    if (!cond && ok) {
      ok = false;
      why = what;
    }
  }
};

int failures = 0;

void criterion(const char* name, double limit_ms, const std::function<void(Check&)>& body) {
  Check check;
  const auto start = std::chrono::steady_clock::now();
  try {
    body(check);
  } catch (const std::exception& e) {
    check.ok = false;
    check.why = std::string("exception: ") + e.what();
  }
  const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  if (check.ok && ms >= limit_ms) {
    check.ok = false;
    check.why = "too slow";
  }
  std::printf("%s %-26s %10.3f ms (limit %g ms)%s%s\n", check.ok ? "PASS" : "FAIL", name, ms, limit_ms,
              check.ok ? "" : "  ", check.why.c_str());
  if (!check.ok) ++failures;
}

Timestamp ts(const char* s) { return Timestamp::parse(s); }

std::shared_ptr<PromptLibrary> prompts() { return std::make_shared<PromptLibrary>(PromptLibrary::builtin()); }

void lambda_schedule_exact(Check& c) {
  const std::pair<std::uint64_t, double> expected[] = {{0, 0.5}, {25, 0.7}, {50, 0.9}, {500, 0.9}};
  for (const auto& [m, want] : expected) {
    c.require(std::abs(lambda_schedule(m) - want) <= 1e-12, "lambda(" + std::to_string(m) + ")");
  }
}

void pem_contraction(Check& c) {
  PersonalityProfile p;
  TurnPersonality push;
  push.scores = {5, 3, 3, 3, 3};
  for (int i = 0; i < 300; ++i) p = evolve(p, push);
  c.require(std::abs(p.traits[0] - 5.0) <= 1e-6, "openness did not reach 5");
  PersonalityProfile q;
  q.traits = {4.25, 1.5, 3.75, 2.0, 4.875};
  const auto traits = q.traits;
  for (int i = 0; i < 1000; ++i) q = evolve(q, TurnPersonality{});
  c.require(q.traits == traits, "neutral turns changed the profile");
  c.require(q.turns == 1000, "neutral turns not counted");
}

void retrieval_oracle(Check& c) {
  MemoryIndex index(std::make_shared<HashEmbedding>());
  const auto records = random_records(20250301, 200);
  index.upsert(records);
  std::mt19937 rng(4242);
  for (int i = 0; i < 100; ++i) {
    const auto q = random_query(rng);
    const auto ex = random_exclusions(rng, records);
    const auto fast = index.search(q, ex);
    const auto slow = index.oracle_scan(q, ex);
    for (const auto s : {Substore::procedural, Substore::semantic, Substore::episodic}) {
      const auto& a = fast.group(s);
      const auto& b = slow.group(s);
      c.require(a.size() == b.size(), "group size differs at query " + std::to_string(i));
      for (std::size_t k = 0; k < std::min(a.size(), b.size()); ++k) {
        c.require(a[k].ref == b[k].ref, "order differs at query " + std::to_string(i));
        c.require(std::abs(a[k].score - b[k].score) <= 1e-9, "score differs at query " + std::to_string(i));
        c.require(!ex.contains(a[k].ref), "excluded ref returned");
        c.require(s == Substore::procedural || q.admits(a[k].created_at), "hit outside the window");
      }
    }
  }
}

void trajectory_dedup(Check& c) {
  MemoryStore store(CoreMemory::with_name("alex"));
  const char* facts[] = {"User drinks coffee every morning", "User likes coffee with milk", "User drinks tea at night",
                         "User prefers coffee over tea",     "User bought a coffee grinder", "User drinks green tea",
                         "User tried coffee in Rome",        "User drinks coffee after lunch", "User likes iced tea",
                         "User's coffee mug is blue"};
  auto t = ts("2025-01-01 08:00");
  for (const auto* f : facts) {
    SemanticEntry e;
    e.content = f;
    e.keywords = {"coffee", "tea", "drink"};
    e.created_at = t;
    t = t.plus_minutes(60 * 24);
    store.append_semantic(e);
  }
  UserState state(std::make_shared<HashEmbedding>(), std::move(store));
  ScriptFixture f = quiet_script({entry("response", {std::string(kRetrievalExhaustedInstruction)}, answer("Coffee."))});
  f.fallbacks["response"] = retrieve("coffee tea drink");
  ScriptedBackend backend(f);
  const auto lib = PromptLibrary::builtin();
  AgentContext ctx{state.store, state.profile, state.index, lib, backend};
  const auto trace = respond({"What do I drink?", {}, {}, ts("2025-02-01 08:00")}, ctx, {}, "dedup");
  c.require(trace.retrieval_attempts == 3, "expected three retrievals");
  c.require(trace.final_answer == "Coffee.", "unexpected final answer");
  const auto fed = trace.fed_refs();
  c.require(std::set<MemoryRef>(fed.begin(), fed.end()).size() == fed.size(), "a memory id was retrieved twice");
  c.require(fed.size() == 10, "expected all ten entries across three steps");
  for (int i = 1; i < 3; ++i) c.require(!trace.steps[i].excluded.empty(), "dedup filter never engaged");
}

void parser_conformance(Check& c) {
  const auto corpus = parser_corpus();
  c.require(corpus.size() == 40, "corpus must have 40 cases");
  for (const auto& pc : corpus) c.require(parser_case_holds(pc), std::string("case '") + pc.name + "'");
  std::mt19937 rng(7);
  for (int i = 0; i < 200; ++i) {
    RetrievalQuery q;
    q.keywords = random_text(rng, 1, 5) + (i % 3 == 0 ? ", \"quoted\" \\ part" : "");
    const auto base = ts("2025-01-01 00:00").plus_minutes(static_cast<std::int64_t>(rng() % 500000));
    if (rng() % 2) q.start = base;
    if (rng() % 2) q.end = base.plus_minutes(static_cast<std::int64_t>(rng() % 10000));
    const auto step = parse_agent_step("<think>t</think><retrieve>\n" + render_retrieve_block(q) + "</retrieve>");
    c.require(!step.is_answer() && step.retrieve().query == q, "round trip failed for '" + q.keywords + "'");
  }
}

void reward_cases(Check& c) {
  c.require(reward_value(1, 1, 1) == 1.5, "1,1,1");
  c.require(reward_value(1, 0, 1) == 0.5, "1,0,1");
  c.require(reward_value(1, 1, 0) == 1.0, "1,1,0");
}

void session_segmentation(Check& c) {
  const std::int64_t gaps[] = {5, 59, 60, 61, 1440};
  auto backend = std::make_shared<ScriptedBackend>(quiet_script());
  Engine engine({}, backend, std::make_shared<HashEmbedding>(), prompts());
  const auto user = engine.open("segments");
  auto t = ts("2025-03-01 08:00");
  std::int64_t expected_session = 0;
  int boundaries = 0, consolidations = 0;
  for (int i = 0; i < 30; ++i) {
    if (i > 0) {
      const auto gap = gaps[(i * 7 + i / 5) % 5];
      t = t.plus_minutes(gap);
      if (gap >= 60) {
        ++expected_session;
        ++boundaries;
      }
    }
    const auto r = user->chat({"turn " + std::to_string(i), {}, {}, t});
    c.require(r.session_id == expected_session, "turn " + std::to_string(i) + " in the wrong session");
    if (r.consolidation) {
      ++consolidations;
      c.require(r.consolidation->session_id == expected_session - 1, "consolidated the wrong session");
    }
  }
  c.require(boundaries > 0 && consolidations == boundaries, "consolidation count differs from boundary count");
  c.require(user->snapshot().store.consolidated_through_session() == expected_session - 1, "sessions left open");
}

void preference_shift(Check& c) {
  TempDir dir;
  const auto fixture = ReplayFixture::load(source_dir() / "fixtures" / "replay" / "preference_shift.json");
  const auto outcome = replay(fixture, dir.path() / "alex", std::make_shared<HashEmbedding>(), prompts());
  const auto state = load_state(dir.path() / "alex", std::make_shared<HashEmbedding>());
  std::optional<std::int64_t> cola, sprite;
  for (const auto& e : state.store.semantic()) {
    if (e.content.find("Coca-Cola") != std::string::npos) cola = e.id;
    else if (e.content.find("Sprite") != std::string::npos) sprite = e.id;
  }
  c.require(cola && sprite, "semantic entries missing");
  const auto& trace = outcome.traces.back();
  std::optional<std::size_t> cola_rank, sprite_rank;
  for (const auto& step : trace.steps) {
    for (std::size_t i = 0; i < step.hits.size(); ++i) {
      const auto& h = step.hits[i];
      if (h.ref.substore != Substore::semantic) continue;
      if (cola && h.ref.id == *cola) cola_rank = i;
      if (sprite && h.ref.id == *sprite) sprite_rank = i;
    }
  }
  c.require(cola_rank && sprite_rank && *cola_rank < *sprite_rank, "Coca-Cola not ranked above Sprite");
  c.require(trace.final_answer == "Grab a Coca-Cola, since you switched from Sprite.", "wrong final answer");
  bool first = false, second = false;
  for (const auto& e : state.store.episodic()) {
    for (const auto i : e.turn_indices) {
      first = first || i == 0;
      second = second || i == 1;
    }
  }
  c.require(first && second, "episodic log lacks one of the events");
}

void persistence_round_trip(Check& c) {
  TempDir dir;
  const auto fixture = ReplayFixture::load(source_dir() / "fixtures" / "replay" / "long_history_50.json");
  c.require(fixture.turns.size() == 50, "fixture must have 50 turns");
  replay(fixture, dir.path() / "a", std::make_shared<HashEmbedding>(), prompts());
  const auto loaded = load_state(dir.path() / "a", std::make_shared<HashEmbedding>());
  c.require(loaded.store.dialogue().size() == 50, "dialogue not fully saved");
  save_state(loaded, dir.path() / "b");
  for (const auto* f : {"core.json", "procedural.json", "profile.json", "semantic.log", "episodic.log", "dialogue.log",
                        "manifest.json"}) {
    c.require(read_file(dir.path() / "a" / f) == read_file(dir.path() / "b" / f), std::string(f) + " differs");
  }
  auto log = read_file(dir.path() / "b" / "dialogue.log");
  write_file(dir.path() / "b" / "dialogue.log", log.substr(0, log.size() / 2));
  try {
    load_state(dir.path() / "b", std::make_shared<HashEmbedding>());
    c.require(false, "truncated log not detected");
  } catch (const Error& e) {
    c.require(e.code() == ErrorCode::corrupt_state && e.location() == "dialogue.log", "wrong corruption report");
  }
}

class FuzzBackend final : public ChatBackend {
 public:
  explicit FuzzBackend(std::uint32_t seed) : rng_(seed) {}
  std::string chat(const ChatRequest& r) override {
    if (rng_() % 4 == 0) return "unparseable";
    const auto& v = vocabulary();
    const auto w = v[rng_() % v.size()];
    if (r.template_id == "personality") {
      return personality(1 + rng_() % 5, 1 + rng_() % 5, 1 + rng_() % 5, 1 + rng_() % 5, 1 + rng_() % 5);
    }
    if (r.template_id == "semantic") return rng_() % 2 ? semantic_yes("User mentioned " + w, w) : semantic_no();
    if (r.template_id == "core") return "\"name\": \"fuzz\"\n\"" + w + "\": \"" + w + "\"";
    if (r.template_id == "procedural") return "\"" + w + "\": \"User often does " + w + "\"";
    return "\"topic_summary\": \"" + w + "\"\n\"keywords\": \"" + w + "\"\n\"source_dialog_indices\": [" +
           std::to_string(rng_() % 40) + "]";
  }

 private:
  std::mt19937 rng_;
};

void update_separation(Check& c) {
  const auto lib = PromptLibrary::builtin();
  std::mt19937 rng(99);
  for (std::uint32_t round = 0; round < 60 && c.ok; ++round) {
    UserState state(std::make_shared<HashEmbedding>(), MemoryStore(CoreMemory::with_name("fuzz")));
    FuzzBackend backend(round);
    auto t = ts("2025-01-01 08:00");
    std::int64_t session = 0;
    for (int step = 0; step < 40; ++step) {
      if (rng() % 4 == 0 && !state.store.session_turn_indices(session).empty()) {
        const auto profile = state.profile;
        end_of_session_update(session++, state, lib, backend);
        c.require(state.profile == profile, "session-end update touched the profile");
        t = t.plus_minutes(180);
        continue;
      }
      Turn turn;
      turn.session_id = session;
      turn.query = {random_text(rng, 1, 6), {}, {}, t};
      const auto idx = state.store.append_turn(turn);
      t = t.plus_minutes(4);
      const auto core = state.store.core();
      const auto procedural = state.store.procedural();
      per_turn_update(idx, state, lib, backend);
      c.require(state.store.core() == core, "per-turn update touched core memory");
      c.require(state.store.procedural() == procedural, "per-turn update touched procedural memory");
    }
  }
}

}  // namespace

int main() {
  spdlog::set_level(spdlog::level::off);
  criterion("lambda-schedule", 1, lambda_schedule_exact);
  criterion("pem-contraction", 1000, pem_contraction);
  criterion("retrieval-oracle", 5000, retrieval_oracle);
  criterion("trajectory-dedup", 1000, trajectory_dedup);
  criterion("parser-conformance", 1000, parser_conformance);
  criterion("reward-formula", 1, reward_cases);
  criterion("session-segmentation", 1000, session_segmentation);
  criterion("preference-shift", 2000, preference_shift);
  criterion("persistence-round-trip", 5000, persistence_round_trip);
  criterion("update-separation", 10000, update_separation);
  std::printf("%d of 10 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
