#include <gtest/gtest.h>

#include "memoria/error.hpp"
#include "memoria/prompts.hpp"
#include "support.hpp"

using namespace memoria;
using namespace memoria::testing;

TEST(Prompts, BuiltinsMatchPromptFiles) {
  const auto lib = PromptLibrary::builtin();
  for (const auto id : {prompt_id::response, prompt_id::intermediate, prompt_id::personality, prompt_id::semantic,
                        prompt_id::procedural, prompt_id::core, prompt_id::episodic, prompt_id::judge}) {
    ASSERT_TRUE(lib.has(id)) << id;
    EXPECT_EQ(lib.get(id), read_file(source_dir() / "prompts" / (std::string(id) + ".txt"))) << id;
  }
  EXPECT_FALSE(lib.has("nope"));
  try {
    lib.get("nope");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::key_not_found);
  }
}

TEST(Prompts, Placeholders) {
  const auto lib = PromptLibrary::builtin();
  const std::map<std::string_view, std::vector<std::string>> expected = {
      {prompt_id::response, {"UserProfile", "Openness", "Conscientiousness", "Extraversion", "Agreeableness",
                             "Neuroticism", "DialogHistory", "UserQuery"}},
      {prompt_id::intermediate, {"ProceduralMemory", "SemanticMemory", "DialogHistory"}},
      {prompt_id::personality, {"UserProfile", "DialogHistory", "UserQuery"}},
      {prompt_id::semantic, {"UserProfile", "DialogHistory", "UserQuery"}},
      {prompt_id::procedural, {"UserProfile", "DialogHistory", "CurrentProceduralMemory"}},
      {prompt_id::core, {"UserProfile", "DialogHistory"}},
      {prompt_id::episodic, {"UserProfile", "DialogHistory"}},
  };
  for (const auto& [id, names] : expected) {
    PromptVars vars;
    for (const auto& n : names) {
      EXPECT_NE(lib.get(id).find("{" + n + "}"), std::string::npos) << id << " " << n;
      vars[n] = "<<" + n + ">>";
    }
    const auto rendered = lib.render(id, vars);
    for (const auto& n : names) {
      EXPECT_EQ(rendered.find("{" + n + "}"), std::string::npos) << id << " " << n;
      EXPECT_NE(rendered.find("<<" + n + ">>"), std::string::npos) << id << " " << n;
    }
  }
}

TEST(Prompts, Substitute) {
  EXPECT_EQ(substitute("a {X} b {Y} {X}", {{"X", "1"}}), "a 1 b {Y} 1");
  EXPECT_EQ(substitute("{\"json\": {X}}", {{"X", "v"}}), "{\"json\": v}");
  EXPECT_EQ(substitute("{} {", {}), "{} {");
  // Substituted text is not rescanned.
  EXPECT_EQ(substitute("{A}", {{"A", "{B}"}, {"B", "no"}}), "{B}");
}

TEST(Prompts, LoadDirectoryOverrides) {
  TempDir dir;
  write_file(dir.path() / "response.txt", "custom {UserQuery}");
  write_file(dir.path() / "extra.txt", "x");
  write_file(dir.path() / "ignored.md", "y");
  const auto lib = PromptLibrary::load_directory(dir.path());
  EXPECT_EQ(lib.render(prompt_id::response, {{"UserQuery", "hi"}}), "custom hi");
  EXPECT_TRUE(lib.has("extra"));
  EXPECT_FALSE(lib.has("ignored"));
  EXPECT_TRUE(lib.has(prompt_id::core));
  EXPECT_THROW(PromptLibrary::load_directory(dir.path() / "missing"), Error);
}

TEST(Fragments, CoreAndDialogue) {
  CoreMemory core = CoreMemory::with_name("Ana");
  core.persona["job"] = "nurse";
  EXPECT_EQ(render_core_memory(core), "\n[human]\n- name: Ana\n[persona]\n- job: nurse");

  Turn t;
  t.index = 7;
  t.query.text = "hello";
  t.query.timestamp = Timestamp::parse("2025-03-01 12:10");
  t.response = "hi";
  std::vector<Turn> turns{t};
  EXPECT_EQ(render_dialogue_turns(turns, true), "\n[7] (2025-03-01 12:10) User: hello\nAssistant: hi");
  EXPECT_EQ(render_dialogue_turns(turns, false), "\n(2025-03-01 12:10) User: hello\nAssistant: hi");
  EXPECT_EQ(render_dialogue_turns({}, true), "None");
}

TEST(Fragments, Hits) {
  MemoryStore store(CoreMemory::with_name("Ana"));
  Turn t;
  t.query.text = "We went to Rome";
  t.query.timestamp = Timestamp::parse("2025-03-01 12:10");
  t.response = "Nice";
  store.append_turn(t);
  SemanticEntry s;
  s.content = "User likes tea";
  s.keywords = {"tea", "drink"};
  s.created_at = Timestamp::parse("2025-03-01 12:10");
  store.append_semantic(s);
  EpisodicEntry e;
  e.summary = "Trip to Rome";
  e.keywords = {"Rome"};
  e.turn_indices = {0};
  e.created_at = Timestamp::parse("2025-03-01 12:10");
  store.append_episode(e);
  const std::vector<ProceduralOp> ops = {{CrudKind::create, "run", "User runs on Thursdays", ProceduralKind::habit}};
  store.apply_procedural_crud(ops, Timestamp::parse("2025-03-01 13:00"));

  const std::vector<RetrievalHit> sem = {{{Substore::semantic, 0}, 0.5, {}, ""}, {{Substore::semantic, 9}, 0.4, {}, ""}};
  EXPECT_EQ(render_semantic_hits(sem, store), "\n- (2025-03-01 12:10) User likes tea [keywords: tea, drink]");
  const std::vector<RetrievalHit> proc = {{{Substore::procedural, 0}, 0.5, {}, ""}};
  EXPECT_EQ(render_procedural_hits(proc, store), "\n- run: User runs on Thursdays");
  const std::vector<RetrievalHit> epi = {{{Substore::episodic, 0}, 0.5, {}, ""}};
  EXPECT_EQ(render_episodic_hits(epi, store),
            "\n- (2025-03-01 12:10) Trip to Rome [keywords: Rome]\n[0] (2025-03-01 12:10) User: We went to Rome\nAssistant: Nice");
  EXPECT_EQ(render_episodic_hits({}, store), "None");
  EXPECT_EQ(render_procedural_memory(store.procedural()), "\n\"run\": User runs on Thursdays");
  EXPECT_EQ(render_procedural_memory({}), "None");
}
