#include "memoria/consolidation.hpp"

#include <algorithm>
#include <cctype>
#include <functional>
#include <set>

#include <spdlog/spdlog.h>

#include "memoria/agent.hpp"
#include "memoria/embedding.hpp"
#include "memoria/error.hpp"
#include "memoria/tag_parser.hpp"

namespace memoria {

namespace {

// Asks once, re-prompts once on a parse failure, then gives up. Backend
// errors are not caught.
template <class T>
std::optional<T> ask_structured(ChatBackend& backend, const PromptLibrary& prompts,
                                std::string_view template_id, const PromptVars& vars,
                                std::string user_text,
                                const std::function<T(const std::string&)>& parse,
                                std::vector<std::string>& problems) {
  ChatRequest req;
  req.template_id = std::string(template_id);
  req.temperature = 0.0;
  req.messages.push_back({Role::system, prompts.render(template_id, vars), {}, {}});
  req.messages.push_back({Role::user, std::move(user_text), {}, {}});
  for (int attempt = 0; attempt < 2; ++attempt) {
    const std::string reply = backend.chat(req);
    try {
      return parse(reply);
    } catch (const Error& e) {
      if (attempt == 1) {
        problems.push_back(std::string(template_id) + ": " + e.what());
        spdlog::warn("skipping {} update: {}", template_id, e.what());
        return std::nullopt;
      }
      req.messages.push_back({Role::assistant, reply, {}, {}});
      req.messages.push_back({Role::user, std::string(kKvRepairInstruction), {}, {}});
    }
  }
  return std::nullopt;
}

bool contains_any(std::string_view text, std::initializer_list<std::string_view> cues) {
  return std::any_of(cues.begin(), cues.end(),
                     [&](std::string_view c) { return text.find(c) != std::string_view::npos; });
}

std::string lowercase(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace

SemanticCategory infer_semantic_category(std::string_view content, std::string_view query_text) {
  if (split_visual_concept(content)) return SemanticCategory::visual_concept;
  const auto text = lowercase(query_text) + "\n" + lowercase(content);
  if (contains_any(text, {"remember", "don't forget", "do not forget", "keep in mind", "memorize",
                          "make a note", "note that"})) {
    return SemanticCategory::explicit_directive;
  }
  static const std::set<std::string> kPreferenceWords = {
      "like",   "likes",     "love",     "loves",   "prefer",   "prefers",   "preference",
      "enjoy",  "enjoys",    "favorite", "favourite", "hate",   "hates",     "dislike",
      "dislikes", "usually", "often",    "habit",   "habits",   "routine",   "switched", "fan"};
  for (const auto& w : tokenize_words(content)) {
    if (kPreferenceWords.contains(w)) return SemanticCategory::preference_habit;
  }
  return SemanticCategory::core_fact;
}

TurnUpdateReport per_turn_update(std::int64_t turn_index, UserState& state,
                                 const PromptLibrary& prompts, ChatBackend& backend) {
  const auto& log = state.store.dialogue();
  if (turn_index < 0 || turn_index >= static_cast<std::int64_t>(log.size())) {
    fail(ErrorCode::reject_invalid, "turn index not in the dialogue log");
  }
  const Turn turn = log[static_cast<std::size_t>(turn_index)];
  TurnUpdateReport report;
  report.turn_index = turn_index;

  const std::span<const Turn> prior(log.data(), static_cast<std::size_t>(turn_index));
  const auto context = build_context(prior, turn.query.timestamp);
  PromptVars vars;
  vars["UserProfile"] = render_core_memory(state.store.core());
  vars["DialogHistory"] = render_dialogue_turns(context, false);
  vars["UserQuery"] = turn.query.text;

  // Personality: the counter advances even when inference is skipped.
  const auto personality = ask_structured<TurnPersonality>(
      backend, prompts, prompt_id::personality, vars, turn.query.text,
      [](const std::string& reply) { return parse_personality(parse_kv_block(reply)); },
      report.problems);
  const auto before = state.profile;
  if (personality) {
    report.inferred = *personality;
    state.profile = evolve(state.profile, *personality);
  } else {
    state.profile = skip_turn(state.profile);
  }
  report.profile_changed = state.profile.traits != before.traits;

  const auto extraction = ask_structured<SemanticExtraction>(
      backend, prompts, prompt_id::semantic, vars, turn.query.text,
      [](const std::string& reply) { return parse_semantic_extraction(parse_kv_block(reply)); },
      report.problems);
  if (extraction && extraction->decision) {
    SemanticEntry entry;
    entry.created_at = turn.query.timestamp;
    entry.content = extraction->content;
    entry.keywords = split_keywords(extraction->keywords);
    entry.category = infer_semantic_category(entry.content, turn.query.text);
    if (entry.category == SemanticCategory::visual_concept) {
      const auto parts = split_visual_concept(entry.content);
      entry.visual_ref = VisualRef{parts->first, turn.query.image.value_or(""), parts->second};
    }
    try {
      const auto id = state.store.append_semantic(std::move(entry));
      const IndexRecord rec = index_record(*state.store.find_semantic(id));
      state.index.upsert(std::span(&rec, 1));
      report.semantic_id = id;
    } catch (const Error& e) {
      report.problems.push_back(std::string("semantic: ") + e.what());
      spdlog::warn("semantic entry rejected: {}", e.what());
    }
  }
  return report;
}

SessionUpdateReport end_of_session_update(std::int64_t session_id, UserState& state,
                                          const PromptLibrary& prompts, ChatBackend& backend) {
  SessionUpdateReport report;
  report.session_id = session_id;
  const auto indices = state.store.session_turn_indices(session_id);
  if (indices.empty()) {
    state.store.mark_session_consolidated(session_id);
    return report;
  }
  std::vector<Turn> turns;
  for (const auto i : indices) turns.push_back(state.store.dialogue()[static_cast<std::size_t>(i)]);
  const Timestamp session_end = turns.back().query.timestamp;
  const std::string history = render_dialogue_turns(turns, true);
  constexpr std::string_view kUserText = "Respond in the required output format.";

  // Core memory.
  {
    PromptVars vars{{"UserProfile", render_core_memory(state.store.core())}, {"DialogHistory", history}};
    const CoreMemory current = state.store.core();
    auto ops = ask_structured<std::vector<CoreOp>>(
        backend, prompts, prompt_id::core, vars, std::string(kUserText),
        [&](const std::string& reply) { return parse_core_profile(parse_kv_block(reply), current); },
        report.problems);
    if (ops) {
      report.core_ops = *ops;
      try {
        state.store.apply_core_crud(*ops);
        report.core_applied = true;
      } catch (const Error& e) {
        report.problems.push_back(std::string("core: ") + e.what());
        spdlog::warn("core update rejected: {}", e.what());
      }
    }
  }

  // Procedural memory.
  {
    PromptVars vars{{"UserProfile", render_core_memory(state.store.core())},
                    {"CurrentProceduralMemory", render_procedural_memory(state.store.procedural())},
                    {"DialogHistory", history}};
    const ProceduralMap current = state.store.procedural();
    auto ops = ask_structured<std::vector<ProceduralOp>>(
        backend, prompts, prompt_id::procedural, vars, std::string(kUserText),
        [&](const std::string& reply) { return parse_procedural(parse_kv_block(reply), current); },
        report.problems);
    if (ops) {
      report.procedural_ops = *ops;
      try {
        const auto& next = state.store.apply_procedural_crud(*ops, session_end);
        report.procedural_applied = true;
        std::set<std::int64_t> live;
        for (const auto& [key, e] : next) live.insert(e.id);
        for (const auto& [key, e] : current) {
          if (!live.contains(e.id)) state.index.remove({Substore::procedural, e.id});
        }
        std::vector<IndexRecord> fresh;
        for (const auto& [key, e] : next) {
          if (!state.index.contains({Substore::procedural, e.id})) fresh.push_back(index_record(e));
        }
        state.index.upsert(fresh);
      } catch (const Error& e) {
        report.problems.push_back(std::string("procedural: ") + e.what());
        spdlog::warn("procedural update rejected: {}", e.what());
      }
    }
  }

  // Episodic memory.
  {
    PromptVars vars{{"UserProfile", render_core_memory(state.store.core())}, {"DialogHistory", history}};
    auto topics = ask_structured<TopicSegmentation>(
        backend, prompts, prompt_id::episodic, vars, std::string(kUserText),
        [](const std::string& reply) { return parse_topics(reply); }, report.problems);
    const std::set<std::int64_t> allowed(indices.begin(), indices.end());
    for (const auto& topic : topics.value_or(TopicSegmentation{})) {
      std::vector<std::int64_t> idx = topic.source_dialog_indices;
      std::sort(idx.begin(), idx.end());
      idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
      const bool valid = std::all_of(idx.begin(), idx.end(), [&](std::int64_t i) { return allowed.contains(i); });
      if (!valid) {
        report.problems.push_back("episodic: dropped topic with indices outside the session: " + topic.summary);
        spdlog::warn("dropping topic '{}' with out-of-session indices", topic.summary);
        continue;
      }
      EpisodicEntry entry;
      entry.session_id = session_id;
      entry.created_at = state.store.dialogue()[static_cast<std::size_t>(idx.front())].query.timestamp;
      entry.summary = topic.summary;
      entry.keywords = split_keywords(topic.keywords);
      entry.turn_indices = std::move(idx);
      try {
        const auto id = state.store.append_episode(std::move(entry));
        const IndexRecord rec = index_record(*state.store.find_episode(id));
        state.index.upsert(std::span(&rec, 1));
        report.episode_ids.push_back(id);
      } catch (const Error& e) {
        report.problems.push_back(std::string("episodic: ") + e.what());
      }
    }
  }

  state.store.mark_session_consolidated(session_id);
  return report;
}

}  // namespace memoria
