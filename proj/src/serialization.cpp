#include "memoria/serialization.hpp"

#include "memoria/error.hpp"

namespace memoria {

namespace {

// nlohmann errors become malformed so callers only deal with one type.
template <class F>
auto guarded(std::string_view what, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const json::exception& e) {
    fail(ErrorCode::malformed, std::string(what) + ": " + e.what());
  }
}

std::string opt_str(const json& j, const char* key) {
  const auto it = j.find(key);
  return it == j.end() || it->is_null() ? std::string() : it->get<std::string>();
}

json string_list(const std::vector<std::string>& v) { return json(v); }

}  // namespace

json to_json(const Timestamp& t) { return t.str(); }

Timestamp timestamp_from_json(const json& j) {
  return guarded("timestamp", [&] { return Timestamp::parse(j.get<std::string>()); });
}

json to_json(const MemoryRef& r) {
  return {{"substore", std::string(to_string(r.substore))}, {"id", r.id}};
}

MemoryRef memory_ref_from_json(const json& j) {
  return guarded("memory ref", [&] {
    return MemoryRef{substore_from_string(j.at("substore").get<std::string>()),
                     j.at("id").get<std::int64_t>()};
  });
}

json to_json(const Query& q) {
  json j{{"text", q.text}, {"timestamp", to_json(q.timestamp)}};
  if (q.image) j["image"] = *q.image;
  if (!q.image_descriptors.empty()) j["image_descriptors"] = q.image_descriptors;
  return j;
}

Query query_from_json(const json& j) {
  return guarded("query", [&] {
    Query q;
    q.text = j.at("text").get<std::string>();
    q.timestamp = timestamp_from_json(j.at("timestamp"));
    if (j.contains("image") && !j["image"].is_null()) q.image = j["image"].get<std::string>();
    if (j.contains("image_descriptors")) {
      q.image_descriptors = j["image_descriptors"].get<std::vector<std::string>>();
    }
    return q;
  });
}

json to_json(const Turn& t) {
  return {{"index", t.index},
          {"session_id", t.session_id},
          {"query", to_json(t.query)},
          {"response", t.response},
          {"trace_id", t.trace_id}};
}

Turn turn_from_json(const json& j) {
  return guarded("turn", [&] {
    Turn t;
    t.index = j.at("index").get<std::int64_t>();
    t.session_id = j.at("session_id").get<std::int64_t>();
    t.query = query_from_json(j.at("query"));
    t.response = j.at("response").get<std::string>();
    t.trace_id = opt_str(j, "trace_id");
    return t;
  });
}

json to_json(const CoreMemory& c) { return {{"human", c.human}, {"persona", c.persona}}; }

CoreMemory core_memory_from_json(const json& j) {
  return guarded("core memory", [&] {
    CoreMemory c;
    c.human = j.at("human").get<std::map<std::string, std::string>>();
    c.persona = j.at("persona").get<std::map<std::string, std::string>>();
    return c;
  });
}

json to_json(const SemanticEntry& e) {
  json j{{"id", e.id},
         {"created_at", to_json(e.created_at)},
         {"content", e.content},
         {"keywords", string_list(e.keywords)},
         {"category", std::string(to_string(e.category))}};
  if (e.visual_ref) {
    j["visual_ref"] = {{"description", e.visual_ref->description},
                       {"locator", e.visual_ref->locator},
                       {"object_class", e.visual_ref->object_class}};
  }
  return j;
}

SemanticEntry semantic_entry_from_json(const json& j) {
  return guarded("semantic entry", [&] {
    SemanticEntry e;
    e.id = j.at("id").get<std::int64_t>();
    e.created_at = timestamp_from_json(j.at("created_at"));
    e.content = j.at("content").get<std::string>();
    e.keywords = j.at("keywords").get<std::vector<std::string>>();
    e.category = semantic_category_from_string(j.at("category").get<std::string>());
    if (j.contains("visual_ref") && !j["visual_ref"].is_null()) {
      const auto& v = j["visual_ref"];
      e.visual_ref = VisualRef{v.at("description").get<std::string>(), opt_str(v, "locator"),
                               v.at("object_class").get<std::string>()};
    }
    return e;
  });
}

json to_json(const EpisodicEntry& e) {
  return {{"id", e.id},
          {"session_id", e.session_id},
          {"created_at", to_json(e.created_at)},
          {"summary", e.summary},
          {"keywords", string_list(e.keywords)},
          {"turn_indices", e.turn_indices}};
}

EpisodicEntry episodic_entry_from_json(const json& j) {
  return guarded("episodic entry", [&] {
    EpisodicEntry e;
    e.id = j.at("id").get<std::int64_t>();
    e.session_id = j.at("session_id").get<std::int64_t>();
    e.created_at = timestamp_from_json(j.at("created_at"));
    e.summary = j.at("summary").get<std::string>();
    e.keywords = j.at("keywords").get<std::vector<std::string>>();
    e.turn_indices = j.at("turn_indices").get<std::vector<std::int64_t>>();
    return e;
  });
}

json to_json(const ProceduralEntry& e) {
  return {{"id", e.id},
          {"key", e.key},
          {"sentence", e.sentence},
          {"kind", std::string(to_string(e.kind))},
          {"updated_at", to_json(e.updated_at)}};
}

ProceduralEntry procedural_entry_from_json(const json& j) {
  return guarded("procedural entry", [&] {
    ProceduralEntry e;
    e.id = j.at("id").get<std::int64_t>();
    e.key = j.at("key").get<std::string>();
    e.sentence = j.at("sentence").get<std::string>();
    e.kind = procedural_kind_from_string(j.at("kind").get<std::string>());
    e.updated_at = timestamp_from_json(j.at("updated_at"));
    return e;
  });
}

json to_json(const PersonalityProfile& p) {
  json traits = json::object();
  for (std::size_t i = 0; i < kTraitNames.size(); ++i) traits[std::string(kTraitNames[i])] = p.traits[i];
  return {{"traits", traits}, {"turns", p.turns}};
}

PersonalityProfile profile_from_json(const json& j) {
  return guarded("personality profile", [&] {
    PersonalityProfile p;
    const auto& traits = j.at("traits");
    for (std::size_t i = 0; i < kTraitNames.size(); ++i) {
      p.traits[i] = traits.at(std::string(kTraitNames[i])).get<double>();
      if (!(p.traits[i] >= 1.0 && p.traits[i] <= 5.0)) {
        fail(ErrorCode::malformed, "trait out of range: " + std::string(kTraitNames[i]));
      }
    }
    p.turns = j.at("turns").get<std::uint64_t>();
    return p;
  });
}

json to_json(const RetrievalQuery& q) {
  return {{"keywords", q.keywords},
          {"start", q.start ? json(q.start->str()) : json(nullptr)},
          {"end", q.end ? json(q.end->str()) : json(nullptr)},
          {"k", {{"procedural", q.k_procedural}, {"semantic", q.k_semantic}, {"episodic", q.k_episodic}}}};
}

json to_json(const RetrievalHit& h) {
  return {{"ref", to_json(h.ref)},
          {"score", h.score},
          {"created_at", to_json(h.created_at)},
          {"text", h.text}};
}

json to_json(const VisualMatch& m) {
  return {{"descriptor", m.descriptor}, {"semantic_id", m.semantic_id}, {"score", m.score}};
}

json to_json(const TraceStep& s) {
  json hits = json::array();
  for (const auto& h : s.hits) hits.push_back(to_json(h));
  json excluded = json::array();
  for (const auto& r : s.excluded) excluded.push_back(to_json(r));
  json j{{"kind", std::string(to_string(s.kind))},
         {"prompt_digest", s.prompt_digest},
         {"model_text", s.model_text},
         {"think", s.think},
         {"hits", hits},
         {"excluded", excluded},
         {"forced", s.forced}};
  if (s.retrieve) j["retrieve"] = to_json(*s.retrieve);
  if (!s.parse_error.empty()) j["parse_error"] = s.parse_error;
  return j;
}

json to_json(const AgentTrace& t) {
  json steps = json::array();
  for (const auto& s : t.steps) steps.push_back(to_json(s));
  json visual = json::array();
  for (const auto& m : t.visual_matches) visual.push_back(to_json(m));
  return {{"trace_id", t.trace_id},
          {"steps", steps},
          {"final_answer", t.final_answer},
          {"retrieval_attempts", t.retrieval_attempts},
          {"model_calls", t.model_calls},
          {"degraded", t.degraded},
          {"repaired", t.repaired},
          {"visual_matches", visual}};
}

json to_json(const CoreOp& op) {
  json j{{"op", std::string(to_string(op.kind))},
         {"block", std::string(to_string(op.block))},
         {"key", op.key}};
  if (op.kind != CrudKind::remove) j["value"] = op.value;
  return j;
}

json to_json(const ProceduralOp& op) {
  json j{{"op", std::string(to_string(op.kind))}, {"key", op.key}};
  if (op.kind != CrudKind::remove) {
    j["sentence"] = op.sentence;
    j["kind"] = std::string(to_string(op.entry_kind));
  }
  return j;
}

json to_json(const TurnUpdateReport& r) {
  json j{{"turn_index", r.turn_index}, {"profile_changed", r.profile_changed}, {"problems", r.problems}};
  if (r.inferred) j["inferred"] = r.inferred->scores;
  j["semantic_id"] = r.semantic_id ? json(*r.semantic_id) : json(nullptr);
  return j;
}

json to_json(const SessionUpdateReport& r) {
  json core = json::array();
  for (const auto& op : r.core_ops) core.push_back(to_json(op));
  json proc = json::array();
  for (const auto& op : r.procedural_ops) proc.push_back(to_json(op));
  return {{"session_id", r.session_id},
          {"core_ops", core},
          {"core_applied", r.core_applied},
          {"procedural_ops", proc},
          {"procedural_applied", r.procedural_applied},
          {"episode_ids", r.episode_ids},
          {"problems", r.problems}};
}

}  // namespace memoria
