#include "memoria/agent.hpp"

#include <set>

#include "memoria/error.hpp"
#include "memoria/hashing.hpp"

namespace memoria {

bool session_boundary(Timestamp previous, Timestamp now) {
  if (now < previous) fail(ErrorCode::reject_invalid, "clock regression: " + now.str() + " < " + previous.str(), "timestamp");
  return now.minutes_since(previous) >= kSessionGapMinutes;
}

std::vector<Turn> build_context(std::span<const Turn> log, Timestamp now) {
  std::vector<Turn> out;
  for (const auto& t : log) {
    const auto gap = now.minutes_since(t.query.timestamp);
    if (gap <= kSessionGapMinutes && gap >= -kSessionGapMinutes) out.push_back(t);
  }
  return out;
}

std::string_view to_string(StepKind k) {
  switch (k) {
    case StepKind::answer: return "answer";
    case StepKind::retrieve: return "retrieve";
    case StepKind::malformed: return "malformed";
    case StepKind::degraded_answer: return "degraded-answer";
  }
  return "answer";
}

std::vector<MemoryRef> AgentTrace::fed_refs() const {
  std::vector<MemoryRef> out;
  for (const auto& m : visual_matches) out.push_back({Substore::semantic, m.semantic_id});
  for (const auto& s : steps) {
    for (const auto& h : s.hits) out.push_back(h.ref);
  }
  return out;
}

namespace {

PromptVars response_vars(const Query& query, const AgentContext& ctx) {
  PromptVars vars;
  vars["UserProfile"] = render_core_memory(ctx.store.core());
  static constexpr const char* kPlaceholders[] = {"Openness", "Conscientiousness", "Extraversion",
                                                  "Agreeableness", "Neuroticism"};
  for (std::size_t i = 0; i < 5; ++i) vars[kPlaceholders[i]] = render_trait(ctx.profile.traits[i]);
  const auto context = build_context(ctx.store.dialogue(), query.timestamp);
  vars["DialogHistory"] = render_dialogue_turns(context, false);
  vars["UserQuery"] = query.text;
  return vars;
}

std::string digest(const ChatRequest& req) {
  return hex64(fnv1a64(req.template_id + "\n" + req.rendered_prompt()));
}

}  // namespace

AgentTrace respond(const Query& query, const AgentContext& ctx, const AgentConfig& config,
                   std::string trace_id) {
  const auto& log = ctx.store.dialogue();
  if (!log.empty() && query.timestamp < log.back().query.timestamp) {
    fail(ErrorCode::reject_invalid, "query timestamp precedes the last logged turn", "timestamp");
  }
  const int max_steps = std::max(1, config.max_steps);

  AgentTrace trace;
  trace.trace_id = std::move(trace_id);
  std::set<MemoryRef> fed;

  std::string user_text = query.text;
  if (!query.image_descriptors.empty()) {
    std::string labels;
    for (const auto& d : query.image_descriptors) labels += (labels.empty() ? "" : ", ") + d;
    user_text += "\n[Image objects: " + labels + "]";
    trace.visual_matches = visual_match(query.image_descriptors, ctx.store, ctx.index.embedder(),
                                        config.visual_threshold);
    if (!trace.visual_matches.empty()) {
      user_text += "\nMatched Visual Concepts:";
      for (const auto& m : trace.visual_matches) {
        if (const auto* e = ctx.store.find_semantic(m.semantic_id)) {
          user_text += "\n- " + m.descriptor + " -> " + e->content;
          fed.insert({Substore::semantic, m.semantic_id});
        }
      }
    }
  }

  ChatRequest req;
  req.template_id = std::string(prompt_id::response);
  req.temperature = config.temperature;
  req.max_output_tokens = config.max_output_tokens;
  req.messages.push_back({Role::system, ctx.prompts.render(prompt_id::response, response_vars(query, ctx)), {}, {}});
  req.messages.push_back({Role::user, user_text, query.image, query.image_descriptors});

  bool forced = false;
  while (true) {
    const bool last_call = trace.model_calls + 1 >= max_steps;
    if (!forced && (trace.retrieval_attempts >= config.max_retrievals || last_call)) {
      req.messages.back().text += "\n\n" + std::string(kRetrievalExhaustedInstruction);
      forced = true;
    }

    TraceStep step;
    step.prompt_digest = digest(req);
    step.forced = forced;
    step.model_text = ctx.backend.chat(req);
    ++trace.model_calls;

    std::optional<AgentStep> parsed;
    try {
      parsed = parse_agent_step(step.model_text);
    } catch (const Error& e) {
      step.parse_error = e.what();
    }

    if (!parsed) {
      if (!trace.repaired && !last_call) {
        trace.repaired = true;
        step.kind = StepKind::malformed;
        req.messages.push_back({Role::assistant, step.model_text, {}, {}});
        req.messages.push_back({Role::user, std::string(kRepairInstruction), {}, {}});
        trace.steps.push_back(std::move(step));
        continue;
      }
      step.kind = StepKind::degraded_answer;
      trace.degraded = true;
      trace.final_answer = step.model_text;
      trace.steps.push_back(std::move(step));
      break;
    }

    step.think = parsed->think;
    if (parsed->is_answer()) {
      step.kind = StepKind::answer;
      trace.final_answer = parsed->answer().text;
      trace.steps.push_back(std::move(step));
      break;
    }

    RetrievalQuery q = parsed->retrieve().query;
    q.k_procedural = config.k_procedural;
    q.k_semantic = config.k_semantic;
    q.k_episodic = config.k_episodic;
    step.retrieve = q;
    if (forced) {
      // Budget spent: the request was not executed.
      step.kind = StepKind::degraded_answer;
      trace.degraded = true;
      trace.final_answer = step.model_text;
      trace.steps.push_back(std::move(step));
      break;
    }

    step.kind = StepKind::retrieve;
    const RetrievalResult result = ctx.index.search(q, fed);
    for (const auto& ref : ctx.index.search(q).refs()) {
      if (fed.contains(ref)) step.excluded.push_back(ref);
    }
    ++trace.retrieval_attempts;
    for (const auto s : {Substore::procedural, Substore::semantic, Substore::episodic}) {
      for (const auto& hit : result.group(s)) {
        fed.insert(hit.ref);
        step.hits.push_back(hit);
      }
    }

    PromptVars vars;
    vars["ProceduralMemory"] = render_procedural_hits(result.procedural, ctx.store);
    vars["SemanticMemory"] = render_semantic_hits(result.semantic, ctx.store);
    vars["DialogHistory"] = render_episodic_hits(result.episodic, ctx.store);
    req.messages.push_back({Role::assistant, step.model_text, {}, {}});
    req.messages.push_back({Role::user, ctx.prompts.render(prompt_id::intermediate, vars), {}, {}});
    trace.steps.push_back(std::move(step));
  }
  return trace;
}

}  // namespace memoria
