#pragma once

#include <nlohmann/json.hpp>

#include "memoria/agent.hpp"
#include "memoria/consolidation.hpp"
#include "memoria/memory_store.hpp"
#include "memoria/pem.hpp"
#include "memoria/retrieval.hpp"

// JSON mapping shared by persistence, the HTTP service and the CLI. Field
// names here are part of the on-disk and wire formats.
namespace memoria {

using nlohmann::json;

json to_json(const Timestamp& t);
Timestamp timestamp_from_json(const json& j);

json to_json(const MemoryRef& r);
MemoryRef memory_ref_from_json(const json& j);

json to_json(const Query& q);
Query query_from_json(const json& j);

json to_json(const Turn& t);
Turn turn_from_json(const json& j);

json to_json(const CoreMemory& c);
CoreMemory core_memory_from_json(const json& j);

json to_json(const SemanticEntry& e);
SemanticEntry semantic_entry_from_json(const json& j);

json to_json(const EpisodicEntry& e);
EpisodicEntry episodic_entry_from_json(const json& j);

json to_json(const ProceduralEntry& e);
ProceduralEntry procedural_entry_from_json(const json& j);

json to_json(const PersonalityProfile& p);
PersonalityProfile profile_from_json(const json& j);

json to_json(const RetrievalQuery& q);
json to_json(const RetrievalHit& h);
json to_json(const VisualMatch& m);
json to_json(const TraceStep& s);
json to_json(const AgentTrace& t);

json to_json(const CoreOp& op);
json to_json(const ProceduralOp& op);
json to_json(const TurnUpdateReport& r);
json to_json(const SessionUpdateReport& r);

}  // namespace memoria
