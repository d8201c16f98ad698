#pragma once

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>

#include "memoria/memory_store.hpp"
#include "memoria/retrieval.hpp"

namespace memoria {

namespace prompt_id {
inline constexpr std::string_view response = "response";
inline constexpr std::string_view intermediate = "intermediate";
inline constexpr std::string_view personality = "personality";
inline constexpr std::string_view semantic = "semantic";
inline constexpr std::string_view procedural = "procedural";
inline constexpr std::string_view core = "core";
inline constexpr std::string_view episodic = "episodic";
inline constexpr std::string_view judge = "judge";
}  // namespace prompt_id

inline constexpr std::string_view kRepairInstruction =
    "Your last output violated the format; emit only the required tags.";
inline constexpr std::string_view kRetrievalExhaustedInstruction =
    "Retrieval is exhausted for this query. Do not retrieve again: output a <think> block "
    "followed by an <answer> block using only the information you already have.";
inline constexpr std::string_view kKvRepairInstruction =
    "Your last output violated the format; emit only the required key-value lines.";

using PromptVars = std::map<std::string, std::string, std::less<>>;

// Text templates keyed by id with `{Name}` placeholders. Unknown
// placeholders are left untouched.
class PromptLibrary {
 public:
  // The templates compiled in from prompts/*.txt.
  static PromptLibrary builtin();
  // Builtins overridden by every `<id>.txt` found in `dir`.
  static PromptLibrary load_directory(const std::filesystem::path& dir);

  bool has(std::string_view id) const;
  const std::string& get(std::string_view id) const;
  void set(std::string id, std::string text);
  std::string render(std::string_view id, const PromptVars& vars) const;

 private:
  std::map<std::string, std::string, std::less<>> templates_;
};

std::string substitute(std::string_view tmpl, const PromptVars& vars);

// Text fragments placed into the templates.
std::string render_core_memory(const CoreMemory& core);
std::string render_dialogue_turns(std::span<const Turn> turns, bool with_indices);
std::string render_procedural_memory(const ProceduralMap& procedural);
std::string render_semantic_hits(std::span<const RetrievalHit> hits, const MemoryStore& store);
std::string render_procedural_hits(std::span<const RetrievalHit> hits, const MemoryStore& store);
// Episode summary followed by the raw turns it points at.
std::string render_episodic_hits(std::span<const RetrievalHit> hits, const MemoryStore& store);

namespace detail {
const std::map<std::string, std::string>& builtin_prompt_templates();
}

}  // namespace memoria
