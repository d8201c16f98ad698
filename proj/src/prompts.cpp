#include "memoria/prompts.hpp"

#include <cctype>
#include <fstream>
#include <sstream>

#include "memoria/error.hpp"

namespace memoria {

namespace {

std::string keyword_list(const std::vector<std::string>& keywords) {
  std::string out;
  for (const auto& k : keywords) {
    if (!out.empty()) out += ", ";
    out += k;
  }
  return out;
}

void append_turn(std::string& out, const Turn& t, bool with_index) {
  if (!out.empty()) out += '\n';
  if (with_index) out += "[" + std::to_string(t.index) + "] ";
  out += "(" + t.query.timestamp.str() + ") User: " + t.query.text;
  if (t.query.image) out += " [image: " + *t.query.image + "]";
  out += "\nAssistant: " + t.response;
}

}  // namespace

PromptLibrary PromptLibrary::builtin() {
  PromptLibrary lib;
  for (const auto& [id, text] : detail::builtin_prompt_templates()) lib.templates_.emplace(id, text);
  return lib;
}

PromptLibrary PromptLibrary::load_directory(const std::filesystem::path& dir) {
  PromptLibrary lib = builtin();
  std::error_code ec;
  for (const auto& entry : std::filesystem::directory_iterator(dir, ec)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".txt") continue;
    std::ifstream in(entry.path(), std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    lib.set(entry.path().stem().string(), ss.str());
  }
  if (ec) fail(ErrorCode::reject_invalid, "cannot read prompt directory " + dir.string());
  return lib;
}

bool PromptLibrary::has(std::string_view id) const { return templates_.find(id) != templates_.end(); }

const std::string& PromptLibrary::get(std::string_view id) const {
  auto it = templates_.find(id);
  if (it == templates_.end()) fail(ErrorCode::key_not_found, "no prompt template '" + std::string(id) + "'");
  return it->second;
}

void PromptLibrary::set(std::string id, std::string text) { templates_[std::move(id)] = std::move(text); }

std::string PromptLibrary::render(std::string_view id, const PromptVars& vars) const {
  return substitute(get(id), vars);
}

std::string substitute(std::string_view tmpl, const PromptVars& vars) {
  std::string out;
  out.reserve(tmpl.size());
  std::size_t i = 0;
  while (i < tmpl.size()) {
    if (tmpl[i] == '{') {
      std::size_t j = i + 1;
      while (j < tmpl.size() && (std::isalnum(static_cast<unsigned char>(tmpl[j])) || tmpl[j] == '_')) ++j;
      if (j < tmpl.size() && tmpl[j] == '}' && j > i + 1) {
        auto it = vars.find(tmpl.substr(i + 1, j - i - 1));
        if (it != vars.end()) {
          out += it->second;
          i = j + 1;
          continue;
        }
      }
    }
    out += tmpl[i++];
  }
  return out;
}

std::string render_core_memory(const CoreMemory& core) {
  std::string out;
  for (const auto block : {CoreBlock::human, CoreBlock::persona}) {
    out += "\n[" + std::string(to_string(block)) + "]";
    for (const auto& [key, value] : core.block(block)) out += "\n- " + key + ": " + value;
  }
  return out;
}

std::string render_dialogue_turns(std::span<const Turn> turns, bool with_indices) {
  std::string out;
  for (const auto& t : turns) append_turn(out, t, with_indices);
  return out.empty() ? "None" : "\n" + out;
}

std::string render_procedural_memory(const ProceduralMap& procedural) {
  std::string out;
  for (const auto& [key, e] : procedural) {
    out += "\n\"" + key + "\": " + e.sentence;
  }
  return out.empty() ? "None" : out;
}

std::string render_semantic_hits(std::span<const RetrievalHit> hits, const MemoryStore& store) {
  std::string out;
  for (const auto& h : hits) {
    const auto* e = store.find_semantic(h.ref.id);
    if (!e) continue;
    out += "\n- (" + e->created_at.str() + ") " + e->content + " [keywords: " +
           keyword_list(e->keywords) + "]";
  }
  return out.empty() ? "None" : out;
}

std::string render_procedural_hits(std::span<const RetrievalHit> hits, const MemoryStore& store) {
  std::string out;
  for (const auto& h : hits) {
    const auto* e = store.find_procedural(h.ref.id);
    if (!e) continue;
    out += "\n- " + e->key + ": " + e->sentence;
  }
  return out.empty() ? "None" : out;
}

std::string render_episodic_hits(std::span<const RetrievalHit> hits, const MemoryStore& store) {
  std::string out;
  for (const auto& h : hits) {
    const auto* e = store.find_episode(h.ref.id);
    if (!e) continue;
    out += "\n- (" + e->created_at.str() + ") " + e->summary + " [keywords: " +
           keyword_list(e->keywords) + "]";
    std::string turns;
    for (const auto idx : e->turn_indices) {
      if (idx < 0 || idx >= static_cast<std::int64_t>(store.dialogue().size())) continue;
      append_turn(turns, store.dialogue()[static_cast<std::size_t>(idx)], true);
    }
    if (!turns.empty()) out += "\n" + turns;
  }
  return out.empty() ? "None" : out;
}

}  // namespace memoria
