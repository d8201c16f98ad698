#include "memoria/backend.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "memoria/error.hpp"

namespace memoria {

std::string_view to_string(Role r) {
  switch (r) {
    case Role::system: return "system";
    case Role::user: return "user";
    case Role::assistant: return "assistant";
  }
  return "user";
}

void ChatRequest::validate() const {
  if (messages.empty() || messages.front().role != Role::system) {
    fail(ErrorCode::reject_invalid, "chat request must start with a system message");
  }
  for (std::size_t i = 1; i < messages.size(); ++i) {
    const Role expected = (i % 2 == 1) ? Role::user : Role::assistant;
    if (messages[i].role != expected) {
      fail(ErrorCode::reject_invalid, "chat roles must alternate user/assistant after system",
           "message " + std::to_string(i));
    }
  }
}

std::string ChatRequest::rendered_prompt() const {
  std::string out;
  for (const auto& m : messages) {
    if (!out.empty()) out += "\n\n";
    out += m.text;
  }
  return out;
}

ScriptFixture ScriptFixture::from_json_text(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::malformed, std::string("fixture is not valid JSON: ") + e.what());
  }
  ScriptFixture f;
  try {
    f.strict = j.value("strict", false);
    for (const auto& e : j.value("entries", nlohmann::json::array())) {
      ScriptEntry entry;
      entry.template_id = e.value("template", "");
      entry.contains = e.value("contains", std::vector<std::string>{});
      entry.excludes = e.value("excludes", std::vector<std::string>{});
      entry.reply = e.at("reply").get<std::string>();
      f.entries.push_back(std::move(entry));
    }
    f.fallbacks = j.value("fallbacks", std::map<std::string, std::string>{});
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::malformed, std::string("bad fixture: ") + e.what());
  }
  return f;
}

ScriptFixture ScriptFixture::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::malformed, "cannot open fixture " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json_text(ss.str());
}

ScriptedBackend::ScriptedBackend(ScriptFixture fixture)
    : fixture_(std::move(fixture)), used_(fixture_.entries.size(), false) {}

namespace {

bool matches(const ScriptEntry& entry, const ChatRequest& request, const std::string& prompt) {
  if (!entry.template_id.empty() && entry.template_id != request.template_id) return false;
  for (const auto& s : entry.contains) {
    if (prompt.find(s) == std::string::npos) return false;
  }
  for (const auto& s : entry.excludes) {
    if (prompt.find(s) != std::string::npos) return false;
  }
  return true;
}

}  // namespace

std::string ScriptedBackend::mismatch_report(const ScriptEntry& entry, const ChatRequest& request) {
  const auto prompt = request.rendered_prompt();
  std::string diff;
  if (!entry.template_id.empty() && entry.template_id != request.template_id) {
    diff += "\n  template: expected '" + entry.template_id + "', got '" + request.template_id + "'";
  }
  for (const auto& s : entry.contains) {
    if (prompt.find(s) == std::string::npos) diff += "\n  missing substring: \"" + s + "\"";
  }
  for (const auto& s : entry.excludes) {
    if (prompt.find(s) != std::string::npos) diff += "\n  unexpected substring: \"" + s + "\"";
  }
  return diff;
}

std::string ScriptedBackend::chat(const ChatRequest& request) {
  std::lock_guard lock(mutex_);
  log_.push_back(request);
  const auto prompt = request.rendered_prompt();

  if (fixture_.strict) {
    if (cursor_ >= fixture_.entries.size()) {
      fail(ErrorCode::fixture_mismatch,
           "strict fixture exhausted; unexpected '" + request.template_id + "' request");
    }
    const auto& entry = fixture_.entries[cursor_];
    if (!matches(entry, request, prompt)) {
      fail(ErrorCode::fixture_mismatch,
           "request does not match fixture entry " + std::to_string(cursor_) + ":" +
               mismatch_report(entry, request));
    }
    used_[cursor_] = true;
    return fixture_.entries[cursor_++].reply;
  }

  for (std::size_t i = 0; i < fixture_.entries.size(); ++i) {
    if (!used_[i] && matches(fixture_.entries[i], request, prompt)) {
      used_[i] = true;
      return fixture_.entries[i].reply;
    }
  }
  if (auto it = fixture_.fallbacks.find(request.template_id); it != fixture_.fallbacks.end()) {
    return it->second;
  }
  std::string report = "no fixture entry matches '" + request.template_id + "' request";
  for (std::size_t i = 0; i < fixture_.entries.size(); ++i) {
    if (!used_[i] && (fixture_.entries[i].template_id.empty() ||
                      fixture_.entries[i].template_id == request.template_id)) {
      report += "\n entry " + std::to_string(i) + ":" + mismatch_report(fixture_.entries[i], request);
    }
  }
  fail(ErrorCode::fixture_mismatch, report);
}

std::vector<ChatRequest> ScriptedBackend::requests() const {
  std::lock_guard lock(mutex_);
  return log_;
}

std::size_t ScriptedBackend::consumed() const {
  std::lock_guard lock(mutex_);
  return static_cast<std::size_t>(std::count(used_.begin(), used_.end(), true));
}

std::size_t ScriptedBackend::remaining() const {
  std::lock_guard lock(mutex_);
  return static_cast<std::size_t>(std::count(used_.begin(), used_.end(), false));
}

}  // namespace memoria
