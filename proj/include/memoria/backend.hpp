#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace memoria {

enum class Role { system, user, assistant };
std::string_view to_string(Role r);

struct ChatMessage {
  Role role = Role::user;
  std::string text;
  std::optional<std::string> image;            // relative locator
  std::vector<std::string> image_descriptors;  // used when images cannot be sent
  bool operator==(const ChatMessage&) const = default;
};

struct ChatRequest {
  std::string template_id;
  std::vector<ChatMessage> messages;
  double temperature = 0.0;
  int max_output_tokens = 1024;

  // Throws reject_invalid unless the first message is system and the rest
  // alternate user/assistant starting with user.
  void validate() const;
  // All message texts joined by blank lines; what fixture predicates see.
  std::string rendered_prompt() const;
};

class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  // Must be callable concurrently. Throws backend_unavailable or
  // fixture_mismatch.
  virtual std::string chat(const ChatRequest& request) = 0;
};

struct ScriptEntry {
  std::string template_id;  // empty matches any template
  std::vector<std::string> contains;
  std::vector<std::string> excludes;
  std::string reply;
  bool operator==(const ScriptEntry&) const = default;
};

struct ScriptFixture {
  std::vector<ScriptEntry> entries;
  // Non-strict only: reply per template id once no entry matches.
  std::map<std::string, std::string> fallbacks;
  bool strict = false;

  static ScriptFixture from_json_text(std::string_view text);
  static ScriptFixture load(const std::filesystem::path& path);
};

// Replays canned replies. Strict mode requires each request to match the next
// unconsumed entry; otherwise the first unconsumed matching entry is used,
// then the template fallback.
class ScriptedBackend final : public ChatBackend {
 public:
  explicit ScriptedBackend(ScriptFixture fixture);

  std::string chat(const ChatRequest& request) override;

  std::vector<ChatRequest> requests() const;
  std::size_t consumed() const;
  std::size_t remaining() const;

 private:
  static std::string mismatch_report(const ScriptEntry& entry, const ChatRequest& request);

  mutable std::mutex mutex_;
  ScriptFixture fixture_;
  std::vector<bool> used_;
  std::size_t cursor_ = 0;
  std::vector<ChatRequest> log_;
};

struct HttpBackendConfig {
  std::string endpoint;  // full URL of the chat-completions resource
  std::string api_key;
  std::string model = "default";
  std::chrono::milliseconds timeout{60'000};
  int max_attempts = 3;
  std::chrono::milliseconds backoff_base{250};
  bool send_images = false;  // inline data URIs; otherwise descriptors as text
  std::filesystem::path asset_root = ".";

  // MEMORIA_ENDPOINT, MEMORIA_API_KEY, MEMORIA_MODEL, MEMORIA_TIMEOUT_SECONDS,
  // MEMORIA_SEND_IMAGES. Throws reject_invalid if the endpoint is unset.
  static HttpBackendConfig from_env();
};

// Chat-completions style client: {"model", "messages", "temperature",
// "max_tokens"} in, choices[0].message.content out.
class HttpBackend final : public ChatBackend {
 public:
  explicit HttpBackend(HttpBackendConfig config);
  std::string chat(const ChatRequest& request) override;

  // Exposed for tests.
  std::string request_body(const ChatRequest& request) const;

 private:
  HttpBackendConfig config_;
};

}  // namespace memoria
