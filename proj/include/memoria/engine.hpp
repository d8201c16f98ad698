#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "memoria/agent.hpp"
#include "memoria/backend.hpp"
#include "memoria/consolidation.hpp"
#include "memoria/prompts.hpp"
#include "memoria/state.hpp"

namespace memoria {

struct EngineConfig {
  AgentConfig agent;
  // When false, per-turn updates run on a background worker after the answer
  // is returned; the next request on the same user waits for them.
  bool synchronous_updates = true;
  // Each user persists to state_root/<user id> after every committed change.
  std::optional<std::filesystem::path> state_root;
};

struct ChatInput {
  std::string text;
  std::optional<std::string> image;
  std::vector<std::string> image_descriptors;
  std::optional<Timestamp> timestamp;  // host clock when absent
};

struct ChatResult {
  std::string response;
  std::string trace_id;
  std::int64_t turn_index = 0;
  std::int64_t session_id = 0;
  // Set when this turn closed the previous session.
  std::optional<SessionUpdateReport> consolidation;
};

enum class ChangeKind { memory, profile };

struct ChangeEvent {
  std::uint64_t sequence = 0;
  ChangeKind kind = ChangeKind::memory;
};

std::string_view to_string(ChangeKind k);

// One user's engine state. All requests for the user are serialized; reads
// take a short lock and return copies.
class UserSession {
 public:
  UserSession(std::string user_id, UserState state, std::shared_ptr<ChatBackend> backend,
              std::shared_ptr<const PromptLibrary> prompts, EngineConfig config,
              std::optional<std::filesystem::path> state_dir);
  ~UserSession();

  UserSession(const UserSession&) = delete;
  UserSession& operator=(const UserSession&) = delete;

  const std::string& user_id() const { return user_id_; }

  // Lazily closes the previous session when the gap reaches the threshold,
  // answers, logs the turn and runs (or schedules) the per-turn update.
  ChatResult chat(const ChatInput& input);

  // Consolidates the open session now; the next turn starts a new one.
  // Returns nullopt when there is nothing to consolidate.
  std::optional<SessionUpdateReport> end_session();

  // Waits until background updates are committed.
  void flush();

  UserState snapshot() const;
  std::optional<AgentTrace> trace(const std::string& trace_id) const;
  std::optional<TurnUpdateReport> last_turn_update() const;

  std::vector<ChangeEvent> wait_for_changes(std::uint64_t after_sequence,
                                            std::chrono::milliseconds timeout) const;

 private:
  void run_turn_update(std::int64_t turn_index);
  void persist_locked();
  void notify(ChangeKind kind);
  void wait_pending();

  std::string user_id_;
  std::shared_ptr<ChatBackend> backend_;
  std::shared_ptr<const PromptLibrary> prompts_;
  EngineConfig config_;
  std::optional<std::filesystem::path> state_dir_;

  mutable std::mutex request_mutex_;  // one in-flight request per user
  mutable std::mutex state_mutex_;
  UserState state_;
  std::map<std::string, AgentTrace> traces_;
  std::optional<TurnUpdateReport> last_turn_update_;
  std::future<void> pending_;

  mutable std::mutex event_mutex_;
  mutable std::condition_variable event_cv_;
  std::vector<ChangeEvent> events_;
  std::uint64_t next_sequence_ = 1;
};

// Registry of user sessions, loading persisted users on first access.
class Engine {
 public:
  Engine(EngineConfig config, std::shared_ptr<ChatBackend> backend,
         std::shared_ptr<const EmbeddingProvider> embedder,
         std::shared_ptr<const PromptLibrary> prompts);

  // nullptr if the user was never created here or on disk.
  std::shared_ptr<UserSession> find(const std::string& user_id);
  // Returns the existing user or creates a fresh one whose core "name" is
  // the user id.
  std::shared_ptr<UserSession> open(const std::string& user_id);

  const EngineConfig& config() const { return config_; }

  // Letters, digits, '-', '_' and '.', at most 64 bytes, not starting with '.'.
  static bool valid_user_id(std::string_view user_id);

 private:
  std::shared_ptr<UserSession> make_session(const std::string& user_id, UserState state);

  EngineConfig config_;
  std::shared_ptr<ChatBackend> backend_;
  std::shared_ptr<const EmbeddingProvider> embedder_;
  std::shared_ptr<const PromptLibrary> prompts_;
  std::mutex mutex_;
  std::map<std::string, std::shared_ptr<UserSession>> users_;
};

}  // namespace memoria
