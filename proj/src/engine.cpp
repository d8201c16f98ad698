#include "memoria/engine.hpp"

#include <cctype>

#include <spdlog/spdlog.h>

#include "memoria/error.hpp"
#include "memoria/persistence.hpp"

namespace memoria {

namespace {
constexpr std::size_t kEventBacklog = 1024;
}

std::string_view to_string(ChangeKind k) { return k == ChangeKind::memory ? "memory" : "profile"; }

UserSession::UserSession(std::string user_id, UserState state, std::shared_ptr<ChatBackend> backend,
                         std::shared_ptr<const PromptLibrary> prompts, EngineConfig config,
                         std::optional<std::filesystem::path> state_dir)
    : user_id_(std::move(user_id)),
      backend_(std::move(backend)),
      prompts_(std::move(prompts)),
      config_(std::move(config)),
      state_dir_(std::move(state_dir)),
      state_(std::move(state)) {}

UserSession::~UserSession() {
  try {
    wait_pending();
  } catch (...) {
  }
}

void UserSession::wait_pending() {
  if (pending_.valid()) pending_.get();
}

void UserSession::persist_locked() {
  if (state_dir_) save_state(state_, *state_dir_);
}

void UserSession::notify(ChangeKind kind) {
  {
    std::lock_guard lk(event_mutex_);
    events_.push_back({next_sequence_++, kind});
    if (events_.size() > kEventBacklog) events_.erase(events_.begin());
  }
  event_cv_.notify_all();
}

void UserSession::run_turn_update(std::int64_t turn_index) {
  // Only the request holder mutates state, so the copy cannot go stale.
  UserState work = snapshot();
  const auto report = per_turn_update(turn_index, work, *prompts_, *backend_);
  {
    std::lock_guard lk(state_mutex_);
    state_ = std::move(work);
    last_turn_update_ = report;
    persist_locked();
  }
  notify(ChangeKind::profile);
  if (report.semantic_id) notify(ChangeKind::memory);
}

ChatResult UserSession::chat(const ChatInput& input) {
  std::lock_guard request(request_mutex_);
  wait_pending();

  Query query{input.text, input.image, input.image_descriptors, input.timestamp.value_or(Timestamp::now())};
  if (query.text.empty()) fail(ErrorCode::reject_invalid, "empty query text", "text");
  ChatResult result;

  const auto& log = state_.store.dialogue();
  std::int64_t session_id = 0;
  if (!log.empty()) {
    const std::int64_t last_session = log.back().session_id;
    const bool boundary = session_boundary(log.back().query.timestamp, query.timestamp);
    const bool open = last_session > state_.store.consolidated_through_session();
    if (boundary && open) {
      UserState work = snapshot();
      result.consolidation = end_of_session_update(last_session, work, *prompts_, *backend_);
      std::lock_guard lk(state_mutex_);
      state_ = std::move(work);
      persist_locked();
    }
    session_id = (boundary || !open) ? last_session + 1 : last_session;
    if (result.consolidation) notify(ChangeKind::memory);
  }

  const auto turn_index = static_cast<std::int64_t>(state_.store.dialogue().size());
  const std::string trace_id = "trace-" + std::to_string(turn_index);
  const AgentContext ctx{state_.store, state_.profile, state_.index, *prompts_, *backend_};
  AgentTrace trace = respond(query, ctx, config_.agent, trace_id);

  Turn turn{0, session_id, std::move(query), trace.final_answer, trace_id};
  {
    std::lock_guard lk(state_mutex_);
    state_.store.append_turn(std::move(turn));
    traces_[trace_id] = trace;
    persist_locked();
  }
  notify(ChangeKind::memory);

  result.response = trace.final_answer;
  result.trace_id = trace_id;
  result.turn_index = turn_index;
  result.session_id = session_id;

  if (config_.synchronous_updates) {
    run_turn_update(turn_index);
  } else {
    pending_ = std::async(std::launch::async, [this, turn_index] {
      try {
        run_turn_update(turn_index);
      } catch (const std::exception& e) {
        spdlog::error("per-turn update for {} turn {} failed: {}", user_id_, turn_index, e.what());
        std::lock_guard lk(state_mutex_);
        TurnUpdateReport failed;
        failed.turn_index = turn_index;
        failed.problems.push_back(e.what());
        last_turn_update_ = failed;
      }
    });
  }
  return result;
}

std::optional<SessionUpdateReport> UserSession::end_session() {
  std::lock_guard request(request_mutex_);
  wait_pending();
  const auto& log = state_.store.dialogue();
  if (log.empty() || log.back().session_id <= state_.store.consolidated_through_session()) {
    return std::nullopt;
  }
  UserState work = snapshot();
  auto report = end_of_session_update(log.back().session_id, work, *prompts_, *backend_);
  {
    std::lock_guard lk(state_mutex_);
    state_ = std::move(work);
    persist_locked();
  }
  notify(ChangeKind::memory);
  return report;
}

void UserSession::flush() {
  std::lock_guard request(request_mutex_);
  wait_pending();
}

UserState UserSession::snapshot() const {
  std::lock_guard lk(state_mutex_);
  return state_;
}

std::optional<AgentTrace> UserSession::trace(const std::string& trace_id) const {
  std::lock_guard lk(state_mutex_);
  const auto it = traces_.find(trace_id);
  if (it == traces_.end()) return std::nullopt;
  return it->second;
}

std::optional<TurnUpdateReport> UserSession::last_turn_update() const {
  std::lock_guard lk(state_mutex_);
  return last_turn_update_;
}

std::vector<ChangeEvent> UserSession::wait_for_changes(std::uint64_t after_sequence,
                                                       std::chrono::milliseconds timeout) const {
  std::unique_lock lk(event_mutex_);
  event_cv_.wait_for(lk, timeout, [&] { return !events_.empty() && events_.back().sequence > after_sequence; });
  std::vector<ChangeEvent> out;
  for (const auto& e : events_) {
    if (e.sequence > after_sequence) out.push_back(e);
  }
  return out;
}

Engine::Engine(EngineConfig config, std::shared_ptr<ChatBackend> backend,
               std::shared_ptr<const EmbeddingProvider> embedder,
               std::shared_ptr<const PromptLibrary> prompts)
    : config_(std::move(config)),
      backend_(std::move(backend)),
      embedder_(std::move(embedder)),
      prompts_(std::move(prompts)) {}

bool Engine::valid_user_id(std::string_view user_id) {
  if (user_id.empty() || user_id.size() > 64 || user_id.front() == '.') return false;
  for (const char c : user_id) {
    const bool ok = std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.';
    if (!ok) return false;
  }
  return true;
}

std::shared_ptr<UserSession> Engine::make_session(const std::string& user_id, UserState state) {
  std::optional<std::filesystem::path> dir;
  if (config_.state_root) dir = *config_.state_root / user_id;
  auto session = std::make_shared<UserSession>(user_id, std::move(state), backend_, prompts_, config_, dir);
  users_[user_id] = session;
  return session;
}

std::shared_ptr<UserSession> Engine::find(const std::string& user_id) {
  if (!valid_user_id(user_id)) return nullptr;
  std::lock_guard lk(mutex_);
  if (const auto it = users_.find(user_id); it != users_.end()) return it->second;
  if (config_.state_root && state_exists(*config_.state_root / user_id)) {
    return make_session(user_id, load_state(*config_.state_root / user_id, embedder_));
  }
  return nullptr;
}

std::shared_ptr<UserSession> Engine::open(const std::string& user_id) {
  if (!valid_user_id(user_id)) fail(ErrorCode::reject_invalid, "invalid user id", "user");
  if (auto existing = find(user_id)) return existing;
  std::lock_guard lk(mutex_);
  if (const auto it = users_.find(user_id); it != users_.end()) return it->second;
  UserState state(embedder_, MemoryStore(CoreMemory::with_name(user_id)));
  if (config_.state_root) save_state(state, *config_.state_root / user_id);
  return make_session(user_id, std::move(state));
}

}  // namespace memoria
