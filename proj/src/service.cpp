#include "memoria/service.hpp"

#include <atomic>
#include <charconv>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "memoria/error.hpp"
#include "memoria/serialization.hpp"

namespace memoria {

namespace {

constexpr std::size_t kDefaultLimit = 100;
constexpr std::size_t kMaxLimit = 1000;
constexpr auto kEventPoll = std::chrono::milliseconds(500);

struct HttpError {
  int status;
  std::string code;
  std::string message;
  std::string field;
};

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, const HttpError& e) {
  json body{{"error", e.code}, {"message", e.message}};
  if (e.status == 400 || !e.field.empty()) body["field"] = e.field;
  send_json(res, e.status, body);
}

[[noreturn]] void bad_request(std::string field, std::string message) {
  throw HttpError{400, std::string(to_string(ErrorCode::malformed)), std::move(message), std::move(field)};
}

int status_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::reject_invalid:
    case ErrorCode::malformed:
      return 400;
    case ErrorCode::key_not_found:
      return 404;
    case ErrorCode::capacity_exceeded:
      return 409;
    case ErrorCode::backend_unavailable:
    case ErrorCode::fixture_mismatch:
    case ErrorCode::reward_unavailable:
      return 503;
    default:
      return 500;
  }
}

ChatInput parse_chat_body(const std::string& text) {
  json body;
  try {
    body = json::parse(text);
  } catch (const json::exception&) {
    bad_request("", "body is not JSON");
  }
  if (!body.is_object()) bad_request("", "body must be an object");
  ChatInput in;
  if (!body.contains("text") || !body["text"].is_string()) bad_request("/text", "text must be a string");
  in.text = body["text"].get<std::string>();
  if (in.text.empty()) bad_request("/text", "text must not be empty");
  if (body.contains("image") && !body["image"].is_null()) {
    if (!body["image"].is_string()) bad_request("/image", "image must be a string locator");
    in.image = body["image"].get<std::string>();
  }
  if (body.contains("image_descriptors")) {
    const auto& d = body["image_descriptors"];
    if (!d.is_array()) bad_request("/image_descriptors", "image_descriptors must be an array");
    for (std::size_t i = 0; i < d.size(); ++i) {
      if (!d[i].is_string()) bad_request("/image_descriptors/" + std::to_string(i), "descriptor must be a string");
      in.image_descriptors.push_back(d[i].get<std::string>());
    }
  }
  if (body.contains("timestamp") && !body["timestamp"].is_null()) {
    const auto& t = body["timestamp"];
    const auto parsed = t.is_string() ? Timestamp::try_parse(t.get<std::string>()) : std::nullopt;
    if (!parsed) bad_request("/timestamp", "timestamp must be \"YYYY-MM-DD HH:MM\"");
    in.timestamp = *parsed;
  }
  return in;
}

std::size_t parse_count(const httplib::Request& req, const char* name, std::size_t fallback) {
  if (!req.has_param(name)) return fallback;
  const auto text = req.get_param_value(name);
  std::size_t value = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    bad_request(std::string("/") + name, std::string(name) + " must be a non-negative integer");
  }
  return value;
}

template <class T, class IdOf>
json page(const std::vector<T>& items, IdOf id_of, const httplib::Request& req) {
  const bool has_after = req.has_param("after");
  const auto after = parse_count(req, "after", 0);
  const auto limit = std::min(parse_count(req, "limit", kDefaultLimit), kMaxLimit);
  json records = json::array();
  json next = nullptr;
  for (const auto& item : items) {
    const auto id = static_cast<std::size_t>(id_of(item));
    if (has_after && id <= after) continue;
    if (records.size() == limit) {
      next = records.back()["id"];
      break;
    }
    auto j = to_json(item);
    if (!j.contains("id")) j["id"] = id;
    records.push_back(std::move(j));
  }
  return {{"records", records}, {"next_after", next}};
}

json profile_body(const PersonalityProfile& p) {
  auto j = to_json(p);
  j["m"] = p.turns;
  j["rendered"] = render_profile(p);
  return j;
}

}  // namespace

struct Service::Impl {
  std::shared_ptr<Engine> engine;
  httplib::Server server;
  std::atomic<bool> stopping{false};

  std::shared_ptr<UserSession> user(const httplib::Request& req) {
    const std::string id = req.matches[1];
    auto session = engine->find(id);
    if (!session) throw HttpError{404, "unknown-user", "no such user: " + id, ""};
    return session;
  }

  // Maps engine errors onto HTTP statuses.
  template <class F>
  httplib::Server::Handler wrap(F f) {
    return [f](const httplib::Request& req, httplib::Response& res) {
      try {
        f(req, res);
      } catch (const HttpError& e) {
        send_error(res, e);
      } catch (const Error& e) {
        const int status = status_for(e.code());
        if (status >= 500) spdlog::error("{} {}: {}", req.method, req.path, e.what());
        send_error(res, {status, std::string(to_string(e.code())), e.detail(),
                         status == 400 && !e.location().empty() ? "/" + e.location() : ""});
      } catch (const std::exception& e) {
        spdlog::error("{} {}: {}", req.method, req.path, e.what());
        send_error(res, {500, "internal", e.what(), ""});
      }
    };
  }

  void routes() {
    const std::string u = R"(/v1/users/([^/]+))";

    server.Post(u, wrap([this](const httplib::Request& req, httplib::Response& res) {
      const std::string id = req.matches[1];
      if (!Engine::valid_user_id(id)) bad_request("/user", "invalid user id");
      const bool existed = engine->find(id) != nullptr;
      const auto session = engine->open(id);
      send_json(res, existed ? 200 : 201, {{"user", id}, {"created", !existed}});
    }));

    server.Post(u + "/chat", wrap([this](const httplib::Request& req, httplib::Response& res) {
      const auto session = user(req);
      const auto input = parse_chat_body(req.body);
      const auto result = session->chat(input);
      json body{{"response", result.response},
                {"trace_id", result.trace_id},
                {"turn_index", result.turn_index},
                {"session_id", result.session_id}};
      body["consolidation"] = result.consolidation ? to_json(*result.consolidation) : json(nullptr);
      send_json(res, 200, body);
    }));

    server.Get(u + "/memory/([a-z]+)", wrap([this](const httplib::Request& req, httplib::Response& res) {
      const auto session = user(req);
      const std::string type = req.matches[2];
      const auto state = session->snapshot();
      const auto& store = state.store;
      json body;
      if (type == "core") {
        body = {{"records", to_json(store.core())}, {"next_after", nullptr}};
      } else if (type == "semantic") {
        body = page(store.semantic(), [](const SemanticEntry& e) { return e.id; }, req);
      } else if (type == "episodic") {
        body = page(store.episodic(), [](const EpisodicEntry& e) { return e.id; }, req);
      } else if (type == "procedural") {
        std::vector<ProceduralEntry> entries;
        for (const auto& [key, e] : store.procedural()) entries.push_back(e);
        std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
        body = page(entries, [](const ProceduralEntry& e) { return e.id; }, req);
      } else if (type == "dialogue") {
        body = page(store.dialogue(), [](const Turn& t) { return t.index; }, req);
      } else {
        throw HttpError{404, "unknown-type", "no memory type " + type, ""};
      }
      body["user"] = session->user_id();
      body["type"] = type;
      send_json(res, 200, body);
    }));

    server.Get(u + "/profile", wrap([this](const httplib::Request& req, httplib::Response& res) {
      const auto session = user(req);
      send_json(res, 200, profile_body(session->snapshot().profile));
    }));

    server.Get(u + "/trace/([^/]+)", wrap([this](const httplib::Request& req, httplib::Response& res) {
      const auto session = user(req);
      const auto trace = session->trace(req.matches[2]);
      if (!trace) throw HttpError{404, "unknown-trace", "no such trace", ""};
      send_json(res, 200, to_json(*trace));
    }));

    server.Post(u + "/session/end", wrap([this](const httplib::Request& req, httplib::Response& res) {
      const auto session = user(req);
      const auto report = session->end_session();
      send_json(res, 200, {{"consolidated", report.has_value()},
                           {"report", report ? to_json(*report) : json(nullptr)}});
    }));

    server.Post(u + "/flush", wrap([this](const httplib::Request& req, httplib::Response& res) {
      const auto session = user(req);
      session->flush();
      send_json(res, 200, {{"flushed", true}});
    }));

    server.Get(u + "/events", wrap([this](const httplib::Request& req, httplib::Response& res) {
      const auto session = user(req);
      std::uint64_t after = parse_count(req, "after", 0);
      if (req.has_header("Last-Event-ID")) {
        const auto text = req.get_header_value("Last-Event-ID");
        std::from_chars(text.data(), text.data() + text.size(), after);
      }
      res.set_header("Cache-Control", "no-cache");
      res.set_chunked_content_provider(
          "text/event-stream", [this, session, after](std::size_t, httplib::DataSink& sink) mutable {
            if (stopping) return false;
            const auto events = session->wait_for_changes(after, kEventPoll);
            std::string chunk;
            for (const auto& e : events) {
              const json data{{"sequence", e.sequence}, {"kind", std::string(to_string(e.kind))}};
              chunk += "id: " + std::to_string(e.sequence) + "\nevent: " + std::string(to_string(e.kind)) +
                       "\ndata: " + data.dump() + "\n\n";
              after = e.sequence;
            }
            if (chunk.empty()) chunk = ": keepalive\n\n";
            return sink.write(chunk.data(), chunk.size());
          });
    }));
  }
};

Service::Service(std::shared_ptr<Engine> engine) : impl_(std::make_unique<Impl>()) {
  impl_->engine = std::move(engine);
  impl_->routes();
}

Service::~Service() { stop(); }

bool Service::mount_static(const std::filesystem::path& dir) {
  return impl_->server.set_mount_point("/", dir.string());
}

bool Service::listen(const std::string& host, int port) { return impl_->server.listen(host, port); }

int Service::bind_any_port(const std::string& host) { return impl_->server.bind_to_any_port(host); }

void Service::run() { impl_->server.listen_after_bind(); }

void Service::stop() {
  impl_->stopping = true;
  impl_->server.stop();
}

bool Service::running() const { return impl_->server.is_running(); }

}  // namespace memoria
