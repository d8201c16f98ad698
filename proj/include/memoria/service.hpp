#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "memoria/engine.hpp"

namespace memoria {

// HTTP/1.1 JSON front end over an Engine:
//
//   POST /v1/users/{u}                     create (idempotent)
//   POST /v1/users/{u}/chat                {text, image?, image_descriptors?, timestamp?}
//   GET  /v1/users/{u}/memory/{type}       core | semantic | episodic | procedural | dialogue;
//                                          ?after=<id>&limit=<n>
//   GET  /v1/users/{u}/profile
//   GET  /v1/users/{u}/trace/{trace_id}
//   POST /v1/users/{u}/session/end
//   POST /v1/users/{u}/flush
//   GET  /v1/users/{u}/events              server-sent change notifications
//
// Unknown users get 404, bad bodies 400 with a JSON-pointer "field",
// backend failures 503.
class Service {
 public:
  explicit Service(std::shared_ptr<Engine> engine);
  ~Service();

  // Serves files under `dir` at "/" (the browser front end).
  bool mount_static(const std::filesystem::path& dir);

  // Binds and serves on the calling thread until stop().
  bool listen(const std::string& host, int port);
  // Binds to a free port; returns it, or -1. Call run() afterwards.
  int bind_any_port(const std::string& host);
  void run();
  void stop();
  bool running() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace memoria
