#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <spdlog/spdlog.h>
#include <nlohmann/json.hpp>

#include "memoria/backend.hpp"
#include "memoria/embedding.hpp"
#include "memoria/error.hpp"
#include "memoria/hashing.hpp"

namespace memoria {

namespace {

struct SplitUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

SplitUrl split_url(const std::string& url) {
  const auto scheme = url.find("://");
  if (scheme == std::string::npos) fail(ErrorCode::reject_invalid, "URL needs a scheme: " + url);
  const auto path = url.find('/', scheme + 3);
  if (path == std::string::npos) return {url, "/"};
  return {url.substr(0, path), url.substr(path)};
}

std::string mime_for(const std::filesystem::path& p) {
  const auto ext = p.extension().string();
  if (ext == ".png") return "image/png";
  if (ext == ".gif") return "image/gif";
  if (ext == ".webp") return "image/webp";
  return "image/jpeg";
}

std::string env_or(const char* name, std::string fallback) {
  const char* v = std::getenv(name);
  return v && *v ? std::string(v) : std::move(fallback);
}

}  // namespace

HttpBackendConfig HttpBackendConfig::from_env() {
  HttpBackendConfig c;
  c.endpoint = env_or("MEMORIA_ENDPOINT", "");
  if (c.endpoint.empty()) fail(ErrorCode::reject_invalid, "MEMORIA_ENDPOINT is not set");
  c.api_key = env_or("MEMORIA_API_KEY", "");
  c.model = env_or("MEMORIA_MODEL", c.model);
  c.timeout = std::chrono::seconds(std::stoi(env_or("MEMORIA_TIMEOUT_SECONDS", "60")));
  const auto images = env_or("MEMORIA_SEND_IMAGES", "0");
  c.send_images = images == "1" || images == "true";
  return c;
}

HttpBackend::HttpBackend(HttpBackendConfig config) : config_(std::move(config)) {
  split_url(config_.endpoint);
}

std::string HttpBackend::request_body(const ChatRequest& request) const {
  nlohmann::json messages = nlohmann::json::array();
  for (const auto& m : request.messages) {
    nlohmann::json msg{{"role", std::string(to_string(m.role))}};
    std::string text = m.text;
    std::optional<std::string> data_uri;
    if (m.image && config_.send_images) {
      const auto path = config_.asset_root / *m.image;
      std::ifstream in(path, std::ios::binary);
      if (in) {
        std::stringstream ss;
        ss << in.rdbuf();
        data_uri = "data:" + mime_for(path) + ";base64," + base64_encode(ss.str());
      }
    }
    if (m.image && !data_uri) {
      std::string labels;
      for (const auto& d : m.image_descriptors) labels += (labels.empty() ? "" : ", ") + d;
      text += "\n[Image attached" + (labels.empty() ? std::string() : ": " + labels) + "]";
    }
    if (data_uri) {
      msg["content"] = nlohmann::json::array(
          {{{"type", "text"}, {"text", text}},
           {{"type", "image_url"}, {"image_url", {{"url", *data_uri}}}}});
    } else {
      msg["content"] = text;
    }
    messages.push_back(std::move(msg));
  }
  nlohmann::json body{{"model", config_.model},
                      {"messages", std::move(messages)},
                      {"temperature", request.temperature},
                      {"max_tokens", request.max_output_tokens}};
  return body.dump();
}

std::string HttpBackend::chat(const ChatRequest& request) {
  request.validate();
  const auto [origin, path] = split_url(config_.endpoint);
  const auto body = request_body(request);

  httplib::Client client(origin);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(config_.timeout);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(config_.timeout - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());
  httplib::Headers headers;
  if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);

  std::string last_error;
  const int attempts = std::max(1, config_.max_attempts);
  for (int attempt = 1; attempt <= attempts; ++attempt) {
    if (attempt > 1) {
      std::this_thread::sleep_for(config_.backoff_base * (1 << (attempt - 2)));
    }
    auto res = client.Post(path, headers, body, "application/json");
    if (!res) {
      last_error = "transport error: " + httplib::to_string(res.error());
    } else if (res->status < 200 || res->status >= 300) {
      last_error = "HTTP " + std::to_string(res->status);
    } else {
      try {
        const auto j = nlohmann::json::parse(res->body);
        const auto& content = j.at("choices").at(0).at("message").at("content");
        if (content.is_string()) return content.get<std::string>();
        last_error = "completion content is not a string";
      } catch (const nlohmann::json::exception& e) {
        last_error = std::string("unreadable completion: ") + e.what();
      }
    }
    spdlog::warn("chat backend attempt {}/{} failed: {}", attempt, attempts, last_error);
  }
  fail(ErrorCode::backend_unavailable,
       last_error + " after " + std::to_string(attempts) + " attempts", "retries=" + std::to_string(attempts));
}

HttpEmbeddingProvider::HttpEmbeddingProvider(std::string url, std::size_t dimension,
                                             std::chrono::seconds timeout)
    : url_(std::move(url)), dimension_(dimension), timeout_(timeout) {
  split_url(url_);
}

Embedding HttpEmbeddingProvider::embed(std::string_view text) const {
  const auto [origin, path] = split_url(url_);
  httplib::Client client(origin);
  client.set_connection_timeout(timeout_.count(), 0);
  client.set_read_timeout(timeout_.count(), 0);
  const nlohmann::json body{{"text", std::string(text)}};
  auto res = client.Post(path, body.dump(), "application/json");
  if (!res || res->status < 200 || res->status >= 300) {
    fail(ErrorCode::backend_unavailable, "embedding request failed");
  }
  Embedding v;
  try {
    v = nlohmann::json::parse(res->body).at("embedding").get<Embedding>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::backend_unavailable, std::string("unreadable embedding: ") + e.what());
  }
  if (v.size() != dimension_) fail(ErrorCode::backend_unavailable, "embedding has the wrong dimension");
  const double norm = l2_norm(v);
  if (norm > 0.0) {
    for (double& x : v) x /= norm;
  }
  return v;
}

}  // namespace memoria
