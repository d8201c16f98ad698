#include "memoria/persistence.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <array>
#include <cerrno>
#include <cstring>
#include <fstream>
#include <sstream>

#include "memoria/error.hpp"
#include "memoria/hashing.hpp"
#include "memoria/serialization.hpp"

namespace memoria {

namespace fs = std::filesystem;

namespace {

constexpr const char* kManifest = "manifest.json";
constexpr std::array<const char*, 3> kDocs = {"core.json", "procedural.json", "profile.json"};
constexpr std::array<const char*, 3> kLogs = {"semantic.log", "episodic.log", "dialogue.log"};
constexpr const char* kPendingSuffix = ".next";

void write_durable(const fs::path& path, const std::string& content) {
  const int fd = ::open(path.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644);
  if (fd < 0) fail(ErrorCode::save_failed, std::strerror(errno), path.filename().string());
  std::size_t done = 0;
  while (done < content.size()) {
    const auto n = ::write(fd, content.data() + done, content.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      const std::string why = std::strerror(errno);
      ::close(fd);
      fail(ErrorCode::save_failed, why, path.filename().string());
    }
    done += static_cast<std::size_t>(n);
  }
  const bool synced = ::fsync(fd) == 0;
  if (::close(fd) != 0 || !synced) {
    fail(ErrorCode::save_failed, std::strerror(errno), path.filename().string());
  }
}

void replace_file(const fs::path& from, const fs::path& to) {
  std::error_code ec;
  fs::rename(from, to, ec);
  if (ec) fail(ErrorCode::save_failed, ec.message(), to.filename().string());
}

std::optional<std::string> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string checksum(std::string_view bytes) { return hex64(fnv1a64(bytes)); }

// Splits into '\n'-terminated lines; an unterminated tail is dropped.
std::vector<std::string> complete_lines(const std::string& bytes) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  for (std::size_t nl; (nl = bytes.find('\n', start)) != std::string::npos; start = nl + 1) {
    lines.push_back(bytes.substr(start, nl - start));
  }
  return lines;
}

std::string join_lines(const std::vector<std::string>& lines, std::size_t count) {
  std::string out;
  for (std::size_t i = 0; i < count; ++i) {
    out += lines[i];
    out += '\n';
  }
  return out;
}

template <class T>
std::vector<std::string> log_lines(const std::vector<T>& items) {
  std::vector<std::string> lines;
  lines.reserve(items.size());
  for (const auto& item : items) lines.push_back(to_json(item).dump());
  return lines;
}

std::string procedural_doc(const ProceduralMap& procedural) {
  json entries = json::array();
  for (const auto& [key, e] : procedural) entries.push_back(to_json(e));
  return json{{"entries", entries}}.dump(2) + "\n";
}

std::optional<json> read_manifest(const fs::path& dir) {
  const auto text = read_file(dir / kManifest);
  if (!text) return std::nullopt;
  try {
    return json::parse(*text);
  } catch (const json::exception& e) {
    fail(ErrorCode::corrupt_state, e.what(), kManifest);
  }
}

}  // namespace

bool state_exists(const fs::path& dir) { return fs::exists(dir / kManifest); }

void save_state(const UserState& state, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) fail(ErrorCode::save_failed, ec.message(), dir.string());

  const auto& store = state.store;
  const std::array<std::vector<std::string>, 3> logs = {
      log_lines(store.semantic()), log_lines(store.episodic()), log_lines(store.dialogue())};
  const std::array<std::string, 3> docs = {to_json(store.core()).dump(2) + "\n",
                                           procedural_doc(store.procedural()),
                                           to_json(state.profile).dump(2) + "\n"};

  // The committed prefix of every log must survive unchanged.
  std::optional<json> previous;
  try {
    previous = read_manifest(dir);
  } catch (const Error& e) {
    fail(ErrorCode::save_failed, std::string("existing manifest unreadable: ") + e.detail(), kManifest);
  }
  if (previous && previous->value("format_version", 0) == kStateFormatVersion) {
    for (std::size_t i = 0; i < kLogs.size(); ++i) {
      const auto committed = (*previous)["files"][kLogs[i]].value("lines", std::size_t{0});
      if (committed > logs[i].size()) {
        fail(ErrorCode::save_failed, "state has fewer records than the committed log", kLogs[i]);
      }
      const auto on_disk = read_file(dir / kLogs[i]).value_or("");
      if (checksum(join_lines(logs[i], committed)) != (*previous)["files"][kLogs[i]].value("checksum", "")) {
        fail(ErrorCode::save_failed, "committed log records differ from the state", kLogs[i]);
      }
      if (on_disk.compare(0, join_lines(logs[i], committed).size(), join_lines(logs[i], committed)) != 0) {
        fail(ErrorCode::save_failed, "log on disk differs from its committed prefix", kLogs[i]);
      }
    }
  }

  json manifest{{"format_version", kStateFormatVersion},
                {"next_procedural_id", store.next_procedural_id()},
                {"consolidated_through_session", store.consolidated_through_session()},
                {"files", json::object()}};
  for (std::size_t i = 0; i < kLogs.size(); ++i) {
    const auto bytes = join_lines(logs[i], logs[i].size());
    manifest["files"][kLogs[i]] = {{"lines", logs[i].size()}, {"checksum", checksum(bytes)}};
    const fs::path tmp = dir / (std::string(kLogs[i]) + ".tmp");
    write_durable(tmp, bytes);
    replace_file(tmp, dir / kLogs[i]);
  }
  for (std::size_t i = 0; i < kDocs.size(); ++i) {
    manifest["files"][kDocs[i]] = {{"checksum", checksum(docs[i])}};
    write_durable(dir / (std::string(kDocs[i]) + kPendingSuffix), docs[i]);
  }
  const fs::path tmp = dir / (std::string(kManifest) + ".tmp");
  write_durable(tmp, manifest.dump(2) + "\n");
  replace_file(tmp, dir / kManifest);
  // Committed. A crash before these renames is rolled forward on load.
  for (const char* doc : kDocs) replace_file(dir / (std::string(doc) + kPendingSuffix), dir / doc);
}

UserState load_state(const fs::path& dir, std::shared_ptr<const EmbeddingProvider> embedder) {
  const auto manifest = read_manifest(dir);
  if (!manifest) fail(ErrorCode::unsupported_version, "no manifest", kManifest);
  if (!manifest->is_object() || !manifest->contains("format_version") ||
      !(*manifest)["format_version"].is_number_integer()) {
    fail(ErrorCode::corrupt_state, "manifest has no format_version", kManifest);
  }
  const auto version = (*manifest)["format_version"].get<int>();
  if (version != kStateFormatVersion) {
    fail(ErrorCode::unsupported_version, "format_version " + std::to_string(version), kManifest);
  }

  std::map<std::string, json> docs;
  std::map<std::string, std::vector<json>> logs;
  std::int64_t next_procedural_id = 0;
  std::int64_t consolidated_through = -1;
  try {
    const auto& files = manifest->at("files");
    next_procedural_id = manifest->at("next_procedural_id").get<std::int64_t>();
    consolidated_through = manifest->at("consolidated_through_session").get<std::int64_t>();
    for (const char* name : kDocs) {
      const auto expected = files.at(name).at("checksum").get<std::string>();
      std::optional<std::string> text = read_file(dir / name);
      if (!text || checksum(*text) != expected) {
        text = read_file(dir / (std::string(name) + kPendingSuffix));
        if (!text || checksum(*text) != expected) fail(ErrorCode::corrupt_state, "checksum mismatch", name);
      }
      docs[name] = json::parse(*text);
    }
    for (const char* name : kLogs) {
      const auto count = files.at(name).at("lines").get<std::size_t>();
      const auto expected = files.at(name).at("checksum").get<std::string>();
      const auto text = read_file(dir / name);
      if (!text) fail(ErrorCode::corrupt_state, "missing", name);
      const auto lines = complete_lines(*text);
      if (lines.size() < count) {
        fail(ErrorCode::corrupt_state,
             "truncated: " + std::to_string(lines.size()) + " of " + std::to_string(count) + " lines", name);
      }
      if (checksum(join_lines(lines, count)) != expected) fail(ErrorCode::corrupt_state, "checksum mismatch", name);
      auto& parsed = logs[name];
      for (std::size_t i = 0; i < count; ++i) parsed.push_back(json::parse(lines[i]));
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::corrupt_state, e.what(), kManifest);
  }

  const auto rebuild = [&](auto&& f, const char* where) {
    try {
      return f();
    } catch (const Error& e) {
      fail(ErrorCode::corrupt_state, e.detail(), where);
    } catch (const json::exception& e) {
      fail(ErrorCode::corrupt_state, e.what(), where);
    }
  };
  auto core = rebuild([&] { return core_memory_from_json(docs["core.json"]); }, "core.json");
  auto procedural = rebuild(
      [&] {
        ProceduralMap map;
        for (const auto& j : docs["procedural.json"].at("entries")) {
          auto e = procedural_entry_from_json(j);
          const std::string key = e.key;
          if (!map.emplace(key, std::move(e)).second) fail(ErrorCode::malformed, "duplicate key " + key);
        }
        return map;
      },
      "procedural.json");
  auto profile = rebuild([&] { return profile_from_json(docs["profile.json"]); }, "profile.json");
  auto semantic = rebuild(
      [&] {
        std::vector<SemanticEntry> v;
        for (const auto& j : logs["semantic.log"]) v.push_back(semantic_entry_from_json(j));
        return v;
      },
      "semantic.log");
  auto episodic = rebuild(
      [&] {
        std::vector<EpisodicEntry> v;
        for (const auto& j : logs["episodic.log"]) v.push_back(episodic_entry_from_json(j));
        return v;
      },
      "episodic.log");
  auto dialogue = rebuild(
      [&] {
        std::vector<Turn> v;
        for (const auto& j : logs["dialogue.log"]) v.push_back(turn_from_json(j));
        return v;
      },
      "dialogue.log");
  auto store = rebuild(
      [&] {
        return MemoryStore::restore(std::move(core), std::move(semantic), std::move(episodic),
                                    std::move(procedural), std::move(dialogue), next_procedural_id,
                                    consolidated_through);
      },
      kManifest);
  UserState state(std::move(embedder), std::move(store));
  state.profile = profile;
  return state;
}

}  // namespace memoria
