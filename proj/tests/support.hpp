#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>
#include <vector>

#include "memoria/backend.hpp"
#include "memoria/prompts.hpp"

namespace memoria::testing {

inline std::filesystem::path source_dir() { return MEMORIA_SOURCE_DIR; }

class TempDir {
 public:
  TempDir() {
    std::string pattern = (std::filesystem::temp_directory_path() / "memoria-XXXXXX").string();
    path_ = ::mkdtemp(pattern.data());
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << text;
}

inline std::string answer(const std::string& text, const std::string& think = "ok") {
  return "<think>" + think + "</think><answer>" + text + "</answer>";
}

inline std::string retrieve(const std::string& keywords, const std::string& start = "null",
                            const std::string& end = "null") {
  return "<think>need memory</think><retrieve>\n\"keywords\": \"" + keywords + "\"\n\"start_time\": \"" +
         start + "\"\n\"end_time\": \"" + end + "\"\n</retrieve>";
}

inline std::string personality(int o, int c, int e, int a, int n) {
  return "\"openness\": " + std::to_string(o) + "\n\"conscientiousness\": " + std::to_string(c) +
         "\n\"extraversion\": " + std::to_string(e) + "\n\"agreeableness\": " + std::to_string(a) +
         "\n\"neuroticism\": " + std::to_string(n);
}

inline std::string semantic_yes(const std::string& content, const std::string& keywords) {
  return "\"reason\": \"new fact\"\n\"decision\": true\n\"content\": \"" + content + "\"\n\"keywords\": \"" +
         keywords + "\"";
}

inline std::string semantic_no() {
  return "\"reason\": \"small talk\"\n\"decision\": false\n\"content\": \"\"\n\"keywords\": \"\"";
}

inline ScriptEntry entry(std::string template_id, std::vector<std::string> contains, std::string reply,
                         std::vector<std::string> excludes = {}) {
  return {std::move(template_id), std::move(contains), std::move(excludes), std::move(reply)};
}

// Replies that leave every memory untouched.
inline std::map<std::string, std::string> quiet_fallbacks() {
  return {{std::string(prompt_id::personality), personality(3, 3, 3, 3, 3)},
          {std::string(prompt_id::semantic), semantic_no()},
          {std::string(prompt_id::core), ""},
          {std::string(prompt_id::procedural), ""},
          {std::string(prompt_id::episodic), ""},
          {std::string(prompt_id::response), answer("Okay.")}};
}

inline ScriptFixture quiet_script(std::vector<ScriptEntry> entries = {}) {
  ScriptFixture f;
  f.entries = std::move(entries);
  f.fallbacks = quiet_fallbacks();
  return f;
}

}  // namespace memoria::testing

#include <random>

#include "memoria/retrieval.hpp"

namespace memoria::testing {

inline const std::vector<std::string>& vocabulary() {
  static const std::vector<std::string> words = {
      "coffee", "tea",    "running", "park",   "dog",     "cat",    "movie", "music",  "guitar", "piano",
      "sprite", "cola",   "lunch",   "dinner", "travel",  "paris",  "rome",  "beach",  "work",   "meeting",
      "sister", "mother", "book",    "novel",  "garden",  "flower", "bike",  "yoga",   "sleep",  "morning"};
  return words;
}

inline std::string random_text(std::mt19937& rng, int min_words, int max_words) {
  const auto& v = vocabulary();
  const int n = min_words + static_cast<int>(rng() % static_cast<unsigned>(max_words - min_words + 1));
  std::string out;
  for (int i = 0; i < n; ++i) out += (i ? " " : "") + v[rng() % v.size()];
  return out;
}

// Seeded store of records spread over three substores and ~60 days; text
// is drawn from a small vocabulary so scores tie now and then.
inline std::vector<IndexRecord> random_records(std::uint32_t seed, int n) {
  std::mt19937 rng(seed);
  const auto base = Timestamp::parse("2025-01-01 00:00");
  std::vector<IndexRecord> out;
  std::int64_t next_id[3] = {0, 0, 0};
  for (int i = 0; i < n; ++i) {
    const auto s = static_cast<Substore>(rng() % 3);
    IndexRecord r;
    r.substore = s;
    r.id = next_id[static_cast<int>(s)]++;
    r.text = random_text(rng, 1, 6);
    r.created_at = base.plus_minutes(static_cast<std::int64_t>(rng() % (60 * 24 * 60)));
    out.push_back(std::move(r));
  }
  return out;
}

inline RetrievalQuery random_query(std::mt19937& rng) {
  const auto base = Timestamp::parse("2025-01-01 00:00");
  RetrievalQuery q;
  q.keywords = random_text(rng, 1, 4);
  const auto a = static_cast<std::int64_t>(rng() % (60 * 24 * 70));
  const auto b = static_cast<std::int64_t>(rng() % (60 * 24 * 70));
  switch (rng() % 4) {
    case 0: break;
    case 1: q.start = base.plus_minutes(std::min(a, b)); break;
    case 2: q.end = base.plus_minutes(std::max(a, b)); break;
    default:
      q.start = base.plus_minutes(std::min(a, b));
      q.end = base.plus_minutes(std::max(a, b));
  }
  q.k_procedural = static_cast<int>(rng() % 4);
  q.k_semantic = static_cast<int>(rng() % 7);
  q.k_episodic = static_cast<int>(rng() % 4);
  return q;
}

inline std::set<MemoryRef> random_exclusions(std::mt19937& rng, const std::vector<IndexRecord>& records) {
  std::set<MemoryRef> out;
  const auto n = rng() % 12;
  for (unsigned i = 0; i < n && !records.empty(); ++i) {
    const auto& r = records[rng() % records.size()];
    out.insert({r.substore, r.id});
  }
  return out;
}

}  // namespace memoria::testing
