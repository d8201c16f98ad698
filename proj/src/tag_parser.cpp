#include "memoria/tag_parser.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <map>
#include <set>

#include "memoria/error.hpp"

namespace memoria {

namespace {

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; }

std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

bool iequals(std::string_view a, std::string_view b) { return lower(a) == lower(b); }

std::string line_loc(std::size_t line) { return "line " + std::to_string(line); }

std::string unescape(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '\\' && i + 1 < s.size()) {
      const char n = s[i + 1];
      if (n == '"' || n == '\\') {
        out += n;
        ++i;
        continue;
      }
      if (n == 'n') {
        out += '\n';
        ++i;
        continue;
      }
    }
    out += s[i];
  }
  return out;
}

std::string escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') {
      out += '\\';
      out += c;
    } else if (c == '\n') {
      out += "\\n";
    } else {
      out += c;
    }
  }
  return out;
}

// Index of the closing quote for a string opened at `open`, or npos.
std::size_t closing_quote(std::string_view s, std::size_t open) {
  for (std::size_t i = open + 1; i < s.size(); ++i) {
    if (s[i] == '\\') {
      ++i;
    } else if (s[i] == '"') {
      return i;
    }
  }
  return std::string_view::npos;
}

bool only_braces(std::string_view line) {
  return !line.empty() && std::all_of(line.begin(), line.end(), [](char c) {
    return c == '{' || c == '}' || c == ',' || is_space(c);
  });
}

// Splits the raw value part into (value, comment) at a `//` that is outside
// quotes and starts the value or follows whitespace.
std::pair<std::string_view, std::string_view> split_comment(std::string_view raw) {
  bool quoted = false;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const char c = raw[i];
    if (quoted) {
      if (c == '\\') {
        ++i;
      } else if (c == '"') {
        quoted = false;
      }
      continue;
    }
    if (c == '"') {
      quoted = true;
    } else if (c == '/' && i + 1 < raw.size() && raw[i + 1] == '/' &&
               (i == 0 || is_space(raw[i - 1]))) {
      return {raw.substr(0, i), trim(raw.substr(i + 2))};
    }
  }
  return {raw, {}};
}

std::string clean_value(std::string_view raw) {
  std::string_view v = trim(raw);
  if (v.size() >= 2 && v.front() == '"') {
    const auto close = closing_quote(v, 0);
    if (close != std::string_view::npos) {
      std::string_view tail = trim(v.substr(close + 1));
      if (tail.empty() || tail == ",") return unescape(v.substr(1, close - 1));
    }
  }
  if (!v.empty() && v.back() == ',') v = trim(v.substr(0, v.size() - 1));
  // Unescaped inner quotes: keep everything between the outermost pair.
  if (v.size() >= 2 && v.front() == '"' && v.back() == '"') return unescape(v.substr(1, v.size() - 2));
  return std::string(v);
}

using KeyIndex = std::map<std::string, const KvPair*>;

// Lowercased key -> pair; duplicate keys are malformed.
KeyIndex index_keys(const KvList& kv) {
  KeyIndex out;
  for (const auto& p : kv) {
    if (!out.emplace(lower(p.key), &p).second) {
      fail(ErrorCode::malformed, "duplicate key '" + p.key + "'", line_loc(p.line));
    }
  }
  return out;
}

const KvPair& require_key(const KeyIndex& keys, std::string_view name) {
  auto it = keys.find(std::string(name));
  if (it == keys.end()) fail(ErrorCode::malformed, "missing key '" + std::string(name) + "'");
  return *it->second;
}

std::size_t count_of(std::string_view text, std::string_view needle) {
  std::size_t n = 0;
  for (auto pos = text.find(needle); pos != std::string_view::npos;
       pos = text.find(needle, pos + needle.size())) {
    ++n;
  }
  return n;
}

std::optional<Timestamp> parse_bound(const KvPair& p) {
  const std::string_view v = trim(p.value);
  if (v.empty() || iequals(v, "null")) return std::nullopt;
  auto t = Timestamp::try_parse(v);
  if (!t) {
    fail(ErrorCode::malformed, "bad timestamp '" + std::string(v) + "' for " + p.key,
         line_loc(p.line));
  }
  return t;
}

}  // namespace

KvList parse_kv_block(std::string_view text) {
  KvList out;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = trim(text.substr(start, end - start));
    ++line_no;
    start = end + 1;

    if (line.empty() || only_braces(line) || line.starts_with("```")) {
      if (end == text.size()) break;
      continue;
    }

    KvPair pair;
    pair.line = line_no;
    std::string_view rest;
    if (line.front() == '"') {
      const auto close = closing_quote(line, 0);
      if (close == std::string_view::npos) {
        fail(ErrorCode::malformed, "unterminated quoted key", line_loc(line_no));
      }
      pair.key = unescape(line.substr(1, close - 1));
      rest = trim(line.substr(close + 1));
      if (rest.empty() || rest.front() != ':') {
        fail(ErrorCode::malformed, "expected ':' after key", line_loc(line_no));
      }
      rest.remove_prefix(1);
    } else {
      const auto colon = line.find(':');
      if (colon == std::string_view::npos) {
        fail(ErrorCode::malformed, "line has no ':'", line_loc(line_no));
      }
      pair.key = std::string(trim(line.substr(0, colon)));
      rest = line.substr(colon + 1);
    }
    if (trim(pair.key).empty()) fail(ErrorCode::malformed, "empty key", line_loc(line_no));

    const auto [value, comment] = split_comment(rest);
    pair.value = clean_value(value);
    pair.comment = std::string(comment);
    out.push_back(std::move(pair));
    if (end == text.size()) break;
  }
  return out;
}

AgentStep parse_agent_step(std::string_view text) {
  constexpr std::string_view kThinkOpen = "<think>", kThinkClose = "</think>";
  constexpr std::string_view kAnswerOpen = "<answer>", kAnswerClose = "</answer>";
  constexpr std::string_view kRetrieveOpen = "<retrieve>", kRetrieveClose = "</retrieve>";

  const auto think_opens = count_of(text, kThinkOpen);
  const auto think_closes = count_of(text, kThinkClose);
  if (think_opens == 0) fail(ErrorCode::malformed, "missing <think> block");
  if (think_opens > 1 || think_closes > 1) fail(ErrorCode::malformed, "more than one <think> block");
  if (think_closes == 0) fail(ErrorCode::malformed, "unclosed <think> tag");

  const auto answers = count_of(text, kAnswerOpen);
  const auto retrieves = count_of(text, kRetrieveOpen);
  const auto answer_closes = count_of(text, kAnswerClose);
  const auto retrieve_closes = count_of(text, kRetrieveClose);
  if (answers + retrieves == 0) {
    fail(ErrorCode::malformed, "neither <answer> nor <retrieve> block present");
  }
  if (answers > 0 && retrieves > 0) fail(ErrorCode::malformed, "both <answer> and <retrieve> present");
  if (answers > 1 || retrieves > 1) fail(ErrorCode::malformed, "more than one action block");
  const bool is_answer = answers == 1;
  const auto open_tag = is_answer ? kAnswerOpen : kRetrieveOpen;
  const auto close_tag = is_answer ? kAnswerClose : kRetrieveClose;
  const auto closes = is_answer ? answer_closes : retrieve_closes;
  if (closes == 0) fail(ErrorCode::malformed, "unclosed " + std::string(open_tag) + " tag");
  if (closes > 1 || (is_answer ? retrieve_closes : answer_closes) > 0) {
    fail(ErrorCode::malformed, "stray closing action tag");
  }

  const auto think_open = text.find(kThinkOpen);
  const auto think_close = text.find(kThinkClose);
  if (think_close < think_open) fail(ErrorCode::malformed, "</think> before <think>");
  const auto action_open = text.find(open_tag);
  const auto action_close = text.find(close_tag);
  if (action_open < think_close) {
    fail(ErrorCode::malformed, "action block must follow the </think> tag");
  }
  if (action_close < action_open) {
    fail(ErrorCode::malformed, std::string(close_tag) + " before " + std::string(open_tag));
  }

  AgentStep step;
  step.think = std::string(trim(text.substr(think_open + kThinkOpen.size(),
                                            think_close - think_open - kThinkOpen.size())));
  if (!trim(text.substr(0, think_open)).empty()) {
    step.warnings.push_back("ignored text before <think>");
  }
  const auto gap_start = think_close + kThinkClose.size();
  if (!trim(text.substr(gap_start, action_open - gap_start)).empty()) {
    step.warnings.push_back("ignored text between </think> and " + std::string(open_tag));
  }
  if (!trim(text.substr(action_close + close_tag.size())).empty()) {
    step.warnings.push_back("ignored text after " + std::string(close_tag));
  }

  const auto body = text.substr(action_open + open_tag.size(),
                                action_close - action_open - open_tag.size());
  if (is_answer) {
    const auto answer = trim(body);
    if (answer.empty()) fail(ErrorCode::malformed, "empty <answer> block");
    step.action = AnswerAction{std::string(answer)};
  } else {
    const auto kv = parse_kv_block(body);
    RetrieveAction action;
    action.query = parse_retrieve_conditions(kv);
    const auto keys = index_keys(kv);
    action.keywords = require_key(keys, "keywords").value;
    action.start_text = require_key(keys, "start_time").value;
    action.end_text = require_key(keys, "end_time").value;
    step.action = std::move(action);
  }
  return step;
}

int format_score(std::string_view text) {
  try {
    parse_agent_step(text);
    return 1;
  } catch (const Error&) {
    return 0;
  }
}

RetrievalQuery parse_retrieve_conditions(const KvList& kv) {
  const auto keys = index_keys(kv);
  RetrievalQuery q;
  q.keywords = require_key(keys, "keywords").value;
  q.start = parse_bound(require_key(keys, "start_time"));
  q.end = parse_bound(require_key(keys, "end_time"));
  q.validate();
  return q;
}

std::string render_retrieve_block(const RetrievalQuery& query) {
  auto bound = [](const std::optional<Timestamp>& t) {
    return t ? "\"" + t->str() + "\"" : std::string("\"null\"");
  };
  return "\"keywords\": \"" + escape(query.keywords) + "\"\n\"start_time\": " + bound(query.start) +
         "\n\"end_time\": " + bound(query.end) + "\n";
}

TurnPersonality parse_personality(const KvList& kv) {
  const auto keys = index_keys(kv);
  TurnPersonality out;
  for (std::size_t i = 0; i < kTraitNames.size(); ++i) {
    const auto& p = require_key(keys, kTraitNames[i]);
    const std::string_view v = trim(p.value);
    int score = 0;
    const auto res = std::from_chars(v.data(), v.data() + v.size(), score);
    if (v.empty() || res.ec != std::errc{} || res.ptr != v.data() + v.size()) {
      fail(ErrorCode::malformed, "score for " + p.key + " is not an integer", line_loc(p.line));
    }
    if (score < 1 || score > 5) {
      fail(ErrorCode::reject_invalid, "score for " + p.key + " outside 1..5", line_loc(p.line));
    }
    out.scores[i] = score;
  }
  return out;
}

std::vector<std::string> split_keywords(std::string_view text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto end = text.find_first_of(",\n", start);
    if (end == std::string_view::npos) end = text.size();
    const auto word = trim(text.substr(start, end - start));
    if (!word.empty()) out.emplace_back(word);
    start = end + 1;
  }
  return out;
}

SemanticExtraction parse_semantic_extraction(const KvList& kv) {
  const auto keys = index_keys(kv);
  SemanticExtraction out;
  out.reason = require_key(keys, "reason").value;
  const auto& decision = require_key(keys, "decision");
  if (iequals(trim(decision.value), "true")) {
    out.decision = true;
  } else if (iequals(trim(decision.value), "false")) {
    out.decision = false;
  } else {
    fail(ErrorCode::malformed, "decision must be true or false", line_loc(decision.line));
  }
  const auto& content = require_key(keys, "content");
  const auto& keywords = require_key(keys, "keywords");
  out.content = std::string(trim(content.value));
  out.keywords = std::string(trim(keywords.value));
  if (!out.decision) {
    if (!out.content.empty()) {
      fail(ErrorCode::malformed, "content must be empty when decision is false",
           line_loc(content.line));
    }
    if (!out.keywords.empty()) {
      fail(ErrorCode::malformed, "keywords must be empty when decision is false",
           line_loc(keywords.line));
    }
  } else {
    if (out.content.empty()) {
      fail(ErrorCode::malformed, "content is empty although decision is true",
           line_loc(content.line));
    }
    if (split_keywords(out.keywords).empty()) {
      fail(ErrorCode::malformed, "keywords are empty although decision is true",
           line_loc(keywords.line));
    }
  }
  return out;
}

TopicSegmentation parse_topics(std::string_view text) {
  const auto kv = parse_kv_block(text);
  struct Pending {
    Topic topic;
    std::size_t line = 0;
    std::set<std::string> seen;
  };
  std::vector<Pending> topics;

  for (const auto& p : kv) {
    const auto key = lower(trim(p.key));
    if (key == "topic_summary") {
      Pending next;
      next.topic.summary = std::string(trim(p.value));
      next.line = p.line;
      next.seen.insert(key);
      topics.push_back(std::move(next));
      continue;
    }
    if (key != "keywords" && key != "source_dialog_indices") {
      fail(ErrorCode::malformed, "unexpected key '" + p.key + "' in topic list", line_loc(p.line));
    }
    if (topics.empty()) fail(ErrorCode::malformed, "'" + p.key + "' before any topic_summary", line_loc(p.line));
    auto& cur = topics.back();
    if (!cur.seen.insert(key).second) {
      fail(ErrorCode::malformed, "duplicate key '" + p.key + "' in one topic", line_loc(p.line));
    }
    if (key == "keywords") {
      cur.topic.keywords = std::string(trim(p.value));
      continue;
    }
    std::string_view v = trim(p.value);
    if (!v.empty() && v.front() == '[') v.remove_prefix(1);
    if (!v.empty() && v.back() == ']') v.remove_suffix(1);
    std::size_t pos = 0;
    while (pos < v.size()) {
      while (pos < v.size() && (is_space(v[pos]) || v[pos] == ',')) ++pos;
      if (pos >= v.size()) break;
      std::int64_t idx = 0;
      const auto res = std::from_chars(v.data() + pos, v.data() + v.size(), idx);
      if (res.ec != std::errc{} || idx < 0 ||
          (res.ptr != v.data() + v.size() && !is_space(*res.ptr) && *res.ptr != ',')) {
        fail(ErrorCode::malformed, "source_dialog_indices must be non-negative integers",
             line_loc(p.line));
      }
      cur.topic.source_dialog_indices.push_back(idx);
      pos = static_cast<std::size_t>(res.ptr - v.data());
    }
  }

  TopicSegmentation out;
  for (auto& t : topics) {
    if (t.topic.summary.empty()) fail(ErrorCode::malformed, "empty topic_summary", line_loc(t.line));
    if (!t.seen.contains("keywords")) fail(ErrorCode::malformed, "topic without keywords", line_loc(t.line));
    if (t.topic.source_dialog_indices.empty()) {
      fail(ErrorCode::malformed, "topic without source_dialog_indices", line_loc(t.line));
    }
    out.push_back(std::move(t.topic));
  }
  return out;
}

std::vector<CoreOp> parse_core_profile(const KvList& kv, const CoreMemory& current) {
  if (kv.empty()) return {};
  std::map<std::string, std::string> desired[2];
  auto slot = [](CoreBlock b) { return b == CoreBlock::human ? 0 : 1; };

  for (const auto& p : kv) {
    std::string key(trim(p.key));
    std::optional<CoreBlock> block;
    const auto lkey = lower(key);
    if (lkey.starts_with("human.")) {
      block = CoreBlock::human;
      key = key.substr(6);
    } else if (lkey.starts_with("persona.")) {
      block = CoreBlock::persona;
      key = key.substr(8);
    }
    if (key.empty()) fail(ErrorCode::malformed, "empty core key", line_loc(p.line));
    if (!block) {
      const auto comment = lower(p.comment);
      if (comment.find("persona") != std::string::npos) {
        block = CoreBlock::persona;
      } else if (comment.find("human") != std::string::npos) {
        block = CoreBlock::human;
      } else if (current.persona.contains(key) && !current.human.contains(key)) {
        block = CoreBlock::persona;
      } else {
        block = CoreBlock::human;
      }
    }
    // "name" always lives in the human block.
    if (key == "name") block = CoreBlock::human;
    const std::string value(trim(p.value));
    if (value.empty() || iequals(value, "null")) continue;
    if (!desired[slot(*block)].emplace(key, value).second) {
      fail(ErrorCode::malformed, "duplicate core key '" + key + "'", line_loc(p.line));
    }
  }

  std::vector<CoreOp> removals, updates, creates;
  for (const auto block : {CoreBlock::human, CoreBlock::persona}) {
    const auto& want = desired[slot(block)];
    const auto& have = current.block(block);
    for (const auto& [key, value] : have) {
      if (!want.contains(key) && !(block == CoreBlock::human && key == "name")) {
        removals.push_back({CrudKind::remove, block, key, {}});
      }
    }
    for (const auto& [key, value] : want) {
      auto it = have.find(key);
      if (it == have.end()) {
        creates.push_back({CrudKind::create, block, key, value});
      } else if (it->second != value) {
        updates.push_back({CrudKind::update, block, key, value});
      }
    }
  }
  std::vector<CoreOp> ops = std::move(removals);
  ops.insert(ops.end(), updates.begin(), updates.end());
  ops.insert(ops.end(), creates.begin(), creates.end());
  return ops;
}

ProceduralKind infer_procedural_kind(std::string_view key, std::string_view sentence,
                                     std::string_view comment) {
  const auto c = lower(comment);
  if (c.find("goal") != std::string::npos) return ProceduralKind::goal;
  if (c.find("habit") != std::string::npos) return ProceduralKind::habit;
  static constexpr std::string_view kGoalCues[] = {
      "goal",       "plans to",   "plan to",   "planning", "wants to",  "want to",
      "aims to",    "aiming",     "working toward", "training for", "preparing for",
      "learning",   "learn ",     "intends",   "hopes to", "objective", "project",
      "saving for", "trying to"};
  const auto text = lower(key) + " " + lower(sentence);
  for (const auto cue : kGoalCues) {
    if (text.find(cue) != std::string::npos) return ProceduralKind::goal;
  }
  return ProceduralKind::habit;
}

std::vector<ProceduralOp> parse_procedural(const KvList& kv, const ProceduralMap& current) {
  if (kv.empty()) return {};
  std::map<std::string, std::pair<std::string, ProceduralKind>> desired;
  for (const auto& p : kv) {
    const std::string key(trim(p.key));
    const std::string sentence(trim(p.value));
    if (sentence.empty() || iequals(sentence, "null")) continue;
    if (!desired.emplace(key, std::make_pair(sentence, infer_procedural_kind(key, sentence, p.comment)))
             .second) {
      fail(ErrorCode::malformed, "duplicate procedural key '" + key + "'", line_loc(p.line));
    }
  }
  std::vector<ProceduralOp> ops;
  for (const auto& [key, entry] : current) {
    if (!desired.contains(key)) ops.push_back({CrudKind::remove, key, {}, entry.kind});
  }
  for (const auto& [key, want] : desired) {
    auto it = current.find(key);
    if (it == current.end()) {
      ops.push_back({CrudKind::create, key, want.first, want.second});
    } else if (it->second.sentence != want.first || it->second.kind != want.second) {
      ops.push_back({CrudKind::update, key, want.first, want.second});
    }
  }
  // Removals first so a same-size swap stays within capacity.
  std::stable_partition(ops.begin(), ops.end(),
                        [](const ProceduralOp& op) { return op.kind == CrudKind::remove; });
  return ops;
}

}  // namespace memoria
