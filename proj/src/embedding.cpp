#include "memoria/embedding.hpp"

#include <cctype>
#include <cmath>

#include "memoria/error.hpp"
#include "memoria/hashing.hpp"

namespace memoria {

std::vector<std::string> tokenize_words(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (unsigned char c : text) {
    // Bytes >= 0x80 stay inside words so UTF-8 text tokenizes by whitespace/punctuation.
    if (std::isalnum(c) || c >= 0x80) {
      current += static_cast<char>(std::tolower(c));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

double dot(const Embedding& a, const Embedding& b) {
  double s = 0.0;
  const std::size_t n = std::min(a.size(), b.size());
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

double l2_norm(const Embedding& v) { return std::sqrt(dot(v, v)); }

HashEmbedding::HashEmbedding(std::size_t dimension) : dimension_(dimension) {
  if (dimension_ == 0) fail(ErrorCode::reject_invalid, "embedding dimension must be positive");
}

Embedding HashEmbedding::embed(std::string_view text) const {
  Embedding v(dimension_, 0.0);
  const auto tokens = tokenize_words(text);
  auto add = [&](std::string_view feature) {
    const std::uint64_t h = fnv1a64(feature);
    const double sign = (h >> 63) ? -1.0 : 1.0;
    v[(h & 0x7fffffffffffffffULL) % dimension_] += sign;
  };
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    add("u:" + tokens[i]);
    if (i + 1 < tokens.size()) add("b:" + tokens[i] + ' ' + tokens[i + 1]);
  }
  double norm = l2_norm(v);
  if (norm == 0.0 && !tokens.empty()) {
    // Every feature cancelled out; fall back to the first token alone.
    add("u:" + tokens.front());
    norm = l2_norm(v);
  }
  if (norm > 0.0) {
    for (double& x : v) x /= norm;
  }
  return v;
}

}  // namespace memoria
