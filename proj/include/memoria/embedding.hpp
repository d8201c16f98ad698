#pragma once

#include <chrono>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace memoria {

using Embedding = std::vector<double>;

class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual std::size_t dimension() const = 0;
  // Deterministic, unit L2 norm; the zero vector only for text with no tokens.
  virtual Embedding embed(std::string_view text) const = 0;
};

// Lowercased word unigrams and bigrams, signed feature hashing into a fixed
// number of buckets, then L2 normalization. No model files needed.
class HashEmbedding final : public EmbeddingProvider {
 public:
  static constexpr std::size_t kDefaultDimension = 64;

  explicit HashEmbedding(std::size_t dimension = kDefaultDimension);
  std::size_t dimension() const override { return dimension_; }
  Embedding embed(std::string_view text) const override;

 private:
  std::size_t dimension_;
};

// POST {"text": ...} to `url`, expects {"embedding": [...]}; the response is
// normalized client-side. Throws backend_unavailable on transport errors.
class HttpEmbeddingProvider final : public EmbeddingProvider {
 public:
  HttpEmbeddingProvider(std::string url, std::size_t dimension,
                        std::chrono::seconds timeout = std::chrono::seconds(30));
  std::size_t dimension() const override { return dimension_; }
  Embedding embed(std::string_view text) const override;

 private:
  std::string url_;
  std::size_t dimension_;
  std::chrono::seconds timeout_;
};

std::vector<std::string> tokenize_words(std::string_view text);

double dot(const Embedding& a, const Embedding& b);
double l2_norm(const Embedding& v);

}  // namespace memoria
