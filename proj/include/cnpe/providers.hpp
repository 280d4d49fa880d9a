#pragma once

#include <cctype>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cnpe/error.hpp"

namespace cnpe {

struct EmbeddingRequest {
  std::string id;
  std::string text;
};

/// Batch-oriented embedding backend. Real services plug in behind this;
/// tests use the deterministic hashed bag-of-words below.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual int dimension() const = 0;
  /// One vector per request, all of dimension(). Throws provider-failure
  /// with the offending id on transport or content errors.
  virtual std::vector<std::vector<double>> embed(
      std::span<const EmbeddingRequest> requests) = 0;
};

/// Scores candidate texts against a query text; higher = more relevant.
class RerankProvider {
 public:
  virtual ~RerankProvider() = default;
  virtual std::vector<double> score(const std::string& query,
                                    std::span<const std::string> candidates) = 0;
};

inline double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    dot += a[k] * b[k];
    na += a[k] * a[k];
    nb += b[k] * b[k];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

namespace detail {

inline std::uint64_t fnv1a64(std::string_view token) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : token) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

template <typename Fn>
inline void for_each_token(std::string_view text, Fn&& fn) {
  std::size_t start = 0;
  std::string token;
  for (std::size_t k = 0; k <= text.size(); ++k) {
    const bool alnum = k < text.size() && std::isalnum(static_cast<unsigned char>(text[k]));
    if (alnum) {
      if (token.empty()) start = k;
      token.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(text[k]))));
    } else if (!token.empty()) {
      fn(std::string_view(token));
      token.clear();
    }
  }
  (void)start;
}

}  // namespace detail

/// Deterministic mock embedder: lowercased alphanumeric tokens hashed into a
/// fixed-dimension bag-of-words count vector. Identical text gives identical
/// vectors, and token overlap translates into cosine similarity.
class HashedBagEmbedder : public EmbeddingProvider {
 public:
  explicit HashedBagEmbedder(int dimension = 256) : dim_(dimension) {
    if (dimension <= 0) throw Error(errc::invalid_argument, "embedder dimension must be positive");
  }

  int dimension() const override { return dim_; }

  std::vector<double> embed_one(std::string_view text) const {
    std::vector<double> v(static_cast<std::size_t>(dim_), 0.0);
    detail::for_each_token(text, [&](std::string_view token) {
      v[detail::fnv1a64(token) % static_cast<std::uint64_t>(dim_)] += 1.0;
    });
    return v;
  }

  std::vector<std::vector<double>> embed(
      std::span<const EmbeddingRequest> requests) override {
    std::vector<std::vector<double>> out;
    out.reserve(requests.size());
    for (const auto& r : requests) out.push_back(embed_one(r.text));
    return out;
  }

 private:
  int dim_;
};

/// Mock reranker: cosine similarity computed on the mock embedder's vectors.
class EmbeddingCosineReranker : public RerankProvider {
 public:
  explicit EmbeddingCosineReranker(int dimension = 256) : embedder_(dimension) {}

  std::vector<double> score(const std::string& query,
                            std::span<const std::string> candidates) override {
    const std::vector<double> q = embedder_.embed_one(query);
    std::vector<double> out;
    out.reserve(candidates.size());
    for (const std::string& c : candidates)
      out.push_back(cosine_similarity(q, embedder_.embed_one(c)));
    return out;
  }

 private:
  HashedBagEmbedder embedder_;
};

}  // namespace cnpe
