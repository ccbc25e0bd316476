#pragma once

#include "geoevolver/core.hpp"

#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace geoevolver {

/// L2-normalized text embedding. The all-zero vector is reserved for empty text.
struct EmbeddingVector {
  std::vector<double> values;

  size_t dimension() const { return values.size(); }

  double norm() const {
    double acc = 0.0;
    for (double v : values) acc += v * v;
    return std::sqrt(acc);
  }

  bool is_zero() const {
    for (double v : values) {
      if (v != 0.0) return false;
    }
    return true;
  }

  bool operator==(const EmbeddingVector& other) const { return values == other.values; }
};

inline EmbeddingVector zero_vector(size_t dimension) {
  return EmbeddingVector{std::vector<double>(dimension, 0.0)};
}

/// Inner product with index-ascending accumulation so results are bit-stable
/// and exactly symmetric.
inline double similarity(const EmbeddingVector& a, const EmbeddingVector& b) {
  if (a.dimension() != b.dimension()) {
    throw Error("similarity: dimension mismatch (" + std::to_string(a.dimension()) + " vs " +
                std::to_string(b.dimension()) + ")");
  }
  double acc = 0.0;
  for (size_t i = 0; i < a.values.size(); ++i) acc += a.values[i] * b.values[i];
  return acc;
}

class TextEncoder {
 public:
  virtual ~TextEncoder() = default;
  virtual EmbeddingVector encode(const std::string& text) const = 0;
  virtual size_t dimension() const = 0;
};

namespace detail {

inline uint64_t fnv1a64(std::string_view token) {
  uint64_t hash = 14695981039346656037ull;
  for (unsigned char c : token) {
    hash ^= c;
    hash *= 1099511628211ull;
  }
  return hash;
}

/// Lowercase alphanumeric runs; whitespace and punctuation are separators, so
/// whitespace-run variants tokenize identically.
inline std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> tokens;
  std::string current;
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      current.push_back(static_cast<char>(std::tolower(c)));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

}  // namespace detail

/// Deterministic offline encoder: feature-hashed word unigrams + bigrams,
/// L2-normalized. Same input always yields the same vector.
class HashedEncoder : public TextEncoder {
 public:
  explicit HashedEncoder(size_t dimension = 256) : dimension_(dimension) {
    if (dimension_ < 8) throw Error("encoder dimension must be >= 8");
  }

  size_t dimension() const override { return dimension_; }

  EmbeddingVector encode(const std::string& text) const override {
    const auto tokens = detail::tokenize(text);
    if (tokens.empty()) return zero_vector(dimension_);

    std::vector<double> counts(dimension_, 0.0);
    auto bump = [&](std::string_view token) {
      counts[detail::fnv1a64(token) % dimension_] += 1.0;
    };
    for (const auto& t : tokens) bump(t);
    for (size_t i = 0; i + 1 < tokens.size(); ++i) bump(tokens[i] + " " + tokens[i + 1]);

    double norm = 0.0;
    for (double v : counts) norm += v * v;
    norm = std::sqrt(norm);
    for (double& v : counts) v /= norm;
    return EmbeddingVector{std::move(counts)};
  }

 private:
  size_t dimension_;
};

inline EmbeddingVector renormalize(EmbeddingVector v) {
  const double n = v.norm();
  if (n == 0.0) return v;
  for (double& x : v.values) x /= n;
  return v;
}

}  // namespace geoevolver
