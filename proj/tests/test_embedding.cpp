#include "geoevolver/embedding.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <random>

using namespace geoevolver;

namespace {

EmbeddingVector random_unit(std::mt19937& rng, size_t dim) {
  std::normal_distribution<double> dist;
  EmbeddingVector v;
  v.values.resize(dim);
  for (auto& x : v.values) x = dist(rng);
  return renormalize(std::move(v));
}

}  // namespace

TEST_CASE("empty and whitespace text encode to the zero vector") {
  HashedEncoder enc(256);
  CHECK(enc.encode("").is_zero());
  CHECK(enc.encode("   \t\n ").is_zero());
  CHECK(enc.encode("").dimension() == 256);
}

TEST_CASE("encoding is deterministic and unit-norm") {
  HashedEncoder enc(256);
  const auto a = enc.encode("split window LST");
  const auto b = enc.encode("split window LST");
  CHECK(a == b);
  CHECK(std::abs(a.norm() - 1.0) < 1e-9);
  CHECK(std::abs(enc.encode("x").norm() - 1.0) < 1e-9);
}

TEST_CASE("whitespace runs do not change the encoding") {
  HashedEncoder enc(64);
  CHECK(enc.encode("split  window\t LST") == enc.encode("split window LST"));
  CHECK(enc.encode("  split window LST  ") == enc.encode("split window LST"));
}

TEST_CASE("bigrams distinguish word order") {
  HashedEncoder enc(256);
  CHECK_FALSE(enc.encode("window split") == enc.encode("split window"));
}

TEST_CASE("similarity basics") {
  HashedEncoder enc(128);
  const auto v = enc.encode("aster tir bands");
  CHECK(std::abs(similarity(v, v) - 1.0) < 1e-9);

  EmbeddingVector e1 = zero_vector(4), e2 = zero_vector(4);
  e1.values[0] = 1.0;
  e2.values[1] = 1.0;
  CHECK(similarity(e1, e2) == 0.0);

  CHECK_THROWS_AS(similarity(zero_vector(4), zero_vector(8)), Error);
}

TEST_CASE("similarity is bit-exactly symmetric") {
  std::mt19937 rng(42);
  for (int i = 0; i < 100; ++i) {
    const auto a = random_unit(rng, 64);
    const auto b = random_unit(rng, 64);
    CHECK(similarity(a, b) == similarity(b, a));
  }
}

TEST_CASE("self-similarity of encoded text is 1 within 1e-9") {
  HashedEncoder enc(256);
  for (const std::string text :
       {"turbidity per unit area", "temperature emissivity separation",
        "lake urmia sur_refl_b01 2022", "a"}) {
    const auto v = enc.encode(text);
    CHECK(std::abs(similarity(v, v) - 1.0) < 1e-9);
  }
}

TEST_CASE("dimension floor is enforced") {
  CHECK_THROWS_AS(HashedEncoder(4), Error);
}
