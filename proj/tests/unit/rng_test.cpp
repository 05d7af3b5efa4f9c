#include <doctest.h>

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "topoguard/rng.hpp"

using topoguard::CounterRng;
using topoguard::philox4x32;

namespace {

// Standard normal CDF via the complementary error function.
double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

}  // namespace

TEST_SUITE("rng") {

TEST_CASE("philox matches the published 10-round test vectors") {
  // Vectors from the Random123 known-answer tests for philox4x32-10.
  // Counter words map to (counter lo, counter hi, stream lo, stream hi)
  // and the key to (seed lo, seed hi).
  auto zero = philox4x32(0, 0, 0);
  CHECK(zero[0] == 0x6627e8d5u);
  CHECK(zero[1] == 0xe169c58du);
  CHECK(zero[2] == 0xbc57ac4cu);
  CHECK(zero[3] == 0x9b00dbd8u);

  auto ones = philox4x32(0xffffffffffffffffull, 0xffffffffffffffffull,
                         0xffffffffffffffffull);
  CHECK(ones[0] == 0x408f276du);
  CHECK(ones[1] == 0x41c83b0eu);
  CHECK(ones[2] == 0xa20bc7c6u);
  CHECK(ones[3] == 0x6d5451fdu);

  uint64_t counter = (0x85a308d3ull << 32) | 0x243f6a88ull;
  uint64_t stream = (0x03707344ull << 32) | 0x13198a2eull;
  uint64_t seed = (0x299f31d0ull << 32) | 0xa4093822ull;
  auto pi = philox4x32(seed, stream, counter);
  CHECK(pi[0] == 0xd16cfe09u);
  CHECK(pi[1] == 0x94fdccebu);
  CHECK(pi[2] == 0x5001e420u);
  CHECK(pi[3] == 0x24126ea1u);
}

TEST_CASE("random access agrees with sequential draws") {
  CounterRng seq(42, 7);
  CounterRng random_access(42, 7);
  for (uint64_t k = 0; k < 64; ++k) {
    CAPTURE(k);
    CHECK(seq.next_uniform() == random_access.uniform_at(k));
  }
  CounterRng gseq(42, 7);
  for (uint64_t k = 0; k < 64; ++k) {
    CAPTURE(k);
    CHECK(gseq.next_gaussian() == random_access.gaussian_at(k));
  }
}

TEST_CASE("uniforms stay strictly inside the unit interval") {
  CounterRng rng(1, 0);
  for (int i = 0; i < 10000; ++i) {
    double u = rng.next_uniform();
    CHECK(u > 0.0);
    CHECK(u < 1.0);
  }
}

TEST_CASE("streams are distinct and seeds are reproducible") {
  CounterRng a(123, 0);
  CounterRng b(123, 1);
  CounterRng c(123, 0);
  int differing = 0;
  for (int i = 0; i < 100; ++i) {
    double ua = a.next_uniform();
    double ub = b.next_uniform();
    CHECK(ua == c.next_uniform());
    if (ua != ub) ++differing;
  }
  CHECK(differing == 100);
}

TEST_CASE("seek repositions the sequential cursor") {
  CounterRng rng(9, 9);
  for (int i = 0; i < 10; ++i) rng.next_uniform();
  double at_10 = rng.uniform_at(10);
  CHECK(rng.next_uniform() == at_10);
  rng.seek(3);
  CHECK(rng.position() == 3);
  CHECK(rng.next_uniform() == rng.uniform_at(3));
}

TEST_CASE("gaussian draws pass a Kolmogorov-Smirnov test against the normal") {
  const int n = 100000;
  CounterRng rng(2026, 5);
  std::vector<double> xs(n);
  for (int i = 0; i < n; ++i) xs[i] = rng.next_gaussian();
  std::sort(xs.begin(), xs.end());
  double d = 0.0;
  for (int i = 0; i < n; ++i) {
    double cdf = normal_cdf(xs[i]);
    d = std::max(d, std::abs(cdf - static_cast<double>(i) / n));
    d = std::max(d, std::abs(static_cast<double>(i + 1) / n - cdf));
  }
  // alpha = 0.01 critical value for large n.
  double critical = 1.628 / std::sqrt(static_cast<double>(n));
  CHECK(d < critical);
}

TEST_CASE("gaussian moments match the standard normal to one percent") {
  const int n = 1000000;
  CounterRng rng(7, 3);
  double sum = 0.0, sum2 = 0.0, sum4 = 0.0;
  for (int i = 0; i < n; ++i) {
    double x = rng.next_gaussian();
    sum += x;
    sum2 += x * x;
    sum4 += x * x * x * x;
  }
  CHECK(std::abs(sum / n) < 0.01);
  CHECK(sum2 / n == doctest::Approx(1.0).epsilon(0.01));
  CHECK(sum4 / n == doctest::Approx(3.0).epsilon(0.03));
}

TEST_CASE("uniform moments match the unit interval to one percent") {
  const int n = 1000000;
  CounterRng rng(11, 0);
  double sum = 0.0, sum2 = 0.0;
  for (int i = 0; i < n; ++i) {
    double u = rng.next_uniform();
    sum += u;
    sum2 += u * u;
  }
  CHECK(sum / n == doctest::Approx(0.5).epsilon(0.01));
  CHECK(sum2 / n == doctest::Approx(1.0 / 3.0).epsilon(0.01));
}

TEST_CASE("next_below honors the bound and covers the range") {
  CounterRng rng(3, 1);
  std::vector<int> counts(7, 0);
  for (int i = 0; i < 7000; ++i) {
    uint64_t v = rng.next_below(7);
    REQUIRE(v < 7);
    ++counts[static_cast<int>(v)];
  }
  for (int c : counts) CHECK(c > 800);
  CHECK(rng.next_below(1) == 0);
}

}  // TEST_SUITE
