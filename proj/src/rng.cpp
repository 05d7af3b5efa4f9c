//
// Copyright 2026 The Topoguard Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//

#include "topoguard/rng.hpp"

#include <cmath>

namespace topoguard {

namespace {

constexpr uint32_t kPhiloxM0 = 0xD2511F53u;
constexpr uint32_t kPhiloxM1 = 0xCD9E8D57u;
constexpr uint32_t kPhiloxW0 = 0x9E3779B9u;  // golden ratio
constexpr uint32_t kPhiloxW1 = 0xBB67AE85u;  // sqrt(3) - 1

inline void mulhilo(uint32_t a, uint32_t b, uint32_t* hi, uint32_t* lo) {
  uint64_t p = static_cast<uint64_t>(a) * b;
  *hi = static_cast<uint32_t>(p >> 32);
  *lo = static_cast<uint32_t>(p);
}

inline void philox_round(std::array<uint32_t, 4>& ctr, uint32_t k0,
                         uint32_t k1) {
  uint32_t hi0, lo0, hi1, lo1;
  mulhilo(kPhiloxM0, ctr[0], &hi0, &lo0);
  mulhilo(kPhiloxM1, ctr[2], &hi1, &lo1);
  ctr = {hi1 ^ ctr[1] ^ k0, lo1, hi0 ^ ctr[3] ^ k1, lo0};
}

// Two uniforms per 128-bit block: each uses 53 bits of a 64-bit half.
// The +0.5 keeps the result strictly inside (0, 1), which Box-Muller needs.
inline double to_unit_interval(uint64_t x) {
  return (static_cast<double>(x >> 11) + 0.5) * 0x1.0p-53;
}

}  // namespace

std::array<uint32_t, 4> philox4x32(uint64_t seed, uint64_t stream,
                                   uint64_t counter) {
  std::array<uint32_t, 4> ctr = {
      static_cast<uint32_t>(counter), static_cast<uint32_t>(counter >> 32),
      static_cast<uint32_t>(stream), static_cast<uint32_t>(stream >> 32)};
  uint32_t k0 = static_cast<uint32_t>(seed);
  uint32_t k1 = static_cast<uint32_t>(seed >> 32);
  for (int round = 0; round < 10; ++round) {
    philox_round(ctr, k0, k1);
    k0 += kPhiloxW0;
    k1 += kPhiloxW1;
  }
  return ctr;
}

double CounterRng::uniform_at(uint64_t k) const {
  return to_unit_interval(u64_at(k));
}

uint64_t CounterRng::u64_at(uint64_t k) const {
  std::array<uint32_t, 4> block = philox4x32(seed_, stream_, k >> 1);
  int half = static_cast<int>(k & 1) * 2;
  return (static_cast<uint64_t>(block[half]) << 32) | block[half + 1];
}

double CounterRng::gaussian_at(uint64_t k) const {
  // Box-Muller over the two uniforms of one block; index parity picks the
  // cosine or sine leg so every k maps to exactly one deterministic draw.
  std::array<uint32_t, 4> block = philox4x32(seed_, stream_, k >> 1);
  double u1 = to_unit_interval((static_cast<uint64_t>(block[0]) << 32) |
                               block[1]);
  double u2 = to_unit_interval((static_cast<uint64_t>(block[2]) << 32) |
                               block[3]);
  double r = std::sqrt(-2.0 * std::log(u1));
  double theta = 2.0 * M_PI * u2;
  return (k & 1) ? r * std::sin(theta) : r * std::cos(theta);
}

uint64_t CounterRng::next_below(uint64_t n) {
  if (n == 0) return 0;
  // Rejection sampling on the top of the range to stay unbiased.
  uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return x % n;
}

}  // namespace topoguard
