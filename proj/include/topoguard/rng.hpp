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

#ifndef TOPOGUARD_RNG_HPP_
#define TOPOGUARD_RNG_HPP_

#include <array>
#include <cstdint>

namespace topoguard {

// Philox4x32-10 counter-based generator.
//
// Draws are a pure function of (seed, stream, counter), so noise is
// reproducible and addressable: the same triple always yields the same
// value, regardless of how many draws happened in between. Streams are
// used to give each embedding (or each parallel consumer) its own
// independent sequence under one seed.
std::array<uint32_t, 4> philox4x32(uint64_t seed, uint64_t stream,
                                   uint64_t counter);

class CounterRng {
 public:
  CounterRng(uint64_t seed, uint64_t stream)
      : seed_(seed), stream_(stream), position_(0) {}

  // Random-access draws. Index k addresses the k-th value of the
  // (seed, stream) sequence directly.
  double uniform_at(uint64_t k) const;   // in (0, 1)
  double gaussian_at(uint64_t k) const;  // standard normal
  uint64_t u64_at(uint64_t k) const;

  // Sequential convenience wrappers over the same address space.
  double next_uniform() { return uniform_at(position_++); }
  double next_gaussian() { return gaussian_at(position_++); }
  uint64_t next_u64() { return u64_at(position_++); }
  // Uniform integer in [0, n) without modulo bias.
  uint64_t next_below(uint64_t n);

  uint64_t position() const { return position_; }
  void seek(uint64_t position) { position_ = position; }
  uint64_t seed() const { return seed_; }
  uint64_t stream() const { return stream_; }

 private:
  uint64_t seed_;
  uint64_t stream_;
  uint64_t position_;
};

}  // namespace topoguard

#endif  // TOPOGUARD_RNG_HPP_
