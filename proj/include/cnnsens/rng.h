// Copyright 2026 The cnnsens Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef CNNSENS_RNG_H_
#define CNNSENS_RNG_H_

#include <cmath>
#include <cstdint>
#include <numbers>

namespace cnnsens {

/// SplitMix64 finalizer (Steele, Lea, Flood 2014). Bijective 64-bit avalanche.
constexpr std::uint64_t fmix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline constexpr std::uint64_t kGolden64 = 0x9E3779B97F4A7C15ULL;

/// Derives a child key from (base, index):
///   mix(base, index) = fmix64(base ^ fmix64(index + golden))
constexpr std::uint64_t mix(std::uint64_t base, std::uint64_t index) {
  return fmix64(base ^ fmix64(index + kGolden64));
}

/// Base seed for a family of Monte Carlo trials. Trial t draws from the
/// stream keyed by mix(base, t).
struct Seed {
  std::uint64_t base = 0;

  std::uint64_t trial_key(std::uint64_t trial) const { return mix(base, trial); }
};

/// Counter-based stream: draw n returns fmix64(key + (n + 1) * golden), i.e.
/// the SplitMix64 sequence started at `key`. Every value depends only on
/// (key, n), so outputs are identical on every platform and thread schedule.
class NoiseStream {
 public:
  explicit NoiseStream(std::uint64_t key) : key_(key) {}

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

  std::uint64_t next_u64() {
    ++counter_;
    return fmix64(key_ + counter_ * kGolden64);
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Standard normal via the cosine branch of Box-Muller; two draws per value.
  double normal() {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  bool bernoulli(double p) { return uniform() < p; }

  /// Uniform integer on [0, n) by rejection (no modulo bias).
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = n == 0 ? 0 : UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v;
    do {
      v = next_u64();
    } while (v >= limit);
    return v % n;
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace cnnsens

#endif  // CNNSENS_RNG_H_
