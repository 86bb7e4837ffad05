/* Copyright 2026 The STAR-GCN Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef STARGCN_RNG_H_
#define STARGCN_RNG_H_

#include <cmath>
#include <cstdint>
#include <numbers>

namespace stargcn {

// Counter-based generator: draw k is a pure function of (seed, k), so two
// streams with the same seed and draw sequence agree on every platform.
class RngStream {
 public:
  explicit RngStream(uint64_t seed = 0, uint64_t counter = 0)
      : seed_(seed), counter_(counter) {}

  uint64_t seed() const { return seed_; }
  uint64_t counter() const { return counter_; }

  static uint64_t Mix(uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  uint64_t Next() {
    return Mix(Mix(seed_) + (++counter_) * 0x9e3779b97f4a7c15ULL);
  }

  // Uniform in [0, 1) with 53 random bits.
  double Uniform() { return static_cast<double>(Next() >> 11) * 0x1.0p-53; }

  // Unbiased integer in [0, n).
  uint64_t Below(uint64_t n) {
    if (n <= 1) return 0;
    uint64_t threshold = (0 - n) % n;
    for (;;) {
      unsigned __int128 m = static_cast<unsigned __int128>(Next()) * n;
      if (static_cast<uint64_t>(m) >= threshold) {
        return static_cast<uint64_t>(m >> 64);
      }
    }
  }

  bool Bernoulli(double p) { return Uniform() < p; }

  // Box-Muller; consumes exactly two draws.
  double Normal(double mean = 0.0, double stddev = 1.0) {
    double u1 = 1.0 - Uniform();
    double u2 = Uniform();
    return mean + stddev * std::sqrt(-2.0 * std::log(u1)) *
                      std::cos(2.0 * std::numbers::pi * u2);
  }

  // Independent child stream; does not advance this stream.
  RngStream Fork(uint64_t tag) const {
    return RngStream(Mix(seed_ ^ Mix(tag + 0x632be59bd9b4e019ULL)));
  }

  template <typename It>
  void Shuffle(It first, It last) {
    auto n = static_cast<uint64_t>(last - first);
    for (uint64_t i = n; i > 1; --i) {
      uint64_t j = Below(i);
      std::swap(first[i - 1], first[j]);
    }
  }

  bool operator==(const RngStream&) const = default;

 private:
  uint64_t seed_;
  uint64_t counter_;
};

}  // namespace stargcn

#endif  // STARGCN_RNG_H_
