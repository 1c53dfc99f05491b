#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace anosups {

using Seed = std::uint64_t;

// SplitMix64 step. Used for seeding and for seed derivation.
std::uint64_t splitmix64(std::uint64_t& state);

// 64-bit FNV-1a hash of a string; stable across platforms.
std::uint64_t fnv1a64(std::string_view text);

// Derives an independent child seed from a parent seed and a stage label.
// derive_seed(s, "train") != derive_seed(s, "calibrate") with overwhelming
// probability, and the mapping is identical on every platform.
Seed derive_seed(Seed parent, std::string_view label);
Seed derive_seed(Seed parent, std::uint64_t index);

// xoshiro256** generator. All sampling helpers below are implemented
// in-repo (no <random> distributions) so draws are bit-identical across
// standard libraries.
class Rng {
 public:
  explicit Rng(Seed seed);

  std::uint64_t next_u64();
  // Uniform double in [0, 1) with 53 bits of precision.
  double uniform();
  double uniform(double lo, double hi);
  // Unbiased integer in [0, bound), bound > 0 (Lemire's method).
  std::uint64_t below(std::uint64_t bound);
  // Integer in [lo, hi], inclusive.
  std::int64_t range(std::int64_t lo, std::int64_t hi);
  // Standard normal via Box-Muller (cached second value).
  double normal();
  double normal(double mean, double stddev);

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }
  template <typename T>
  void shuffle(std::vector<T>& items) {
    shuffle(std::span<T>(items));
  }

 private:
  std::uint64_t s_[4];
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace anosups
