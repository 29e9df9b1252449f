#pragma once

// Counter-based random streams.
//
// A Stream is keyed by (base seed, trial, step). Draw number d of that
// stream is splitmix64(key + (d + 1) * gamma), so the value of any single
// draw depends only on its four coordinates. Evaluating extra observables
// or changing thread counts never shifts a draw.

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>

namespace horowalk {

inline constexpr std::uint64_t splitmix64(std::uint64_t z) {
  z ^= z >> 30;
  z *= 0xbf58476d1ce4e5b9ULL;
  z ^= z >> 27;
  z *= 0x94d049bb133111ebULL;
  z ^= z >> 31;
  return z;
}

inline constexpr std::uint64_t kGoldenGamma = 0x9e3779b97f4a7c15ULL;

class Stream {
 public:
  using result_type = std::uint64_t;

  Stream(std::uint64_t seed, std::uint64_t trial, std::uint64_t step)
      : key_(derive(seed, trial, step)) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() {
    return std::numeric_limits<result_type>::max();
  }

  result_type operator()() { return splitmix64(key_ + (++draws_) * kGoldenGamma); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }
  /// Uniform on (0, 1].
  double uniform_pos() { return 1.0 - uniform(); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal by Box-Muller; consumes two draws.
  double normal() {
    const double r = std::sqrt(-2.0 * std::log(uniform_pos()));
    return r * std::cos(2.0 * std::numbers::pi * uniform());
  }

  std::uint64_t draws() const { return draws_; }

 private:
  static constexpr std::uint64_t derive(std::uint64_t seed, std::uint64_t trial,
                                        std::uint64_t step) {
    std::uint64_t h = splitmix64(seed + kGoldenGamma);
    h = splitmix64(h ^ (trial + 0x632be59bd9b4e019ULL));
    h = splitmix64(h ^ (step + 0x85157af5ULL));
    return h;
  }

  std::uint64_t key_;
  std::uint64_t draws_ = 0;
};

}  // namespace horowalk
