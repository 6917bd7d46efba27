#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace wadenet {

// One step of SplitMix64. Used for seeding and for deriving substreams.
std::uint64_t splitmix64(std::uint64_t& state);

// xoshiro256** with SplitMix64 seeding. The generator and every derived
// distribution below are implemented from raw bits so that a given seed
// yields the same draw sequence on every platform; the distribution
// templates in <random> make no such guarantee.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();

  // Uniform in [0, 1), 53-bit resolution.
  double uniform01();

  double uniform(double lo, double hi);

  // Standard normal via Box-Muller (one value per call).
  double normal();

  // Unbiased uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);

  // Independent substream keyed by `tag`. Does not advance this generator.
  Rng derive(std::uint64_t tag) const;

  // Fisher-Yates shuffle.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  std::array<std::uint64_t, 4> state() const { return state_; }
  void set_state(const std::array<std::uint64_t, 4>& words) { state_ = words; }

 private:
  std::array<std::uint64_t, 4> state_{};
};

}  // namespace wadenet
