#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <utility>

namespace geomshot {

// Deterministic generator shared by splits, episodes, initialisation and the
// synthetic corpus. The engine is std::mt19937_64, whose output sequence is
// fixed by the standard; bounded integers and shuffles are implemented here
// rather than with <random> distributions so integer streams are bit-identical
// on every platform. Real-valued draws go through libm and may differ by ulps.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  // Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);

  // Uniform real in [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller.
  double normal();

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x);

// Derives an independent stream seed from a base seed and a stream id.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace geomshot
