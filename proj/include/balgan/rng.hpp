#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace balgan {

// Seeded random source. Wraps mt19937_64, whose output sequence is fixed by
// the standard; the distributions are implemented here so sequences are
// identical across standard libraries. No cached state beyond the engine,
// so save()/restore() captures everything.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Box-Muller; one variate per call.
  double normal(double mean = 0.0, double stddev = 1.0);
  // Unbiased integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  std::string save() const;
  void restore(const std::string& state);

  friend bool operator==(const Rng& a, const Rng& b) { return a.engine_ == b.engine_; }

 private:
  std::mt19937_64 engine_;
};

// SplitMix64 finalizer; used to derive independent seeds from (seed, salt).
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt);

}  // namespace balgan
