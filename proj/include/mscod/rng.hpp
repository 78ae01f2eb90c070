#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace mscod {

// SplitMix64 finalizer; used to derive independent sub-stream seeds.
std::uint64_t mix64(std::uint64_t x);

// Seed for a named sub-stream: mix64(seed ^ fnv1a(name)) followed by index.
// "data", "train" and "sample" streams are derived this way from the single
// user-facing seed.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream, std::uint64_t index = 0);

// mt19937_64 with distribution transforms written out explicitly so the
// sampled values are identical across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  double uniform();  // [0, 1)
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  std::uint64_t uniform_int(std::uint64_t n);  // [0, n)
  double normal();  // standard normal, polar Box-Muller
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace mscod
