#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace chemlm {

// All stochastic components draw from a Rng seeded from the run seed plus a
// stream label, so adding a consumer never shifts the draws of another.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}
  Rng(uint64_t seed, const std::string& stream) : engine_(mix(seed, stream)) {}

  std::mt19937_64& engine() { return engine_; }

  uint64_t next_u64() { return engine_(); }

  // uniform in [0, n)
  uint64_t next_below(uint64_t n) {
    return std::uniform_int_distribution<uint64_t>(0, n - 1)(engine_);
  }

  double next_double() {
    return std::uniform_real_distribution<double>(0.0, 1.0)(engine_);
  }

  float next_normal(float stddev) {
    return static_cast<float>(std::normal_distribution<double>(0.0, stddev)(engine_));
  }

  float next_uniform(float lo, float hi) {
    return static_cast<float>(std::uniform_real_distribution<double>(lo, hi)(engine_));
  }

  static uint64_t mix(uint64_t seed, const std::string& stream) {
    uint64_t h = 1469598103934665603ull ^ seed;
    for (unsigned char c : stream) {
      h ^= c;
      h *= 1099511628211ull;
    }
    return h;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace chemlm
