#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace ndm {

// One RNG per run; the seed fully determines every draw.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double normal(double mean = 0.0, double stddev = 1.0) {
    std::normal_distribution<double> d(mean, stddev);
    return d(engine_);
  }
  double uniform(double lo, double hi) {
    std::uniform_real_distribution<double> d(lo, hi);
    return d(engine_);
  }
  std::size_t below(std::size_t n) {
    std::uniform_int_distribution<std::size_t> d(0, n - 1);
    return d(engine_);
  }

  std::vector<double> normal_vec(std::size_t n, double stddev = 1.0) {
    std::vector<double> out(n);
    for (double& v : out) v = normal(0.0, stddev);
    return out;
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace ndm
