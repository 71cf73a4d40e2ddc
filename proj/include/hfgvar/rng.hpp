#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>

namespace hfgvar {

// Seeded Mersenne Twister with the handful of variates the samplers need.
// Every draw constructs a fresh distribution object so the generator state
// alone determines the stream; that is what checkpoints store.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 1) : engine_(seed) {}

  // Independent stream derived from a base seed and a stream index.
  static Rng stream(std::uint64_t seed, std::uint64_t index) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                      0x9e3779b9u};
    Rng r;
    r.engine_.seed(seq);
    return r;
  }

  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(engine_); }

  // Open interval (0, 1); safe to take logs of.
  double uniform_pos() {
    double u = 0.0;
    while (u <= 0.0) u = uniform();
    return u;
  }

  double normal() { return std::normal_distribution<double>(0.0, 1.0)(engine_); }
  double normal(double mean, double sd) { return mean + sd * normal(); }

  // Gamma with shape/rate parameterization.
  double gamma(double shape, double rate) {
    return std::gamma_distribution<double>(shape, 1.0 / rate)(engine_);
  }

  // Inverse gamma: 1 / Gamma(shape, rate = scale).
  double inv_gamma(double shape, double scale) { return 1.0 / gamma(shape, scale); }

  double beta(double a, double b) {
    const double x = gamma(a, 1.0);
    const double y = gamma(b, 1.0);
    return x / (x + y);
  }

  std::mt19937_64& engine() { return engine_; }

  std::string save() const {
    std::ostringstream os;
    os << engine_;
    return os.str();
  }

  void restore(const std::string& state) {
    std::istringstream is(state);
    is >> engine_;
  }

  friend bool operator==(const Rng& a, const Rng& b) { return a.engine_ == b.engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace hfgvar
