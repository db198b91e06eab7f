#pragma once
// Shared dense linear-algebra helpers and a fully specified RNG. The RNG
// avoids std::uniform_real_distribution and friends because their output is
// implementation-defined; every draw here is derived from raw mt19937_64
// words so seeded runs are reproducible across compilers.

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <vector>

namespace msp {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Largest singular value, computed by power iteration on MᵀM.
/// Deterministic: starts from the normalized all-ones vector, relative
/// tolerance 1e-12, capped at 10000 iterations. If the iterate collapses
/// into the null space it restarts from a fixed pseudorandom direction.
double spectral_norm(const Matrix& m);

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Uniform on [0, 1) with 53 random bits.
  double uniform01() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Uniform integer on [lo, hi], inclusive. Rejection-free modulo bias is
  // negligible for the ranges used here, but we reject anyway to keep the
  // stream well defined.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    const std::uint64_t limit = std::uint64_t(-1) - (std::uint64_t(-1) % span);
    std::uint64_t draw;
    do {
      draw = engine_();
    } while (draw >= limit);
    return lo + static_cast<std::int64_t>(draw % span);
  }

  // Standard normal via Box-Muller (no cached spare: two uniforms per draw).
  double normal() {
    double u1 = uniform01();
    while (u1 <= 0.0) u1 = uniform01();
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  // Rayleigh with scale sigma: sqrt(-2 sigma^2 ln U).
  double rayleigh(double sigma = 1.0) {
    double u = uniform01();
    while (u <= 0.0) u = uniform01();
    return sigma * std::sqrt(-2.0 * std::log(u));
  }

  template <typename T>
  void shuffle(std::vector<T>& values) {
    for (std::size_t i = values.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(uniform_int(0, static_cast<std::int64_t>(i) - 1));
      std::swap(values[i - 1], values[j]);
    }
  }

  std::vector<int> permutation(int n) {
    std::vector<int> p(n);
    for (int i = 0; i < n; ++i) p[i] = i;
    shuffle(p);
    return p;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace msp
