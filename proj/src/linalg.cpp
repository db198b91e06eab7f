#include "msp/linalg.hpp"

#include <cmath>

namespace msp {

double spectral_norm(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  if ((m.array() == 0.0).all()) return 0.0;

  const Matrix gram = m.transpose() * m;
  const Eigen::Index n = gram.rows();

  Vector v = Vector::Ones(n) / std::sqrt(static_cast<double>(n));
  double lambda = 0.0;
  std::uint64_t restarts = 0;
  constexpr int kMaxIter = 10000;
  constexpr double kRelTol = 1e-12;

  for (int iter = 0; iter < kMaxIter; ++iter) {
    Vector w = gram * v;
    const double wn = w.norm();
    if (wn <= 1e-300) {
      // Start vector landed in the null space of MᵀM; restart from a fixed
      // pseudorandom direction so the result stays deterministic.
      Rng rng(0x9e3779b97f4a7c15ull + restarts++);
      for (Eigen::Index i = 0; i < n; ++i) v[i] = rng.uniform01() - 0.5;
      v.normalize();
      continue;
    }
    const double next = v.dot(w);  // Rayleigh quotient, v is unit-norm
    v = w / wn;
    if (iter > 0 && std::abs(next - lambda) <= kRelTol * std::max(std::abs(next), 1e-300)) {
      lambda = next;
      break;
    }
    lambda = next;
  }
  return std::sqrt(std::max(lambda, 0.0));
}

}  // namespace msp
