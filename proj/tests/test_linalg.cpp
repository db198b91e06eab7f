#include "msp/linalg.hpp"

#include "oracle_helpers.hpp"

#include <doctest.h>

using namespace msp;

TEST_CASE("spectral norm of zero and identity matrices") {
  CHECK(spectral_norm(Matrix::Zero(3, 3)) == 0.0);
  CHECK(spectral_norm(Matrix::Identity(4, 4)) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(spectral_norm(2.0 * Matrix::Identity(2, 2)) == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("spectral norm matches the SVD oracle on random matrices") {
  Rng rng(123);
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 2 + trial % 7;
    const Matrix m = oracle::random_matrix(rng, n, n, 3.0);
    CHECK(spectral_norm(m) == doctest::Approx(oracle::svd_norm(m)).epsilon(1e-9));
  }
}

TEST_CASE("spectral norm survives an all-ones start in the null space") {
  // MᵀM annihilates the all-ones direction here; the restart path must
  // still find sigma_max.
  Matrix m(2, 2);
  m << 1, -1, 0, 0;
  CHECK(spectral_norm(m) == doctest::Approx(oracle::svd_norm(m)).epsilon(1e-9));
}

TEST_CASE("rng streams are reproducible and rayleigh has the right mean") {
  Rng a(99), b(99);
  for (int i = 0; i < 100; ++i) CHECK(a.uniform01() == b.uniform01());

  Rng rng(7);
  double sum = 0.0;
  const int draws = 200000;
  for (int i = 0; i < draws; ++i) sum += rng.rayleigh(1.0);
  const double mean = sum / draws;
  CHECK(mean == doctest::Approx(std::sqrt(M_PI / 2.0)).epsilon(0.01));
}

TEST_CASE("uniform_int covers its range inclusively") {
  Rng rng(5);
  bool saw_lo = false, saw_hi = false;
  for (int i = 0; i < 1000; ++i) {
    const auto v = rng.uniform_int(2, 5);
    CHECK(v >= 2);
    CHECK(v <= 5);
    saw_lo |= v == 2;
    saw_hi |= v == 5;
  }
  CHECK(saw_lo);
  CHECK(saw_hi);
}
