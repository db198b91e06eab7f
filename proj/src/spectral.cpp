#include "msp/spectral.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace msp {

namespace {

bool is_symmetric(const Matrix& s) { return (s - s.transpose()).cwiseAbs().maxCoeff() <= 1e-10; }

std::vector<Matrix> symmetric_operators(const Multigraph& mg, bool symmetrize) {
  std::vector<Matrix> ops;
  ops.reserve(mg.operators.size());
  for (const auto& op : mg.operators) {
    if (is_symmetric(op.matrix)) {
      ops.push_back(op.matrix);
    } else if (symmetrize) {
      ops.push_back(0.5 * (op.matrix + op.matrix.transpose()));
    } else {
      throw std::invalid_argument(
          "joint block diagonalization requires symmetric operators "
          "(pass symmetrize to use (S+Sᵀ)/2)");
    }
  }
  return ops;
}

// Basis of the symmetric solution space of {CS_i = S_iC}. Unknowns are the
// upper-triangular entries of C; each operator contributes N² linear
// constraints. The nullspace is read off an SVD of the stacked system.
std::vector<Matrix> symmetric_commutant_basis(const std::vector<Matrix>& ops) {
  const int n = static_cast<int>(ops.front().rows());
  const int unknowns = n * (n + 1) / 2;
  const int rows_per_op = n * n;
  Matrix a = Matrix::Zero(static_cast<Eigen::Index>(ops.size()) * rows_per_op, unknowns);

  int col = 0;
  for (int p = 0; p < n; ++p) {
    for (int q = p; q < n; ++q, ++col) {
      Matrix basis_el = Matrix::Zero(n, n);
      basis_el(p, q) = 1.0;
      basis_el(q, p) = 1.0;
      for (std::size_t i = 0; i < ops.size(); ++i) {
        const Matrix comm = basis_el * ops[i] - ops[i] * basis_el;
        a.block(static_cast<Eigen::Index>(i) * rows_per_op, col, rows_per_op, 1) =
            Eigen::Map<const Vector>(comm.data(), rows_per_op);
      }
    }
  }

  Eigen::JacobiSVD<Matrix> svd(a, Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  const double tol = 1e-12 * std::max(1.0, sv.size() > 0 ? sv(0) : 0.0);
  std::vector<Matrix> basis;
  for (Eigen::Index k = sv.size() - 1; k >= 0; --k) {
    if (sv(k) > tol) break;
    Matrix c = Matrix::Zero(n, n);
    int idx = 0;
    for (int p = 0; p < n; ++p) {
      for (int q = p; q < n; ++q, ++idx) {
        c(p, q) = svd.matrixV()(idx, k);
        c(q, p) = svd.matrixV()(idx, k);
      }
    }
    basis.push_back(std::move(c));
  }
  return basis;
}

struct Clustering {
  std::vector<int> partition;
  std::vector<int> offsets;
};

Clustering cluster_eigenvalues(const Vector& eigs, double gap) {
  Clustering out;
  int start = 0;
  for (int i = 1; i <= eigs.size(); ++i) {
    if (i == eigs.size() || eigs(i) - eigs(i - 1) > gap) {
      out.offsets.push_back(start);
      out.partition.push_back(i - start);
      start = i;
    }
  }
  return out;
}

}  // namespace

int symmetric_commutant_dimension(const Multigraph& mg, bool symmetrize) {
  mg.validate();
  return static_cast<int>(symmetric_commutant_basis(symmetric_operators(mg, symmetrize)).size());
}

JointBlockDecomposition joint_block_diagonalize(const Multigraph& mg, const JbdOptions& opts) {
  mg.validate();
  const int n = mg.n_nodes;
  const auto ops = symmetric_operators(mg, opts.symmetrize);

  const auto basis = symmetric_commutant_basis(ops);
  // The identity always commutes, so the basis is never empty; guard anyway.
  Matrix c = Matrix::Identity(n, n);
  if (!basis.empty()) {
    Rng rng(opts.seed);
    c.setZero();
    for (const auto& b : basis) c += rng.uniform(-1.0, 1.0) * b;
    const double fn = c.norm();
    if (fn > 1e-300) c /= fn;
  }

  Eigen::SelfAdjointEigenSolver<Matrix> eig(c);
  if (eig.info() != Eigen::Success) throw std::runtime_error("commutant eigensolve failed");
  const Vector eigenvalues = eig.eigenvalues();
  const double radius = eigenvalues.cwiseAbs().maxCoeff();
  double gap = opts.cluster_tol > 0.0 ? opts.cluster_tol : 1e-6 * std::max(radius, 1e-300);

  // Coarsen the clustering if leakage ever breaks reconstruction; the final
  // single-block fallback is always exact.
  for (int attempt = 0; attempt < 4; ++attempt) {
    const Clustering clusters =
        attempt < 3 ? cluster_eigenvalues(eigenvalues, gap)
                    : Clustering{{n}, {0}};

    JointBlockDecomposition jbd;
    jbd.basis = eig.eigenvectors();
    jbd.partition = clusters.partition;
    jbd.block_offsets = clusters.offsets;

    // Deterministic block order: descending size, then ascending trace of the
    // first operator's block.
    const int l = jbd.num_blocks();
    std::vector<double> traces(l);
    for (int j = 0; j < l; ++j) {
      traces[j] = (jbd.basis_block(j).transpose() * ops[0] * jbd.basis_block(j)).trace();
    }
    std::vector<int> order(l);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
      if (jbd.partition[a] != jbd.partition[b]) return jbd.partition[a] > jbd.partition[b];
      return traces[a] < traces[b];
    });

    Matrix u(n, n);
    std::vector<int> partition(l), offsets(l);
    int off = 0;
    for (int k = 0; k < l; ++k) {
      const int j = order[k];
      u.middleCols(off, jbd.partition[j]) =
          jbd.basis.middleCols(jbd.block_offsets[j], jbd.partition[j]);
      partition[k] = jbd.partition[j];
      offsets[k] = off;
      off += jbd.partition[j];
    }
    jbd.basis = std::move(u);
    jbd.partition = std::move(partition);
    jbd.block_offsets = std::move(offsets);

    jbd.blocks.assign(ops.size(), {});
    for (std::size_t i = 0; i < ops.size(); ++i) {
      jbd.blocks[i].reserve(l);
      for (int j = 0; j < l; ++j) {
        jbd.blocks[i].push_back(jbd.basis_block(j).transpose() * ops[i] * jbd.basis_block(j));
      }
    }

    jbd.reconstruction_error.assign(ops.size(), 0.0);
    bool ok = true;
    for (std::size_t i = 0; i < ops.size(); ++i) {
      Matrix rebuilt = Matrix::Zero(n, n);
      for (int j = 0; j < l; ++j) {
        rebuilt += jbd.basis_block(j) * jbd.blocks[i][j] * jbd.basis_block(j).transpose();
      }
      jbd.reconstruction_error[i] = spectral_norm(ops[i] - rebuilt);
      if (jbd.reconstruction_error[i] > opts.reconstruction_tol) ok = false;
    }
    if (ok || attempt == 3) return jbd;
    gap *= 100.0;
  }
  throw std::logic_error("unreachable");
}

FourierComponents fourier_transform(const JointBlockDecomposition& jbd, const Vector& x) {
  if (x.size() != jbd.basis.rows()) throw std::invalid_argument("signal length mismatch");
  FourierComponents out;
  out.components.reserve(jbd.num_blocks());
  for (int j = 0; j < jbd.num_blocks(); ++j) {
    out.components.push_back(jbd.basis_block(j).transpose() * x);
  }
  return out;
}

Vector inverse_fourier(const JointBlockDecomposition& jbd, const FourierComponents& comps) {
  if (static_cast<int>(comps.components.size()) != jbd.num_blocks()) {
    throw std::invalid_argument("component count mismatch");
  }
  Vector x = Vector::Zero(jbd.basis.rows());
  for (int j = 0; j < jbd.num_blocks(); ++j) {
    x += jbd.basis_block(j) * comps.components[j];
  }
  return x;
}

std::vector<Matrix> filter_spectral_response(const MultigraphFilter& h,
                                             const JointBlockDecomposition& jbd) {
  if (static_cast<int>(jbd.blocks.size()) != h.tree->m) {
    throw std::invalid_argument("decomposition operator count != filter class count");
  }
  std::vector<Matrix> responses;
  responses.reserve(jbd.num_blocks());
  for (int j = 0; j < jbd.num_blocks(); ++j) {
    const int p = jbd.partition[j];
    Matrix r = Matrix::Zero(p, p);
    for (int w = 0; w < h.tree->size(); ++w) {
      if (h.coeffs[w] == 0.0) continue;
      Matrix term = Matrix::Identity(p, p);
      for (const int idx : h.tree->words[w].indices) term = term * jbd.blocks[idx][j];
      r += h.coeffs[w] * term;
    }
    responses.push_back(std::move(r));
  }
  return responses;
}

double verify_filtering_spectral_theorem(const MultigraphFilter& h,
                                         const JointBlockDecomposition& jbd, const Multigraph& mg,
                                         const Vector& x) {
  const Vector y = apply_filter(h, mg, x);
  const FourierComponents xhat = fourier_transform(jbd, x);
  const FourierComponents yhat = fourier_transform(jbd, y);
  const auto responses = filter_spectral_response(h, jbd);
  double dev = 0.0;
  for (int j = 0; j < jbd.num_blocks(); ++j) {
    const Vector lhs = yhat.components[j];
    const Vector rhs = responses[j] * xhat.components[j];
    dev = std::max(dev, (lhs - rhs).cwiseAbs().maxCoeff());
  }
  return dev;
}

}  // namespace msp
