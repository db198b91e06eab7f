#pragma once
// Joint block diagonalization of a symmetric shift-operator family and the
// Fourier analysis built on it. The decomposition comes from the commutant
// method: sample a generic symmetric matrix commuting with every operator,
// split by its eigenvalue clusters, and read the blocks off the grouped
// eigenvectors.

#include "msp/filters.hpp"
#include "msp/multigraph.hpp"

#include <vector>

namespace msp {

struct JointBlockDecomposition {
  Matrix basis;                              // U, orthonormal N×N
  std::vector<int> partition;                // p_1..p_ℓ, Σ p_j = N
  std::vector<int> block_offsets;            // column offset of block j in U
  std::vector<std::vector<Matrix>> blocks;   // blocks[i][j] = Σ_j^{(i)}
  std::vector<double> reconstruction_error;  // per operator, spectral norm

  int num_blocks() const { return static_cast<int>(partition.size()); }
  // Columns of U spanning block j.
  Eigen::Block<const Matrix> basis_block(int j) const {
    return basis.block(0, block_offsets[j], basis.rows(), partition[j]);
  }
};

struct JbdOptions {
  // Eigenvalue clustering gap; nonpositive means 1e-6 times the spectral
  // radius of the sampled commutant element.
  double cluster_tol = -1.0;
  bool symmetrize = false;  // accept non-symmetric inputs as (S+Sᵀ)/2
  std::uint64_t seed = 20240915;
  double reconstruction_tol = 1e-8;
};

JointBlockDecomposition joint_block_diagonalize(const Multigraph& mg, const JbdOptions& opts = {});

/// Dimension of the symmetric commutant {C = Cᵀ : CS_i = S_iC for all i}.
/// 1 means only multiples of the identity (trivial decomposition).
int symmetric_commutant_dimension(const Multigraph& mg, bool symmetrize = false);

struct FourierComponents {
  std::vector<Vector> components;  // component j has length p_j
};

FourierComponents fourier_transform(const JointBlockDecomposition& jbd, const Vector& x);
Vector inverse_fourier(const JointBlockDecomposition& jbd, const FourierComponents& comps);

/// Per-block matrix polynomial H(Σ_j^{(1)},…,Σ_j^{(m)}).
std::vector<Matrix> filter_spectral_response(const MultigraphFilter& h,
                                             const JointBlockDecomposition& jbd);

/// Filters x in node space, transforms, and returns
/// max_j ‖ŷ(j) − H(Σ_j^{(1)},…,Σ_j^{(m)})·x̂(j)‖_∞.
double verify_filtering_spectral_theorem(const MultigraphFilter& h,
                                         const JointBlockDecomposition& jbd, const Multigraph& mg,
                                         const Vector& x);

}  // namespace msp
