#pragma once
// Multigraph representation: a shared node set carrying one shift operator
// per edge class. Operators are dense N×N matrices; the diffusion convention
// is fixed project-wide as z = Sx aggregating FROM column (source) TO row
// (destination).

#include "msp/linalg.hpp"

#include <string>
#include <tuple>
#include <vector>

namespace msp {

enum class OperatorKind { adjacency, laplacian, custom };
enum class Normalization { none, spectral };

struct ShiftOperator {
  Matrix matrix;
  OperatorKind kind = OperatorKind::custom;
  bool spectrally_normalized = false;
};

struct Multigraph {
  int n_nodes = 0;
  std::vector<ShiftOperator> operators;  // length m >= 1, order is permanent

  int num_classes() const { return static_cast<int>(operators.size()); }

  // Throws if any operator has the wrong shape or the structure is empty.
  void validate() const;
};

// Bijection on {0..N-1}. perm[a] is the original node placed at new index a,
// so applying the permutation gives x̂(a) = x(perm[a]) and
// Ŝ(a,b) = S(perm[a], perm[b]), matching x̂ = Pᵀx and Ŝ = PᵀSP.
struct Permutation {
  std::vector<int> perm;

  static Permutation identity(int n);
  int size() const { return static_cast<int>(perm.size()); }

  Permutation inverse() const;
  // Composition as an action: (this then next) applied once equals applying
  // *this first and next second.
  Permutation then(const Permutation& next) const;
  // The matrix P with x̂ = Pᵀ x.
  Matrix matrix() const;
};

using EdgeTriple = std::tuple<int, int, double>;  // (src, dst, weight)

/// Builds one shift operator from an edge list. adjacency accumulates
/// M(dst, src) += w; laplacian builds D - W from the symmetrized W + Wᵀ.
ShiftOperator build_shift_operator(int n_nodes, const std::vector<EdgeTriple>& edges,
                                   OperatorKind kind);

/// Divides by the largest singular value (exact unit spectral norm) unless
/// the matrix is zero, which is returned unchanged.
ShiftOperator spectral_normalize(const ShiftOperator& op);

/// ‖AB − BA‖₂.
double commutator_norm(const ShiftOperator& a, const ShiftOperator& b);

// Edge-list text format: line 1 is "<N> <m>", then one edge per line as
// "<class> <src> <dst> <weight>" with 0-based ids. '#' lines and blank lines
// are ignored. Parse errors name the offending line.
Multigraph load_multigraph(const std::string& path, Normalization normalization);
Multigraph parse_multigraph(const std::string& text, Normalization normalization);

// Canonical serialization: edges sorted by (class, src, dst), weights printed
// with "%.17g" so save/load round-trips are byte-identical.
std::string serialize_multigraph(const Multigraph& mg);
void save_multigraph(const Multigraph& mg, const std::string& path);

/// Consistent relabeling of the multigraph and a node signal (N×F).
std::pair<Multigraph, Matrix> permute(const Multigraph& mg, const Matrix& signal,
                                      const Permutation& p);

}  // namespace msp
