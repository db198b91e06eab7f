#pragma once
// Selection sampling and pooling: nested node subsets per layer, the binary
// sampling matrices D_ℓ / E_ℓ, pooled shift operators (principal
// submatrices), multigraph neighborhoods, and signal aggregation.

#include "msp/multigraph.hpp"

#include <cstdint>
#include <vector>

namespace msp {

enum class Aggregator { mean, median, max };
enum class SelectionMethod { degree, random, coverage };

struct PoolConfig {
  int alpha = 0;  // hop reach, >= 0
  Aggregator aggregator = Aggregator::mean;
};

// node_order is a permutation of the original node ids; the first counts[ℓ]
// entries are the nodes selected at layer ℓ. counts[0] = N and the sequence
// is non-increasing, which makes the selection nested by construction.
struct SelectionPlan {
  std::vector<int> node_order;
  std::vector<int> counts;

  int levels() const { return static_cast<int>(counts.size()) - 1; }
  static SelectionPlan full(int n, int layers);
  // Relabeling permutation taking original coordinates to plan coordinates.
  Permutation relabeling() const;
};

/// Orders nodes by the chosen heuristic and wraps the per-layer counts
/// (N_1,…,N_L) into a plan. degree: descending total degree across classes,
/// ties by id. random: seeded shuffle. coverage: greedy farthest-point
/// ordering by hop distance on the union graph.
SelectionPlan select_nodes(const Multigraph& mg, const std::vector<int>& counts,
                           SelectionMethod method, std::uint64_t seed);

/// (D_ℓ, E_ℓ) for level ℓ in [1, L]: N_ℓ×N_{ℓ−1} and N_ℓ×N binary matrices
/// with ones on the main diagonal, in plan-relabeled coordinates.
std::pair<Matrix, Matrix> sampling_matrices(const SelectionPlan& plan, int level);

/// Per-class shift operators at level ℓ: the leading N_ℓ×N_ℓ principal
/// submatrices of the plan-relabeled operators.
std::vector<Matrix> pooled_operators(const SelectionPlan& plan, const Multigraph& mg, int level);

/// Nodes j selected at ℓ−1 with [E_ℓ S_g^k E_{ℓ−1}ᵀ]_{ij} ≠ 0 for some
/// k ≤ alpha (entries below 1e-12 in magnitude count as zero). Coordinates
/// are plan-relabeled; alpha = 0 gives {i}.
std::vector<int> neighborhood(const SelectionPlan& plan, const Multigraph& mg, int level, int node,
                              int klass, int alpha);

/// Union of the per-class neighborhoods.
std::vector<int> multigraph_neighborhood(const SelectionPlan& plan, const Multigraph& mg,
                                         int level, int node, int alpha);

/// Row i of the result aggregates the rows of x listed in neighborhoods[i],
/// feature by feature.
Matrix pool_signal(const Matrix& x, const std::vector<std::vector<int>>& neighborhoods,
                   Aggregator aggregator);

}  // namespace msp
