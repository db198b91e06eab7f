#pragma once
// Multigraph filters: scalar (SISO) and matrix-coefficient (MIMO) polynomial
// filters over the words of a diffusion tree. Evaluation never materializes
// word operators; each word's diffused signal is one matvec away from its
// suffix parent in the tree.

#include "msp/diffusion_tree.hpp"

#include <memory>
#include <string>

namespace msp {

struct MultigraphFilter {
  std::shared_ptr<const DiffusionTree> tree;
  std::vector<double> coeffs;  // aligned with tree->words; absent word = 0

  explicit MultigraphFilter(std::shared_ptr<const DiffusionTree> t)
      : tree(std::move(t)), coeffs(tree->size(), 0.0) {}

  void set(const Word& w, double value);
  double coeff(const Word& w) const;
};

struct MimoFilter {
  std::shared_ptr<const DiffusionTree> tree;
  int f_in = 1;
  int f_out = 1;
  // Aligned with tree->words; a 0x0 matrix means the word is absent.
  std::vector<Matrix> coeffs;

  MimoFilter(std::shared_ptr<const DiffusionTree> t, int f, int g)
      : tree(std::move(t)), f_in(f), f_out(g), coeffs(tree->size()) {}

  void set(const Word& w, const Matrix& value);
  bool has(int word_index) const { return coeffs[word_index].size() != 0; }
};

/// z = Σ_w h_w · S_{w1}···S_{wk} · x via repeated matrix-vector products.
Vector apply_filter(const MultigraphFilter& h, const Multigraph& mg, const Vector& x);

/// Y = Σ_w (word-diffused X) · F_w, an N×G matrix.
Matrix apply_mimo(const MimoFilter& h, const Multigraph& mg, const Matrix& x);

/// Batched MIMO convolution. X packs `batch` samples side by side as
/// N×(batch·f_in); the result is N×(batch·f_out). If `diffused` is non-null
/// it receives the per-word diffused batch (indexed like tree->words) for
/// reuse in reverse-mode gradients.
Matrix apply_mimo_batched(const MimoFilter& h, const std::vector<Matrix>& operators,
                          const Matrix& x, int batch, std::vector<Matrix>* diffused);

/// Dense N×N matrix of the filter polynomial.
Matrix filter_matrix(const MultigraphFilter& h, const Multigraph& mg);

struct ComposeResult {
  MultigraphFilter filter;
  double dropped_mass = 0.0;  // Σ |c1·c2| over concatenations beyond the cap
};

/// Polynomial product with word concatenation, h1's words left of h2's.
/// The result lives on a fresh unpruned tree of depth `depth_cap`.
ComposeResult compose_filters(const MultigraphFilter& h1, const MultigraphFilter& h2,
                              int depth_cap);

/// True iff ‖Q·H − H·Q‖₂ ≤ tol with Q the word operator of q.
bool is_shift_invariant(const MultigraphFilter& h, const Word& q, const Multigraph& mg,
                        double tol);

// JSON round-trip: {"depth": K, "m": m, "coeffs": {"I": c, "0-1": c, ...}};
// the MIMO form stores row-major nested arrays plus f_in/f_out.
std::string filter_to_json(const MultigraphFilter& h);
MultigraphFilter filter_from_json(const std::string& text);
std::string mimo_filter_to_json(const MimoFilter& h);
MimoFilter mimo_filter_from_json(const std::string& text);

}  // namespace msp
