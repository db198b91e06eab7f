#pragma once
// Monomials of the non-commutative filter algebra. A Word is a sequence of
// operator indices; the matrix it denotes is the product in written order,
// S_{w1}·S_{w2}·…·S_{wk} (leftmost applied last to a signal). The tree
// enumerates every word up to a depth cap, optionally pruning one ordering
// of each near-commuting adjacent pair.

#include "msp/multigraph.hpp"

#include <limits>
#include <map>
#include <set>
#include <utility>
#include <vector>

namespace msp {

struct Word {
  std::vector<int> indices;  // empty = identity

  int length() const { return static_cast<int>(indices.size()); }
  bool is_identity() const { return indices.empty(); }
  // Number of distinct operator indices used (0 for the identity).
  int distinct_classes() const;
  // Dash-joined indices, "I" for the identity.
  std::string label() const;
  static Word from_label(const std::string& label);

  friend bool operator==(const Word& a, const Word& b) { return a.indices == b.indices; }
  // Canonical order: by length, then lexicographic.
  friend bool operator<(const Word& a, const Word& b) {
    if (a.indices.size() != b.indices.size()) return a.indices.size() < b.indices.size();
    return a.indices < b.indices;
  }
};

// Ordered pairs (j, i): any word with S_j immediately followed by S_i is
// pruned. Never holds both orientations of a pair.
struct PrunedPairSet {
  std::set<std::pair<int, int>> pairs;

  bool contains(int j, int i) const { return pairs.count({j, i}) > 0; }
  void insert(int j, int i);
};

struct DiffusionTree {
  int m = 0;
  int depth = 0;
  double epsilon = std::numeric_limits<double>::infinity();
  std::vector<Word> words;  // canonical order; identity is words[0]
  PrunedPairSet pruned;

  // Trie wiring for prefix-shared evaluation. parent[w] indexes the word
  // obtained by dropping the first operator index; prepend_op[w] is that
  // first index (-1 for the identity).
  std::vector<int> parent;
  std::vector<int> prepend_op;

  int size() const { return static_cast<int>(words.size()); }
  int index_of(const Word& w) const;  // -1 when absent
  bool contains(const Word& w) const { return index_of(w) >= 0; }
  // Number of words per length 0..depth.
  std::vector<int> level_counts() const;

 private:
  friend DiffusionTree build_tree(int m, int depth, double epsilon, PrunedPairSet pruned);
  std::map<std::vector<int>, int> index_;
};

/// Tree over m generators with an explicit pruned-pair set.
DiffusionTree build_tree(int m, int depth, double epsilon, PrunedPairSet pruned);

/// Unpruned tree over m generators: all Σ m^k words up to the depth cap.
DiffusionTree make_unpruned_tree(int m, int depth);

/// Appendix-style pruned tree: for every unordered pair i<j whose commutator
/// norm is ≤ epsilon, the adjacent ordering (j,i) is pruned and (i,j) kept.
/// epsilon = ∞ disables pruning entirely. Warns on stderr if pruning is
/// requested on operators that are not spectrally normalized.
DiffusionTree generate_pruned_tree(const Multigraph& mg, double epsilon, int depth);

/// Dense matrix of a word: product of shift operators in written order.
Matrix word_operator(const Word& w, const Multigraph& mg);

/// ‖ L · (S_i S_j − S_j S_i) · R ‖₂ with L, R the word operators of
/// left/right. With normalized operators this never exceeds the pair's
/// commutator norm.
double verify_pruning_bound(const Multigraph& mg, const Word& left, std::pair<int, int> pair,
                            const Word& right);

/// Splits tree.words into (homogeneous, heterogeneous): identity and pure
/// powers S_i^k versus class-mixing words.
std::pair<std::vector<Word>, std::vector<Word>> split_homogeneous(const DiffusionTree& tree);

}  // namespace msp
