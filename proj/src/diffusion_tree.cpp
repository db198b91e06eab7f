#include "msp/diffusion_tree.hpp"

#include <algorithm>
#include <iostream>
#include <sstream>
#include <stdexcept>

namespace msp {

int Word::distinct_classes() const {
  std::vector<int> seen(indices);
  std::sort(seen.begin(), seen.end());
  seen.erase(std::unique(seen.begin(), seen.end()), seen.end());
  return static_cast<int>(seen.size());
}

std::string Word::label() const {
  if (indices.empty()) return "I";
  std::ostringstream out;
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (i) out << '-';
    out << indices[i];
  }
  return out.str();
}

Word Word::from_label(const std::string& label) {
  Word w;
  if (label == "I") return w;
  std::string token;
  std::istringstream in(label);
  while (std::getline(in, token, '-')) {
    if (token.empty()) throw std::invalid_argument("bad word label: " + label);
    w.indices.push_back(std::stoi(token));
  }
  return w;
}

void PrunedPairSet::insert(int j, int i) {
  if (pairs.count({i, j})) {
    throw std::invalid_argument("pruned pair set already holds the opposite orientation");
  }
  pairs.insert({j, i});
}

int DiffusionTree::index_of(const Word& w) const {
  const auto it = index_.find(w.indices);
  return it == index_.end() ? -1 : it->second;
}

std::vector<int> DiffusionTree::level_counts() const {
  std::vector<int> counts(depth + 1, 0);
  for (const auto& w : words) ++counts[w.length()];
  return counts;
}

// Breadth-first enumeration: level k is produced by prepending each operator
// index to every level-(k-1) word whose head does not complete a pruned
// adjacent pair. This yields exactly the words free of pruned pairs, in
// canonical (length, lexicographic) order.
DiffusionTree build_tree(int m, int depth, double epsilon, PrunedPairSet pruned) {
  if (m < 1) throw std::invalid_argument("tree needs at least one operator class");
  if (depth < 0) throw std::invalid_argument("tree depth must be >= 0");

  DiffusionTree tree;
  tree.m = m;
  tree.depth = depth;
  tree.epsilon = epsilon;
  tree.pruned = std::move(pruned);

  tree.words.push_back(Word{});
  tree.parent.push_back(-1);
  tree.prepend_op.push_back(-1);

  std::size_t level_begin = 0, level_end = 1;
  for (int k = 1; k <= depth; ++k) {
    const std::size_t next_begin = tree.words.size();
    for (int a = 0; a < m; ++a) {
      for (std::size_t p = level_begin; p < level_end; ++p) {
        const Word& base = tree.words[p];
        if (!base.is_identity() && tree.pruned.contains(a, base.indices.front())) continue;
        Word child;
        child.indices.reserve(base.indices.size() + 1);
        child.indices.push_back(a);
        child.indices.insert(child.indices.end(), base.indices.begin(), base.indices.end());
        tree.words.push_back(std::move(child));
        tree.parent.push_back(static_cast<int>(p));
        tree.prepend_op.push_back(a);
      }
    }
    level_begin = next_begin;
    level_end = tree.words.size();
  }

  // Children are emitted with the prepended index ascending over parents in
  // lexicographic order, so each level is already canonically sorted.
  for (std::size_t idx = 0; idx < tree.words.size(); ++idx) {
    tree.index_[tree.words[idx].indices] = static_cast<int>(idx);
  }
  return tree;
}

DiffusionTree make_unpruned_tree(int m, int depth) {
  return build_tree(m, depth, std::numeric_limits<double>::infinity(), PrunedPairSet{});
}

DiffusionTree generate_pruned_tree(const Multigraph& mg, double epsilon, int depth) {
  mg.validate();
  if (depth < 0) throw std::invalid_argument("tree depth must be >= 0");
  if (epsilon < 0.0) throw std::invalid_argument("epsilon must be nonnegative");

  PrunedPairSet pruned;
  const int m = mg.num_classes();
  if (std::isfinite(epsilon)) {
    bool all_normalized = true;
    for (const auto& op : mg.operators) {
      if (!op.spectrally_normalized && spectral_norm(op.matrix) > 1.0 + 1e-12) {
        all_normalized = false;
      }
    }
    if (!all_normalized) {
      std::cerr << "warning: pruning with epsilon=" << epsilon
                << " assumes spectrally normalized operators\n";
    }
    for (int i = 0; i < m; ++i) {
      for (int j = i + 1; j < m; ++j) {
        if (commutator_norm(mg.operators[i], mg.operators[j]) <= epsilon) {
          pruned.insert(j, i);  // keep S_i S_j, discard S_j S_i
        }
      }
    }
  }
  return build_tree(m, depth, epsilon, std::move(pruned));
}

Matrix word_operator(const Word& w, const Multigraph& mg) {
  const int n = mg.n_nodes;
  Matrix out = Matrix::Identity(n, n);
  for (const int idx : w.indices) {
    if (idx < 0 || idx >= mg.num_classes()) throw std::out_of_range("word index outside [0, m)");
    out = out * mg.operators[idx].matrix;
  }
  return out;
}

double verify_pruning_bound(const Multigraph& mg, const Word& left, std::pair<int, int> pair,
                            const Word& right) {
  const Matrix l = word_operator(left, mg);
  const Matrix r = word_operator(right, mg);
  const Matrix& si = mg.operators.at(pair.first).matrix;
  const Matrix& sj = mg.operators.at(pair.second).matrix;
  return spectral_norm(l * (si * sj - sj * si) * r);
}

std::pair<std::vector<Word>, std::vector<Word>> split_homogeneous(const DiffusionTree& tree) {
  std::vector<Word> homogeneous, heterogeneous;
  for (const auto& w : tree.words) {
    (w.distinct_classes() <= 1 ? homogeneous : heterogeneous).push_back(w);
  }
  return {std::move(homogeneous), std::move(heterogeneous)};
}

}  // namespace msp
