#include "msp/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <queue>
#include <stdexcept>

namespace msp {

namespace {

constexpr double kZeroTol = 1e-12;

void check_counts(int n, const std::vector<int>& counts) {
  int prev = n;
  for (const int c : counts) {
    if (c < 1 || c > n) throw std::invalid_argument("selection count outside [1, N]");
    if (c > prev) throw std::invalid_argument("selection counts must be non-increasing");
    prev = c;
  }
}

// Hop distances on the undirected support of the union graph.
std::vector<int> hop_distances(const std::vector<std::vector<int>>& adj, int source) {
  std::vector<int> dist(adj.size(), -1);
  std::queue<int> frontier;
  dist[source] = 0;
  frontier.push(source);
  while (!frontier.empty()) {
    const int u = frontier.front();
    frontier.pop();
    for (const int v : adj[u]) {
      if (dist[v] < 0) {
        dist[v] = dist[u] + 1;
        frontier.push(v);
      }
    }
  }
  return dist;
}

}  // namespace

SelectionPlan SelectionPlan::full(int n, int layers) {
  SelectionPlan plan;
  plan.node_order.resize(n);
  std::iota(plan.node_order.begin(), plan.node_order.end(), 0);
  plan.counts.assign(layers + 1, n);
  return plan;
}

Permutation SelectionPlan::relabeling() const {
  Permutation p;
  p.perm = node_order;
  return p;
}

SelectionPlan select_nodes(const Multigraph& mg, const std::vector<int>& counts,
                           SelectionMethod method, std::uint64_t seed) {
  mg.validate();
  const int n = mg.n_nodes;
  check_counts(n, counts);

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);

  switch (method) {
    case SelectionMethod::degree: {
      Vector degree = Vector::Zero(n);
      for (const auto& op : mg.operators) {
        degree += op.matrix.cwiseAbs().rowwise().sum();
        degree += op.matrix.cwiseAbs().colwise().sum().transpose();
      }
      std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        if (degree(a) != degree(b)) return degree(a) > degree(b);
        return a < b;
      });
      break;
    }
    case SelectionMethod::random: {
      Rng rng(seed);
      rng.shuffle(order);
      break;
    }
    case SelectionMethod::coverage: {
      std::vector<std::vector<int>> adj(n);
      for (int u = 0; u < n; ++u) {
        for (int v = 0; v < n; ++v) {
          if (u == v) continue;
          for (const auto& op : mg.operators) {
            if (std::abs(op.matrix(u, v)) > kZeroTol || std::abs(op.matrix(v, u)) > kZeroTol) {
              adj[u].push_back(v);
              break;
            }
          }
        }
      }
      // Greedy farthest-point traversal from node 0; unreachable nodes are
      // preferred (treated as distance N+1) so coverage spans components.
      std::vector<int> picked;
      std::vector<int> min_dist(n, n + 1);
      std::vector<bool> used(n, false);
      int current = 0;
      for (int step = 0; step < n; ++step) {
        picked.push_back(current);
        used[current] = true;
        const auto dist = hop_distances(adj, current);
        for (int v = 0; v < n; ++v) {
          const int d = dist[v] < 0 ? n + 1 : dist[v];
          min_dist[v] = std::min(min_dist[v], d);
        }
        int best = -1;
        for (int v = 0; v < n; ++v) {
          if (used[v]) continue;
          if (best < 0 || min_dist[v] > min_dist[best]) best = v;
        }
        if (best < 0) break;
        current = best;
      }
      order = std::move(picked);
      break;
    }
  }

  SelectionPlan plan;
  plan.node_order = std::move(order);
  plan.counts.reserve(counts.size() + 1);
  plan.counts.push_back(n);
  plan.counts.insert(plan.counts.end(), counts.begin(), counts.end());
  return plan;
}

std::pair<Matrix, Matrix> sampling_matrices(const SelectionPlan& plan, int level) {
  if (level < 1 || level > plan.levels()) throw std::out_of_range("level outside [1, L]");
  const int n = plan.counts[0];
  const int n_prev = plan.counts[level - 1];
  const int n_cur = plan.counts[level];
  Matrix d = Matrix::Zero(n_cur, n_prev);
  Matrix e = Matrix::Zero(n_cur, n);
  for (int i = 0; i < n_cur; ++i) {
    d(i, i) = 1.0;
    e(i, i) = 1.0;
  }
  return {std::move(d), std::move(e)};
}

std::vector<Matrix> pooled_operators(const SelectionPlan& plan, const Multigraph& mg, int level) {
  mg.validate();
  if (level < 0 || level > plan.levels()) throw std::out_of_range("level outside [0, L]");
  if (static_cast<int>(plan.node_order.size()) != mg.n_nodes) {
    throw std::invalid_argument("plan node count != multigraph node count");
  }
  const int n_cur = plan.counts[level];
  std::vector<Matrix> ops;
  ops.reserve(mg.operators.size());
  for (const auto& op : mg.operators) {
    Matrix sub(n_cur, n_cur);
    for (int a = 0; a < n_cur; ++a) {
      for (int b = 0; b < n_cur; ++b) {
        sub(a, b) = op.matrix(plan.node_order[a], plan.node_order[b]);
      }
    }
    ops.push_back(std::move(sub));
  }
  return ops;
}

std::vector<int> neighborhood(const SelectionPlan& plan, const Multigraph& mg, int level, int node,
                              int klass, int alpha) {
  mg.validate();
  if (level < 1 || level > plan.levels()) throw std::out_of_range("level outside [1, L]");
  if (klass < 0 || klass >= mg.num_classes()) throw std::out_of_range("class outside [0, m)");
  if (alpha < 0) throw std::invalid_argument("alpha must be >= 0");
  const int n_cur = plan.counts[level];
  const int n_prev = plan.counts[level - 1];
  if (node < 0 || node >= n_cur) throw std::out_of_range("node outside the selected set");

  // Relabeled full operator for this class.
  const int n = plan.counts[0];
  Matrix s(n, n);
  for (int a = 0; a < n; ++a) {
    for (int b = 0; b < n; ++b) {
      s(a, b) = mg.operators[klass].matrix(plan.node_order[a], plan.node_order[b]);
    }
  }

  std::vector<bool> member(n_prev, false);
  Matrix power = Matrix::Identity(n, n);
  for (int k = 0; k <= alpha; ++k) {
    if (k > 0) power = s * power;
    for (int j = 0; j < n_prev; ++j) {
      if (std::abs(power(node, j)) > kZeroTol) member[j] = true;
    }
  }
  std::vector<int> out;
  for (int j = 0; j < n_prev; ++j) {
    if (member[j]) out.push_back(j);
  }
  return out;
}

std::vector<int> multigraph_neighborhood(const SelectionPlan& plan, const Multigraph& mg,
                                         int level, int node, int alpha) {
  std::vector<bool> member;
  std::size_t n_prev = 0;
  for (int g = 0; g < mg.num_classes(); ++g) {
    const auto nbhd = neighborhood(plan, mg, level, node, g, alpha);
    if (member.empty()) {
      n_prev = static_cast<std::size_t>(plan.counts[level - 1]);
      member.assign(n_prev, false);
    }
    for (const int j : nbhd) member[j] = true;
  }
  std::vector<int> out;
  for (std::size_t j = 0; j < n_prev; ++j) {
    if (member[j]) out.push_back(static_cast<int>(j));
  }
  return out;
}

Matrix pool_signal(const Matrix& x, const std::vector<std::vector<int>>& neighborhoods,
                   Aggregator aggregator) {
  const int out_rows = static_cast<int>(neighborhoods.size());
  Matrix out(out_rows, x.cols());
  std::vector<double> values;
  for (int i = 0; i < out_rows; ++i) {
    const auto& nbhd = neighborhoods[i];
    if (nbhd.empty()) throw std::invalid_argument("empty pooling neighborhood");
    for (Eigen::Index f = 0; f < x.cols(); ++f) {
      switch (aggregator) {
        case Aggregator::mean: {
          double sum = 0.0;
          for (const int j : nbhd) sum += x(j, f);
          out(i, f) = sum / static_cast<double>(nbhd.size());
          break;
        }
        case Aggregator::max: {
          double best = x(nbhd.front(), f);
          for (const int j : nbhd) best = std::max(best, x(j, f));
          out(i, f) = best;
          break;
        }
        case Aggregator::median: {
          values.clear();
          for (const int j : nbhd) values.push_back(x(j, f));
          std::sort(values.begin(), values.end());
          const std::size_t mid = values.size() / 2;
          out(i, f) = values.size() % 2 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
          break;
        }
      }
    }
  }
  return out;
}

}  // namespace msp
