#include "msp/filters.hpp"

#include <json.hpp>

#include <cmath>
#include <stdexcept>

namespace msp {

void MultigraphFilter::set(const Word& w, double value) {
  const int idx = tree->index_of(w);
  if (idx < 0) throw std::invalid_argument("word \"" + w.label() + "\" is not in the tree");
  coeffs[idx] = value;
}

double MultigraphFilter::coeff(const Word& w) const {
  const int idx = tree->index_of(w);
  return idx < 0 ? 0.0 : coeffs[idx];
}

void MimoFilter::set(const Word& w, const Matrix& value) {
  const int idx = tree->index_of(w);
  if (idx < 0) throw std::invalid_argument("word \"" + w.label() + "\" is not in the tree");
  if (value.rows() != f_in || value.cols() != f_out) {
    throw std::invalid_argument("coefficient matrix must be f_in x f_out");
  }
  coeffs[idx] = value;
}

namespace {

std::vector<Matrix> operator_matrices(const Multigraph& mg) {
  std::vector<Matrix> ops;
  ops.reserve(mg.operators.size());
  for (const auto& op : mg.operators) ops.push_back(op.matrix);
  return ops;
}

}  // namespace

Matrix apply_mimo_batched(const MimoFilter& h, const std::vector<Matrix>& operators,
                          const Matrix& x, int batch, std::vector<Matrix>* diffused_out) {
  const DiffusionTree& tree = *h.tree;
  if (static_cast<int>(operators.size()) != tree.m) {
    throw std::invalid_argument("operator count does not match tree");
  }
  if (x.cols() != static_cast<Eigen::Index>(batch) * h.f_in) {
    throw std::invalid_argument("batch feature width mismatch: expected batch*f_in columns");
  }
  const Eigen::Index n = x.rows();

  std::vector<Matrix> local;
  std::vector<Matrix>& diffused = diffused_out ? *diffused_out : local;
  diffused.assign(tree.size(), Matrix());
  diffused[0] = x;

  Matrix y = Matrix::Zero(n, static_cast<Eigen::Index>(batch) * h.f_out);
  if (h.has(0)) {
    for (int b = 0; b < batch; ++b) {
      y.middleCols(static_cast<Eigen::Index>(b) * h.f_out, h.f_out) +=
          x.middleCols(static_cast<Eigen::Index>(b) * h.f_in, h.f_in) * h.coeffs[0];
    }
  }
  for (int w = 1; w < tree.size(); ++w) {
    diffused[w] = operators[tree.prepend_op[w]] * diffused[tree.parent[w]];
    if (!h.has(w)) continue;
    for (int b = 0; b < batch; ++b) {
      y.middleCols(static_cast<Eigen::Index>(b) * h.f_out, h.f_out) +=
          diffused[w].middleCols(static_cast<Eigen::Index>(b) * h.f_in, h.f_in) * h.coeffs[w];
    }
  }
  return y;
}

Matrix apply_mimo(const MimoFilter& h, const Multigraph& mg, const Matrix& x) {
  mg.validate();
  if (x.rows() != mg.n_nodes) throw std::invalid_argument("signal row count != node count");
  if (x.cols() != h.f_in) throw std::invalid_argument("signal feature count != filter f_in");
  return apply_mimo_batched(h, operator_matrices(mg), x, 1, nullptr);
}

Vector apply_filter(const MultigraphFilter& h, const Multigraph& mg, const Vector& x) {
  // Same accumulation path as the MIMO form with 1x1 coefficients, so the
  // two agree bit for bit.
  MimoFilter mimo(h.tree, 1, 1);
  for (int w = 0; w < h.tree->size(); ++w) {
    if (h.coeffs[w] != 0.0) mimo.coeffs[w] = Matrix::Constant(1, 1, h.coeffs[w]);
  }
  return apply_mimo(mimo, mg, x);
}

Matrix filter_matrix(const MultigraphFilter& h, const Multigraph& mg) {
  const int n = mg.n_nodes;
  Matrix out = Matrix::Zero(n, n);
  for (int w = 0; w < h.tree->size(); ++w) {
    if (h.coeffs[w] == 0.0) continue;
    out += h.coeffs[w] * word_operator(h.tree->words[w], mg);
  }
  return out;
}

ComposeResult compose_filters(const MultigraphFilter& h1, const MultigraphFilter& h2,
                              int depth_cap) {
  if (h1.tree->m != h2.tree->m) throw std::invalid_argument("filters disagree on class count");
  auto tree = std::make_shared<DiffusionTree>(make_unpruned_tree(h1.tree->m, depth_cap));
  ComposeResult result{MultigraphFilter(tree), 0.0};
  for (int w1 = 0; w1 < h1.tree->size(); ++w1) {
    if (h1.coeffs[w1] == 0.0) continue;
    for (int w2 = 0; w2 < h2.tree->size(); ++w2) {
      if (h2.coeffs[w2] == 0.0) continue;
      const double c = h1.coeffs[w1] * h2.coeffs[w2];
      Word cat;
      cat.indices = h1.tree->words[w1].indices;
      cat.indices.insert(cat.indices.end(), h2.tree->words[w2].indices.begin(),
                         h2.tree->words[w2].indices.end());
      if (cat.length() > depth_cap) {
        result.dropped_mass += std::abs(c);
        continue;
      }
      const int idx = tree->index_of(cat);
      result.filter.coeffs[idx] += c;
    }
  }
  return result;
}

bool is_shift_invariant(const MultigraphFilter& h, const Word& q, const Multigraph& mg,
                        double tol) {
  const Matrix hm = filter_matrix(h, mg);
  const Matrix qm = word_operator(q, mg);
  return spectral_norm(qm * hm - hm * qm) <= tol;
}

std::string filter_to_json(const MultigraphFilter& h) {
  nlohmann::json j;
  j["depth"] = h.tree->depth;
  j["m"] = h.tree->m;
  nlohmann::json coeffs = nlohmann::json::object();
  for (int w = 0; w < h.tree->size(); ++w) {
    if (h.coeffs[w] != 0.0) coeffs[h.tree->words[w].label()] = h.coeffs[w];
  }
  j["coeffs"] = std::move(coeffs);
  return j.dump(2);
}

MultigraphFilter filter_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  auto tree = std::make_shared<DiffusionTree>(
      make_unpruned_tree(j.at("m").get<int>(), j.at("depth").get<int>()));
  MultigraphFilter h(tree);
  for (const auto& [label, value] : j.at("coeffs").items()) {
    h.set(Word::from_label(label), value.get<double>());
  }
  return h;
}

std::string mimo_filter_to_json(const MimoFilter& h) {
  nlohmann::json j;
  j["depth"] = h.tree->depth;
  j["m"] = h.tree->m;
  j["f_in"] = h.f_in;
  j["f_out"] = h.f_out;
  nlohmann::json coeffs = nlohmann::json::object();
  for (int w = 0; w < h.tree->size(); ++w) {
    if (!h.has(w)) continue;
    nlohmann::json rows = nlohmann::json::array();
    for (int r = 0; r < h.f_in; ++r) {
      nlohmann::json row = nlohmann::json::array();
      for (int c = 0; c < h.f_out; ++c) row.push_back(h.coeffs[w](r, c));
      rows.push_back(std::move(row));
    }
    coeffs[h.tree->words[w].label()] = std::move(rows);
  }
  j["coeffs"] = std::move(coeffs);
  return j.dump(2);
}

MimoFilter mimo_filter_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  auto tree = std::make_shared<DiffusionTree>(
      make_unpruned_tree(j.at("m").get<int>(), j.at("depth").get<int>()));
  MimoFilter h(tree, j.at("f_in").get<int>(), j.at("f_out").get<int>());
  for (const auto& [label, rows] : j.at("coeffs").items()) {
    Matrix coeff(h.f_in, h.f_out);
    for (int r = 0; r < h.f_in; ++r) {
      for (int c = 0; c < h.f_out; ++c) coeff(r, c) = rows.at(r).at(c).get<double>();
    }
    h.set(Word::from_label(label), coeff);
  }
  return h;
}

}  // namespace msp
