#include "msp/multigraph.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace msp {

void Multigraph::validate() const {
  if (n_nodes < 1) throw std::invalid_argument("multigraph needs at least one node");
  if (operators.empty()) throw std::invalid_argument("multigraph needs at least one edge class");
  for (const auto& op : operators) {
    if (op.matrix.rows() != n_nodes || op.matrix.cols() != n_nodes) {
      throw std::invalid_argument("shift operator shape does not match node count");
    }
  }
}

Permutation Permutation::identity(int n) {
  Permutation p;
  p.perm.resize(n);
  for (int i = 0; i < n; ++i) p.perm[i] = i;
  return p;
}

Permutation Permutation::inverse() const {
  Permutation inv;
  inv.perm.assign(perm.size(), 0);
  for (std::size_t a = 0; a < perm.size(); ++a) inv.perm[perm[a]] = static_cast<int>(a);
  return inv;
}

Permutation Permutation::then(const Permutation& next) const {
  if (next.perm.size() != perm.size()) throw std::invalid_argument("permutation size mismatch");
  Permutation out;
  out.perm.resize(perm.size());
  for (std::size_t a = 0; a < perm.size(); ++a) out.perm[a] = perm[next.perm[a]];
  return out;
}

Matrix Permutation::matrix() const {
  const int n = size();
  Matrix p = Matrix::Zero(n, n);
  for (int a = 0; a < n; ++a) p(perm[a], a) = 1.0;
  return p;
}

ShiftOperator build_shift_operator(int n_nodes, const std::vector<EdgeTriple>& edges,
                                   OperatorKind kind) {
  if (n_nodes < 1) throw std::invalid_argument("node count must be positive");
  Matrix w = Matrix::Zero(n_nodes, n_nodes);
  for (const auto& [src, dst, weight] : edges) {
    if (src < 0 || src >= n_nodes || dst < 0 || dst >= n_nodes) {
      throw std::out_of_range("edge endpoint outside [0, N)");
    }
    if (!std::isfinite(weight)) throw std::invalid_argument("edge weight must be finite");
    w(dst, src) += weight;
  }

  ShiftOperator op;
  op.kind = kind;
  switch (kind) {
    case OperatorKind::adjacency:
    case OperatorKind::custom:
      op.matrix = std::move(w);
      break;
    case OperatorKind::laplacian: {
      const Matrix ws = w + w.transpose();
      op.matrix = Matrix(ws.rowwise().sum().asDiagonal()) - ws;
      break;
    }
  }
  return op;
}

ShiftOperator spectral_normalize(const ShiftOperator& op) {
  ShiftOperator out = op;
  const double sigma = spectral_norm(op.matrix);
  if (sigma > 0.0) out.matrix /= sigma;
  out.spectrally_normalized = true;
  return out;
}

double commutator_norm(const ShiftOperator& a, const ShiftOperator& b) {
  if (a.matrix.rows() != b.matrix.rows() || a.matrix.cols() != b.matrix.cols()) {
    throw std::invalid_argument("commutator requires operators of identical shape");
  }
  return spectral_norm(a.matrix * b.matrix - b.matrix * a.matrix);
}

namespace {

[[noreturn]] void parse_fail(int line_no, const std::string& why) {
  throw std::runtime_error("multigraph parse error at line " + std::to_string(line_no) + ": " + why);
}

}  // namespace

Multigraph parse_multigraph(const std::string& text, Normalization normalization) {
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  int n = 0, m = 0;
  bool have_header = false;
  std::vector<Matrix> mats;

  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;

    std::istringstream fields(line);
    if (!have_header) {
      if (!(fields >> n >> m)) parse_fail(line_no, "expected header \"<N> <m>\"");
      std::string extra;
      if (fields >> extra) parse_fail(line_no, "unexpected trailing token in header");
      if (n < 1) parse_fail(line_no, "node count must be >= 1");
      if (m < 1) parse_fail(line_no, "class count must be >= 1");
      mats.assign(m, Matrix::Zero(n, n));
      have_header = true;
      continue;
    }

    int klass = 0, src = 0, dst = 0;
    double weight = 0.0;
    if (!(fields >> klass >> src >> dst >> weight)) {
      parse_fail(line_no, "expected \"<class> <src> <dst> <weight>\"");
    }
    std::string extra;
    if (fields >> extra) parse_fail(line_no, "unexpected trailing token");
    if (klass < 0 || klass >= m) parse_fail(line_no, "class id outside [0, m)");
    if (src < 0 || src >= n) parse_fail(line_no, "source id outside [0, N)");
    if (dst < 0 || dst >= n) parse_fail(line_no, "destination id outside [0, N)");
    if (!std::isfinite(weight)) parse_fail(line_no, "weight is not finite");
    mats[klass](dst, src) += weight;
  }
  if (!have_header) parse_fail(line_no, "missing header");

  Multigraph mg;
  mg.n_nodes = n;
  mg.operators.reserve(m);
  for (auto& mat : mats) {
    ShiftOperator op;
    op.kind = OperatorKind::adjacency;
    op.matrix = std::move(mat);
    if (normalization == Normalization::spectral) op = spectral_normalize(op);
    mg.operators.push_back(std::move(op));
  }
  mg.validate();
  return mg;
}

Multigraph load_multigraph(const std::string& path, Normalization normalization) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open multigraph file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_multigraph(buf.str(), normalization);
}

std::string serialize_multigraph(const Multigraph& mg) {
  mg.validate();
  std::ostringstream out;
  out << mg.n_nodes << " " << mg.num_classes() << "\n";
  char num[64];
  for (int g = 0; g < mg.num_classes(); ++g) {
    const Matrix& s = mg.operators[g].matrix;
    for (int src = 0; src < mg.n_nodes; ++src) {
      for (int dst = 0; dst < mg.n_nodes; ++dst) {
        const double w = s(dst, src);
        if (w == 0.0) continue;
        std::snprintf(num, sizeof num, "%.17g", w);
        out << g << " " << src << " " << dst << " " << num << "\n";
      }
    }
  }
  return out.str();
}

void save_multigraph(const Multigraph& mg, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open file for writing: " + path);
  out << serialize_multigraph(mg);
}

std::pair<Multigraph, Matrix> permute(const Multigraph& mg, const Matrix& signal,
                                      const Permutation& p) {
  if (p.size() != mg.n_nodes) throw std::invalid_argument("permutation length != node count");
  if (signal.rows() != mg.n_nodes) throw std::invalid_argument("signal length != node count");

  Multigraph out;
  out.n_nodes = mg.n_nodes;
  out.operators.reserve(mg.operators.size());
  for (const auto& op : mg.operators) {
    ShiftOperator rop = op;
    Matrix m(mg.n_nodes, mg.n_nodes);
    for (int a = 0; a < mg.n_nodes; ++a) {
      for (int b = 0; b < mg.n_nodes; ++b) m(a, b) = op.matrix(p.perm[a], p.perm[b]);
    }
    rop.matrix = std::move(m);
    out.operators.push_back(std::move(rop));
  }

  Matrix x(signal.rows(), signal.cols());
  for (int a = 0; a < mg.n_nodes; ++a) x.row(a) = signal.row(p.perm[a]);
  return {std::move(out), std::move(x)};
}

}  // namespace msp
