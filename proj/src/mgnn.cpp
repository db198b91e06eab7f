#include "msp/mgnn.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace msp {

Matrix apply_nonlinearity(Nonlinearity kind, const Matrix& z) {
  switch (kind) {
    case Nonlinearity::relu:
      return z.cwiseMax(0.0);
    case Nonlinearity::sigmoid:
      return (1.0 + (-z.array()).exp()).inverse().matrix();
    case Nonlinearity::tanh_act:
      return z.array().tanh().matrix();
    case Nonlinearity::identity:
      return z;
  }
  throw std::logic_error("unknown nonlinearity");
}

Matrix nonlinearity_derivative(Nonlinearity kind, const Matrix& z) {
  switch (kind) {
    case Nonlinearity::relu:
      return (z.array() > 0.0).cast<double>().matrix();
    case Nonlinearity::sigmoid: {
      const Eigen::ArrayXXd s = (1.0 + (-z.array()).exp()).inverse();
      return (s * (1.0 - s)).matrix();
    }
    case Nonlinearity::tanh_act: {
      const Eigen::ArrayXXd t = z.array().tanh();
      return (1.0 - t * t).matrix();
    }
    case Nonlinearity::identity:
      return Matrix::Ones(z.rows(), z.cols());
  }
  throw std::logic_error("unknown nonlinearity");
}

long MGNNModel::parameter_count() const {
  long count = 0;
  for (const auto& layer : layers) {
    for (int w = 0; w < layer.filter.tree->size(); ++w) {
      if (!layer.filter.has(w)) continue;
      if (!layer.masks.empty() && layer.masks[w].size() != 0) {
        count += static_cast<long>((layer.masks[w].array() != 0.0).count());
      } else {
        count += static_cast<long>(layer.filter.coeffs[w].size());
      }
    }
  }
  for (const auto& affine : readout.layers) {
    count += static_cast<long>(affine.weight.size() + affine.bias.size());
  }
  return count;
}

GradientSet GradientSet::zeros_like(const MGNNModel& model) {
  GradientSet g;
  g.coeff_grads.resize(model.layers.size());
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const auto& filter = model.layers[l].filter;
    g.coeff_grads[l].resize(filter.tree->size());
    for (int w = 0; w < filter.tree->size(); ++w) {
      if (filter.has(w)) g.coeff_grads[l][w] = Matrix::Zero(filter.f_in, filter.f_out);
    }
  }
  g.readout_grads.resize(model.readout.layers.size());
  for (std::size_t k = 0; k < model.readout.layers.size(); ++k) {
    g.readout_grads[k].weight = Matrix::Zero(model.readout.layers[k].weight.rows(),
                                             model.readout.layers[k].weight.cols());
    g.readout_grads[k].bias = Vector::Zero(model.readout.layers[k].bias.size());
  }
  return g;
}

void GradientSet::accumulate(const GradientSet& other, double scale) {
  for (std::size_t l = 0; l < coeff_grads.size(); ++l) {
    for (std::size_t w = 0; w < coeff_grads[l].size(); ++w) {
      if (coeff_grads[l][w].size() != 0) coeff_grads[l][w] += scale * other.coeff_grads[l][w];
    }
  }
  for (std::size_t k = 0; k < readout_grads.size(); ++k) {
    readout_grads[k].weight += scale * other.readout_grads[k].weight;
    readout_grads[k].bias += scale * other.readout_grads[k].bias;
  }
}

namespace {

std::vector<Matrix> relabeled_operator_matrices(const MGNNModel& model, const Multigraph& mg) {
  std::vector<Matrix> ops;
  ops.reserve(mg.operators.size());
  if (!model.plan) {
    for (const auto& op : mg.operators) ops.push_back(op.matrix);
    return ops;
  }
  const auto& order = model.plan->node_order;
  const int n = mg.n_nodes;
  for (const auto& op : mg.operators) {
    Matrix m(n, n);
    for (int a = 0; a < n; ++a) {
      for (int b = 0; b < n; ++b) m(a, b) = op.matrix(order[a], order[b]);
    }
    ops.push_back(std::move(m));
  }
  return ops;
}

Matrix flatten_columns(const Matrix& block) {
  // Column-major vectorization of an N×G sample block.
  Matrix copy = block;
  return Eigen::Map<Matrix>(copy.data(), copy.size(), 1);
}

}  // namespace

Matrix forward(const MGNNModel& model, const Multigraph& mg, const Matrix& x, int batch,
               ForwardTape* tape_out) {
  mg.validate();
  if (model.layers.empty()) throw std::invalid_argument("model has no layers");
  if (x.rows() != mg.n_nodes) throw std::invalid_argument("input row count != node count");
  if (x.cols() != static_cast<Eigen::Index>(batch) * model.input_features) {
    throw std::invalid_argument("input column count != batch * input_features");
  }
  if (model.plan && model.plan->levels() != model.num_layers()) {
    throw std::invalid_argument("selection plan levels != layer count");
  }

  ForwardTape local;
  ForwardTape& tape = tape_out ? *tape_out : local;
  const bool keep = tape_out != nullptr;
  tape.batch = batch;
  tape.layers.assign(model.layers.size(), LayerTape{});
  tape.layer_operators.clear();

  const std::vector<Matrix> base_ops = relabeled_operator_matrices(model, mg);

  Matrix cur = x;
  if (model.plan) {
    for (int a = 0; a < mg.n_nodes; ++a) cur.row(a) = x.row(model.plan->node_order[a]);
  }

  for (int l = 0; l < model.num_layers(); ++l) {
    const LayerSpec& layer = model.layers[l];
    LayerTape& lt = tape.layers[l];
    const int n_prev = model.plan ? model.plan->counts[l] : mg.n_nodes;
    const int n_cur = model.plan ? model.plan->counts[l + 1] : mg.n_nodes;
    if (cur.rows() != n_prev) throw std::invalid_argument("layer input row mismatch");
    if (cur.cols() != static_cast<Eigen::Index>(batch) * layer.filter.f_in) {
      throw std::invalid_argument("layer input feature mismatch");
    }

    Matrix pooled;
    if (model.plan && layer.pooling) {
      std::vector<std::vector<int>> nbhds(n_cur);
      for (int i = 0; i < n_cur; ++i) {
        nbhds[i] = multigraph_neighborhood(*model.plan, mg, l + 1, i, layer.pooling->alpha);
      }
      pooled = pool_signal(cur, nbhds, layer.pooling->aggregator);
      if (keep) {
        lt.prepool = cur;
        lt.neighborhoods = std::move(nbhds);
      }
    } else if (n_cur != n_prev) {
      pooled = cur.topRows(n_cur);
    } else {
      pooled = std::move(cur);
    }

    std::vector<Matrix> ops;
    ops.reserve(base_ops.size());
    for (const auto& op : base_ops) ops.push_back(op.topLeftCorner(n_cur, n_cur));

    Matrix z = apply_mimo_batched(layer.filter, ops, pooled, batch, keep ? &lt.diffused : nullptr);
    Matrix out = apply_nonlinearity(layer.nonlinearity, z);
    if (keep) {
      lt.input = std::move(pooled);
      lt.preactivation = std::move(z);
      lt.output = out;
      tape.layer_operators.push_back(std::move(ops));
    }
    cur = std::move(out);
  }

  // Readout head.
  const ReadoutSpec& readout = model.readout;
  Matrix out;
  if (readout.kind == ReadoutKind::none) {
    out = std::move(cur);
  } else if (readout.kind == ReadoutKind::flatten) {
    const int g_last = model.layers.back().filter.f_out;
    const Eigen::Index in_dim = cur.rows() * g_last;
    Matrix v(in_dim, batch);
    for (int b = 0; b < batch; ++b) {
      v.col(b) = flatten_columns(cur.middleCols(static_cast<Eigen::Index>(b) * g_last, g_last));
    }
    tape.readout.inputs.clear();
    for (std::size_t k = 0; k < readout.layers.size(); ++k) {
      if (readout.layers[k].weight.cols() != v.rows()) {
        throw std::invalid_argument("readout weight shape mismatch");
      }
      if (keep) tape.readout.inputs.push_back(v);
      Matrix z = readout.layers[k].weight * v;
      z.colwise() += readout.layers[k].bias;
      if (k + 1 < readout.layers.size()) {
        v = z.cwiseMax(0.0);
      } else {
        if (keep) tape.readout.final_pre = z;
        v = apply_nonlinearity(readout.final_nonlinearity, z);
      }
    }
    out = std::move(v);
  } else {  // per_node
    Matrix v = std::move(cur);
    int width = model.layers.back().filter.f_out;
    tape.readout.inputs.clear();
    for (std::size_t k = 0; k < readout.layers.size(); ++k) {
      const auto& affine = readout.layers[k];
      if (affine.weight.cols() != width) throw std::invalid_argument("readout shape mismatch");
      if (keep) tape.readout.inputs.push_back(v);
      const int out_width = static_cast<int>(affine.weight.rows());
      Matrix z(v.rows(), static_cast<Eigen::Index>(batch) * out_width);
      for (int b = 0; b < batch; ++b) {
        z.middleCols(static_cast<Eigen::Index>(b) * out_width, out_width) =
            v.middleCols(static_cast<Eigen::Index>(b) * width, width) * affine.weight.transpose();
        z.middleCols(static_cast<Eigen::Index>(b) * out_width, out_width).rowwise() +=
            affine.bias.transpose();
      }
      width = out_width;
      if (k + 1 < readout.layers.size()) {
        v = z.cwiseMax(0.0);
      } else {
        if (keep) tape.readout.final_pre = z;
        v = apply_nonlinearity(readout.final_nonlinearity, z);
      }
    }
    out = std::move(v);
  }
  if (keep) tape.output = out;
  return out;
}

GradientSet backward(const MGNNModel& model, const ForwardTape& tape, const Matrix& upstream) {
  GradientSet grads = GradientSet::zeros_like(model);
  const int batch = tape.batch;
  Matrix d = upstream;

  // Readout reverse pass.
  const ReadoutSpec& readout = model.readout;
  if (readout.kind == ReadoutKind::flatten && !readout.layers.empty()) {
    d = d.cwiseProduct(nonlinearity_derivative(readout.final_nonlinearity, tape.readout.final_pre));
    for (int k = static_cast<int>(readout.layers.size()) - 1; k >= 0; --k) {
      const Matrix& input = tape.readout.inputs[k];
      grads.readout_grads[k].weight = d * input.transpose();
      grads.readout_grads[k].bias = d.rowwise().sum();
      Matrix din = readout.layers[k].weight.transpose() * d;
      if (k > 0) {
        // Hidden activations are ReLU; reuse the stored output sign.
        din = din.cwiseProduct((input.array() > 0.0).cast<double>().matrix());
      }
      d = std::move(din);
    }
    // Unflatten back to N_L×(batch·G).
    const int g_last = model.layers.back().filter.f_out;
    const Eigen::Index n_last = tape.layers.back().output.rows();
    Matrix unflat(n_last, static_cast<Eigen::Index>(batch) * g_last);
    for (int b = 0; b < batch; ++b) {
      unflat.middleCols(static_cast<Eigen::Index>(b) * g_last, g_last) =
          Eigen::Map<const Matrix>(d.col(b).data(), n_last, g_last);
    }
    d = std::move(unflat);
  } else if (readout.kind == ReadoutKind::per_node && !readout.layers.empty()) {
    d = d.cwiseProduct(nonlinearity_derivative(readout.final_nonlinearity, tape.readout.final_pre));
    for (int k = static_cast<int>(readout.layers.size()) - 1; k >= 0; --k) {
      const auto& affine = readout.layers[k];
      const Matrix& input = tape.readout.inputs[k];
      const int in_width = static_cast<int>(affine.weight.cols());
      const int out_width = static_cast<int>(affine.weight.rows());
      Matrix din(input.rows(), static_cast<Eigen::Index>(batch) * in_width);
      for (int b = 0; b < batch; ++b) {
        const auto dblk = d.middleCols(static_cast<Eigen::Index>(b) * out_width, out_width);
        const auto iblk = input.middleCols(static_cast<Eigen::Index>(b) * in_width, in_width);
        grads.readout_grads[k].weight += dblk.transpose() * iblk;
        grads.readout_grads[k].bias += dblk.colwise().sum().transpose();
        din.middleCols(static_cast<Eigen::Index>(b) * in_width, in_width) = dblk * affine.weight;
      }
      if (k > 0) din = din.cwiseProduct((input.array() > 0.0).cast<double>().matrix());
      d = std::move(din);
    }
  }

  // Convolutional layers, last to first.
  for (int l = model.num_layers() - 1; l >= 0; --l) {
    const LayerSpec& layer = model.layers[l];
    const LayerTape& lt = tape.layers[l];
    const auto& tree = *layer.filter.tree;
    const int f_in = layer.filter.f_in;
    const int f_out = layer.filter.f_out;

    Matrix dz = d.cwiseProduct(nonlinearity_derivative(layer.nonlinearity, lt.preactivation));

    // Coefficient gradients: dF_w = Σ_b (diffused_w)_bᵀ (dz)_b.
    for (int w = 0; w < tree.size(); ++w) {
      if (!layer.filter.has(w)) continue;
      Matrix& gw = grads.coeff_grads[l][w];
      for (int b = 0; b < batch; ++b) {
        gw += lt.diffused[w]
                  .middleCols(static_cast<Eigen::Index>(b) * f_in, f_in)
                  .transpose() *
              dz.middleCols(static_cast<Eigen::Index>(b) * f_out, f_out);
      }
      if (!layer.masks.empty() && layer.masks[w].size() != 0) {
        gw = gw.cwiseProduct(layer.masks[w]);
      }
    }

    // Input gradient via the reverse trie: each word's adjoint flows to its
    // suffix parent through the transposed prepended operator.
    const std::vector<Matrix>& ops = tape.layer_operators[l];
    std::vector<Matrix> da(tree.size());
    for (int w = 0; w < tree.size(); ++w) {
      if (!layer.filter.has(w)) continue;
      Matrix contrib(lt.input.rows(), static_cast<Eigen::Index>(batch) * f_in);
      for (int b = 0; b < batch; ++b) {
        contrib.middleCols(static_cast<Eigen::Index>(b) * f_in, f_in) =
            dz.middleCols(static_cast<Eigen::Index>(b) * f_out, f_out) *
            layer.filter.coeffs[w].transpose();
      }
      da[w] = std::move(contrib);
    }
    for (int w = tree.size() - 1; w >= 1; --w) {
      if (da[w].size() == 0) continue;
      Matrix flow = ops[tree.prepend_op[w]].transpose() * da[w];
      const int p = tree.parent[w];
      if (da[p].size() == 0) {
        da[p] = std::move(flow);
      } else {
        da[p] += flow;
      }
    }
    Matrix dpooled = da[0].size() != 0
                         ? std::move(da[0])
                         : Matrix::Zero(lt.input.rows(), static_cast<Eigen::Index>(batch) * f_in);

    // Reverse the pooling / sampling step.
    const int n_prev = model.plan ? model.plan->counts[l] : static_cast<int>(lt.input.rows());
    if (model.plan && layer.pooling) {
      const auto& nbhds = lt.neighborhoods;
      Matrix dprev = Matrix::Zero(n_prev, dpooled.cols());
      for (std::size_t i = 0; i < nbhds.size(); ++i) {
        const auto& nbhd = nbhds[i];
        switch (layer.pooling->aggregator) {
          case Aggregator::mean: {
            const double inv = 1.0 / static_cast<double>(nbhd.size());
            for (const int j : nbhd) dprev.row(j) += inv * dpooled.row(i);
            break;
          }
          case Aggregator::max: {
            for (Eigen::Index c = 0; c < dpooled.cols(); ++c) {
              int best = nbhd.front();
              for (const int j : nbhd) {
                if (lt.prepool(j, c) > lt.prepool(best, c)) best = j;
              }
              dprev(best, c) += dpooled(i, c);
            }
            break;
          }
          case Aggregator::median: {
            std::vector<std::pair<double, int>> vals;
            for (Eigen::Index c = 0; c < dpooled.cols(); ++c) {
              vals.clear();
              for (const int j : nbhd) vals.emplace_back(lt.prepool(j, c), j);
              std::sort(vals.begin(), vals.end());
              const std::size_t mid = vals.size() / 2;
              if (vals.size() % 2) {
                dprev(vals[mid].second, c) += dpooled(i, c);
              } else {
                dprev(vals[mid - 1].second, c) += 0.5 * dpooled(i, c);
                dprev(vals[mid].second, c) += 0.5 * dpooled(i, c);
              }
            }
            break;
          }
        }
      }
      d = std::move(dprev);
    } else if (static_cast<int>(dpooled.rows()) != n_prev) {
      Matrix dprev = Matrix::Zero(n_prev, dpooled.cols());
      dprev.topRows(dpooled.rows()) = dpooled;
      d = std::move(dprev);
    } else {
      d = std::move(dpooled);
    }
  }
  return grads;
}

Matrix conv_stack(const MGNNModel& model, const Multigraph& mg, const Matrix& x) {
  mg.validate();
  std::vector<Matrix> ops;
  for (const auto& op : mg.operators) ops.push_back(op.matrix);
  Matrix cur = x;
  for (const auto& layer : model.layers) {
    cur = apply_nonlinearity(layer.nonlinearity,
                             apply_mimo_batched(layer.filter, ops, cur, 1, nullptr));
  }
  return cur;
}

double check_permutation_equivariance(const MGNNModel& model, const Multigraph& mg,
                                      const Matrix& x, const Permutation& p) {
  const Matrix base = conv_stack(model, mg, x);
  const auto [pmg, px] = permute(mg, x, p);
  const Matrix permuted = conv_stack(model, pmg, px);
  Matrix expected(base.rows(), base.cols());
  for (int a = 0; a < base.rows(); ++a) expected.row(a) = base.row(p.perm[a]);
  if (permuted.rows() == 0 || permuted.cols() == 0) return 0.0;
  return (permuted - expected).cwiseAbs().maxCoeff();
}

// ---------------------------------------------------------------------------

MGNNModel build_model(ModelVariant variant, const ArchitectureConfig& arch) {
  if (!arch.tree) throw std::invalid_argument("architecture needs a diffusion tree");
  if (arch.widths.size() < 2) throw std::invalid_argument("need at least one layer width");
  const int num_layers = static_cast<int>(arch.widths.size()) - 1;
  if (static_cast<int>(arch.nonlinearities.size()) != num_layers) {
    throw std::invalid_argument("one nonlinearity per layer required");
  }
  const auto& tree = arch.tree;
  const int m = tree->m;
  const int mult = variant == ModelVariant::parallel ? m : 1;

  MGNNModel model;
  model.variant = variant;
  model.input_features = arch.widths[0];

  for (int l = 0; l < num_layers; ++l) {
    const int f = l == 0 ? arch.widths[0] : arch.widths[l] * mult;
    const int g = arch.widths[l + 1] * mult;
    LayerSpec layer{MimoFilter(tree, f, g), arch.nonlinearities[l], std::nullopt, arch.n_nodes,
                    {}};

    for (int w = 0; w < tree->size(); ++w) {
      const Word& word = tree->words[w];
      const bool homogeneous = word.distinct_classes() <= 1;
      if (variant != ModelVariant::mgnn && !homogeneous) continue;
      layer.filter.coeffs[w] = Matrix::Zero(f, g);
    }

    if (variant == ModelVariant::parallel) {
      // Block masks keep each class's feature stream independent: tower t
      // owns feature columns [t·g₀, (t+1)·g₀) and, past the first layer,
      // rows [t·f₀, (t+1)·f₀).
      const int g0 = arch.widths[l + 1];
      const int f0 = arch.widths[l];
      layer.masks.assign(tree->size(), Matrix());
      for (int w = 0; w < tree->size(); ++w) {
        if (!layer.filter.has(w)) continue;
        Matrix mask = Matrix::Zero(f, g);
        const Word& word = tree->words[w];
        if (word.is_identity()) {
          if (l == 0) {
            mask.setOnes();
          } else {
            for (int t = 0; t < m; ++t) mask.block(t * f0, t * g0, f0, g0).setOnes();
          }
        } else {
          const int t = word.indices.front();
          if (l == 0) {
            mask.block(0, t * g0, f, g0).setOnes();
          } else {
            mask.block(t * f0, t * g0, f0, g0).setOnes();
          }
        }
        layer.masks[w] = std::move(mask);
      }
    }
    model.layers.push_back(std::move(layer));
  }

  model.readout.kind = arch.readout_kind;
  model.readout.final_nonlinearity = arch.readout_final;
  if (arch.readout_kind == ReadoutKind::flatten) {
    if (arch.n_nodes < 1) throw std::invalid_argument("flatten readout needs the node count");
    const int in_dim = arch.n_nodes * arch.widths.back() * mult;
    model.readout.layers.push_back(
        AffineLayer{Matrix::Zero(arch.readout_output, in_dim), Vector::Zero(arch.readout_output)});
  } else if (arch.readout_kind == ReadoutKind::per_node) {
    const int in_dim = arch.widths.back() * mult;
    model.readout.layers.push_back(
        AffineLayer{Matrix::Zero(arch.readout_output, in_dim), Vector::Zero(arch.readout_output)});
  }
  return model;
}

MGNNModel build_baseline(ModelVariant variant, int m, int depth, const std::vector<int>& widths) {
  ArchitectureConfig arch;
  arch.tree = std::make_shared<DiffusionTree>(make_unpruned_tree(m, depth));
  arch.widths = widths;
  arch.nonlinearities.assign(widths.size() - 1, Nonlinearity::relu);
  arch.readout_kind = ReadoutKind::none;
  return build_model(variant, arch);
}

void init_parameters(MGNNModel& model, std::uint64_t seed) {
  Rng rng(seed);
  for (auto& layer : model.layers) {
    auto& filter = layer.filter;
    int active = 0;
    for (int w = 0; w < filter.tree->size(); ++w) {
      if (filter.has(w)) ++active;
    }
    const double bound =
        std::sqrt(6.0 / static_cast<double>(filter.f_in + filter.f_out)) / std::max(active, 1);
    for (int w = 0; w < filter.tree->size(); ++w) {
      if (!filter.has(w)) continue;
      Matrix& c = filter.coeffs[w];
      for (int r = 0; r < c.rows(); ++r) {
        for (int col = 0; col < c.cols(); ++col) c(r, col) = rng.uniform(-bound, bound);
      }
      if (!layer.masks.empty() && layer.masks[w].size() != 0) {
        c = c.cwiseProduct(layer.masks[w]);
      }
    }
  }
  for (auto& affine : model.readout.layers) {
    const double bound =
        std::sqrt(6.0 / static_cast<double>(affine.weight.rows() + affine.weight.cols()));
    for (int r = 0; r < affine.weight.rows(); ++r) {
      for (int c = 0; c < affine.weight.cols(); ++c) affine.weight(r, c) = rng.uniform(-bound, bound);
    }
    affine.bias.setZero();
  }
}

// ---------------------------------------------------------------------------

AdamOptimizer::AdamOptimizer(const MGNNModel& model, const AdamParams& params)
    : params_(params), m_(GradientSet::zeros_like(model)), v_(GradientSet::zeros_like(model)) {}

namespace {

void adam_update(Matrix& theta, const Matrix& g, Matrix& m, Matrix& v, const AdamParams& p,
                 double lr, double bc1, double bc2) {
  m = p.beta1 * m + (1.0 - p.beta1) * g;
  v = p.beta2 * v + (1.0 - p.beta2) * g.cwiseProduct(g);
  theta -= lr * ((m / bc1).array() / ((v / bc2).array().sqrt() + p.epsilon)).matrix();
}

}  // namespace

void AdamOptimizer::step(MGNNModel& model, const GradientSet& grads, double scale) {
  ++t_;
  const double lr = params_.lr * scale;
  const double bc1 = 1.0 - std::pow(params_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(params_.beta2, static_cast<double>(t_));
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    auto& filter = model.layers[l].filter;
    for (int w = 0; w < filter.tree->size(); ++w) {
      if (!filter.has(w)) continue;
      adam_update(filter.coeffs[w], grads.coeff_grads[l][w], m_.coeff_grads[l][w],
                  v_.coeff_grads[l][w], params_, lr, bc1, bc2);
    }
  }
  for (std::size_t k = 0; k < model.readout.layers.size(); ++k) {
    adam_update(model.readout.layers[k].weight, grads.readout_grads[k].weight,
                m_.readout_grads[k].weight, v_.readout_grads[k].weight, params_, lr, bc1, bc2);
    Vector& bias = model.readout.layers[k].bias;
    Vector& mb = m_.readout_grads[k].bias;
    Vector& vb = v_.readout_grads[k].bias;
    const Vector& gb = grads.readout_grads[k].bias;
    mb = params_.beta1 * mb + (1.0 - params_.beta1) * gb;
    vb = params_.beta2 * vb + (1.0 - params_.beta2) * gb.cwiseProduct(gb);
    bias -= lr * ((mb / bc1).array() / ((vb / bc2).array().sqrt() + params_.epsilon)).matrix();
  }
}

// ---------------------------------------------------------------------------

LossValue cross_entropy_loss(const Matrix& logits, const int* labels, int batch) {
  LossValue out;
  out.upstream = Matrix::Zero(logits.rows(), logits.cols());
  double total = 0.0;
  for (int b = 0; b < batch; ++b) {
    const Vector col = logits.col(b);
    const double peak = col.maxCoeff();
    const Vector shifted = (col.array() - peak).exp();
    const double z = shifted.sum();
    total += std::log(z) + peak - col(labels[b]);
    out.upstream.col(b) = shifted / z;
    out.upstream(labels[b], b) -= 1.0;
  }
  out.value = total / batch;
  out.upstream /= static_cast<double>(batch);
  return out;
}

LossValue mse_loss(const Matrix& out_mat, const Matrix& target, int batch) {
  LossValue out;
  const Matrix diff = out_mat - target;
  out.value = 0.5 * diff.squaredNorm() / batch;
  out.upstream = diff / static_cast<double>(batch);
  return out;
}

namespace {

[[noreturn]] void report_nonfinite(const MGNNModel& model, const std::string& where) {
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    const auto& filter = model.layers[l].filter;
    for (int w = 0; w < filter.tree->size(); ++w) {
      if (filter.has(w) && !filter.coeffs[w].allFinite()) {
        throw std::runtime_error(std::string("training diverged at ") + where +
                                 ": first non-finite tensor is layer " + std::to_string(l + 1) +
                                 " coefficient for word " + filter.tree->words[w].label());
      }
    }
  }
  for (std::size_t k = 0; k < model.readout.layers.size(); ++k) {
    if (!model.readout.layers[k].weight.allFinite() || !model.readout.layers[k].bias.allFinite()) {
      throw std::runtime_error(std::string("training diverged at ") + where +
                               ": first non-finite tensor is readout layer " + std::to_string(k + 1));
    }
  }
  throw std::runtime_error(std::string("training diverged at ") + where +
                           ": loss is non-finite while parameters are finite "
                           "(non-finite activations or inputs)");
}

template <typename MakeBatch>
TrainResult run_epochs(MGNNModel& model, const Multigraph& mg, int n_samples,
                       const TrainConfig& cfg, MakeBatch&& make_batch) {
  AdamOptimizer opt(model, cfg.adam);
  Rng rng(cfg.seed);
  std::vector<int> order(n_samples);
  for (int i = 0; i < n_samples; ++i) order[i] = i;

  TrainResult result;
  double scale = 1.0;
  const int bs = std::max(1, cfg.batch_size);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0.0;
    for (int start = 0; start < n_samples; start += bs) {
      const int b = std::min(bs, n_samples - start);
      auto [x, loss_fn] = make_batch(order, start, b);
      ForwardTape tape;
      const Matrix out = forward(model, mg, x, b, &tape);
      LossValue loss = loss_fn(out);
      if (!std::isfinite(loss.value)) report_nonfinite(model, "epoch " + std::to_string(epoch));
      const GradientSet grads = backward(model, tape, loss.upstream);
      opt.step(model, grads, scale);
      scale *= cfg.step_decay;
      epoch_loss += loss.value * b;
    }
    result.loss_trace.push_back(epoch_loss / n_samples);
  }
  return result;
}

Matrix pack_inputs(const std::vector<Matrix>& inputs, const std::vector<int>& order, int start,
                   int b, int features) {
  const Eigen::Index n = inputs.front().rows();
  Matrix x(n, static_cast<Eigen::Index>(b) * features);
  for (int k = 0; k < b; ++k) {
    x.middleCols(static_cast<Eigen::Index>(k) * features, features) = inputs[order[start + k]];
  }
  return x;
}

}  // namespace

TrainResult train(MGNNModel& model, const Multigraph& mg, const LabeledSignals& data,
                  const TrainConfig& cfg) {
  if (cfg.loss != LossKind::cross_entropy) {
    throw std::invalid_argument("labeled training expects the cross-entropy loss");
  }
  if (data.inputs.empty()) throw std::invalid_argument("empty dataset");
  std::vector<int> batch_labels;
  return run_epochs(model, mg, static_cast<int>(data.inputs.size()), cfg,
                    [&](const std::vector<int>& order, int start, int b) {
                      Matrix x = pack_inputs(data.inputs, order, start, b, model.input_features);
                      batch_labels.resize(b);
                      for (int k = 0; k < b; ++k) batch_labels[k] = data.labels[order[start + k]];
                      auto loss_fn = [&batch_labels, b](const Matrix& out) {
                        return cross_entropy_loss(out, batch_labels.data(), b);
                      };
                      return std::make_pair(std::move(x), loss_fn);
                    });
}

TrainResult train(MGNNModel& model, const Multigraph& mg, const RegressionData& data,
                  const TrainConfig& cfg) {
  if (cfg.loss != LossKind::mse) {
    throw std::invalid_argument("regression training expects the mse loss");
  }
  if (data.inputs.empty()) throw std::invalid_argument("empty dataset");
  const bool flat = model.readout.kind == ReadoutKind::flatten;
  Matrix target;
  return run_epochs(
      model, mg, static_cast<int>(data.inputs.size()), cfg,
      [&](const std::vector<int>& order, int start, int b) {
        Matrix x = pack_inputs(data.inputs, order, start, b, model.input_features);
        if (flat) {
          target.resize(data.targets.front().rows(), b);
          for (int k = 0; k < b; ++k) target.col(k) = data.targets[order[start + k]];
        } else {
          const Eigen::Index w = data.targets.front().cols();
          target.resize(data.targets.front().rows(), static_cast<Eigen::Index>(b) * w);
          for (int k = 0; k < b; ++k) {
            target.middleCols(static_cast<Eigen::Index>(k) * w, w) = data.targets[order[start + k]];
          }
        }
        auto loss_fn = [&target, b](const Matrix& out) { return mse_loss(out, target, b); };
        return std::make_pair(std::move(x), loss_fn);
      });
}

double accuracy(const MGNNModel& model, const Multigraph& mg, const LabeledSignals& data,
                const std::vector<int>& indices) {
  if (indices.empty()) return 0.0;
  int correct = 0;
  const int bs = 256;
  std::vector<int> order(indices);
  for (int start = 0; start < static_cast<int>(order.size()); start += bs) {
    const int b = std::min<int>(bs, static_cast<int>(order.size()) - start);
    const Matrix x = pack_inputs(data.inputs, order, start, b, model.input_features);
    const Matrix logits = forward(model, mg, x, b, nullptr);
    for (int k = 0; k < b; ++k) {
      Eigen::Index pred;
      logits.col(k).maxCoeff(&pred);
      if (static_cast<int>(pred) == data.labels[order[start + k]]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(order.size());
}

PrimalDualTrace train_primal_dual(MGNNModel& model, ConstrainedEnv& env, const TrainConfig& cfg) {
  AdamOptimizer opt(model, cfg.adam);
  PrimalDualTrace trace;
  double lambda = cfg.lambda_init;
  double primal_scale = 1.0;
  double dual_step = cfg.dual_lr;
  for (int iter = 0; iter < cfg.iterations; ++iter) {
    const EnvEvaluation ev = env.evaluate(model, lambda);
    if (!std::isfinite(ev.objective)) {
      report_nonfinite(model, "iteration " + std::to_string(iter));
    }
    opt.step(model, ev.lagrangian_grads, primal_scale);
    lambda = std::max(0.0, lambda + dual_step * ev.constraint_slack);
    primal_scale *= cfg.step_decay;
    dual_step *= cfg.dual_decay;
    trace.objective.push_back(ev.objective);
    trace.slack.push_back(ev.constraint_slack);
    trace.lambda.push_back(lambda);
  }
  return trace;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

const char* nonlinearity_name(Nonlinearity k) {
  switch (k) {
    case Nonlinearity::relu: return "relu";
    case Nonlinearity::sigmoid: return "sigmoid";
    case Nonlinearity::tanh_act: return "tanh";
    case Nonlinearity::identity: return "identity";
  }
  return "identity";
}

Nonlinearity nonlinearity_from_name(const std::string& s) {
  if (s == "relu") return Nonlinearity::relu;
  if (s == "sigmoid") return Nonlinearity::sigmoid;
  if (s == "tanh") return Nonlinearity::tanh_act;
  if (s == "identity") return Nonlinearity::identity;
  throw std::invalid_argument("unknown nonlinearity: " + s);
}

nlohmann::json matrix_to_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (int r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (int c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Matrix matrix_from_json(const nlohmann::json& rows) {
  const int r = static_cast<int>(rows.size());
  const int c = r > 0 ? static_cast<int>(rows.at(0).size()) : 0;
  Matrix m(r, c);
  for (int i = 0; i < r; ++i) {
    for (int j = 0; j < c; ++j) m(i, j) = rows.at(i).at(j).get<double>();
  }
  return m;
}

}  // namespace

std::string model_to_json(const MGNNModel& model,
                          const std::map<std::string, std::string>& metadata) {
  nlohmann::json j;
  j["variant"] = model.variant == ModelVariant::mgnn
                     ? "mgnn"
                     : (model.variant == ModelVariant::merged ? "merged" : "parallel");
  j["input_features"] = model.input_features;

  nlohmann::json layers = nlohmann::json::array();
  for (const auto& layer : model.layers) {
    nlohmann::json lj;
    const auto& tree = *layer.filter.tree;
    lj["f_in"] = layer.filter.f_in;
    lj["f_out"] = layer.filter.f_out;
    lj["nonlinearity"] = nonlinearity_name(layer.nonlinearity);
    lj["selected_nodes"] = layer.selected_nodes;
    nlohmann::json tj;
    tj["m"] = tree.m;
    tj["depth"] = tree.depth;
    if (std::isfinite(tree.epsilon)) {
      tj["epsilon"] = tree.epsilon;
    } else {
      tj["epsilon"] = nullptr;
    }
    nlohmann::json pruned = nlohmann::json::array();
    for (const auto& [a, b] : tree.pruned.pairs) pruned.push_back({a, b});
    tj["pruned"] = std::move(pruned);
    lj["tree"] = std::move(tj);

    nlohmann::json coeffs = nlohmann::json::object();
    for (int w = 0; w < tree.size(); ++w) {
      if (layer.filter.has(w)) coeffs[tree.words[w].label()] = matrix_to_json(layer.filter.coeffs[w]);
    }
    lj["coeffs"] = std::move(coeffs);
    if (!layer.masks.empty()) {
      nlohmann::json masks = nlohmann::json::object();
      for (int w = 0; w < tree.size(); ++w) {
        if (layer.masks[w].size() != 0) masks[tree.words[w].label()] = matrix_to_json(layer.masks[w]);
      }
      lj["masks"] = std::move(masks);
    }
    if (layer.pooling) {
      lj["pooling"] = {{"alpha", layer.pooling->alpha},
                       {"aggregator", layer.pooling->aggregator == Aggregator::mean
                                          ? "mean"
                                          : (layer.pooling->aggregator == Aggregator::max
                                                 ? "max"
                                                 : "median")}};
    }
    layers.push_back(std::move(lj));
  }
  j["layers"] = std::move(layers);

  nlohmann::json rj;
  rj["kind"] = model.readout.kind == ReadoutKind::none
                   ? "none"
                   : (model.readout.kind == ReadoutKind::flatten ? "flatten" : "per_node");
  rj["final_nonlinearity"] = nonlinearity_name(model.readout.final_nonlinearity);
  nlohmann::json rlayers = nlohmann::json::array();
  for (const auto& affine : model.readout.layers) {
    nlohmann::json aj;
    aj["weight"] = matrix_to_json(affine.weight);
    nlohmann::json bias = nlohmann::json::array();
    for (int i = 0; i < affine.bias.size(); ++i) bias.push_back(affine.bias(i));
    aj["bias"] = std::move(bias);
    rlayers.push_back(std::move(aj));
  }
  rj["layers"] = std::move(rlayers);
  j["readout"] = std::move(rj);

  if (model.plan) {
    j["plan"] = {{"node_order", model.plan->node_order}, {"counts", model.plan->counts}};
  }
  if (!metadata.empty()) {
    nlohmann::json meta = nlohmann::json::object();
    for (const auto& [k, v] : metadata) meta[k] = v;
    j["metadata"] = std::move(meta);
  }
  return j.dump(2);
}

MGNNModel model_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  MGNNModel model;
  const std::string variant = j.at("variant").get<std::string>();
  model.variant = variant == "mgnn" ? ModelVariant::mgnn
                                    : (variant == "merged" ? ModelVariant::merged
                                                           : ModelVariant::parallel);
  model.input_features = j.at("input_features").get<int>();

  std::shared_ptr<const DiffusionTree> shared_tree;
  for (const auto& lj : j.at("layers")) {
    const auto& tj = lj.at("tree");
    PrunedPairSet pruned;
    for (const auto& pair : tj.at("pruned")) {
      pruned.insert(pair.at(0).get<int>(), pair.at(1).get<int>());
    }
    const double epsilon = tj.at("epsilon").is_null()
                               ? std::numeric_limits<double>::infinity()
                               : tj.at("epsilon").get<double>();
    auto tree = std::make_shared<DiffusionTree>(
        build_tree(tj.at("m").get<int>(), tj.at("depth").get<int>(), epsilon, std::move(pruned)));
    // Share one tree across layers when the serialized trees match.
    if (shared_tree && shared_tree->m == tree->m && shared_tree->depth == tree->depth &&
        shared_tree->pruned.pairs == tree->pruned.pairs) {
      tree = std::const_pointer_cast<DiffusionTree>(
          std::static_pointer_cast<const DiffusionTree>(shared_tree));
    } else {
      shared_tree = tree;
    }

    LayerSpec layer{MimoFilter(tree, lj.at("f_in").get<int>(), lj.at("f_out").get<int>()),
                    nonlinearity_from_name(lj.at("nonlinearity").get<std::string>()), std::nullopt,
                    lj.at("selected_nodes").get<int>(), {}};
    for (const auto& [label, rows] : lj.at("coeffs").items()) {
      layer.filter.set(Word::from_label(label), matrix_from_json(rows));
    }
    if (lj.contains("masks")) {
      layer.masks.assign(tree->size(), Matrix());
      for (const auto& [label, rows] : lj.at("masks").items()) {
        const int idx = tree->index_of(Word::from_label(label));
        layer.masks[idx] = matrix_from_json(rows);
      }
    }
    if (lj.contains("pooling")) {
      PoolConfig pc;
      pc.alpha = lj.at("pooling").at("alpha").get<int>();
      const std::string agg = lj.at("pooling").at("aggregator").get<std::string>();
      pc.aggregator = agg == "mean" ? Aggregator::mean
                                    : (agg == "max" ? Aggregator::max : Aggregator::median);
      layer.pooling = pc;
    }
    model.layers.push_back(std::move(layer));
  }

  const auto& rj = j.at("readout");
  const std::string kind = rj.at("kind").get<std::string>();
  model.readout.kind = kind == "none" ? ReadoutKind::none
                                      : (kind == "flatten" ? ReadoutKind::flatten
                                                           : ReadoutKind::per_node);
  model.readout.final_nonlinearity =
      nonlinearity_from_name(rj.at("final_nonlinearity").get<std::string>());
  for (const auto& aj : rj.at("layers")) {
    AffineLayer affine;
    affine.weight = matrix_from_json(aj.at("weight"));
    const auto& bias = aj.at("bias");
    affine.bias.resize(static_cast<Eigen::Index>(bias.size()));
    for (std::size_t i = 0; i < bias.size(); ++i) affine.bias(i) = bias.at(i).get<double>();
    model.readout.layers.push_back(std::move(affine));
  }

  if (j.contains("plan")) {
    SelectionPlan plan;
    plan.node_order = j.at("plan").at("node_order").get<std::vector<int>>();
    plan.counts = j.at("plan").at("counts").get<std::vector<int>>();
    model.plan = std::move(plan);
  }
  return model;
}

void save_model(const MGNNModel& model, const std::string& path,
                const std::map<std::string, std::string>& metadata) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open checkpoint for writing: " + path);
  out << model_to_json(model, metadata);
}

MGNNModel load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return model_from_json(buf.str());
}

}  // namespace msp
