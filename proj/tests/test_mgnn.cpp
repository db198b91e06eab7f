#include "msp/mgnn.hpp"

#include "oracle_helpers.hpp"

#include <doctest.h>

#include <memory>

using namespace msp;

namespace {

std::shared_ptr<DiffusionTree> shared_tree(int m, int depth) {
  return std::make_shared<DiffusionTree>(make_unpruned_tree(m, depth));
}

// Straight-line re-implementation of the convolutional stack plus flatten
// readout: dense word operators, no tape, no prefix sharing.
Matrix naive_forward(const MGNNModel& model, const Multigraph& mg, const Matrix& x) {
  Matrix cur = x;
  for (const auto& layer : model.layers) {
    const auto& tree = *layer.filter.tree;
    Matrix y = Matrix::Zero(cur.rows(), layer.filter.f_out);
    for (int w = 0; w < tree.size(); ++w) {
      if (!layer.filter.has(w)) continue;
      y += oracle::naive_word_operator(tree.words[w].indices, mg) * cur * layer.filter.coeffs[w];
    }
    cur = apply_nonlinearity(layer.nonlinearity, y);
  }
  if (model.readout.kind == ReadoutKind::flatten) {
    Vector flat(cur.size());
    int idx = 0;
    for (int c = 0; c < cur.cols(); ++c) {
      for (int r = 0; r < cur.rows(); ++r) flat(idx++) = cur(r, c);
    }
    Vector v = flat;
    for (std::size_t k = 0; k < model.readout.layers.size(); ++k) {
      v = model.readout.layers[k].weight * v + model.readout.layers[k].bias;
      if (k + 1 < model.readout.layers.size()) v = v.cwiseMax(0.0);
    }
    return apply_nonlinearity(model.readout.final_nonlinearity, v);
  }
  return cur;
}

MGNNModel small_random_model(Rng& rng, int n, int m, int depth, const std::vector<int>& widths,
                             const std::vector<Nonlinearity>& acts, ReadoutKind kind,
                             int out_dim) {
  ArchitectureConfig arch;
  arch.tree = shared_tree(m, depth);
  arch.n_nodes = n;
  arch.widths = widths;
  arch.nonlinearities = acts;
  arch.readout_kind = kind;
  arch.readout_output = out_dim;
  MGNNModel model = build_model(ModelVariant::mgnn, arch);
  init_parameters(model, rng.uniform_int(1, 1 << 30));
  return model;
}

double loss_at(MGNNModel& model, const Multigraph& mg, const Matrix& x, const Matrix& target) {
  const Matrix out = forward(model, mg, x, 1, nullptr);
  return 0.5 * (out - target).squaredNorm();
}

// Central finite differences over every trainable parameter.
void gradcheck(MGNNModel& model, const Multigraph& mg, const Matrix& x, const Matrix& target,
               double h = 1e-5, double tol = 1e-4) {
  ForwardTape tape;
  const Matrix out = forward(model, mg, x, 1, &tape);
  const GradientSet grads = backward(model, tape, out - target);

  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    auto& filter = model.layers[l].filter;
    for (int w = 0; w < filter.tree->size(); ++w) {
      if (!filter.has(w)) continue;
      for (int r = 0; r < filter.f_in; ++r) {
        for (int c = 0; c < filter.f_out; ++c) {
          if (!model.layers[l].masks.empty() && model.layers[l].masks[w].size() != 0 &&
              model.layers[l].masks[w](r, c) == 0.0) {
            continue;
          }
          const double saved = filter.coeffs[w](r, c);
          filter.coeffs[w](r, c) = saved + h;
          const double up = loss_at(model, mg, x, target);
          filter.coeffs[w](r, c) = saved - h;
          const double down = loss_at(model, mg, x, target);
          filter.coeffs[w](r, c) = saved;
          const double fd = (up - down) / (2.0 * h);
          const double an = grads.coeff_grads[l][w](r, c);
          CHECK(std::abs(an - fd) <= tol * std::max({1.0, std::abs(an), std::abs(fd)}));
        }
      }
    }
  }
  for (std::size_t k = 0; k < model.readout.layers.size(); ++k) {
    auto& affine = model.readout.layers[k];
    for (int r = 0; r < affine.weight.rows(); ++r) {
      for (int c = 0; c < affine.weight.cols(); ++c) {
        const double saved = affine.weight(r, c);
        affine.weight(r, c) = saved + h;
        const double up = loss_at(model, mg, x, target);
        affine.weight(r, c) = saved - h;
        const double down = loss_at(model, mg, x, target);
        affine.weight(r, c) = saved;
        const double fd = (up - down) / (2.0 * h);
        const double an = grads.readout_grads[k].weight(r, c);
        CHECK(std::abs(an - fd) <= tol * std::max({1.0, std::abs(an), std::abs(fd)}));
      }
    }
    for (int r = 0; r < affine.bias.size(); ++r) {
      const double saved = affine.bias(r);
      affine.bias(r) = saved + h;
      const double up = loss_at(model, mg, x, target);
      affine.bias(r) = saved - h;
      const double down = loss_at(model, mg, x, target);
      affine.bias(r) = saved;
      const double fd = (up - down) / (2.0 * h);
      const double an = grads.readout_grads[k].bias(r);
      CHECK(std::abs(an - fd) <= tol * std::max({1.0, std::abs(an), std::abs(fd)}));
    }
  }
}

}  // namespace

TEST_CASE("forward basics") {
  Rng rng(90);
  const auto mg = oracle::random_normalized_multigraph(rng, 5, 2);

  SUBCASE("all-zero filters and zero readout give zero output") {
    ArchitectureConfig arch;
    arch.tree = shared_tree(2, 2);
    arch.n_nodes = 5;
    arch.widths = {1, 3, 2};
    arch.nonlinearities = {Nonlinearity::relu, Nonlinearity::identity};
    arch.readout_kind = ReadoutKind::flatten;
    arch.readout_output = 4;
    MGNNModel model = build_model(ModelVariant::mgnn, arch);  // zero init
    const Matrix out = forward(model, mg, oracle::random_matrix(rng, 5, 1));
    CHECK((out.array() == 0.0).all());
  }
  SUBCASE("identity-word identity filter with identity readout flattens X") {
    ArchitectureConfig arch;
    arch.tree = shared_tree(2, 1);
    arch.n_nodes = 5;
    arch.widths = {2, 2};
    arch.nonlinearities = {Nonlinearity::identity};
    arch.readout_kind = ReadoutKind::flatten;
    arch.readout_output = 10;
    MGNNModel model = build_model(ModelVariant::mgnn, arch);
    model.layers[0].filter.set(Word{}, Matrix::Identity(2, 2));
    model.readout.layers[0].weight = Matrix::Identity(10, 10);
    const Matrix x = oracle::random_matrix(rng, 5, 2);
    const Matrix out = forward(model, mg, x);
    int idx = 0;
    for (int c = 0; c < 2; ++c) {
      for (int r = 0; r < 5; ++r) CHECK(out(idx++, 0) == x(r, c));
    }
  }
  SUBCASE("two-layer random model matches the straight-line oracle") {
    Rng inner(91);
    const auto mg6 = oracle::random_normalized_multigraph(inner, 6, 2);
    for (int trial = 0; trial < 10; ++trial) {
      MGNNModel model = small_random_model(inner, 6, 2, 2, {2, 3, 2},
                                           {Nonlinearity::tanh_act, Nonlinearity::sigmoid},
                                           ReadoutKind::flatten, 3);
      const Matrix x = oracle::random_matrix(inner, 6, 2);
      const Matrix fast = forward(model, mg6, x);
      const Matrix slow = naive_forward(model, mg6, x);
      CHECK((fast - slow).cwiseAbs().maxCoeff() <= 1e-12);
    }
  }
  SUBCASE("shape mismatch throws") {
    MGNNModel model = small_random_model(rng, 5, 2, 1, {1, 2}, {Nonlinearity::relu},
                                         ReadoutKind::none, 0);
    CHECK_THROWS(forward(model, mg, Matrix::Zero(4, 1)));
    CHECK_THROWS(forward(model, mg, Matrix::Zero(5, 2)));
  }
  SUBCASE("batched forward equals per-sample forward") {
    MGNNModel model = small_random_model(rng, 5, 2, 2, {2, 3, 2},
                                         {Nonlinearity::sigmoid, Nonlinearity::relu},
                                         ReadoutKind::flatten, 3);
    const Matrix x0 = oracle::random_matrix(rng, 5, 2);
    const Matrix x1 = oracle::random_matrix(rng, 5, 2);
    Matrix both(5, 4);
    both << x0, x1;
    const Matrix batched = forward(model, mg, both, 2);
    CHECK((batched.col(0) - forward(model, mg, x0).col(0)).cwiseAbs().maxCoeff() == 0.0);
    CHECK((batched.col(1) - forward(model, mg, x1).col(0)).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("backward") {
  SUBCASE("zero upstream gives a zero gradient set") {
    Rng rng(92);
    const auto mg = oracle::random_normalized_multigraph(rng, 4, 2);
    MGNNModel model = small_random_model(rng, 4, 2, 2, {1, 2, 2},
                                         {Nonlinearity::sigmoid, Nonlinearity::identity},
                                         ReadoutKind::flatten, 2);
    ForwardTape tape;
    const Matrix out = forward(model, mg, oracle::random_matrix(rng, 4, 1), 1, &tape);
    const GradientSet grads = backward(model, tape, Matrix::Zero(out.rows(), out.cols()));
    for (const auto& layer : grads.coeff_grads) {
      for (const auto& g : layer) {
        if (g.size() != 0) CHECK(g.cwiseAbs().maxCoeff() == 0.0);
      }
    }
    for (const auto& r : grads.readout_grads) {
      CHECK(r.weight.cwiseAbs().maxCoeff() == 0.0);
    }
  }
  SUBCASE("single identity-word layer: dF_I = Xᵀ·upstream exactly") {
    Multigraph mg;
    mg.n_nodes = 2;
    mg.operators.push_back(
        build_shift_operator(2, {{0, 1, 1.0}}, OperatorKind::adjacency));
    ArchitectureConfig arch;
    arch.tree = shared_tree(1, 0);  // identity word only
    arch.n_nodes = 2;
    arch.widths = {2, 2};
    arch.nonlinearities = {Nonlinearity::identity};
    arch.readout_kind = ReadoutKind::none;
    MGNNModel model = build_model(ModelVariant::mgnn, arch);
    model.layers[0].filter.set(Word{}, (Matrix(2, 2) << 1, 2, 3, 4).finished());
    Matrix x(2, 2), upstream(2, 2);
    x << 1, 2, 3, 4;
    upstream << 5, 6, 7, 8;
    ForwardTape tape;
    forward(model, mg, x, 1, &tape);
    const GradientSet grads = backward(model, tape, upstream);
    const Matrix expected = x.transpose() * upstream;  // hand: [[26,30],[38,44]]
    CHECK((grads.coeff_grads[0][0] - expected).cwiseAbs().maxCoeff() == 0.0);
    CHECK(expected(0, 0) == 26.0);
  }
  SUBCASE("finite differences on random two-layer models") {
    Rng rng(93);
    const std::vector<Nonlinearity> acts = {Nonlinearity::tanh_act, Nonlinearity::sigmoid,
                                            Nonlinearity::identity};
    for (int trial = 0; trial < 6; ++trial) {
      const int n = 4 + trial % 3;
      const auto mg = oracle::random_normalized_multigraph(rng, n, 2);
      MGNNModel model = small_random_model(
          rng, n, 2, 2, {2, 3, 2},
          {acts[trial % acts.size()], acts[(trial + 1) % acts.size()]}, ReadoutKind::flatten, 3);
      const Matrix x = oracle::random_matrix(rng, n, 2);
      const Matrix target = oracle::random_matrix(rng, 3, 1);
      gradcheck(model, mg, x, target);
    }
  }
  SUBCASE("finite differences through relu away from kinks") {
    Rng rng(94);
    const auto mg = oracle::random_normalized_multigraph(rng, 5, 2);
    for (int attempt = 0; attempt < 50; ++attempt) {
      MGNNModel model = small_random_model(rng, 5, 2, 2, {1, 2, 2},
                                           {Nonlinearity::relu, Nonlinearity::relu},
                                           ReadoutKind::flatten, 2);
      const Matrix x = oracle::random_matrix(rng, 5, 1);
      ForwardTape tape;
      forward(model, mg, x, 1, &tape);
      double closest = 1e9;
      for (const auto& lt : tape.layers) {
        closest = std::min(closest, lt.preactivation.cwiseAbs().minCoeff());
      }
      if (closest < 1e-3) continue;  // keep the difference quotient off the kink
      const Matrix target = oracle::random_matrix(rng, 2, 1);
      gradcheck(model, mg, x, target);
      break;
    }
  }
  SUBCASE("finite differences through mean pooling and sampling") {
    Rng rng(95);
    const auto mg = oracle::random_normalized_multigraph(rng, 6, 2);
    ArchitectureConfig arch;
    arch.tree = shared_tree(2, 2);
    arch.n_nodes = 6;
    arch.widths = {1, 2, 2};
    arch.nonlinearities = {Nonlinearity::tanh_act, Nonlinearity::identity};
    arch.readout_kind = ReadoutKind::flatten;
    arch.readout_output = 2;
    MGNNModel model = build_model(ModelVariant::mgnn, arch);
    init_parameters(model, 1234);
    // Flatten readout was sized for the full graph; resize for N_L = 3.
    model.readout.layers[0] = AffineLayer{oracle::random_matrix(rng, 2, 6), Vector::Zero(2)};
    model.plan = select_nodes(mg, {4, 3}, SelectionMethod::degree, 0);
    model.layers[0].pooling = PoolConfig{1, Aggregator::mean};
    model.layers[1].pooling = PoolConfig{1, Aggregator::mean};
    const Matrix x = oracle::random_matrix(rng, 6, 1);
    const Matrix target = oracle::random_matrix(rng, 2, 1);
    gradcheck(model, mg, x, target);
  }
}

TEST_CASE("permutation equivariance of the convolutional stack") {
  Rng rng(96);
  SUBCASE("identity permutation deviates by zero") {
    const auto mg = oracle::random_normalized_multigraph(rng, 6, 2);
    MGNNModel model = small_random_model(rng, 6, 2, 2, {1, 3, 2},
                                         {Nonlinearity::relu, Nonlinearity::sigmoid},
                                         ReadoutKind::none, 0);
    const Matrix x = oracle::random_matrix(rng, 6, 1);
    CHECK(check_permutation_equivariance(model, mg, x, Permutation::identity(6)) == 0.0);
  }
  SUBCASE("random permutations stay within 1e-9") {
    for (int trial = 0; trial < 20; ++trial) {
      const int n = 4 + trial % 9;
      const int m = 1 + trial % 3;
      const auto mg = oracle::random_normalized_multigraph(rng, n, m);
      MGNNModel model = small_random_model(rng, n, m, 2, {2, 3, 2},
                                           {Nonlinearity::relu, Nonlinearity::tanh_act},
                                           ReadoutKind::none, 0);
      const Matrix x = oracle::random_matrix(rng, n, 2);
      const Permutation p{rng.permutation(n)};
      CHECK(check_permutation_equivariance(model, mg, x, p) <= 1e-9);
    }
  }
}

TEST_CASE("baseline construction") {
  SUBCASE("merged m=2 K=2 has 5 trainable words per layer") {
    const MGNNModel model = build_baseline(ModelVariant::merged, 2, 2, {1, 4, 4});
    for (const auto& layer : model.layers) {
      int active = 0;
      for (int w = 0; w < layer.filter.tree->size(); ++w) {
        if (layer.filter.has(w)) ++active;
      }
      CHECK(active == 5);  // I, 0, 1, 0-0, 1-1
    }
  }
  SUBCASE("merged with m=1 matches the full model's trainable set") {
    const MGNNModel merged = build_baseline(ModelVariant::merged, 1, 3, {1, 2});
    const MGNNModel full = build_baseline(ModelVariant::mgnn, 1, 3, {1, 2});
    for (int w = 0; w < merged.layers[0].filter.tree->size(); ++w) {
      CHECK(merged.layers[0].filter.has(w) == full.layers[0].filter.has(w));
    }
  }
  SUBCASE("parallel never mixes classes") {
    const MGNNModel model = build_baseline(ModelVariant::parallel, 3, 2, {1, 2, 2});
    for (const auto& layer : model.layers) {
      const auto& tree = *layer.filter.tree;
      for (int w = 0; w < tree.size(); ++w) {
        if (!layer.filter.has(w)) continue;
        CHECK(tree.words[w].distinct_classes() <= 1);
      }
    }
    // Tower independence: gradients of tower t never touch another tower's
    // coefficients, by mask construction.
    const auto& mask_layer = model.layers[1];
    for (int w = 0; w < mask_layer.filter.tree->size(); ++w) {
      if (!mask_layer.filter.has(w) || mask_layer.filter.tree->words[w].is_identity()) continue;
      const int t = mask_layer.filter.tree->words[w].indices.front();
      const Matrix& mask = mask_layer.masks[w];
      for (int r = 0; r < mask.rows(); ++r) {
        for (int c = 0; c < mask.cols(); ++c) {
          if (mask(r, c) != 0.0) {
            CHECK(r / 2 == t);
            CHECK(c / 2 == t);
          }
        }
      }
    }
  }
  SUBCASE("parameter count per layer is |words|·F·G for the full model") {
    const MGNNModel model = build_baseline(ModelVariant::mgnn, 2, 2, {1, 4, 3});
    const long words = 7;  // 1 + 2 + 4
    CHECK(model.parameter_count() == words * 1 * 4 + words * 4 * 3);
  }
  SUBCASE("zeroed heterogeneous coefficients reproduce the merged forward exactly") {
    Rng rng(97);
    const auto mg = oracle::random_normalized_multigraph(rng, 5, 2);
    MGNNModel merged = build_baseline(ModelVariant::merged, 2, 2, {1, 3, 2});
    for (auto& layer : merged.layers) layer.nonlinearity = Nonlinearity::sigmoid;
    init_parameters(merged, 555);
    MGNNModel full = build_baseline(ModelVariant::mgnn, 2, 2, {1, 3, 2});
    for (auto& layer : full.layers) layer.nonlinearity = Nonlinearity::sigmoid;
    for (std::size_t l = 0; l < full.layers.size(); ++l) {
      for (int w = 0; w < full.layers[l].filter.tree->size(); ++w) {
        if (merged.layers[l].filter.has(w)) {
          full.layers[l].filter.coeffs[w] = merged.layers[l].filter.coeffs[w];
        } else {
          full.layers[l].filter.coeffs[w] = Matrix::Zero(full.layers[l].filter.f_in,
                                                         full.layers[l].filter.f_out);
        }
      }
    }
    const Matrix x = oracle::random_matrix(rng, 5, 1);
    const Matrix a = forward(merged, mg, x);
    const Matrix b = forward(full, mg, x);
    CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("training") {
  Rng rng(98);
  const auto mg = oracle::random_normalized_multigraph(rng, 8, 2);

  SUBCASE("lr = 0 leaves parameters unchanged") {
    MGNNModel model = small_random_model(rng, 8, 2, 2, {1, 2, 2},
                                         {Nonlinearity::sigmoid, Nonlinearity::identity},
                                         ReadoutKind::flatten, 2);
    const std::string before = model_to_json(model);
    LabeledSignals data;
    data.num_classes = 2;
    for (int i = 0; i < 6; ++i) {
      data.inputs.push_back(oracle::random_matrix(rng, 8, 1));
      data.labels.push_back(i % 2);
    }
    TrainConfig cfg;
    cfg.adam.lr = 0.0;
    cfg.epochs = 3;
    train(model, mg, data, cfg);
    CHECK(model_to_json(model) == before);
  }
  SUBCASE("identical seeds give bitwise-identical loss traces") {
    LabeledSignals data;
    data.num_classes = 2;
    for (int i = 0; i < 10; ++i) {
      data.inputs.push_back(oracle::random_matrix(rng, 8, 1));
      data.labels.push_back(i % 2);
    }
    TrainConfig cfg;
    cfg.epochs = 4;
    cfg.batch_size = 4;
    cfg.seed = 2024;
    auto run = [&]() {
      MGNNModel model = small_random_model(rng, 8, 2, 2, {1, 2, 2},
                                           {Nonlinearity::sigmoid, Nonlinearity::identity},
                                           ReadoutKind::flatten, 2);
      init_parameters(model, 777);
      return train(model, mg, data, cfg).loss_trace;
    };
    const auto t1 = run();
    const auto t2 = run();
    CHECK(t1 == t2);
  }
  SUBCASE("linearly separable toy task reaches 100% accuracy") {
    // Class decides which half of the nodes carries the signal mass.
    Rng data_rng(4242);
    LabeledSignals data;
    data.num_classes = 2;
    for (int i = 0; i < 40; ++i) {
      const int label = i % 2;
      Vector x = Vector::Zero(8);
      for (int k = 0; k < 4; ++k) {
        x(label * 4 + k) = 1.0 + 0.1 * data_rng.uniform01();
        x((1 - label) * 4 + k) = 0.05 * data_rng.uniform01();
      }
      data.inputs.push_back(x);
      data.labels.push_back(label);
    }
    ArchitectureConfig arch;
    arch.tree = shared_tree(2, 1);
    arch.n_nodes = 8;
    arch.widths = {1, 2};
    arch.nonlinearities = {Nonlinearity::relu};
    arch.readout_kind = ReadoutKind::flatten;
    arch.readout_output = 2;
    MGNNModel model = build_model(ModelVariant::mgnn, arch);
    init_parameters(model, 31337);
    TrainConfig cfg;
    cfg.epochs = 10;
    cfg.batch_size = 40;
    cfg.adam.lr = 0.05;
    cfg.seed = 7;
    const TrainResult result = train(model, mg, data, cfg);
    for (std::size_t e = 1; e < result.loss_trace.size(); ++e) {
      CHECK(result.loss_trace[e] < result.loss_trace[e - 1]);
    }
    std::vector<int> all(40);
    std::iota(all.begin(), all.end(), 0);
    CHECK(accuracy(model, mg, data, all) == 1.0);
  }
  SUBCASE("single-sample regression to its own input converges") {
    Multigraph tiny;
    tiny.n_nodes = 3;
    tiny.operators.push_back(
        build_shift_operator(3, {{0, 1, 1.0}}, OperatorKind::adjacency));
    ArchitectureConfig arch;
    arch.tree = shared_tree(1, 0);
    arch.n_nodes = 3;
    arch.widths = {1, 1};
    arch.nonlinearities = {Nonlinearity::identity};
    arch.readout_kind = ReadoutKind::none;
    MGNNModel model = build_model(ModelVariant::mgnn, arch);
    init_parameters(model, 5);
    RegressionData data;
    Vector x(3);
    x << 1.0, -2.0, 0.5;
    data.inputs.push_back(x);
    data.targets.push_back(x);
    TrainConfig cfg;
    cfg.loss = LossKind::mse;
    cfg.epochs = 200;
    cfg.batch_size = 1;
    cfg.adam.lr = 0.1;
    cfg.step_decay = 0.97;
    const TrainResult result = train(model, tiny, data, cfg);
    CHECK(result.loss_trace.back() < 1e-6);
  }
  SUBCASE("divergence raises a diagnostic") {
    MGNNModel model = small_random_model(rng, 8, 2, 1, {1, 2}, {Nonlinearity::identity},
                                         ReadoutKind::flatten, 2);
    LabeledSignals data;
    data.num_classes = 2;
    data.inputs.push_back(Vector::Constant(8, 1e154));
    data.labels.push_back(0);
    data.inputs.push_back(Vector::Constant(8, -1e154));
    data.labels.push_back(1);
    TrainConfig cfg;
    cfg.adam.lr = 1e300;
    cfg.epochs = 4;
    CHECK_THROWS_WITH_AS(train(model, mg, data, cfg), doctest::Contains("diverged"),
                         std::runtime_error);
  }
}

TEST_CASE("primal-dual dual variable dynamics") {
  struct MockEnv : ConstrainedEnv {
    double slack;
    explicit MockEnv(double s) : slack(s) {}
    EnvEvaluation evaluate(const MGNNModel& model, double) override {
      EnvEvaluation ev;
      ev.objective = 1.0;
      ev.constraint_slack = slack;
      ev.lagrangian_grads = GradientSet::zeros_like(model);
      return ev;
    }
  };
  MGNNModel model = build_baseline(ModelVariant::mgnn, 1, 1, {1, 1});
  TrainConfig cfg;
  cfg.iterations = 25;
  cfg.dual_lr = 0.1;
  SUBCASE("negative slack keeps lambda at zero") {
    MockEnv env(-1.0);
    const auto trace = train_primal_dual(model, env, cfg);
    for (const double l : trace.lambda) CHECK(l == 0.0);
  }
  SUBCASE("positive slack grows lambda monotonically") {
    MockEnv env(2.0);
    const auto trace = train_primal_dual(model, env, cfg);
    for (std::size_t i = 1; i < trace.lambda.size(); ++i) {
      CHECK(trace.lambda[i] > trace.lambda[i - 1]);
    }
  }
}

TEST_CASE("checkpoint round-trip preserves the forward map") {
  Rng rng(99);
  const auto mg = oracle::random_normalized_multigraph(rng, 6, 2);
  MGNNModel model = small_random_model(rng, 6, 2, 2, {1, 3, 2},
                                       {Nonlinearity::sigmoid, Nonlinearity::relu},
                                       ReadoutKind::flatten, 3);
  model.plan = select_nodes(mg, {6, 6}, SelectionMethod::degree, 0);
  const std::string json = model_to_json(model, {{"note", "test"}});
  const MGNNModel back = model_from_json(json);
  CHECK(back.variant == model.variant);
  CHECK(back.parameter_count() == model.parameter_count());
  const Matrix x = oracle::random_matrix(rng, 6, 1);
  const Matrix a = forward(model, mg, x);
  const Matrix b = forward(back, mg, x);
  CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
}
