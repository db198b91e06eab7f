#include "msp/wireless.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace msp {

double fspl(double distance_m, double freq_ghz) {
  if (distance_m <= 0.0) throw std::invalid_argument("distance must be positive");
  if (freq_ghz <= 0.0) throw std::invalid_argument("frequency must be positive");
  return 20.0 * std::log10(distance_m) + 20.0 * std::log10(freq_ghz) + 32.45;
}

double channel_gain(double psi_db) { return std::pow(10.0, -psi_db / 10.0); }

WirelessEnv make_wireless_env(const WirelessConfig& cfg, Rng& rng) {
  if (cfg.n_transmitters < 1 || cfg.n_receivers < 1) {
    throw std::invalid_argument("need at least one transmitter and receiver");
  }
  WirelessEnv env;
  env.cfg = cfg;
  const int t = cfg.n_transmitters;
  const int r = cfg.n_receivers;

  env.rx_pos.resize(r, 2);
  for (int i = 0; i < r; ++i) {
    env.rx_pos(i, 0) = rng.uniform(-cfg.area_half_width, cfg.area_half_width);
    env.rx_pos(i, 1) = rng.uniform(-cfg.area_half_width, cfg.area_half_width);
  }
  env.rx_of_tx.resize(t);
  for (int i = 0; i < t; ++i) env.rx_of_tx[i] = static_cast<int>(rng.uniform_int(0, r - 1));
  env.tx_pos.resize(t, 2);
  for (int i = 0; i < t; ++i) {
    env.tx_pos(i, 0) = env.rx_pos(env.rx_of_tx[i], 0) + rng.uniform(-cfg.tx_offset, cfg.tx_offset);
    env.tx_pos(i, 1) = env.rx_pos(env.rx_of_tx[i], 1) + rng.uniform(-cfg.tx_offset, cfg.tx_offset);
  }

  env.path_loss_gain.clear();
  for (const double band : cfg.bands_ghz) {
    Matrix gain(t, t);
    for (int i = 0; i < t; ++i) {
      for (int j = 0; j < t; ++j) {
        const double dx = env.tx_pos(i, 0) - env.rx_pos(env.rx_of_tx[j], 0);
        const double dy = env.tx_pos(i, 1) - env.rx_pos(env.rx_of_tx[j], 1);
        const double d = std::max(std::sqrt(dx * dx + dy * dy), 1e-9);
        gain(i, j) = channel_gain(fspl(d, band));
      }
    }
    env.path_loss_gain.push_back(std::move(gain));
  }
  return env;
}

std::vector<Matrix> sample_channels(const WirelessEnv& env, Rng& rng) {
  const int t = env.cfg.n_transmitters;
  std::vector<Matrix> channels;
  channels.reserve(env.path_loss_gain.size());
  std::vector<int> idx(t);
  for (const auto& pl : env.path_loss_gain) {
    Matrix b(t, t);
    for (int i = 0; i < t; ++i) {
      for (int j = 0; j < t; ++j) b(i, j) = pl(i, j) * rng.rayleigh(1.0);
    }
    if (t > env.cfg.sparsify_top) {
      for (int i = 0; i < t; ++i) {
        std::iota(idx.begin(), idx.end(), 0);
        std::stable_sort(idx.begin(), idx.end(),
                         [&](int a, int c) { return b(i, a) > b(i, c); });
        for (int k = env.cfg.sparsify_top; k < t; ++k) b(i, idx[k]) = 0.0;
      }
    }
    channels.push_back(std::move(b));
  }
  return channels;
}

double sum_rate_single(const std::vector<Vector>& q_per_band,
                       const std::vector<Matrix>& channels, double noise) {
  if (q_per_band.size() != channels.size()) {
    throw std::invalid_argument("band count mismatch between powers and channels");
  }
  double total = 0.0;
  for (std::size_t nu = 0; nu < channels.size(); ++nu) {
    const Vector& q = q_per_band[nu];
    const Matrix& b = channels[nu];
    if ((q.array() < 0.0).any()) throw std::invalid_argument("negative transmit power");
    const Vector interference = b.transpose() * q;  // Σ_j b_ji q_j, including j = i
    for (int i = 0; i < q.size(); ++i) {
      const double own = b(i, i) * q(i);
      const double denom = noise + interference(i) - own;
      total += std::log(1.0 + own / denom);
    }
  }
  return total;
}

double sum_rate(const std::vector<Vector>& q_per_band,
                const std::vector<std::vector<Matrix>>& realizations, double noise) {
  if (realizations.empty()) throw std::invalid_argument("need at least one realization");
  double total = 0.0;
  for (const auto& channels : realizations) total += sum_rate_single(q_per_band, channels, noise);
  return total / static_cast<double>(realizations.size());
}

Vector sum_rate_gradient_band(const Vector& q, const Matrix& b, double noise) {
  const Vector interference = b.transpose() * q;
  const int t = static_cast<int>(q.size());
  Vector u(t), v(t);
  for (int i = 0; i < t; ++i) {
    const double own = b(i, i) * q(i);
    const double denom = noise + interference(i) - own;
    u(i) = 1.0 / (denom + own);
    v(i) = 1.0 / denom;
  }
  // d/dq_i Σ_k c_k = b_ii v_i + [B(u − v)]_i  (own-channel term plus the
  // interference it inflicts elsewhere; algebra collapses the k = i case).
  Vector grad = b * (u - v);
  for (int i = 0; i < t; ++i) grad(i) += b(i, i) * v(i);
  return grad;
}

std::vector<Vector> heuristic_policy(HeuristicKind kind, const WirelessEnv& env, Rng& rng) {
  const int t = env.cfg.n_transmitters;
  const int bands = static_cast<int>(env.cfg.bands_ghz.size());
  std::vector<Vector> q(bands, Vector::Zero(t));
  switch (kind) {
    case HeuristicKind::equal: {
      const double each = env.cfg.p_max / (2.0 * t);
      for (auto& band : q) band.setConstant(each);
      break;
    }
    case HeuristicKind::random_half: {
      const double each = env.cfg.p_max / t;
      for (auto& band : q) {
        std::vector<int> ids(t);
        std::iota(ids.begin(), ids.end(), 0);
        rng.shuffle(ids);
        for (int k = 0; k < t / 2; ++k) band(ids[k]) = each;
      }
      break;
    }
  }
  return q;
}

std::vector<Vector> policy_powers(const MGNNModel& model, const std::vector<Matrix>& channels,
                                  ForwardTape* tape) {
  const int t = static_cast<int>(channels.front().rows());
  Multigraph mg;
  mg.n_nodes = t;
  for (const auto& b : channels) {
    ShiftOperator op;
    op.kind = OperatorKind::custom;
    op.matrix = b;
    mg.operators.push_back(spectral_normalize(op));
  }
  const Matrix out = forward(model, mg, Matrix::Ones(t, 1), 1, tape);
  std::vector<Vector> q;
  q.reserve(out.cols());
  for (int nu = 0; nu < out.cols(); ++nu) q.push_back(out.col(nu));
  return q;
}

EnvEvaluation WirelessPolicyEnv::evaluate(const MGNNModel& model, double lambda) {
  const WirelessEnv env = make_wireless_env(cfg_, rng_);
  const int bands = static_cast<int>(cfg_.bands_ghz.size());
  EnvEvaluation ev;
  ev.lagrangian_grads = GradientSet::zeros_like(model);
  double total_rate = 0.0;
  double total_power = 0.0;
  const double inv = 1.0 / static_cast<double>(fading_per_config_);

  for (int r = 0; r < fading_per_config_; ++r) {
    const std::vector<Matrix> channels = sample_channels(env, rng_);
    ForwardTape tape;
    const std::vector<Vector> q = policy_powers(model, channels, &tape);
    double rate = 0.0;
    Matrix upstream(q.front().size(), bands);
    for (int nu = 0; nu < bands; ++nu) {
      rate += sum_rate_single({q.begin() + nu, q.begin() + nu + 1},
                              {channels.begin() + nu, channels.begin() + nu + 1}, cfg_.noise);
      const Vector grad = sum_rate_gradient_band(q[nu], channels[nu], cfg_.noise);
      upstream.col(nu) = inv * (-grad.array() + lambda).matrix();
      total_power += inv * q[nu].sum();
    }
    total_rate += inv * rate;
    const GradientSet grads = backward(model, tape, upstream);
    ev.lagrangian_grads.accumulate(grads);
  }

  ev.objective = total_rate;
  ev.constraint_slack = total_power - cfg_.p_max;
  return ev;
}

// ---------------------------------------------------------------------------
// Experiment harness

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

MGNNModel make_policy(ModelVariant variant, const WirelessExperimentConfig& cfg,
                      std::uint64_t init_seed) {
  const int bands = static_cast<int>(cfg.env.bands_ghz.size());
  ArchitectureConfig arch;
  arch.tree = std::make_shared<DiffusionTree>(make_unpruned_tree(bands, cfg.depth));
  arch.n_nodes = cfg.env.n_transmitters;
  arch.widths = {1, cfg.features, bands};
  if (variant == ModelVariant::parallel) {
    // Towers stay sigmoid; the per-node combiner maps the concatenated tower
    // features to one power per band and its ReLU keeps them nonnegative.
    arch.nonlinearities = {Nonlinearity::sigmoid, Nonlinearity::sigmoid};
    arch.readout_kind = ReadoutKind::per_node;
    arch.readout_output = bands;
    arch.readout_final = Nonlinearity::relu;
  } else {
    arch.nonlinearities = {Nonlinearity::sigmoid, Nonlinearity::relu};
    arch.readout_kind = ReadoutKind::none;
  }
  MGNNModel model = build_model(variant, arch);
  init_parameters(model, init_seed);
  return model;
}

struct EvalOutcome {
  double mean_rate = 0.0;
  double mean_power = 0.0;
};

template <typename PolicyFn>
EvalOutcome evaluate_policy(const WirelessExperimentConfig& cfg, const WirelessConfig& env_cfg,
                            std::uint64_t eval_seed, PolicyFn&& policy) {
  Rng rng(eval_seed);
  double rate = 0.0, power = 0.0;
  long count = 0;
  for (int c = 0; c < cfg.eval_configs; ++c) {
    const WirelessEnv env = make_wireless_env(env_cfg, rng);
    for (int f = 0; f < cfg.eval_fading; ++f) {
      const std::vector<Matrix> channels = sample_channels(env, rng);
      const std::vector<Vector> q = policy(env, channels, c);
      rate += sum_rate_single(q, channels, env_cfg.noise);
      for (const auto& band : q) power += band.sum();
      ++count;
    }
  }
  return {rate / count, power / count};
}

}  // namespace

WirelessExperimentResult run_wireless_experiment(const WirelessExperimentConfig& cfg) {
  namespace fs = std::filesystem;
  fs::create_directories(cfg.out_dir);

  std::vector<double> budgets = cfg.p_max_sweep;
  if (budgets.empty()) budgets.push_back(cfg.env.p_max);

  WirelessExperimentResult result;
  std::ostringstream metrics, plot, trace_csv;
  metrics << "policy,p_max,mean_sum_rate,mean_power,parameters,seed\n";
  plot << "p_max,policy,mean_sum_rate\n";
  trace_csv << "p_max,policy,step,objective,lambda,slack\n";

  const std::vector<std::pair<std::string, ModelVariant>> learned = {
      {"mgnn", ModelVariant::mgnn},
      {"merged", ModelVariant::merged},
      {"parallel", ModelVariant::parallel}};

  for (const double p_max : budgets) {
    WirelessConfig env_cfg = cfg.env;
    env_cfg.p_max = p_max;
    const std::uint64_t eval_seed = cfg.seed * 7919 + 17;

    for (const auto& [name, variant] : learned) {
      MGNNModel model = make_policy(variant, cfg, cfg.seed + 1000 + static_cast<int>(variant));
      WirelessPolicyEnv env(env_cfg, cfg.train_fading, cfg.seed + 31);
      TrainConfig tc;
      tc.loss = LossKind::negative_sum_rate;
      tc.adam = cfg.adam;
      tc.iterations = cfg.train_iterations;
      tc.step_decay = cfg.step_decay;
      tc.dual_lr = cfg.dual_lr;
      tc.dual_decay = cfg.dual_decay;
      tc.seed = cfg.seed;
      const PrimalDualTrace trace = train_primal_dual(model, env, tc);
      for (std::size_t s = 0; s < trace.objective.size(); ++s) {
        trace_csv << fmt(p_max) << "," << name << "," << s << "," << fmt(trace.objective[s]) << ","
                  << fmt(trace.lambda[s]) << "," << fmt(trace.slack[s]) << "\n";
      }

      const EvalOutcome out = evaluate_policy(
          cfg, env_cfg, eval_seed,
          [&](const WirelessEnv&, const std::vector<Matrix>& channels, int) {
            return policy_powers(model, channels, nullptr);
          });
      result.rows.push_back({name, p_max, out.mean_rate, out.mean_power, model.parameter_count()});
      metrics << name << "," << fmt(p_max) << "," << fmt(out.mean_rate) << ","
              << fmt(out.mean_power) << "," << model.parameter_count() << "," << cfg.seed << "\n";
      plot << fmt(p_max) << "," << name << "," << fmt(out.mean_rate) << "\n";

      save_model(model, cfg.out_dir + "/wireless_" + name + "_p" + fmt(p_max) + ".json",
                 {{"experiment", "wireless"}, {"p_max", fmt(p_max)}, {"seed", fmt(double(cfg.seed))}});
    }

    const std::vector<std::pair<std::string, HeuristicKind>> heuristics = {
        {"equal", HeuristicKind::equal}, {"random_half", HeuristicKind::random_half}};
    for (const auto& [name, kind] : heuristics) {
      // One seeded subset per configuration, shared across its realizations.
      Rng half_rng(cfg.seed + 997);
      std::vector<std::vector<Vector>> per_config_q;
      const EvalOutcome out = evaluate_policy(
          cfg, env_cfg, eval_seed,
          [&](const WirelessEnv& env, const std::vector<Matrix>&, int config_idx) {
            while (static_cast<int>(per_config_q.size()) <= config_idx) {
              per_config_q.push_back(heuristic_policy(kind, env, half_rng));
            }
            return per_config_q[config_idx];
          });
      result.rows.push_back({name, p_max, out.mean_rate, out.mean_power, 0});
      metrics << name << "," << fmt(p_max) << "," << fmt(out.mean_rate) << ","
              << fmt(out.mean_power) << ",0," << cfg.seed << "\n";
      plot << fmt(p_max) << "," << name << "," << fmt(out.mean_rate) << "\n";
    }
  }

  nlohmann::json summary;
  summary["experiment"] = "wireless";
  summary["transmitters"] = cfg.env.n_transmitters;
  summary["receivers"] = cfg.env.n_receivers;
  summary["noise"] = cfg.env.noise;
  summary["train_iterations"] = cfg.train_iterations;
  summary["seed"] = cfg.seed;
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : result.rows) {
    rows.push_back({{"policy", row.policy},
                    {"p_max", row.p_max},
                    {"mean_sum_rate", row.mean_sum_rate},
                    {"mean_power", row.mean_power},
                    {"parameters", row.parameter_count}});
  }
  summary["rows"] = std::move(rows);

  result.metrics_csv = cfg.out_dir + "/wireless_metrics.csv";
  result.plot_csv = cfg.out_dir + "/wireless_plot.csv";
  result.summary_json = cfg.out_dir + "/wireless_summary.json";
  std::ofstream(result.metrics_csv, std::ios::binary) << metrics.str();
  std::ofstream(result.plot_csv, std::ios::binary) << plot.str();
  std::ofstream(cfg.out_dir + "/wireless_trace.csv", std::ios::binary) << trace_csv.str();
  std::ofstream(result.summary_json, std::ios::binary) << summary.dump(2) << "\n";
  return result;
}

}  // namespace msp
