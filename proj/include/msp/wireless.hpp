#pragma once
// Multi-band wireless interference channel: free-space path loss and channel
// gain formulas, Rayleigh fast fading, the sum-rate objective, heuristic
// power policies, and the constrained-learning environment plugging learned
// MGNN policies into the primal-dual trainer.

#include "msp/mgnn.hpp"

#include <string>
#include <vector>

namespace msp {

/// ψ = 20·log10(d) + 20·log10(ν) + 32.45, d in meters, ν in GHz.
double fspl(double distance_m, double freq_ghz);

/// b^pl = 10^(−ψ/10).
double channel_gain(double psi_db);

struct WirelessConfig {
  int n_transmitters = 10;
  int n_receivers = 4;
  double area_half_width = 40.0;  // receivers uniform in [−a, a]²
  double tx_offset = 10.0;        // transmitters within ±offset of their receiver
  std::vector<double> bands_ghz = {2.4, 5.0};
  double noise = 1.0;    // ω², mW
  double p_max = 100.0;  // mW
  int sparsify_top = 20;
};

struct WirelessEnv {
  WirelessConfig cfg;
  std::vector<int> rx_of_tx;            // r(i)
  Matrix tx_pos;                        // T×2
  Matrix rx_pos;                        // R×2
  std::vector<Matrix> path_loss_gain;   // per band, entry (i,j) = b^pl from tx i to rx r(j)
};

/// Fresh system configuration: receiver placement, transmitter assignment
/// and placement, per-band path-loss gains.
WirelessEnv make_wireless_env(const WirelessConfig& cfg, Rng& rng);

/// One fading realization per band: b = b^pl · b^ff with i.i.d. Rayleigh(1)
/// fast fading, rows sparsified to the top `sparsify_top` entries.
std::vector<Matrix> sample_channels(const WirelessEnv& env, Rng& rng);

/// Σ_ν Σ_i log(1 + b_ii q_i / (ω² + Σ_{j≠i} b_ji q_j)) for one realization.
double sum_rate_single(const std::vector<Vector>& q_per_band,
                       const std::vector<Matrix>& channels, double noise);

/// Mean of sum_rate_single over the provided fading realizations.
double sum_rate(const std::vector<Vector>& q_per_band,
                const std::vector<std::vector<Matrix>>& realizations, double noise);

/// d(band capacity)/dq for one band.
Vector sum_rate_gradient_band(const Vector& q, const Matrix& b, double noise);

enum class HeuristicKind { equal, random_half };

/// equal: q_i = P_max/(2T) everywhere. random_half: per band, a seeded
/// half-size subset transmits at P_max/T, the rest stay silent.
std::vector<Vector> heuristic_policy(HeuristicKind kind, const WirelessEnv& env, Rng& rng);

/// Runs the model on one fading realization: operators are the spectrally
/// normalized per-band channel matrices, the input is all ones, and output
/// feature g is the band-g transmit power.
std::vector<Vector> policy_powers(const MGNNModel& model, const std::vector<Matrix>& channels,
                                  ForwardTape* tape = nullptr);

// Constrained environment: each evaluation draws a fresh system
// configuration plus `fading_per_config` fast-fading realizations and
// returns the Lagrangian gradient of −mean sum-rate + λ·mean total power.
class WirelessPolicyEnv : public ConstrainedEnv {
 public:
  WirelessPolicyEnv(const WirelessConfig& cfg, int fading_per_config, std::uint64_t seed)
      : cfg_(cfg), fading_per_config_(fading_per_config), rng_(seed) {}

  EnvEvaluation evaluate(const MGNNModel& model, double lambda) override;

 private:
  WirelessConfig cfg_;
  int fading_per_config_;
  Rng rng_;
};

struct WirelessExperimentConfig {
  WirelessConfig env;
  std::vector<double> p_max_sweep;  // empty = just env.p_max
  int train_iterations = 2000;
  int train_fading = 100;
  int eval_configs = 100;
  int eval_fading = 100;
  int depth = 3;
  int features = 2;  // G_ℓ per layer (per tower for parallel)
  AdamParams adam{0.02, 0.9, 0.999, 1e-8};
  double step_decay = 0.9995;
  double dual_lr = 2e-4;
  double dual_decay = 0.9995;
  std::uint64_t seed = 7;
  std::string out_dir = "out";
};

struct WirelessPolicyResult {
  std::string policy;
  double p_max = 0.0;
  double mean_sum_rate = 0.0;
  double mean_power = 0.0;
  long parameter_count = 0;
};

struct WirelessExperimentResult {
  std::vector<WirelessPolicyResult> rows;
  std::string metrics_csv;
  std::string summary_json;
  std::string plot_csv;
};

WirelessExperimentResult run_wireless_experiment(const WirelessExperimentConfig& cfg);

}  // namespace msp
