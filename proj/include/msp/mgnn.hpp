#pragma once
// Multigraph convolutional neural networks: stacked multigraph perceptrons
// with optional selection sampling/pooling, a readout head, hand-derived
// reverse-mode gradients, ADAM training, and the primal-dual constrained
// variant. The merged and parallel graph-NN baselines are expressed as
// coefficient restrictions (word subsets and block masks) of the same model,
// so every architecture shares one forward/backward path.

#include "msp/filters.hpp"
#include "msp/sampling.hpp"

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace msp {

enum class Nonlinearity { relu, sigmoid, tanh_act, identity };
enum class ModelVariant { mgnn, merged, parallel };
enum class ReadoutKind { none, flatten, per_node };
enum class LossKind { cross_entropy, mse, negative_sum_rate };

Matrix apply_nonlinearity(Nonlinearity kind, const Matrix& z);
Matrix nonlinearity_derivative(Nonlinearity kind, const Matrix& z);  // relu'(0) = 0

struct LayerSpec {
  MimoFilter filter;
  Nonlinearity nonlinearity = Nonlinearity::relu;
  std::optional<PoolConfig> pooling;
  int selected_nodes = 0;  // N_ℓ; 0 means the full node set
  // Optional 0/1 trainability masks aligned with the tree words; empty means
  // every present coefficient is trainable.
  std::vector<Matrix> masks;
};

struct AffineLayer {
  Matrix weight;  // out×in
  Vector bias;
};

struct ReadoutSpec {
  ReadoutKind kind = ReadoutKind::none;
  // Hidden affine layers use ReLU; the final layer applies
  // final_nonlinearity (identity unless configured otherwise).
  std::vector<AffineLayer> layers;
  Nonlinearity final_nonlinearity = Nonlinearity::identity;
};

struct MGNNModel {
  ModelVariant variant = ModelVariant::mgnn;
  int input_features = 1;
  std::vector<LayerSpec> layers;
  ReadoutSpec readout;
  std::optional<SelectionPlan> plan;  // sampling plan; levels() must equal L

  int num_layers() const { return static_cast<int>(layers.size()); }
  long parameter_count() const;  // trainable scalars, mask-aware
};

struct LayerTape {
  Matrix input;  // post-pool / post-sample signal entering the convolution
  Matrix prepool;  // signal before pooling (kept only when pooling is active)
  std::vector<std::vector<int>> neighborhoods;
  std::vector<Matrix> diffused;  // per tree word
  Matrix preactivation;
  Matrix output;
};

struct ReadoutTape {
  std::vector<Matrix> inputs;  // input to each affine layer, in_dim×batch
  Matrix final_pre;            // pre final_nonlinearity
};

struct ForwardTape {
  int batch = 1;
  std::vector<std::vector<Matrix>> layer_operators;  // operators per layer
  std::vector<LayerTape> layers;
  ReadoutTape readout;
  Matrix output;
};

struct GradientSet {
  // coeff_grads[layer][word]; 0x0 where the word carries no coefficient.
  std::vector<std::vector<Matrix>> coeff_grads;
  std::vector<AffineLayer> readout_grads;

  static GradientSet zeros_like(const MGNNModel& model);
  void accumulate(const GradientSet& other, double scale = 1.0);
};

/// Batched forward pass. x packs `batch` samples side by side as
/// N×(batch·F₀). Output shape: flatten readout → out_dim×batch; otherwise
/// N_L×(batch·G') where G' is the final feature width.
Matrix forward(const MGNNModel& model, const Multigraph& mg, const Matrix& x, int batch = 1,
               ForwardTape* tape = nullptr);

/// Exact reverse-mode gradients for the upstream d(loss)/d(output), summed
/// over the batch. Upstream must match the forward output shape.
GradientSet backward(const MGNNModel& model, const ForwardTape& tape, const Matrix& upstream);

/// The convolutional stack alone: no sampling, no pooling, no readout.
Matrix conv_stack(const MGNNModel& model, const Multigraph& mg, const Matrix& x);

/// ‖stack(Pᵀ·) − Pᵀ·stack(·)‖_∞ over the pre-readout stack.
double check_permutation_equivariance(const MGNNModel& model, const Multigraph& mg,
                                      const Matrix& x, const Permutation& p);

// ---------------------------------------------------------------------------
// Architecture construction

struct ArchitectureConfig {
  std::shared_ptr<const DiffusionTree> tree;
  int n_nodes = 0;
  std::vector<int> widths;  // F₀, G₁, …, G_L (per tower for the parallel variant)
  std::vector<Nonlinearity> nonlinearities;  // one per layer
  ReadoutKind readout_kind = ReadoutKind::none;
  int readout_output = 0;
  Nonlinearity readout_final = Nonlinearity::identity;
};

/// mgnn: every tree word trainable. merged: only the identity and pure
/// powers S_i^k. parallel: pure powers with block masks making the feature
/// streams of different classes independent (one tower per class, combined
/// only by the readout).
MGNNModel build_model(ModelVariant variant, const ArchitectureConfig& arch);

/// Convenience wrapper over an unpruned tree; readout left empty.
MGNNModel build_baseline(ModelVariant variant, int m, int depth, const std::vector<int>& widths);

/// Deterministic Glorot-style init: per-word matrices uniform within
/// ±sqrt(6/(F+G)) scaled by 1/(number of active words); readout layers
/// uniform within ±sqrt(6/(fan_in+fan_out)), zero bias.
void init_parameters(MGNNModel& model, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Training

struct AdamParams {
  double lr = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct TrainConfig {
  LossKind loss = LossKind::cross_entropy;
  AdamParams adam;
  int epochs = 10;
  int iterations = 1000;  // primal-dual only
  int batch_size = 32;
  std::uint64_t seed = 1;
  double step_decay = 1.0;  // geometric per-step factor on the primal step
  double dual_lr = 0.0;
  double dual_decay = 1.0;   // geometric per-step factor on the dual step
  double lambda_init = 0.0;
};

class AdamOptimizer {
 public:
  AdamOptimizer(const MGNNModel& model, const AdamParams& params);
  /// One update with step size params.lr * scale.
  void step(MGNNModel& model, const GradientSet& grads, double scale = 1.0);

 private:
  AdamParams params_;
  GradientSet m_, v_;
  long t_ = 0;
};

struct LabeledSignals {
  std::vector<Matrix> inputs;  // each N×F₀
  std::vector<int> labels;
  int num_classes = 0;
};

struct RegressionData {
  std::vector<Matrix> inputs;
  std::vector<Matrix> targets;  // shaped like the model output per sample
};

struct LossValue {
  double value = 0.0;
  Matrix upstream;  // d(mean loss)/d(output)
};

/// Mean softmax cross-entropy over the batch; logits are out_dim×batch.
LossValue cross_entropy_loss(const Matrix& logits, const int* labels, int batch);
/// Mean of 0.5‖out − target‖² over the batch.
LossValue mse_loss(const Matrix& out, const Matrix& target, int batch);

struct TrainResult {
  std::vector<double> loss_trace;  // one entry per epoch (mean batch loss)
};

TrainResult train(MGNNModel& model, const Multigraph& mg, const LabeledSignals& data,
                  const TrainConfig& cfg);
TrainResult train(MGNNModel& model, const Multigraph& mg, const RegressionData& data,
                  const TrainConfig& cfg);

double accuracy(const MGNNModel& model, const Multigraph& mg, const LabeledSignals& data,
                const std::vector<int>& indices);

// Constrained learning: the environment draws a problem instance, evaluates
// the policy, and returns the Lagrangian gradient d(−objective +
// λ·constraint)/dθ together with the objective and constraint slack
// (constraint value minus budget).
struct EnvEvaluation {
  double objective = 0.0;
  double constraint_slack = 0.0;
  GradientSet lagrangian_grads;
};

class ConstrainedEnv {
 public:
  virtual ~ConstrainedEnv() = default;
  virtual EnvEvaluation evaluate(const MGNNModel& model, double lambda) = 0;
};

struct PrimalDualTrace {
  std::vector<double> objective;
  std::vector<double> slack;
  std::vector<double> lambda;
};

/// Alternates ADAM steps on the Lagrangian with projected dual ascent
/// λ ← max(0, λ + η_d·slack); both step sizes decay geometrically.
PrimalDualTrace train_primal_dual(MGNNModel& model, ConstrainedEnv& env, const TrainConfig& cfg);

// ---------------------------------------------------------------------------
// Checkpoints

std::string model_to_json(const MGNNModel& model,
                          const std::map<std::string, std::string>& metadata = {});
MGNNModel model_from_json(const std::string& text);
void save_model(const MGNNModel& model, const std::string& path,
                const std::map<std::string, std::string>& metadata = {});
MGNNModel load_model(const std::string& path);

}  // namespace msp
