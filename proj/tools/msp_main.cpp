// msp — multigraph signal processing toolkit CLI.
//
// Subcommands: tree, spectral, train, eval, wireless, sourceloc. Experiment
// subcommands read a key=value config file with per-flag overrides; see the
// README for the documented keys.

#include "msp/config.hpp"
#include "msp/diffusion_tree.hpp"
#include "msp/mgnn.hpp"
#include "msp/sourceloc.hpp"
#include "msp/spectral.hpp"
#include "msp/wireless.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

namespace {

msp::KeyValueConfig load_config(const std::string& path, const std::vector<std::string>& sets) {
  msp::KeyValueConfig cfg =
      path.empty() ? msp::KeyValueConfig{} : msp::KeyValueConfig::from_file(path);
  cfg.apply_overrides(sets);
  return cfg;
}

msp::SourceLocExperimentConfig sourceloc_config(const msp::KeyValueConfig& cfg) {
  msp::SourceLocExperimentConfig ex;
  ex.task.sbm.n_nodes = cfg.get_int("nodes", ex.task.sbm.n_nodes);
  ex.task.sbm.communities = cfg.get_int("communities", ex.task.sbm.communities);
  ex.task.sbm.intra_density0 = cfg.get_double("intra_density0", ex.task.sbm.intra_density0);
  ex.task.sbm.cross_density0 = cfg.get_double("cross_density0", ex.task.sbm.cross_density0);
  ex.task.sbm.ring_density1 = cfg.get_double("ring_density1", ex.task.sbm.ring_density1);
  ex.task.sbm.other_density1 = cfg.get_double("other_density1", ex.task.sbm.other_density1);
  ex.task.samples = cfg.get_int("samples", ex.task.samples);
  ex.task.max_diffusion = cfg.get_int("max_diffusion", ex.task.max_diffusion);
  ex.task.train_fraction = cfg.get_double("train_fraction", ex.task.train_fraction);
  ex.task.seed = cfg.get_uint64("dataset_seed", ex.task.seed);
  ex.depth = cfg.get_int("depth", ex.depth);
  ex.features = cfg.get_int("features", ex.features);
  ex.splits = cfg.get_int("splits", ex.splits);
  ex.train.epochs = cfg.get_int("epochs", ex.train.epochs);
  ex.train.batch_size = cfg.get_int("batch_size", ex.train.batch_size);
  ex.train.adam.lr = cfg.get_double("lr", ex.train.adam.lr);
  ex.seed = cfg.get_uint64("seed", ex.seed);
  ex.out_dir = cfg.get_string("out_dir", ex.out_dir);
  return ex;
}

msp::WirelessExperimentConfig wireless_config(const msp::KeyValueConfig& cfg) {
  msp::WirelessExperimentConfig ex;
  ex.env.n_transmitters = cfg.get_int("transmitters", ex.env.n_transmitters);
  ex.env.n_receivers = cfg.get_int("receivers", ex.env.n_receivers);
  ex.env.noise = cfg.get_double("omega_sq", ex.env.noise);
  ex.env.p_max = cfg.get_double("p_max", ex.env.p_max);
  ex.p_max_sweep = cfg.get_double_list("p_max_sweep", ex.p_max_sweep);
  ex.train_iterations = cfg.get_int("iterations", ex.train_iterations);
  ex.train_fading = cfg.get_int("train_fading", ex.train_fading);
  ex.eval_configs = cfg.get_int("eval_configs", ex.eval_configs);
  ex.eval_fading = cfg.get_int("eval_fading", ex.eval_fading);
  ex.depth = cfg.get_int("depth", ex.depth);
  ex.features = cfg.get_int("features", ex.features);
  ex.adam.lr = cfg.get_double("lr", ex.adam.lr);
  ex.step_decay = cfg.get_double("step_decay", ex.step_decay);
  ex.dual_lr = cfg.get_double("dual_lr", ex.dual_lr);
  ex.dual_decay = cfg.get_double("dual_decay", ex.dual_decay);
  ex.seed = cfg.get_uint64("seed", ex.seed);
  ex.out_dir = cfg.get_string("out_dir", ex.out_dir);
  return ex;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multigraph signal processing toolkit"};
  app.require_subcommand(1);

  // --- tree ---------------------------------------------------------------
  auto* tree_cmd = app.add_subcommand("tree", "enumerate the pruned diffusion tree");
  std::string tree_input;
  int tree_depth = 2;
  std::string tree_epsilon = "inf";
  bool tree_prune = false;
  tree_cmd->add_option("--input", tree_input, "multigraph edge-list file")->required();
  tree_cmd->add_option("--depth", tree_depth, "maximum diffusion order K");
  tree_cmd->add_option("--epsilon", tree_epsilon, "pruning cutoff (number or 'inf')");
  tree_cmd->add_flag("--prune", tree_prune, "prune with the default cutoff 1e-8");

  // --- spectral -----------------------------------------------------------
  auto* spectral_cmd = app.add_subcommand("spectral", "joint block diagonalization");
  std::string spectral_input;
  bool symmetrize = false;
  double spectral_tol = -1.0;
  std::uint64_t spectral_seed = msp::JbdOptions{}.seed;
  spectral_cmd->add_option("--input", spectral_input, "multigraph edge-list file")->required();
  spectral_cmd->add_flag("--symmetrize", symmetrize, "use (S+Sᵀ)/2 for non-symmetric operators");
  spectral_cmd->add_option("--tol", spectral_tol, "eigenvalue clustering gap");
  spectral_cmd->add_option("--seed", spectral_seed, "commutant sampling seed");

  // --- experiments ----------------------------------------------------------
  std::string config_path, checkpoint_path, variant_name = "mgnn";
  std::vector<std::string> sets;
  auto add_config_opts = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "key=value config file");
    cmd->add_option("--set", sets, "override config entries (key=value)");
  };
  auto* train_cmd = app.add_subcommand("train", "train one model on the synthetic task");
  add_config_opts(train_cmd);
  train_cmd->add_option("--variant", variant_name, "mgnn | merged | parallel");
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on the synthetic task");
  add_config_opts(eval_cmd);
  eval_cmd->add_option("--checkpoint", checkpoint_path, "model checkpoint JSON")->required();
  auto* wireless_cmd = app.add_subcommand("wireless", "multi-band power allocation experiment");
  add_config_opts(wireless_cmd);
  auto* sourceloc_cmd = app.add_subcommand("sourceloc", "source localization experiment");
  add_config_opts(sourceloc_cmd);

  CLI11_PARSE(app, argc, argv);

  try {
    if (tree_cmd->parsed()) {
      const msp::Multigraph mg =
          msp::load_multigraph(tree_input, msp::Normalization::spectral);
      double epsilon = std::numeric_limits<double>::infinity();
      if (tree_epsilon != "inf") {
        epsilon = std::stod(tree_epsilon);
      } else if (tree_prune) {
        epsilon = 1e-8;
      }
      const msp::DiffusionTree tree = msp::generate_pruned_tree(mg, epsilon, tree_depth);
      for (const auto& w : tree.words) std::cout << w.label() << "\n";
      nlohmann::json j;
      j["word_count"] = tree.size();
      j["level_counts"] = tree.level_counts();
      j["epsilon"] = std::isfinite(epsilon) ? nlohmann::json(epsilon) : nlohmann::json();
      nlohmann::json pruned = nlohmann::json::array();
      for (const auto& [a, b] : tree.pruned.pairs) pruned.push_back({a, b});
      j["pruned_pairs"] = std::move(pruned);
      std::cout << j.dump(2) << "\n";
      return 0;
    }

    if (spectral_cmd->parsed()) {
      const msp::Multigraph mg =
          msp::load_multigraph(spectral_input, msp::Normalization::none);
      msp::JbdOptions opts;
      opts.symmetrize = symmetrize;
      opts.cluster_tol = spectral_tol;
      opts.seed = spectral_seed;
      const auto jbd = msp::joint_block_diagonalize(mg, opts);
      nlohmann::json j;
      j["l"] = jbd.num_blocks();
      j["partition"] = jbd.partition;
      j["reconstruction_error"] = jbd.reconstruction_error;
      std::cout << j.dump(2) << "\n";
      return 0;
    }

    if (sourceloc_cmd->parsed()) {
      const auto cfg = sourceloc_config(load_config(config_path, sets));
      const auto result = msp::run_sourceloc_experiment(cfg);
      for (const auto& row : result.rows) {
        std::cout << row.model << ": accuracy " << row.mean_accuracy << " +/- "
                  << row.std_accuracy << " (" << row.parameter_count << " parameters)\n";
      }
      std::cout << "metrics: " << result.metrics_csv << "\n";
      return 0;
    }

    if (wireless_cmd->parsed()) {
      const auto cfg = wireless_config(load_config(config_path, sets));
      const auto result = msp::run_wireless_experiment(cfg);
      for (const auto& row : result.rows) {
        std::cout << row.policy << " @ p_max " << row.p_max << ": sum-rate " << row.mean_sum_rate
                  << ", mean power " << row.mean_power << "\n";
      }
      std::cout << "metrics: " << result.metrics_csv << "\n";
      return 0;
    }

    if (train_cmd->parsed()) {
      const auto kv = load_config(config_path, sets);
      const auto cfg = sourceloc_config(kv);
      const msp::SourceLocTask task =
          msp::generate_sourceloc_dataset(cfg.task, cfg.task.seed);
      msp::ModelVariant variant = variant_name == "merged"
                                      ? msp::ModelVariant::merged
                                      : (variant_name == "parallel" ? msp::ModelVariant::parallel
                                                                    : msp::ModelVariant::mgnn);
      msp::ArchitectureConfig arch;
      arch.tree = std::make_shared<msp::DiffusionTree>(
          msp::make_unpruned_tree(task.mg.num_classes(), cfg.depth));
      arch.n_nodes = task.mg.n_nodes;
      arch.widths = {1, cfg.features, cfg.features};
      arch.nonlinearities = {msp::Nonlinearity::relu, msp::Nonlinearity::relu};
      arch.readout_kind = msp::ReadoutKind::flatten;
      arch.readout_output = cfg.task.sbm.communities;
      msp::MGNNModel model = msp::build_model(variant, arch);
      msp::init_parameters(model, cfg.seed);

      msp::LabeledSignals train_data;
      train_data.num_classes = cfg.task.sbm.communities;
      for (const int i : task.train_idx) {
        train_data.inputs.push_back(task.data.inputs[i]);
        train_data.labels.push_back(task.data.labels[i]);
      }
      msp::TrainConfig tc = cfg.train;
      tc.seed = cfg.seed;
      const msp::TrainResult tr = msp::train(model, task.mg, train_data, tc);

      std::filesystem::create_directories(cfg.out_dir);
      const std::string ckpt = cfg.out_dir + "/" + variant_name + "_checkpoint.json";
      msp::save_model(model, ckpt,
                      {{"experiment", "sourceloc"},
                       {"variant", variant_name},
                       {"seed", std::to_string(cfg.seed)}});
      std::ofstream trace(cfg.out_dir + "/" + variant_name + "_loss.csv", std::ios::binary);
      trace << "step,loss\n";
      for (std::size_t e = 0; e < tr.loss_trace.size(); ++e) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.10g", tr.loss_trace[e]);
        trace << e << "," << buf << "\n";
      }
      const double acc = msp::accuracy(model, task.mg, task.data, task.test_idx);
      std::cout << "test accuracy " << acc << "\ncheckpoint: " << ckpt << "\n";
      return 0;
    }

    if (eval_cmd->parsed()) {
      const auto cfg = sourceloc_config(load_config(config_path, sets));
      const msp::SourceLocTask task =
          msp::generate_sourceloc_dataset(cfg.task, cfg.task.seed);
      const msp::MGNNModel model = msp::load_model(checkpoint_path);
      nlohmann::json j;
      j["checkpoint"] = checkpoint_path;
      j["test_accuracy"] = msp::accuracy(model, task.mg, task.data, task.test_idx);
      j["train_accuracy"] = msp::accuracy(model, task.mg, task.data, task.train_idx);
      std::cout << j.dump(2) << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
