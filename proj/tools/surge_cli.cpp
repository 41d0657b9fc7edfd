// Command-line front end: train / compare / theory / histogram / strip.
// Exit codes: 0 success, 1 config error, 2 numerical failure, 3 IO error.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "surge/checkpoint.hpp"
#include "surge/config.hpp"
#include "surge/train.hpp"

namespace {

struct Overrides {
  std::optional<std::string> task;
  std::optional<std::string> method;
  std::optional<std::uint64_t> seed;
  std::optional<long> steps;
  std::optional<double> eta;
  std::optional<std::string> scope;
  bool surge_star = false;
  std::optional<std::string> out_dir;
  std::optional<std::size_t> hidden;
  std::optional<std::size_t> input_dim;
  std::optional<std::string> optimizer;
  std::optional<double> lr;
  std::optional<long> log_every;
  std::optional<int> instrument_layer;
  std::optional<int> workers;
};

surge::ExperimentConfig load_config(const std::string& path, const Overrides& ov) {
  surge::ExperimentConfig cfg =
      path.empty() ? surge::config_from_json(nlohmann::json::object()) : surge::parse_config(path);
  if (ov.task) cfg.task = *ov.task;
  if (ov.method) cfg.methods = {*ov.method};
  if (ov.seed) cfg.seeds = {*ov.seed};
  if (ov.steps) cfg.steps = *ov.steps;
  if (ov.eta) cfg.eta = *ov.eta;
  if (ov.scope) cfg.scope = *ov.scope;
  if (ov.surge_star) cfg.surge_star = true;
  if (ov.out_dir) cfg.out_dir = *ov.out_dir;
  if (ov.hidden) cfg.hidden = *ov.hidden;
  if (ov.input_dim) cfg.input_dim = *ov.input_dim;
  if (ov.optimizer) cfg.optimizer.kind = *ov.optimizer;
  if (ov.lr) cfg.optimizer.lr = *ov.lr;
  if (ov.log_every) cfg.log_every = *ov.log_every;
  if (ov.instrument_layer) cfg.instrument_layer = *ov.instrument_layer;
  if (ov.workers) cfg.workers = *ov.workers;
  cfg.validate();
  return cfg;
}

void add_common_flags(CLI::App* cmd, std::string& config_path, Overrides& ov) {
  cmd->add_option("--config", config_path, "JSON config file");
  cmd->add_option("--task", ov.task, "beale | classifier");
  cmd->add_option("--method", ov.method, "restrict to one method tag");
  cmd->add_option("--seed", ov.seed, "restrict to one seed");
  cmd->add_option("--steps", ov.steps, "training steps");
  cmd->add_option("--eta", ov.eta, "base scaling coefficient");
  cmd->add_option("--scope", ov.scope, "all | clipped_only | in_range_only");
  cmd->add_flag("--surge-star", ov.surge_star, "1x1 auxiliary kernels on conv layers");
  cmd->add_option("--out", ov.out_dir, "output directory");
  cmd->add_option("--hidden", ov.hidden, "hidden width");
  cmd->add_option("--input-dim", ov.input_dim, "toy input dimension");
  cmd->add_option("--optimizer", ov.optimizer, "sgd | adam");
  cmd->add_option("--lr", ov.lr, "learning rate");
  cmd->add_option("--log-every", ov.log_every, "metric thinning");
  cmd->add_option("--instrument-layer", ov.instrument_layer,
                  "record activation gradients of this block");
  cmd->add_option("--workers", ov.workers, "parallel (method, seed) workers");
}

int run_train(const std::string& config_path, const Overrides& ov) {
  const surge::ExperimentConfig cfg = load_config(config_path, ov);
  if (cfg.task == "theory") throw surge::ConfigError("train: use the theory subcommand");
  for (const std::string& m : cfg.methods)
    for (std::uint64_t seed : cfg.seeds) {
      const surge::RunResult r = surge::run_training(cfg, m, seed);
      std::cout << m << " seed " << seed << ": final loss " << r.final_loss;
      if (!std::isnan(r.final_dist)) std::cout << ", dist to optimum " << r.final_dist;
      if (!std::isnan(r.test_accuracy)) std::cout << ", test acc " << r.test_accuracy;
      std::cout << "\n  metrics: " << r.metrics_path << "\n  checkpoint: " << r.checkpoint_path
                << "\n";
    }
  return 0;
}

int run_compare(const std::string& config_path, const Overrides& ov) {
  const surge::ExperimentConfig cfg = load_config(config_path, ov);
  if (!cfg.eta_sweep.empty()) {
    const surge::SweepTable table = surge::eta_sweep(cfg);
    std::cout << "eta sweep written to " << table.path << "\n";
    for (const surge::SweepRow& r : table.rows)
      std::cout << "  " << r.label << ": median loss " << r.median_final_loss << ", completed "
                << r.completed << ", nan aborts " << r.nan_aborts << "\n";
    return 0;
  }
  const bool with_noise =
      std::find(cfg.methods.begin(), cfg.methods.end(), "STE+Noise") != cfg.methods.end() &&
      std::find(cfg.methods.begin(), cfg.methods.end(), "STE+SURGE") != cfg.methods.end() &&
      std::find(cfg.methods.begin(), cfg.methods.end(), "STE") != cfg.methods.end();
  if (with_noise) {
    const surge::NoiseContrast nc = surge::noise_contrast(cfg);
    std::cout << "summary: " << nc.summary.summary_json_path << "\n";
    std::cout << "trajectory variance (median over seeds): STE " << nc.ste_variance
              << ", STE+Noise " << nc.noise_variance << ", STE+SURGE " << nc.surge_variance
              << "\n";
  } else {
    const surge::CompareSummary s = surge::compare_methods(cfg);
    std::cout << "summary: " << s.summary_json_path << "\n";
    for (const surge::MethodSummary& m : s.methods)
      std::cout << "  " << m.method << ": median final loss " << m.median_final_loss << "\n";
  }
  return 0;
}

int run_theory(std::size_t d, std::size_t samples, std::uint64_t seed, std::string out) {
  const surge::TheoryReport rep = surge::run_theory_experiment(d, samples, seed);
  const nlohmann::json j = surge::theory_report_to_json(rep);
  if (out.empty()) out = "theory_d" + std::to_string(d) + "_s" + std::to_string(seed) + ".json";
  std::filesystem::path p(out);
  if (p.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(p.parent_path(), ec);
  }
  std::ofstream f(out, std::ios::binary);
  f << j.dump(2) << '\n';
  if (!f) throw surge::IoError("theory: cannot write '" + out + "'");
  std::cout << "lambda* analytic " << rep.lambda_analytic << ", grid oracle "
            << rep.lambda_oracle << ", relative error " << rep.relative_error << "\n"
            << "report: " << out << "\n";
  return 0;
}

int run_histogram(const std::string& run_dir, const std::string& method, std::uint64_t seed,
                  int layer, std::size_t bins, std::string out) {
  const auto grads = surge::load_act_grads(run_dir, method, seed, layer);
  const surge::HistogramResult h = surge::gradient_histogram(grads, bins);
  if (out.empty()) out = run_dir + "/histogram_l" + std::to_string(layer) + ".json";
  std::ofstream f(out, std::ios::binary);
  f << surge::histogram_to_json(h).dump(2) << '\n';
  if (!f) throw surge::IoError("histogram: cannot write '" + out + "'");
  std::cout << "zero-gradient fraction: " << h.zero_fraction << "\nhistogram: " << out << "\n";
  return 0;
}

int run_strip(const std::string& in, const std::string& out) {
  const surge::Model m = surge::load_checkpoint(in);
  surge::export_checkpoint(m, out, /*strip=*/true);
  const auto before = std::filesystem::file_size(in);
  const auto after = std::filesystem::file_size(out);
  std::cout << "stripped " << in << " (" << before << " bytes) -> " << out << " (" << after
            << " bytes)\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SURGE: binarized layers with dual-path gradient compensation"};
  app.require_subcommand(1);

  std::string config_path;
  Overrides ov;

  CLI::App* train = app.add_subcommand("train", "run training for each (method, seed)");
  add_common_flags(train, config_path, ov);

  CLI::App* compare = app.add_subcommand("compare", "multi-method comparison or eta sweep");
  add_common_flags(compare, config_path, ov);

  std::size_t theory_d = 32, theory_samples = 100000, hist_bins = 101;
  std::uint64_t theory_seed = 1, hist_seed = 1;
  std::string theory_out, hist_run, hist_method = "STE", hist_out, strip_in, strip_out;
  int hist_layer = 1;

  CLI::App* theory = app.add_subcommand("theory", "Monte-Carlo optimal-scale verification");
  theory->add_option("--d", theory_d, "gradient dimension");
  theory->add_option("--samples", theory_samples, "Monte-Carlo sample count");
  theory->add_option("--seed", theory_seed, "seed");
  theory->add_option("--out", theory_out, "report path");

  CLI::App* hist = app.add_subcommand("histogram", "activation-gradient distribution of a run");
  hist->add_option("--run", hist_run, "run output directory")->required();
  hist->add_option("--layer", hist_layer, "instrumented block index");
  hist->add_option("--method", hist_method, "method tag of the run");
  hist->add_option("--seed", hist_seed, "seed of the run");
  hist->add_option("--bins", hist_bins, "bin count");
  hist->add_option("--out", hist_out, "report path");

  CLI::App* strip = app.add_subcommand("strip", "remove auxiliary branches from a checkpoint");
  strip->add_option("--in", strip_in, "input checkpoint")->required();
  strip->add_option("--out", strip_out, "output checkpoint")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) return run_train(config_path, ov);
    if (compare->parsed()) return run_compare(config_path, ov);
    if (theory->parsed()) return run_theory(theory_d, theory_samples, theory_seed, theory_out);
    if (hist->parsed())
      return run_histogram(hist_run, hist_method, hist_seed, hist_layer, hist_bins, hist_out);
    if (strip->parsed()) return run_strip(strip_in, strip_out);
  } catch (const surge::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const surge::NumericalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const surge::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
