#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "surge/checkpoint.hpp"
#include "surge/config.hpp"
#include "surge/dpgc.hpp"
#include "surge/metrics.hpp"
#include "surge/models.hpp"
#include "surge/tape.hpp"
#include "surge/theory.hpp"

namespace surge {

inline constexpr const char* kVersion = "0.1.0";

struct NumericalError : std::runtime_error {
  long step;
  NumericalError(long s, const std::string& what)
      : std::runtime_error("numerical failure at step " + std::to_string(s) + ": " + what),
        step(s) {}
};

// Per-step scale-update trace of one compensated layer.
struct AgsTraceRow {
  long step = 0;
  int layer = 0;
  double gb_norm = 0.0;
  double ga_norm = 0.0;
  double lambda_used = 0.0;  // consumed by this step's forward
  double lambda_next = 0.0;  // produced by this step's update
};

struct RunResult {
  std::string method;
  std::uint64_t seed = 0;
  std::vector<MetricRow> rows;
  std::vector<double> losses;  // every step, independent of log thinning
  std::vector<AgsTraceRow> ags_trace;
  std::vector<std::string> events;  // phase sequence when instrumented
  std::vector<std::vector<double>> act_grads;  // per step, instrumented layer
  double final_loss = std::nan("");
  double final_dist = std::nan("");
  double train_accuracy = std::nan("");
  double test_accuracy = std::nan("");
  Model model;
  std::string metrics_path;
  std::string checkpoint_path;
};

namespace detail {

inline std::vector<int> binarizable_block_indices(const Model& m) {
  std::vector<int> out;
  for (std::size_t i = 0; i < m.blocks.size(); ++i)
    if (m.blocks[i].binarized) out.push_back(static_cast<int>(i));
  return out;
}

inline double frob(const Tensor& t) { return l2_norm_value(t); }

inline std::optional<double> safe_cosine(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) return std::nullopt;
  const double na = l2_norm_value(a), nb = l2_norm_value(b);
  if (na == 0.0 || nb == 0.0) return std::nullopt;
  return dot(a, b) / (na * nb);
}

struct TaskData {
  Dataset data;          // classifier
  Tensor toy_input;      // beale
};

inline Dataset load_task_dataset(const ExperimentConfig& cfg, std::uint64_t seed) {
  const DatasetSpec& d = cfg.dataset;
  if (d.kind == "two_moons")
    return two_moons(d.n_points, d.noise_std, d.train_fraction, seed);
  if (d.kind == "blobs")
    return gaussian_blobs(d.n_points, d.noise_std, d.train_fraction, seed);
  return load_csv_dataset(d.path, d.train_fraction);
}

// For classifier tasks the input width follows the dataset, so callers that
// prebuild a model pass the data along.
inline Model build_task_model(const ExperimentConfig& cfg, Method method, std::uint64_t seed,
                              const Dataset* data = nullptr) {
  const SurgeOptions opt = cfg.surge_options();
  if (cfg.task == "beale")
    return build_toy_model(cfg.hidden, method, seed, cfg.input_dim, opt);
  if (cfg.task == "classifier") {
    ClassifierConfig cc;
    cc.hidden = cfg.hidden;
    if (data) cc.input_dim = data->x_train.shape[0];
    return build_classifier(cc, method, seed, opt);
  }
  throw ConfigError("run_training: task '" + cfg.task + "' is not trainable");
}

}  // namespace detail

// One training run over a pre-built model: Algorithm ordering is forward ->
// loss -> backward -> scale update -> parameter update, with each layer's
// lambda consumed one step stale. Emits one metric row per logged step plus a
// final checkpoint.
inline RunResult run_training_model(const ExperimentConfig& cfg, Model prebuilt,
                                    std::uint64_t seed, bool write_files = true,
                                    bool record_events = false,
                                    const Dataset* data = nullptr) {
  cfg.validate();
  RunResult res;
  res.method = method_name(prebuilt.method);
  res.seed = seed;
  res.model = std::move(prebuilt);
  Model& model = res.model;

  detail::TaskData task;
  if (cfg.task == "beale") {
    task.toy_input = Tensor::full({cfg.input_dim, 1}, 1.0);
  } else {
    task.data = data ? *data : detail::load_task_dataset(cfg, seed);
  }

  Optimizer optimizer = Optimizer::make(cfg.optimizer_kind(), cfg.learning_rate());
  const std::vector<int> bin_blocks = detail::binarizable_block_indices(model);

  for (long step = 0; step < cfg.steps; ++step) {
    try {
      Tape tape;
      StepCtx ctx{seed, step};

      // forward
      NodeId out;
      if (cfg.task == "beale") {
        const NodeId in = tape.leaf(task.toy_input, "input");
        out = model.forward(tape, in, ctx);
      } else {
        const NodeId in = tape.leaf(task.data.x_train, "input");
        out = model.forward(tape, in, ctx);
      }
      if (record_events) res.events.push_back("forward");

      // loss
      NodeId loss;
      double dist = std::nan("");
      if (cfg.task == "beale") {
        const NodeId x = pick(tape, out, 0);
        const NodeId y = pick(tape, out, 1);
        loss = beale_node(tape, x, y);
        const double dx = tape.value(x)[0] - kBealeOptX;
        const double dy = tape.value(y)[0] - kBealeOptY;
        dist = std::sqrt(dx * dx + dy * dy);
      } else {
        const NodeId target = tape.leaf(task.data.y_train, "target");
        loss = tape.mean(tape.square(tape.sub(out, target)));
      }
      const double loss_value = tape.value(loss)[0];
      if (!std::isfinite(loss_value)) throw std::runtime_error("loss is not finite");
      if (record_events) res.events.push_back("loss");

      // backward
      const GradientMap grads = tape.backward(loss);
      if (record_events) res.events.push_back("backward");

      res.losses.push_back(loss_value);

      // diagnostics use this step's gradients, before any state changes
      MetricRow row;
      row.step = step;
      row.seed = seed;
      row.method = res.method;
      row.loss = loss_value;
      row.dist_to_opt = dist;
      std::vector<double> cos_w_vals, cos_x_vals;
      for (std::size_t k = 0; k < bin_blocks.size() && k < 2; ++k) {
        const Block& b = model.blocks[static_cast<std::size_t>(bin_blocks[k])];
        double* wb_norm = k == 0 ? &row.wb_norm_l1 : &row.wb_norm_l2;
        double* wa_norm = k == 0 ? &row.wa_norm_l1 : &row.wa_norm_l2;
        double* lam = k == 0 ? &row.lambda_l1 : &row.lambda_l2;
        double* aw = k == 0 ? &row.alpha_w_l1 : &row.alpha_w_l2;
        double* ax = k == 0 ? &row.alpha_x_l1 : &row.alpha_x_l2;
        *wb_norm = detail::frob(b.weights());
        *aw = b.alpha_w();
        *ax = b.alpha_x();
        if (b.aux) {
          *wa_norm = detail::frob(b.aux->w_aux);
          *lam = b.aux->lambda_used;
          const Tensor& g_wb = grads.grad(b.weight_node());
          const Tensor& g_wa_raw = grads.grad(b.aux->w_aux_node);
          if (auto c = detail::safe_cosine(g_wb, g_wa_raw)) cos_w_vals.push_back(*c);
          if (auto c = detail::safe_cosine(b.aux->g_b(), b.aux->g_a()))
            cos_x_vals.push_back(*c);
        }
      }
      if (!cos_w_vals.empty()) row.cos_w = mean(cos_w_vals);
      if (!cos_x_vals.empty()) row.cos_x = mean(cos_x_vals);

      // FP output head weights are not in bin_blocks; toy runs still want the
      // plain-network norms, so FP mode reports the first two blocks instead.
      if (bin_blocks.empty() && model.blocks.size() >= 2) {
        row.wb_norm_l1 = detail::frob(model.blocks[0].weights());
        row.wb_norm_l2 = detail::frob(model.blocks[1].weights());
      }

      if (cfg.instrument_layer >= 0) {
        if (cfg.instrument_layer >= static_cast<int>(model.blocks.size()))
          throw ConfigError("instrument_layer " + std::to_string(cfg.instrument_layer) +
                            " is out of range");
        const Block& b = model.blocks[static_cast<std::size_t>(cfg.instrument_layer)];
        res.act_grads.push_back(grads.grad(b.input_node).data);
      }

      // scale update (consumed by the next step's forward)
      for (int bi : bin_blocks) {
        Block& b = model.blocks[static_cast<std::size_t>(bi)];
        if (!b.aux) continue;
        AgsTraceRow tr;
        tr.step = step;
        tr.layer = bi;
        tr.lambda_used = b.aux->lambda_used;
        tr.lambda_next = b.aux->ags_step();
        tr.gb_norm = b.aux->ags.last_gb_norm;
        tr.ga_norm = b.aux->ags.last_ga_norm;
        res.ags_trace.push_back(tr);
      }
      if (record_events) res.events.push_back("ags");

      // parameter update
      optimizer.step(model.params(), grads);
      model.after_update();
      if (record_events) res.events.push_back("update");

      if (step % cfg.log_every == 0 || step == cfg.steps - 1) res.rows.push_back(row);
    } catch (const NumericalError&) {
      throw;
    } catch (const ConfigError&) {
      throw;
    } catch (const std::runtime_error& e) {
      throw NumericalError(step, e.what());
    }
  }

  res.final_loss = res.losses.back();
  if (cfg.task == "beale") {
    const Tensor out = model.forward_values(task.toy_input);
    const double dx = out[0] - kBealeOptX;
    const double dy = out[1] - kBealeOptY;
    res.final_dist = std::sqrt(dx * dx + dy * dy);
  } else {
    res.train_accuracy = accuracy(model, task.data.x_train, task.data.y_train);
    res.test_accuracy = accuracy(model, task.data.x_test, task.data.y_test);
  }

  if (write_files) {
    namespace fs = std::filesystem;
    const fs::path dir = fs::path(cfg.out_dir) / "runs";
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("run_training: cannot create '" + dir.string() + "'");
    const std::string stem = res.method + "_s" + std::to_string(seed);
    res.metrics_path = (dir / (stem + ".csv")).string();
    write_metrics_csv(res.metrics_path, res.rows);

    nlohmann::json manifest;
    manifest["config_hash"] = config_hash(cfg);
    manifest["method"] = res.method;
    manifest["seed"] = seed;
    manifest["version"] = kVersion;
    manifest["rng"] = "splitmix64-counter";
    manifest["columns"] = metrics_csv_header();
    std::ofstream mf((dir / (stem + ".manifest.json")).string(), std::ios::binary);
    mf << manifest.dump(2) << '\n';
    if (!mf) throw IoError("run_training: manifest write failure");

    if (cfg.instrument_layer >= 0) {
      std::ofstream gf((dir / (stem + "_act_grads_l" +
                               std::to_string(cfg.instrument_layer) + ".csv"))
                           .string(),
                       std::ios::binary);
      gf << "step,idx,value\n";
      for (std::size_t s = 0; s < res.act_grads.size(); ++s)
        for (std::size_t i = 0; i < res.act_grads[s].size(); ++i)
          gf << s << ',' << i << ',' << format_double(res.act_grads[s][i]) << '\n';
      if (!gf) throw IoError("run_training: gradient log write failure");
    }

    res.checkpoint_path = (dir / (stem + ".srge")).string();
    export_checkpoint(model, res.checkpoint_path, /*strip=*/false);
  }
  return res;
}

inline RunResult run_training(const ExperimentConfig& cfg, Method method, std::uint64_t seed,
                              bool write_files = true, bool record_events = false) {
  if (cfg.task == "classifier") {
    const Dataset data = detail::load_task_dataset(cfg, seed);
    return run_training_model(cfg, detail::build_task_model(cfg, method, seed, &data), seed,
                              write_files, record_events, &data);
  }
  return run_training_model(cfg, detail::build_task_model(cfg, method, seed), seed, write_files,
                            record_events);
}

inline RunResult run_training(const ExperimentConfig& cfg, const std::string& method,
                              std::uint64_t seed, bool write_files = true) {
  return run_training(cfg, parse_method(method), seed, write_files);
}

// ---------------------------------------------------------------------------
// Fan-out over (method, seed) pairs
// ---------------------------------------------------------------------------

namespace detail {

struct RunKey {
  std::string method;
  std::uint64_t seed;
};

// Workers own disjoint runs; slots are pre-indexed so the aggregate is
// independent of completion order.
inline std::vector<RunResult> run_grid(const ExperimentConfig& cfg,
                                       const std::vector<std::string>& methods,
                                       bool write_files) {
  std::vector<RunKey> keys;
  for (const std::string& m : methods)
    for (std::uint64_t s : cfg.seeds) keys.push_back({m, s});
  std::vector<RunResult> results(keys.size());
  std::vector<std::string> failures(keys.size());

  const int workers = std::max(1, std::min<int>(cfg.workers, static_cast<int>(keys.size())));
  std::atomic<std::size_t> next{0};
  auto work = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= keys.size()) return;
      try {
        results[i] = run_training(cfg, parse_method(keys[i].method), keys[i].seed, write_files);
      } catch (const std::exception& e) {
        failures[i] = e.what();
      }
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (std::thread& t : pool) t.join();
  }

  std::string missing;
  for (std::size_t i = 0; i < keys.size(); ++i)
    if (!failures[i].empty())
      missing += "\n  " + keys[i].method + " seed " + std::to_string(keys[i].seed) + ": " +
                 failures[i];
  if (!missing.empty())
    throw std::runtime_error("compare: missing runs:" + missing);
  return results;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Method comparison
// ---------------------------------------------------------------------------

struct MethodSummary {
  std::string method;
  double median_final_loss = std::nan("");
  double median_final_dist = std::nan("");
  double mean_test_accuracy = std::nan("");
  double median_traj_variance = std::nan("");  // std of per-step loss deltas
  std::vector<double> final_losses;            // seed order
};

struct CompareSummary {
  std::vector<MethodSummary> methods;
  // wins[i][j]: #seeds where method i's final loss < method j's
  std::vector<std::vector<int>> wins;
  std::string summary_json_path;
  std::string summary_csv_path;

  const MethodSummary& at(const std::string& name) const {
    for (const MethodSummary& m : methods)
      if (m.method == name) return m;
    throw std::invalid_argument("compare: no summary for method '" + name + "'");
  }
};

namespace detail {

inline double traj_variance(const std::vector<double>& losses) {
  if (losses.size() < 2) return 0.0;
  std::vector<double> deltas(losses.size() - 1);
  for (std::size_t i = 0; i + 1 < losses.size(); ++i) deltas[i] = losses[i + 1] - losses[i];
  return stddev(deltas);
}

}  // namespace detail

inline CompareSummary summarize_runs(const ExperimentConfig& cfg,
                                     const std::vector<std::string>& methods,
                                     const std::vector<RunResult>& results,
                                     bool write_files = true) {
  const std::size_t n_seeds = cfg.seeds.size();
  CompareSummary out;
  for (std::size_t mi = 0; mi < methods.size(); ++mi) {
    MethodSummary ms;
    ms.method = methods[mi];
    std::vector<double> losses, dists, accs, vars;
    for (std::size_t si = 0; si < n_seeds; ++si) {
      const RunResult& r = results[mi * n_seeds + si];
      losses.push_back(r.final_loss);
      vars.push_back(detail::traj_variance(r.losses));
      if (!std::isnan(r.final_dist)) dists.push_back(r.final_dist);
      if (!std::isnan(r.test_accuracy)) accs.push_back(r.test_accuracy);
    }
    ms.final_losses = losses;
    ms.median_final_loss = median(losses);
    ms.median_traj_variance = median(vars);
    if (!dists.empty()) ms.median_final_dist = median(dists);
    if (!accs.empty()) ms.mean_test_accuracy = mean(accs);
    out.methods.push_back(std::move(ms));
  }
  out.wins.assign(methods.size(), std::vector<int>(methods.size(), 0));
  for (std::size_t i = 0; i < methods.size(); ++i)
    for (std::size_t j = 0; j < methods.size(); ++j)
      for (std::size_t s = 0; s < n_seeds; ++s)
        if (out.methods[i].final_losses[s] < out.methods[j].final_losses[s]) ++out.wins[i][j];

  if (write_files) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(cfg.out_dir, ec);
    nlohmann::json j;
    j["config_hash"] = config_hash(cfg);
    j["version"] = kVersion;
    j["seeds"] = cfg.seeds;
    for (const MethodSummary& m : out.methods) {
      nlohmann::json e;
      e["median_final_loss"] = m.median_final_loss;
      e["median_final_dist"] = m.median_final_dist;
      e["mean_test_accuracy"] = m.mean_test_accuracy;
      e["median_traj_variance"] = m.median_traj_variance;
      e["final_losses"] = m.final_losses;
      j["methods"][m.method] = e;
    }
    for (std::size_t i = 0; i < methods.size(); ++i)
      for (std::size_t jx = 0; jx < methods.size(); ++jx)
        j["wins"][methods[i]][methods[jx]] = out.wins[i][jx];
    out.summary_json_path = (fs::path(cfg.out_dir) / "summary.json").string();
    std::ofstream sf(out.summary_json_path, std::ios::binary);
    sf << j.dump(2) << '\n';
    if (!sf) throw IoError("compare: summary write failure");

    out.summary_csv_path = (fs::path(cfg.out_dir) / "summary.csv").string();
    std::ofstream cf(out.summary_csv_path, std::ios::binary);
    cf << "method,median_final_loss,median_final_dist,mean_test_accuracy,median_traj_variance\n";
    for (const MethodSummary& m : out.methods)
      cf << m.method << ',' << format_double(m.median_final_loss) << ','
         << format_double(m.median_final_dist) << ',' << format_double(m.mean_test_accuracy)
         << ',' << format_double(m.median_traj_variance) << '\n';
    if (!cf) throw IoError("compare: summary csv write failure");
  }
  return out;
}

inline CompareSummary compare_methods(const ExperimentConfig& cfg, bool write_files = true) {
  cfg.validate();
  if (cfg.methods.size() < 2) throw ConfigError("compare: need at least two methods");
  const std::vector<RunResult> results = detail::run_grid(cfg, cfg.methods, write_files);
  return summarize_runs(cfg, cfg.methods, results, write_files);
}

// Noise-contrast report over STE, STE+Noise and STE+SURGE.
struct NoiseContrast {
  CompareSummary summary;
  double ste_variance = 0.0;
  double noise_variance = 0.0;
  double surge_variance = 0.0;
  double noise_median_loss = 0.0;
  double surge_median_loss = 0.0;
};

inline NoiseContrast noise_contrast(ExperimentConfig cfg, bool write_files = true) {
  for (const char* required : {"STE", "STE+Noise", "STE+SURGE"})
    if (std::find(cfg.methods.begin(), cfg.methods.end(), required) == cfg.methods.end())
      throw ConfigError(std::string("noise_contrast: config must include method ") + required);
  NoiseContrast out;
  out.summary = compare_methods(cfg, write_files);
  out.ste_variance = out.summary.at("STE").median_traj_variance;
  out.noise_variance = out.summary.at("STE+Noise").median_traj_variance;
  out.surge_variance = out.summary.at("STE+SURGE").median_traj_variance;
  out.noise_median_loss = out.summary.at("STE+Noise").median_final_loss;
  out.surge_median_loss = out.summary.at("STE+SURGE").median_final_loss;
  return out;
}

// ---------------------------------------------------------------------------
// Scale-coefficient sweep (adaptive eta grid plus fixed-lambda rows)
// ---------------------------------------------------------------------------

struct SweepRow {
  std::string label;
  double value = 0.0;
  bool adaptive = true;
  double median_final_loss = std::nan("");
  double mean_test_accuracy = std::nan("");
  int completed = 0;
  int nan_aborts = 0;
};

struct SweepTable {
  std::vector<SweepRow> rows;
  std::string path;
};

inline SweepTable eta_sweep(ExperimentConfig cfg, bool write_files = true) {
  cfg.validate();
  std::vector<double> etas = cfg.eta_sweep;
  if (etas.empty()) etas = {0.001, 0.005, 0.01, 0.05, 0.1};
  std::vector<double> fixed = cfg.fixed_lambdas;
  if (fixed.empty()) fixed = {0.05, 0.5, 1.0};

  SweepTable table;
  auto run_setting = [&](const std::string& label, double value, bool adaptive) {
    SweepRow row;
    row.label = label;
    row.value = value;
    row.adaptive = adaptive;
    std::vector<double> losses, accs;
    for (std::uint64_t seed : cfg.seeds) {
      ExperimentConfig c = cfg;
      c.eta = adaptive ? value : cfg.eta;
      c.methods = {"STE+SURGE"};
      c.out_dir = cfg.out_dir + "/sweep_" + label;
      try {
        SurgeOptions opt = c.surge_options();
        if (!adaptive) {
          opt.adaptive_lambda = false;
          opt.fixed_lambda = value;
        }
        RunResult r;
        if (c.task == "beale") {
          r = run_training_model(
              c, build_toy_model(c.hidden, Method::SteSurge, seed, c.input_dim, opt), seed,
              write_files);
        } else {
          const Dataset data = detail::load_task_dataset(c, seed);
          ClassifierConfig cc;
          cc.hidden = c.hidden;
          cc.input_dim = data.x_train.shape[0];
          r = run_training_model(c, build_classifier(cc, Method::SteSurge, seed, opt), seed,
                                 write_files, false, &data);
        }
        losses.push_back(r.final_loss);
        if (!std::isnan(r.test_accuracy)) accs.push_back(r.test_accuracy);
        ++row.completed;
      } catch (const NumericalError&) {
        ++row.nan_aborts;
      }
    }
    if (!losses.empty()) row.median_final_loss = median(losses);
    if (!accs.empty()) row.mean_test_accuracy = mean(accs);
    table.rows.push_back(std::move(row));
  };

  for (double e : etas) run_setting("eta_" + format_double(e), e, /*adaptive=*/true);
  for (double l : fixed) run_setting("fixed_" + format_double(l), l, /*adaptive=*/false);

  if (write_files) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(cfg.out_dir, ec);
    table.path = (fs::path(cfg.out_dir) / "eta_sweep.csv").string();
    std::ofstream f(table.path, std::ios::binary);
    f << "label,value,adaptive,median_final_loss,mean_test_accuracy,completed,nan_aborts\n";
    for (const SweepRow& r : table.rows)
      f << r.label << ',' << format_double(r.value) << ',' << (r.adaptive ? 1 : 0) << ','
        << format_double(r.median_final_loss) << ',' << format_double(r.mean_test_accuracy)
        << ',' << r.completed << ',' << r.nan_aborts << '\n';
    if (!f) throw IoError("eta_sweep: table write failure");
  }
  return table;
}

// ---------------------------------------------------------------------------
// Gradient histogram
// ---------------------------------------------------------------------------

struct HistogramResult {
  std::vector<double> bin_edges;
  std::vector<std::size_t> counts;
  std::vector<double> cdf;  // nondecreasing, ends at 1
  double zero_fraction = 0.0;
  std::size_t total = 0;
};

inline HistogramResult gradient_histogram(const std::vector<std::vector<double>>& act_grads,
                                          std::size_t bins = 101) {
  HistogramResult h;
  std::vector<double> all;
  for (const auto& step : act_grads) all.insert(all.end(), step.begin(), step.end());
  if (all.empty()) throw std::invalid_argument("gradient_histogram: no recorded gradients");
  h.total = all.size();
  std::size_t zeros = 0;
  double lo = all[0], hi = all[0];
  for (double v : all) {
    if (v == 0.0) ++zeros;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  h.zero_fraction = static_cast<double>(zeros) / static_cast<double>(h.total);
  if (lo == hi) {  // degenerate: single bin
    h.bin_edges = {lo, hi};
    h.counts = {h.total};
    h.cdf = {1.0};
    return h;
  }
  h.bin_edges.resize(bins + 1);
  for (std::size_t i = 0; i <= bins; ++i)
    h.bin_edges[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(bins);
  h.counts.assign(bins, 0);
  for (double v : all) {
    std::size_t b = static_cast<std::size_t>((v - lo) / (hi - lo) * static_cast<double>(bins));
    if (b >= bins) b = bins - 1;
    ++h.counts[b];
  }
  h.cdf.resize(bins);
  std::size_t acc = 0;
  for (std::size_t i = 0; i < bins; ++i) {
    acc += h.counts[i];
    h.cdf[i] = static_cast<double>(acc) / static_cast<double>(h.total);
  }
  return h;
}

// Reads the per-step gradient log a run wrote for an instrumented layer.
inline std::vector<std::vector<double>> load_act_grads(const std::string& run_dir,
                                                       const std::string& method,
                                                       std::uint64_t seed, int layer) {
  namespace fs = std::filesystem;
  const fs::path p = fs::path(run_dir) / "runs" /
                     (method + "_s" + std::to_string(seed) + "_act_grads_l" +
                      std::to_string(layer) + ".csv");
  std::ifstream f(p);
  if (!f)
    throw std::invalid_argument("histogram: layer " + std::to_string(layer) +
                                " was not instrumented for " + method + " seed " +
                                std::to_string(seed) + " (missing " + p.string() + ")");
  std::vector<std::vector<double>> out;
  std::string line;
  std::getline(f, line);  // header
  while (std::getline(f, line)) {
    const auto c1 = line.find(',');
    const auto c2 = line.find(',', c1 + 1);
    const std::size_t step = std::stoul(line.substr(0, c1));
    const double v = std::stod(line.substr(c2 + 1));
    if (out.size() <= step) out.resize(step + 1);
    out[step].push_back(v);
  }
  return out;
}

inline nlohmann::json histogram_to_json(const HistogramResult& h) {
  nlohmann::json j;
  j["bin_edges"] = h.bin_edges;
  j["counts"] = h.counts;
  j["cdf"] = h.cdf;
  j["zero_fraction"] = h.zero_fraction;
  j["total"] = h.total;
  return j;
}

// ---------------------------------------------------------------------------
// Theory experiment report
// ---------------------------------------------------------------------------

struct TheoryReport {
  std::size_t d = 0;
  std::size_t samples = 0;
  std::uint64_t seed = 0;
  theory::GradMomentModel model;
  double lambda_analytic = 0.0;
  double lambda_oracle = 0.0;
  double relative_error = 0.0;
  double mean_cos_gb_gstar = 0.0;  // directional-consistency diagnostic
  std::vector<double> curve_lambdas;
  std::vector<double> curve_errors;
};

inline TheoryReport run_theory_experiment(std::size_t d, std::size_t n, std::uint64_t seed) {
  TheoryReport rep;
  rep.d = d;
  rep.samples = n;
  rep.seed = seed;
  rep.model = theory::random_moment_model(d, seed);
  const theory::SampleSet s = theory::sample_gradient_pairs(rep.model, n, seed);
  rep.lambda_analytic = theory::lambda_star_analytic(rep.model);
  rep.lambda_oracle = theory::lambda_star_grid_oracle_adaptive(
      s, rep.model.g_star, {rep.lambda_analytic - 1.0, rep.lambda_analytic + 1.0, 2001});
  rep.relative_error = std::abs(rep.lambda_analytic - rep.lambda_oracle) /
                       std::max(std::abs(rep.lambda_analytic), 1e-6);
  double cos_acc = 0.0;
  const double gs_norm = std::sqrt(theory::detail::vec_dot(rep.model.g_star, rep.model.g_star));
  for (std::size_t i = 0; i < s.n; ++i) {
    double dot_v = 0.0, nb = 0.0;
    for (std::size_t j = 0; j < s.d; ++j) {
      dot_v += s.gb[i * s.d + j] * rep.model.g_star[j];
      nb += s.gb[i * s.d + j] * s.gb[i * s.d + j];
    }
    cos_acc += dot_v / (std::sqrt(nb) * gs_norm);
  }
  rep.mean_cos_gb_gstar = cos_acc / static_cast<double>(s.n);
  const theory::EmpiricalQuadratic q = theory::reduce_error_quadratic(s, rep.model.g_star);
  for (int i = 0; i <= 40; ++i) {
    const double l = rep.lambda_analytic - 1.0 + 2.0 * i / 40.0;
    rep.curve_lambdas.push_back(l);
    rep.curve_errors.push_back(q.eval(l));
  }
  return rep;
}

inline nlohmann::json theory_report_to_json(const TheoryReport& r) {
  nlohmann::json j;
  j["d"] = r.d;
  j["samples"] = r.samples;
  j["seed"] = r.seed;
  j["model"] = {{"g_star", r.model.g_star},
                {"delta_b", r.model.delta_b},
                {"mu_a", r.model.mu_a},
                {"sigma_b", r.model.sigma_b},
                {"sigma_a", r.model.sigma_a}};
  j["lambda_analytic"] = r.lambda_analytic;
  j["lambda_oracle"] = r.lambda_oracle;
  j["relative_error"] = r.relative_error;
  j["mean_cos_gb_gstar"] = r.mean_cos_gb_gstar;
  j["curve"] = {{"lambda", r.curve_lambdas}, {"error", r.curve_errors}};
  j["version"] = kVersion;
  return j;
}

}  // namespace surge
