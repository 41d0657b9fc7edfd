#pragma once

#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "surge/dpgc.hpp"
#include "surge/models.hpp"

namespace surge {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct OptimizerSpec {
  std::string kind;  // sgd | adam; defaulted per task when empty
  double lr = 0.0;   // defaulted per task when 0
};

struct DatasetSpec {
  std::string kind = "two_moons";  // two_moons | blobs | csv
  std::size_t n_points = 1000;
  double noise_std = 0.12;
  double train_fraction = 0.7;
  std::string path;  // csv only: feature columns then a 0/1 label column
};

struct ExperimentConfig {
  std::string task = "beale";  // beale | classifier | theory
  std::vector<std::string> methods = {"FP", "STE", "STE+SURGE", "BiReal", "BiReal+SURGE"};
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12};
  long steps = 400;
  OptimizerSpec optimizer;
  double eta = 0.01;
  double epsilon = 1e-8;
  std::string scope = "all";
  bool surge_star = false;
  std::size_t hidden = 16;
  std::size_t input_dim = 8;
  std::string out_dir = "runs/out";
  long log_every = 1;
  int instrument_layer = -1;
  double noise_scale = 1.0;
  DatasetSpec dataset;
  std::vector<double> eta_sweep;       // compare: non-empty switches to sweep mode
  std::vector<double> fixed_lambdas;   // extra fixed-scale rows for the sweep
  int workers = 1;
  // theory task
  std::size_t theory_d = 32;
  std::size_t theory_samples = 100000;

  std::string optimizer_kind() const {
    return optimizer.kind.empty() ? "adam" : optimizer.kind;
  }

  double learning_rate() const { return optimizer.lr != 0.0 ? optimizer.lr : 0.001; }

  SurgeOptions surge_options() const {
    SurgeOptions o;
    o.eta = eta;
    o.epsilon = epsilon;
    o.scope = parse_scope(scope);
    o.surge_star = surge_star;
    o.noise_scale = noise_scale;
    return o;
  }

  void validate() const {
    if (task != "beale" && task != "classifier" && task != "theory")
      throw ConfigError("config: unknown task '" + task + "'");
    if (methods.empty()) throw ConfigError("config: methods must be nonempty");
    for (const std::string& m : methods) {
      try {
        parse_method(m);
      } catch (const std::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
      }
    }
    if (seeds.empty()) throw ConfigError("config: seeds must be nonempty");
    if (steps < 1) throw ConfigError("config: steps must be >= 1");
    if (!(eta > 0.0)) throw ConfigError("config: eta must be > 0");
    if (!(epsilon > 0.0)) throw ConfigError("config: epsilon must be > 0");
    if (hidden < 1) throw ConfigError("config: hidden must be >= 1");
    if (input_dim < 1) throw ConfigError("config: input_dim must be >= 1");
    if (log_every < 1) throw ConfigError("config: log_every must be >= 1");
    if (workers < 1) throw ConfigError("config: workers must be >= 1");
    if (noise_scale < 0.0) throw ConfigError("config: noise_scale must be >= 0");
    if (!(dataset.train_fraction > 0.0 && dataset.train_fraction < 1.0))
      throw ConfigError("config: dataset.train_fraction must be in (0, 1)");
    if (dataset.kind != "two_moons" && dataset.kind != "blobs" && dataset.kind != "csv")
      throw ConfigError("config: unknown dataset kind '" + dataset.kind + "'");
    if (dataset.kind == "csv" && dataset.path.empty())
      throw ConfigError("config: dataset.path is required for csv datasets");
    for (double e : eta_sweep)
      if (!(e > 0.0)) throw ConfigError("config: eta_sweep entries must be > 0");
    const std::string ok = optimizer_kind();
    if (ok != "sgd" && ok != "adam")
      throw ConfigError("config: unknown optimizer '" + ok + "'");
    if (optimizer.lr < 0.0) throw ConfigError("config: optimizer.lr must be >= 0");
    try {
      parse_scope(scope);
    } catch (const std::exception& e) {
      throw ConfigError(std::string("config: ") + e.what());
    }
  }
};

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& j, const std::set<std::string>& known,
                                const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.count(it.key()))
      throw ConfigError("config: unknown key '" + where + it.key() + "'");
}

}  // namespace detail

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config: top level must be a JSON object");
  detail::reject_unknown_keys(
      j,
      {"task", "methods", "seeds", "steps", "optimizer", "eta", "epsilon", "scope", "surge_star",
       "hidden", "input_dim", "out_dir", "log_every", "instrument_layer", "noise_scale",
       "dataset", "eta_sweep", "fixed_lambdas", "workers", "theory_d", "theory_samples"},
      "");
  ExperimentConfig c;
  try {
    if (j.contains("task")) c.task = j.at("task").get<std::string>();
    if (j.contains("methods")) c.methods = j.at("methods").get<std::vector<std::string>>();
    if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    if (j.contains("steps")) c.steps = j.at("steps").get<long>();
    if (j.contains("optimizer")) {
      const nlohmann::json& o = j.at("optimizer");
      detail::reject_unknown_keys(o, {"kind", "lr"}, "optimizer.");
      if (o.contains("kind")) c.optimizer.kind = o.at("kind").get<std::string>();
      if (o.contains("lr")) c.optimizer.lr = o.at("lr").get<double>();
    }
    if (j.contains("eta")) c.eta = j.at("eta").get<double>();
    if (j.contains("epsilon")) c.epsilon = j.at("epsilon").get<double>();
    if (j.contains("scope")) c.scope = j.at("scope").get<std::string>();
    if (j.contains("surge_star")) c.surge_star = j.at("surge_star").get<bool>();
    if (j.contains("hidden")) c.hidden = j.at("hidden").get<std::size_t>();
    if (j.contains("input_dim")) c.input_dim = j.at("input_dim").get<std::size_t>();
    if (j.contains("out_dir")) c.out_dir = j.at("out_dir").get<std::string>();
    if (j.contains("log_every")) c.log_every = j.at("log_every").get<long>();
    if (j.contains("instrument_layer")) c.instrument_layer = j.at("instrument_layer").get<int>();
    if (j.contains("noise_scale")) c.noise_scale = j.at("noise_scale").get<double>();
    if (j.contains("dataset")) {
      const nlohmann::json& d = j.at("dataset");
      detail::reject_unknown_keys(
          d, {"kind", "n_points", "noise_std", "train_fraction", "path"}, "dataset.");
      if (d.contains("kind")) c.dataset.kind = d.at("kind").get<std::string>();
      if (d.contains("n_points")) c.dataset.n_points = d.at("n_points").get<std::size_t>();
      if (d.contains("noise_std")) c.dataset.noise_std = d.at("noise_std").get<double>();
      if (d.contains("train_fraction"))
        c.dataset.train_fraction = d.at("train_fraction").get<double>();
      if (d.contains("path")) c.dataset.path = d.at("path").get<std::string>();
    }
    if (j.contains("eta_sweep")) c.eta_sweep = j.at("eta_sweep").get<std::vector<double>>();
    if (j.contains("fixed_lambdas"))
      c.fixed_lambdas = j.at("fixed_lambdas").get<std::vector<double>>();
    if (j.contains("workers")) c.workers = j.at("workers").get<int>();
    if (j.contains("theory_d")) c.theory_d = j.at("theory_d").get<std::size_t>();
    if (j.contains("theory_samples")) c.theory_samples = j.at("theory_samples").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: invalid value: ") + e.what());
  }
  c.validate();
  return c;
}

// Empty or absent content parses to the full-default configuration.
inline ExperimentConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  std::string text = buf.str();
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) return config_from_json(nlohmann::json::object());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config: parse failure in '" + path + "': " + e.what());
  }
  return config_from_json(j);
}

inline nlohmann::json config_to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["task"] = c.task;
  j["methods"] = c.methods;
  j["seeds"] = c.seeds;
  j["steps"] = c.steps;
  j["optimizer"] = {{"kind", c.optimizer_kind()}, {"lr", c.learning_rate()}};
  j["eta"] = c.eta;
  j["epsilon"] = c.epsilon;
  j["scope"] = c.scope;
  j["surge_star"] = c.surge_star;
  j["hidden"] = c.hidden;
  j["input_dim"] = c.input_dim;
  j["out_dir"] = c.out_dir;
  j["log_every"] = c.log_every;
  j["instrument_layer"] = c.instrument_layer;
  j["noise_scale"] = c.noise_scale;
  j["dataset"] = {{"kind", c.dataset.kind},
                  {"n_points", c.dataset.n_points},
                  {"noise_std", c.dataset.noise_std},
                  {"train_fraction", c.dataset.train_fraction},
                  {"path", c.dataset.path}};
  j["eta_sweep"] = c.eta_sweep;
  j["fixed_lambdas"] = c.fixed_lambdas;
  j["workers"] = c.workers;
  j["theory_d"] = c.theory_d;
  j["theory_samples"] = c.theory_samples;
  return j;
}

// FNV-1a over the canonical serialized form.
inline std::string config_hash(const ExperimentConfig& c) {
  const std::string s = config_to_json(c).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

}  // namespace surge
