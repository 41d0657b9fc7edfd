#pragma once

#include <array>
#include <cstdint>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "surge/dpgc.hpp"
#include "surge/quantize.hpp"
#include "surge/rng.hpp"
#include "surge/tape.hpp"
#include "surge/tensor.hpp"

namespace surge {

// ---------------------------------------------------------------------------
// Training methods
// ---------------------------------------------------------------------------

enum class Method { FP, STE, SteSurge, BiReal, BiRealSurge, SteNoise };

inline Method parse_method(const std::string& s) {
  if (s == "FP") return Method::FP;
  if (s == "STE") return Method::STE;
  if (s == "STE+SURGE") return Method::SteSurge;
  if (s == "BiReal") return Method::BiReal;
  if (s == "BiReal+SURGE") return Method::BiRealSurge;
  if (s == "STE+Noise") return Method::SteNoise;
  throw std::invalid_argument(
      "unknown method '" + s +
      "' (expected FP | STE | STE+SURGE | BiReal | BiReal+SURGE | STE+Noise)");
}

inline std::string method_name(Method m) {
  switch (m) {
    case Method::FP: return "FP";
    case Method::STE: return "STE";
    case Method::SteSurge: return "STE+SURGE";
    case Method::BiReal: return "BiReal";
    case Method::BiRealSurge: return "BiReal+SURGE";
    case Method::SteNoise: return "STE+Noise";
  }
  return "?";
}

inline bool method_binarized(Method m) { return m != Method::FP; }
inline bool method_has_aux(Method m) {
  return m == Method::SteSurge || m == Method::BiRealSurge;
}
inline bool method_has_noise(Method m) { return m == Method::SteNoise; }
inline SurrogateKind method_rule(Method m) {
  return (m == Method::BiReal || m == Method::BiRealSurge) ? SurrogateKind::BiReal
                                                           : SurrogateKind::STE;
}

// Knobs for the compensated and noise-contrast variants.
struct SurgeOptions {
  double eta = 0.01;
  double epsilon = 1e-8;
  GradScope scope = GradScope::All;
  bool adaptive_lambda = true;
  double fixed_lambda = 0.0;  // consumed when adaptive_lambda == false
  bool surge_star = false;    // 1x1 auxiliary kernels on conv layers
  double noise_scale = 1.0;   // STE+Noise magnitude multiplier
};

// ---------------------------------------------------------------------------
// Model blocks
// ---------------------------------------------------------------------------

struct StepCtx {
  std::uint64_t run_seed = 0;
  long step = 0;
};

struct ParamRef {
  const char* name;
  Tensor* value;
  NodeId node;
  double grad_scale = 1.0;
};

namespace detail {

// (N,C,H,W) -> (C*H*W, N) column-major sample layout for the dense head.
inline NodeId flatten_to_columns(Tape& tape, NodeId x) {
  const Tensor& xv = tape.value(x);
  if (xv.shape.size() != 4)
    throw std::invalid_argument("flatten: expected a 4-d input, got " + xv.shape_str());
  const std::size_t n = xv.shape[0], f = xv.size() / xv.shape[0];
  Tensor out = Tensor::zeros({f, n});
  for (std::size_t s = 0; s < n; ++s)
    for (std::size_t j = 0; j < f; ++j) out[j * n + s] = xv[s * f + j];
  return tape.record_custom(std::move(out), {x},
                            [x, n, f](const Tape&, const Tensor& up, GradientMap& g) {
                              Tensor& dx = g.grad(x);
                              for (std::size_t s = 0; s < n; ++s)
                                for (std::size_t j = 0; j < f; ++j)
                                  dx[s * f + j] += up[j * n + s];
                            },
                            "flatten");
}

}  // namespace detail

// One linear or conv stage. The latent weights live in the binarized core even
// in full-precision mode, so every method starts from identical parameters.
struct Block {
  bool conv = false;
  bool binarized = false;
  BinarizedLinear lin;
  BinarizedConv2d cnv;
  std::optional<DualPath> aux;
  bool noise = false;
  double noise_eta = 0.01;
  double noise_scale = 1.0;
  bool relu_after = false;
  bool flatten_after = false;
  int index = 0;

  NodeId input_node = -1;
  NodeId pre_activation_node = -1;
  NodeId output_node = -1;

  Tensor& weights() { return conv ? cnv.weight : lin.weight; }
  const Tensor& weights() const { return conv ? cnv.weight : lin.weight; }
  NodeId weight_node() const { return conv ? cnv.w_node : lin.w_node; }
  double alpha_w() const { return conv ? cnv.alpha_w[0] : lin.alpha_w[0]; }
  double alpha_x() const { return conv ? cnv.alpha_x[0] : lin.alpha_x[0]; }

  NodeId forward(Tape& tape, NodeId x, const StepCtx& ctx) {
    input_node = x;
    NodeId x_main = x;
    if (aux) {
      x_main = aux->probe_main(tape, x);
    } else if (noise) {
      x_main = record_noise_probe(tape, x, ctx);
    }
    NodeId y;
    if (binarized) {
      y = conv ? cnv.forward(tape, x_main) : lin.forward(tape, x_main);
    } else {
      const NodeId w = tape.leaf(weights(), "weight");
      if (conv) {
        cnv.w_node = w;
        y = tape.conv2d(x_main, w);
      } else {
        lin.w_node = w;
        y = tape.matmul(w, x_main);
      }
    }
    if (aux) y = tape.add(y, aux->record_compensator(tape, x, conv));
    pre_activation_node = y;
    if (relu_after) y = tape.relu(y);
    if (flatten_after) y = detail::flatten_to_columns(tape, y);
    output_node = y;
    return y;
  }

  void collect_params(std::vector<ParamRef>& out) {
    if (conv) {
      out.push_back({"w", &cnv.weight, cnv.w_node});
      if (binarized) {
        out.push_back({"alpha_w", &cnv.alpha_w, cnv.alpha_w_node});
        out.push_back({"alpha_x", &cnv.alpha_x, cnv.alpha_x_node});
      }
    } else {
      out.push_back({"w", &lin.weight, lin.w_node});
      if (binarized) {
        out.push_back({"alpha_w", &lin.alpha_w, lin.alpha_w_node});
        out.push_back({"alpha_x", &lin.alpha_x, lin.alpha_x_node});
      }
    }
    if (aux) out.push_back({"w_aux", &aux->w_aux, aux->w_aux_node, aux->lambda_used});
  }

  void after_update() {
    if (!binarized) return;
    if (conv)
      cnv.clamp_alphas();
    else
      lin.clamp_alphas();
  }

 private:
  // Adds zero-mean Gaussian noise with sigma = scale*eta*||g||/sqrt(d) to the
  // input gradient, mirroring the compensator's magnitude budget.
  NodeId record_noise_probe(Tape& tape, NodeId x, const StepCtx& ctx) {
    const double eta = noise_eta;
    const double scale = noise_scale;
    const std::uint64_t seed = ctx.run_seed;
    const std::uint64_t stream = (rng_stream::kNoise << 56) ^
                                 (static_cast<std::uint64_t>(index) << 40) ^
                                 static_cast<std::uint64_t>(ctx.step);
    return tape.record_custom(tape.value(x), {x},
                              [x, eta, scale, seed, stream](const Tape&, const Tensor& up,
                                                            GradientMap& g) {
                                const double sigma = scale * eta * l2_norm_value(up) /
                                                     std::sqrt(static_cast<double>(up.size()));
                                Rng r = Rng::make(seed, stream);
                                Tensor& dx = g.grad(x);
                                for (std::size_t i = 0; i < up.size(); ++i)
                                  dx[i] += up[i] + sigma * r.normal();
                              },
                              "ste_noise_probe", /*check_finite=*/false);
  }
};

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

struct Model {
  std::vector<Block> blocks;
  std::vector<std::size_t> input_shape;
  Method method = Method::FP;

  NodeId forward(Tape& tape, NodeId x, const StepCtx& ctx = {}) {
    NodeId cur = x;
    for (Block& b : blocks) cur = b.forward(tape, cur, ctx);
    return cur;
  }

  Tensor forward_values(const Tensor& x, const StepCtx& ctx = {}) {
    Tape tape;
    const NodeId in = tape.leaf(x, "input");
    return tape.value(forward(tape, in, ctx));
  }

  // Valid after a forward pass on the tape the node ids refer to.
  std::vector<ParamRef> params() {
    std::vector<ParamRef> out;
    for (Block& b : blocks) b.collect_params(out);
    return out;
  }

  std::size_t param_count() const {
    std::size_t n = 0;
    for (const Block& b : blocks) {
      n += b.weights().size();
      if (b.binarized) n += 2;  // alpha_w, alpha_x
      if (b.aux) n += b.aux->w_aux.size();
    }
    return n;
  }

  void after_update() {
    for (Block& b : blocks) b.after_update();
  }
};

// Drops every auxiliary branch and all scale state; the forward output is
// unchanged and a second strip is a no-op.
inline Model strip_auxiliary(const Model& m) {
  Model out = m;
  for (Block& b : out.blocks) b.aux.reset();
  return out;
}

// ---------------------------------------------------------------------------
// Beale objective
// ---------------------------------------------------------------------------

inline double beale(double x, double y) {
  const double t1 = 1.5 - x + x * y;
  const double t2 = 2.25 - x + x * y * y;
  const double t3 = 2.625 - x + x * y * y * y;
  return t1 * t1 + t2 * t2 + t3 * t3;
}

inline constexpr double kBealeOptX = 3.0;
inline constexpr double kBealeOptY = 0.5;

// Selects element i of a vector-shaped node as a scalar node.
inline NodeId pick(Tape& tape, NodeId v, std::size_t i) {
  Tensor onehot = Tensor::zeros(tape.value(v).shape);
  onehot[i] = 1.0;
  return tape.sum(tape.mul(v, tape.leaf(std::move(onehot), "onehot")));
}

inline NodeId beale_node(Tape& tape, NodeId x, NodeId y) {
  const NodeId c1 = tape.leaf(Tensor::scalar(1.5), "const");
  const NodeId c2 = tape.leaf(Tensor::scalar(2.25), "const");
  const NodeId c3 = tape.leaf(Tensor::scalar(2.625), "const");
  const NodeId y2 = tape.square(y);
  const NodeId y3 = tape.mul(y2, y);
  const NodeId t1 = tape.add(tape.sub(c1, x), tape.mul(x, y));
  const NodeId t2 = tape.add(tape.sub(c2, x), tape.mul(x, y2));
  const NodeId t3 = tape.add(tape.sub(c3, x), tape.mul(x, y3));
  return tape.add(tape.add(tape.square(t1), tape.square(t2)), tape.square(t3));
}

// ---------------------------------------------------------------------------
// Builders
// ---------------------------------------------------------------------------

namespace detail {

inline Tensor gaussian_weights(std::vector<std::size_t> shape, std::size_t fan_in,
                               std::uint64_t seed, std::uint64_t layer) {
  Rng r = Rng::make(seed, rng_stream::layer_stream(rng_stream::kWeights, layer));
  Tensor w = Tensor::zeros(std::move(shape));
  const double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (double& v : w.data) v = scale * r.normal();
  return w;
}

inline void configure_block(Block& b, Method method, const SurgeOptions& opt) {
  b.binarized = method_binarized(method);
  if (b.binarized) {
    const SurrogateRule rule{method_rule(method), 1.0};
    if (b.conv) {
      b.cnv.rule = rule;
      b.cnv.reset_alphas();
    } else {
      b.lin.rule = rule;
      b.lin.reset_alphas();
    }
  }
  if (method_has_aux(method)) {
    DualPath aux;
    if (b.conv && opt.surge_star) {
      DpgcConv2d tmp;
      tmp.main = b.cnv;
      tmp.init_aux(/*star_mode=*/true);
      aux = std::move(tmp.aux);
    } else {
      aux.w_aux = b.weights();
      aux.ags.lambda = lambda_init(aux.w_aux.size());
      aux.clip_bound = 1.0;
    }
    aux.ags.eta = opt.eta;
    aux.ags.epsilon = opt.epsilon;
    aux.ags.adaptive = opt.adaptive_lambda;
    if (!opt.adaptive_lambda) aux.ags.lambda = opt.fixed_lambda;
    aux.scope = opt.scope;
    b.aux = std::move(aux);
  }
  if (method_has_noise(method)) {
    b.noise = true;
    b.noise_eta = opt.eta;
    b.noise_scale = opt.noise_scale;
  }
}

}  // namespace detail

// Beale toy: three dense stages. The first two are binarizable (and carry the
// compensator / noise attachments), the output head stays full-precision and
// emits the 2-d coordinates fed to the objective. The model input is a fixed
// all-ones column, so the network parameterizes a point in the plane.
// mode_per_layer holds the method for each of the two binarizable stages.
inline Model build_toy_model(std::size_t hidden_size, const std::array<Method, 2>& mode_per_layer,
                             std::uint64_t seed, std::size_t input_dim = 8,
                             const SurgeOptions& opt = {}) {
  if (hidden_size < 1) throw std::invalid_argument("build_toy_model: hidden_size must be >= 1");
  Model m;
  m.method = mode_per_layer[0];
  m.input_shape = {input_dim, 1};
  m.blocks.resize(3);

  Block& b0 = m.blocks[0];
  b0.lin.weight = detail::gaussian_weights({hidden_size, input_dim}, input_dim, seed, 0);
  detail::configure_block(b0, mode_per_layer[0], opt);

  Block& b1 = m.blocks[1];
  b1.lin.weight = detail::gaussian_weights({hidden_size, hidden_size}, hidden_size, seed, 1);
  b1.relu_after = true;
  detail::configure_block(b1, mode_per_layer[1], opt);

  Block& b2 = m.blocks[2];
  b2.lin.weight = detail::gaussian_weights({2, hidden_size}, hidden_size, seed, 2);
  // output head always full-precision

  for (std::size_t i = 0; i < m.blocks.size(); ++i) m.blocks[i].index = static_cast<int>(i);
  return m;
}

inline Model build_toy_model(std::size_t hidden_size, Method method, std::uint64_t seed,
                             std::size_t input_dim = 8, const SurgeOptions& opt = {}) {
  return build_toy_model(hidden_size, std::array<Method, 2>{method, method}, seed, input_dim,
                         opt);
}

struct ClassifierConfig {
  std::string kind = "mlp";  // mlp | cnn
  std::size_t input_dim = 3;
  std::size_t hidden = 16;
  std::size_t classes = 2;
  // cnn-only
  std::size_t channels = 4;
  std::size_t image_hw = 6;
  std::size_t kernel = 3;
};

// Classifier stand-in: the first and last stages stay full-precision, the
// middle one is binarized (and compensated when the method asks for it).
inline Model build_classifier(const ClassifierConfig& cfg, Method method, std::uint64_t seed,
                              const SurgeOptions& opt = {}) {
  Model m;
  m.method = method;
  if (cfg.kind == "mlp") {
    if (cfg.hidden < 1 || cfg.input_dim < 1 || cfg.classes < 1)
      throw std::invalid_argument("build_classifier: sizes must be >= 1");
    m.input_shape = {cfg.input_dim, 1};
    m.blocks.resize(3);
    Block& b0 = m.blocks[0];
    b0.lin.weight =
        detail::gaussian_weights({cfg.hidden, cfg.input_dim}, cfg.input_dim, seed, 0);
    // no activation before the binarized stage: sign consumes the raw,
    // roughly centered pre-activations
    Block& b1 = m.blocks[1];
    b1.lin.weight = detail::gaussian_weights({cfg.hidden, cfg.hidden}, cfg.hidden, seed, 1);
    b1.relu_after = true;
    detail::configure_block(b1, method, opt);
    Block& b2 = m.blocks[2];
    b2.lin.weight = detail::gaussian_weights({cfg.classes, cfg.hidden}, cfg.hidden, seed, 2);
  } else if (cfg.kind == "cnn") {
    if (cfg.kernel % 2 == 0)
      throw std::invalid_argument("build_classifier: kernel size must be odd");
    m.input_shape = {1, 1, cfg.image_hw, cfg.image_hw};
    m.blocks.resize(3);
    Block& b0 = m.blocks[0];
    b0.conv = true;
    b0.cnv.weight = detail::gaussian_weights({cfg.channels, 1, cfg.kernel, cfg.kernel},
                                             cfg.kernel * cfg.kernel, seed, 0);
    Block& b1 = m.blocks[1];
    b1.conv = true;
    b1.cnv.weight =
        detail::gaussian_weights({cfg.channels, cfg.channels, cfg.kernel, cfg.kernel},
                                 cfg.channels * cfg.kernel * cfg.kernel, seed, 1);
    b1.relu_after = true;
    b1.flatten_after = true;
    detail::configure_block(b1, method, opt);
    Block& b2 = m.blocks[2];
    const std::size_t feat = cfg.channels * cfg.image_hw * cfg.image_hw;
    b2.lin.weight = detail::gaussian_weights({cfg.classes, feat}, feat, seed, 2);
  } else {
    throw std::invalid_argument("build_classifier: unknown kind '" + cfg.kind + "'");
  }
  for (std::size_t i = 0; i < m.blocks.size(); ++i) m.blocks[i].index = static_cast<int>(i);
  return m;
}

// ---------------------------------------------------------------------------
// Optimizers
// ---------------------------------------------------------------------------

inline void sgd_step(const std::vector<ParamRef>& params, const GradientMap& grads, double lr) {
  for (const ParamRef& p : params) {
    const Tensor& g = grads.grad(p.node);
    if (!g.same_shape(*p.value))
      throw std::invalid_argument("sgd_step: gradient shape " + g.shape_str() +
                                  " does not match parameter " + p.value->shape_str());
    for (std::size_t i = 0; i < g.size(); ++i) (*p.value)[i] -= lr * p.grad_scale * g[i];
  }
}

struct AdamState {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long t = 0;
  std::vector<Tensor> m, v;
};

inline void adam_step(AdamState& state, const std::vector<ParamRef>& params,
                      const GradientMap& grads) {
  if (state.m.empty()) {
    for (const ParamRef& p : params) {
      state.m.push_back(Tensor::zeros(p.value->shape));
      state.v.push_back(Tensor::zeros(p.value->shape));
    }
  }
  ++state.t;
  const double bc1 = 1.0 - std::pow(state.beta1, state.t);
  const double bc2 = 1.0 - std::pow(state.beta2, state.t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    const ParamRef& p = params[k];
    const Tensor& g = grads.grad(p.node);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double gi = p.grad_scale * g[i];
      state.m[k][i] = state.beta1 * state.m[k][i] + (1.0 - state.beta1) * gi;
      state.v[k][i] = state.beta2 * state.v[k][i] + (1.0 - state.beta2) * gi * gi;
      const double mhat = state.m[k][i] / bc1;
      const double vhat = state.v[k][i] / bc2;
      (*p.value)[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

struct Optimizer {
  enum class Kind { SGD, Adam };
  Kind kind = Kind::SGD;
  double lr = 0.01;
  AdamState adam;

  static Optimizer make(const std::string& kind, double lr) {
    Optimizer o;
    if (kind == "sgd")
      o.kind = Kind::SGD;
    else if (kind == "adam")
      o.kind = Kind::Adam;
    else
      throw std::invalid_argument("unknown optimizer '" + kind + "' (expected sgd | adam)");
    o.lr = lr;
    o.adam.lr = lr;
    return o;
  }

  void step(const std::vector<ParamRef>& params, const GradientMap& grads) {
    if (kind == Kind::SGD)
      sgd_step(params, grads, lr);
    else
      adam_step(adam, params, grads);
  }
};

// ---------------------------------------------------------------------------
// Synthetic datasets (column-major: one sample per column, third feature 1)
// ---------------------------------------------------------------------------

struct Dataset {
  Tensor x_train, y_train;  // (3, n_train), (2, n_train)
  Tensor x_test, y_test;
};

namespace detail {

inline Dataset split_dataset(const std::vector<double>& xs, const std::vector<double>& ys,
                             const std::vector<int>& labels, double train_fraction) {
  const std::size_t n = labels.size();
  const std::size_t n_train = static_cast<std::size_t>(train_fraction * static_cast<double>(n));
  auto fill = [&](std::size_t lo, std::size_t hi, Tensor& X, Tensor& Y) {
    const std::size_t m = hi - lo;
    X = Tensor::zeros({3, m});
    Y = Tensor::zeros({2, m});
    for (std::size_t i = 0; i < m; ++i) {
      X[0 * m + i] = xs[lo + i];
      X[1 * m + i] = ys[lo + i];
      X[2 * m + i] = 1.0;  // constant feature in lieu of bias terms
      Y[0 * m + i] = labels[lo + i] == 0 ? 1.0 : -1.0;
      Y[1 * m + i] = labels[lo + i] == 0 ? -1.0 : 1.0;
    }
  };
  Dataset d;
  fill(0, n_train, d.x_train, d.y_train);
  fill(n_train, n, d.x_test, d.y_test);
  return d;
}

}  // namespace detail

inline Dataset two_moons(std::size_t n, double noise_std, double train_fraction,
                         std::uint64_t seed) {
  Rng r = Rng::make(seed, rng_stream::kData);
  std::vector<double> xs(n), ys(n);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int cls = static_cast<int>(i % 2);
    const double t = r.uniform(0.0, 3.14159265358979323846);
    double px, py;
    if (cls == 0) {
      px = std::cos(t) - 0.5;
      py = std::sin(t) - 0.25;
    } else {
      px = 0.5 - std::cos(t);
      py = 0.25 - std::sin(t);
    }
    xs[i] = px + noise_std * r.normal();
    ys[i] = py + noise_std * r.normal();
    labels[i] = cls;
  }
  return detail::split_dataset(xs, ys, labels, train_fraction);
}

inline Dataset gaussian_blobs(std::size_t n, double noise_std, double train_fraction,
                              std::uint64_t seed) {
  Rng r = Rng::make(seed, rng_stream::kData);
  std::vector<double> xs(n), ys(n);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int cls = static_cast<int>(i % 2);
    const double cx = cls == 0 ? -1.0 : 1.0;
    xs[i] = cx + noise_std * r.normal();
    ys[i] = cx + noise_std * r.normal();
    labels[i] = cls;
  }
  return detail::split_dataset(xs, ys, labels, train_fraction);
}

// Plain numeric CSV: one sample per row, feature columns followed by a 0/1
// label column. A constant feature is appended, matching the synthetic sets.
inline Dataset load_csv_dataset(const std::string& path, double train_fraction) {
  std::ifstream f(path);
  if (!f) throw std::invalid_argument("dataset: cannot open '" + path + "'");
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::size_t pos = 0;
    while (pos <= line.size()) {
      const std::size_t comma = line.find(',', pos);
      const std::string cell =
          line.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw std::invalid_argument("dataset: non-numeric cell '" + cell + "' in " + path);
      }
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    if (!rows.empty() && row.size() != rows.front().size())
      throw std::invalid_argument("dataset: ragged rows in " + path);
    rows.push_back(std::move(row));
  }
  if (rows.size() < 2 || rows.front().size() < 2)
    throw std::invalid_argument("dataset: need >= 2 rows of features plus a label in " + path);
  const std::size_t n = rows.size();
  const std::size_t feat = rows.front().size() - 1;
  const std::size_t n_train =
      static_cast<std::size_t>(train_fraction * static_cast<double>(n));
  auto fill = [&](std::size_t lo, std::size_t hi, Tensor& X, Tensor& Y) {
    const std::size_t m = hi - lo;
    X = Tensor::zeros({feat + 1, m});
    Y = Tensor::zeros({2, m});
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < feat; ++j) X[j * m + i] = rows[lo + i][j];
      X[feat * m + i] = 1.0;
      const bool cls1 = rows[lo + i][feat] != 0.0;
      Y[0 * m + i] = cls1 ? -1.0 : 1.0;
      Y[1 * m + i] = cls1 ? 1.0 : -1.0;
    }
  };
  Dataset d;
  fill(0, n_train, d.x_train, d.y_train);
  fill(n_train, n, d.x_test, d.y_test);
  return d;
}

inline double accuracy(Model& m, const Tensor& X, const Tensor& Y) {
  const Tensor out = m.forward_values(X);
  const std::size_t n = X.shape[1];
  std::size_t hits = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const int pred = out[0 * n + i] >= out[1 * n + i] ? 0 : 1;
    const int truth = Y[0 * n + i] >= Y[1 * n + i] ? 0 : 1;
    if (pred == truth) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(n);
}

}  // namespace surge
