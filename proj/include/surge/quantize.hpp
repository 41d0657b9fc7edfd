#pragma once

#include <stdexcept>
#include <string>
#include <utility>

#include "surge/tape.hpp"
#include "surge/tensor.hpp"

namespace surge {

enum class SurrogateKind { STE, BiReal };

// Backward rule attached to activation sign nodes. clip_bound parameterizes
// the STE pass-through window; the Bi-Real polynomial is fixed on [-1, 1].
struct SurrogateRule {
  SurrogateKind kind = SurrogateKind::STE;
  double clip_bound = 1.0;

  void validate() const {
    if (!(clip_bound > 0.0))
      throw std::invalid_argument("SurrogateRule: clip_bound must be > 0, got " +
                                  std::to_string(clip_bound));
  }
};

// Elementwise sign with sign(0) := +1, so the codomain is exactly {-1, +1}.
inline Tensor sign(const Tensor& t) {
  Tensor out = t;
  for (double& v : out.data) v = v < 0.0 ? -1.0 : 1.0;
  return out;
}

// upstream * 1{|x| <= clip_bound}; the boundary passes gradient.
inline Tensor ste_activation_backward(const Tensor& upstream, const Tensor& x,
                                      double clip_bound = 1.0) {
  if (!upstream.same_shape(x))
    throw std::invalid_argument("ste_activation_backward: shape mismatch " +
                                upstream.shape_str() + " vs " + x.shape_str());
  Tensor out = upstream;
  for (std::size_t i = 0; i < out.size(); ++i)
    if (std::abs(x[i]) > clip_bound) out[i] = 0.0;
  return out;
}

// Identity pass-through for the weight path.
inline Tensor ste_weight_backward(const Tensor& upstream) { return upstream; }

// Piecewise-polynomial surrogate derivative: 2+2x on [-1, 0), 2-2x on [0, 1],
// zero elsewhere. Integrates to 2 = sign(1) - sign(-1) over its support.
inline Tensor bireal_activation_backward(const Tensor& upstream, const Tensor& x) {
  if (!upstream.same_shape(x))
    throw std::invalid_argument("bireal_activation_backward: shape mismatch " +
                                upstream.shape_str() + " vs " + x.shape_str());
  Tensor out = upstream;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = x[i];
    double dp = 0.0;
    if (v >= -1.0 && v < 0.0)
      dp = 2.0 + 2.0 * v;
    else if (v >= 0.0 && v <= 1.0)
      dp = 2.0 - 2.0 * v;
    out[i] *= dp;
  }
  return out;
}

// Records sign(w) with the identity weight surrogate.
inline NodeId binarize_weights(Tape& tape, NodeId w) {
  return tape.record_custom(sign(tape.value(w)), {w},
                            [w](const Tape&, const Tensor& up, GradientMap& g) {
                              detail::accumulate(g.grad(w), ste_weight_backward(up));
                            },
                            "sign_w");
}

// Records sign(x) with the rule's activation surrogate.
inline NodeId binarize_activations(Tape& tape, NodeId x, const SurrogateRule& rule) {
  rule.validate();
  if (rule.kind == SurrogateKind::STE) {
    const double clip = rule.clip_bound;
    return tape.record_custom(sign(tape.value(x)), {x},
                              [x, clip](const Tape& t, const Tensor& up, GradientMap& g) {
                                detail::accumulate(g.grad(x),
                                                   ste_activation_backward(up, t.value(x), clip));
                              },
                              "sign_act_ste");
  }
  return tape.record_custom(sign(tape.value(x)), {x},
                            [x](const Tape& t, const Tensor& up, GradientMap& g) {
                              detail::accumulate(g.grad(x),
                                                 bireal_activation_backward(up, t.value(x)));
                            },
                            "sign_act_bireal");
}

// alpha_w = mean(|W|) floored at 1e-6, alpha_x = 1; both become learnable.
inline std::pair<double, double> init_alphas(const Tensor& w) {
  if (w.size() == 0) throw std::invalid_argument("init_alphas: empty weight tensor");
  double s = 0.0;
  for (double v : w.data) s += std::abs(v);
  double alpha_w = s / static_cast<double>(w.size());
  if (alpha_w < 1e-6) alpha_w = 1e-6;
  return {alpha_w, 1.0};
}

inline constexpr double kAlphaFloor = 1e-6;

// Binarized linear operator: out = alpha_w * (alpha_x * (sign(W) . sign(x))).
// W is kept at full precision (the latent weights the optimizer updates) and
// binarized on the fly; alpha_w/alpha_x are learnable positive scalars that
// receive exact gradients.
struct BinarizedLinear {
  Tensor weight;  // out x in
  Tensor alpha_w = Tensor::scalar(1.0);
  Tensor alpha_x = Tensor::scalar(1.0);
  SurrogateRule rule;

  // node bindings from the most recent forward
  NodeId w_node = -1;
  NodeId alpha_w_node = -1;
  NodeId alpha_x_node = -1;
  NodeId out_node = -1;

  void reset_alphas() {
    auto [aw, ax] = init_alphas(weight);
    alpha_w = Tensor::scalar(aw);
    alpha_x = Tensor::scalar(ax);
  }

  NodeId forward(Tape& tape, NodeId x) {
    w_node = tape.leaf(weight, "weight");
    alpha_w_node = tape.leaf(alpha_w, "alpha_w");
    alpha_x_node = tape.leaf(alpha_x, "alpha_x");
    const NodeId bw = binarize_weights(tape, w_node);
    const NodeId bx = binarize_activations(tape, x, rule);
    const NodeId mm = tape.matmul(bw, bx);
    out_node = tape.scalar_mul(alpha_w_node, tape.scalar_mul(alpha_x_node, mm));
    return out_node;
  }

  void clamp_alphas() {
    if (alpha_w[0] < kAlphaFloor) alpha_w[0] = kAlphaFloor;
    if (alpha_x[0] < kAlphaFloor) alpha_x[0] = kAlphaFloor;
  }
};

// Same contract for stride-1 convolutions; weight is (out_ch, in_ch, k, k).
struct BinarizedConv2d {
  Tensor weight;
  Tensor alpha_w = Tensor::scalar(1.0);
  Tensor alpha_x = Tensor::scalar(1.0);
  SurrogateRule rule;

  NodeId w_node = -1;
  NodeId alpha_w_node = -1;
  NodeId alpha_x_node = -1;
  NodeId out_node = -1;

  void reset_alphas() {
    auto [aw, ax] = init_alphas(weight);
    alpha_w = Tensor::scalar(aw);
    alpha_x = Tensor::scalar(ax);
  }

  NodeId forward(Tape& tape, NodeId x) {
    w_node = tape.leaf(weight, "weight");
    alpha_w_node = tape.leaf(alpha_w, "alpha_w");
    alpha_x_node = tape.leaf(alpha_x, "alpha_x");
    const NodeId bw = binarize_weights(tape, w_node);
    const NodeId bx = binarize_activations(tape, x, rule);
    const NodeId cv = tape.conv2d(bx, bw);
    out_node = tape.scalar_mul(alpha_w_node, tape.scalar_mul(alpha_x_node, cv));
    return out_node;
  }

  void clamp_alphas() {
    if (alpha_w[0] < kAlphaFloor) alpha_w[0] = kAlphaFloor;
    if (alpha_x[0] < kAlphaFloor) alpha_x[0] = kAlphaFloor;
  }
};

// Free-function form of the layer forward, mirroring the operator notation.
inline NodeId binary_linear_forward(Tape& tape, NodeId x, BinarizedLinear& layer) {
  return layer.forward(tape, x);
}

}  // namespace surge
