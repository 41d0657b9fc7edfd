#pragma once

#include <cmath>
#include <stdexcept>
#include <string>

#include "surge/quantize.hpp"
#include "surge/tape.hpp"
#include "surge/tensor.hpp"

namespace surge {

// Which part of the auxiliary input gradient passes through, relative to the
// STE clipping window on the layer input.
enum class GradScope { All, ClippedOnly, InRangeOnly };

inline GradScope parse_scope(const std::string& s) {
  if (s == "all") return GradScope::All;
  if (s == "clipped_only") return GradScope::ClippedOnly;
  if (s == "in_range_only") return GradScope::InRangeOnly;
  throw std::invalid_argument("unknown gradient scope '" + s +
                              "' (expected all | clipped_only | in_range_only)");
}

inline std::string scope_name(GradScope s) {
  switch (s) {
    case GradScope::All: return "all";
    case GradScope::ClippedOnly: return "clipped_only";
    case GradScope::InRangeOnly: return "in_range_only";
  }
  return "?";
}

// lambda_0 = 1/sqrt(auxiliary parameter count).
inline double lambda_init(std::size_t aux_param_count) {
  if (aux_param_count == 0)
    throw std::invalid_argument("lambda_init: auxiliary parameter count must be >= 1");
  return 1.0 / std::sqrt(static_cast<double>(aux_param_count));
}

// Per-layer scale state. lambda produced from step t's gradients is consumed
// by step t+1's forward; the one-step lag is deliberate.
struct AgsState {
  double eta = 0.01;
  double epsilon = 1e-8;
  double lambda = 0.0;
  bool adaptive = true;  // false = fixed lambda, norms still tracked
  double last_gb_norm = std::nan("");
  double last_ga_norm = std::nan("");
};

// lambda <- eta * ||g_b|| / (||g_a|| + eps). Returns the stored value (the
// incoming fixed lambda when adaptation is off).
inline double ags_update(AgsState& state, const Tensor& g_b, const Tensor& g_a) {
  state.last_gb_norm = l2_norm_value(g_b);
  state.last_ga_norm = l2_norm_value(g_a);
  if (state.adaptive)
    state.lambda = state.eta * state.last_gb_norm / (state.last_ga_norm + state.epsilon);
  return state.lambda;
}

// Masks the auxiliary input gradient against the layer input x. clipped_only
// and in_range_only partition "all" exactly.
inline Tensor scope_mask(const Tensor& g_a, const Tensor& x, GradScope scope,
                         double clip_bound = 1.0) {
  if (!g_a.same_shape(x))
    throw std::invalid_argument("scope_mask: shape mismatch " + g_a.shape_str() + " vs " +
                                x.shape_str());
  if (scope == GradScope::All) return g_a;
  Tensor out = g_a;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const bool clipped = std::abs(x[i]) > clip_bound;
    if (scope == GradScope::ClippedOnly ? !clipped : clipped) out[i] = 0.0;
  }
  return out;
}

// Branch gradients captured during the backward sweep.
struct DualPathStash {
  Tensor g_b;  // STE-path gradient at the layer input
  Tensor g_a;  // auxiliary-path gradient at the layer input, before lambda
  bool has_gb = false;
  bool has_ga = false;
  void reset() { has_gb = has_ga = false; }
};

// The dual-path attachment of one binarized layer: full-precision auxiliary
// weights, scale state and the tape wiring that (a) keeps the forward value
// bit-identical to the main branch and (b) decouples the two gradient paths.
//
// Wiring per forward:
//   probe_b  = identity(x)            -> feeds the main branch, stashes g_b
//   probe_a  = identity(x)            -> stashes g_a; passes lambda*mask(g_a)
//   f_a      = W_a . probe_a          (matmul or stride-1 conv2d)
//   comp     = f_a - stop_gradient(f_a)   == 0 exactly, gradient of f_a
//   out      = f_b + comp
//
// lambda is applied inside probe_a's backward rule; the stashed g_a is
// pre-lambda (defined even at lambda = 0) and W_a's adjoint is scaled
// separately when gradients are collected (grad_w_aux).
struct DualPath {
  Tensor w_aux;
  AgsState ags;
  GradScope scope = GradScope::All;
  double clip_bound = 1.0;

  DualPathStash stash;
  double lambda_used = 0.0;  // lambda consumed by the latest forward
  NodeId w_aux_node = -1;
  NodeId probe_a_node = -1;

  // Identity probe in front of the main branch; records g_b.
  NodeId probe_main(Tape& tape, NodeId x) {
    stash.reset();
    lambda_used = ags.lambda;
    DualPathStash* st = &stash;
    return tape.record_custom(tape.value(x), {x},
                              [x, st](const Tape&, const Tensor& up, GradientMap& g) {
                                st->g_b = up;
                                st->has_gb = true;
                                detail::accumulate(g.grad(x), up);
                              },
                              "dpgc_probe_b", /*check_finite=*/false);
  }

  // Records the auxiliary branch off the raw layer input and returns the
  // forward-zero compensator term.
  NodeId record_compensator(Tape& tape, NodeId x, bool conv) {
    DualPathStash* st = &stash;
    const double lam = lambda_used;
    const GradScope sc = scope;
    const double clip = clip_bound;
    probe_a_node = tape.record_custom(
        tape.value(x), {x},
        [x, st, lam, sc, clip](const Tape& t, const Tensor& up, GradientMap& g) {
          Tensor masked = scope_mask(up, t.value(x), sc, clip);
          st->g_a = masked;
          st->has_ga = true;
          detail::accumulate(g.grad(x), masked, lam);
        },
        "dpgc_probe_a", /*check_finite=*/false);
    w_aux_node = tape.leaf(w_aux, "w_aux");
    const NodeId f_a = conv ? tape.conv2d(probe_a_node, w_aux_node)
                            : tape.matmul(w_aux_node, probe_a_node);
    return tape.sub(f_a, tape.stop_gradient(f_a));
  }

  const Tensor& g_b() const {
    if (!stash.has_gb)
      throw std::logic_error("DualPath: gradients requested before a backward pass");
    return stash.g_b;
  }

  const Tensor& g_a() const {
    if (!stash.has_ga)
      throw std::logic_error("DualPath: gradients requested before a backward pass");
    return stash.g_a;
  }

  // g_wa = lambda * dL/dW_a, with lambda from the same (previous) step the
  // forward consumed.
  Tensor grad_w_aux(const GradientMap& grads) const {
    Tensor g = grads.grad(w_aux_node);
    for (double& v : g.data) v *= lambda_used;
    return g;
  }

  // Runs the scale update from this step's stashed branch gradients.
  double ags_step() { return ags_update(ags, g_b(), g_a()); }
};

// A binarized linear layer plus its dual-path attachment, in the layout the
// tests and the model zoo share.
struct DpgcLinear {
  BinarizedLinear main;
  DualPath aux;

  NodeId input_node = -1;
  NodeId out_node = -1;

  // Sets up aux weights as a copy of the main latent weights and seeds lambda.
  void init_aux() {
    aux.w_aux = main.weight;
    aux.ags.lambda = lambda_init(aux.w_aux.size());
    aux.clip_bound = main.rule.clip_bound;
  }

  NodeId forward(Tape& tape, NodeId x) {
    input_node = x;
    const NodeId xb = aux.probe_main(tape, x);
    const NodeId f_b = main.forward(tape, xb);
    const NodeId comp = aux.record_compensator(tape, x, /*conv=*/false);
    out_node = tape.add(f_b, comp);
    return out_node;
  }
};

struct DpgcConv2d {
  BinarizedConv2d main;
  DualPath aux;

  NodeId input_node = -1;
  NodeId out_node = -1;

  // star_mode replaces the auxiliary kernels with 1x1 center taps.
  void init_aux(bool star_mode = false) {
    if (star_mode) {
      const std::size_t o = main.weight.shape[0], c = main.weight.shape[1];
      const std::size_t k = main.weight.shape[2];
      Tensor w = Tensor::zeros({o, c, 1, 1});
      const std::size_t mid = k / 2;
      for (std::size_t i = 0; i < o; ++i)
        for (std::size_t j = 0; j < c; ++j)
          w[i * c + j] = main.weight[((i * c + j) * k + mid) * k + mid];
      aux.w_aux = std::move(w);
    } else {
      aux.w_aux = main.weight;
    }
    aux.ags.lambda = lambda_init(aux.w_aux.size());
    aux.clip_bound = main.rule.clip_bound;
  }

  NodeId forward(Tape& tape, NodeId x) {
    input_node = x;
    const NodeId xb = aux.probe_main(tape, x);
    const NodeId f_b = main.forward(tape, xb);
    const NodeId comp = aux.record_compensator(tape, x, /*conv=*/true);
    out_node = tape.add(f_b, comp);
    return out_node;
  }
};

inline NodeId dpgc_forward(Tape& tape, NodeId x, DpgcLinear& layer) {
  return layer.forward(tape, x);
}

inline NodeId dpgc_forward(Tape& tape, NodeId x, DpgcConv2d& layer) {
  return layer.forward(tape, x);
}

// The four gradients of one dual-path layer after a backward pass.
struct BranchGradients {
  Tensor g_b;
  Tensor g_a;
  Tensor g_wb;
  Tensor g_wa;
};

inline BranchGradients dpgc_backward(const DpgcLinear& layer, const GradientMap& grads) {
  return {layer.aux.g_b(), layer.aux.g_a(), grads.grad(layer.main.w_node),
          layer.aux.grad_w_aux(grads)};
}

inline BranchGradients dpgc_backward(const DpgcConv2d& layer, const GradientMap& grads) {
  return {layer.aux.g_b(), layer.aux.g_a(), grads.grad(layer.main.w_node),
          layer.aux.grad_w_aux(grads)};
}

}  // namespace surge
