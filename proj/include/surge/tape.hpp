#pragma once

#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "surge/tensor.hpp"

namespace surge {

using NodeId = int;

enum class OpKind {
  Add,
  Sub,
  Mul,  // elementwise
  MatMul,
  Conv2d,  // stride 1, odd square kernel, zero padding preserving spatial size
  Relu,
  Square,
  Sum,
  Mean,
  L2Norm,
  ScalarMul,
};

class Tape;

// Adjoints for every node of a tape, indexed by node id. Nodes not reachable
// from the loss keep their zero initialization.
struct GradientMap {
  std::vector<Tensor> adjoints;
  const Tensor& grad(NodeId id) const { return adjoints.at(static_cast<std::size_t>(id)); }
  Tensor& grad(NodeId id) { return adjoints.at(static_cast<std::size_t>(id)); }
};

namespace detail {

inline void accumulate(Tensor& into, const Tensor& t, double scale = 1.0) {
  for (std::size_t i = 0; i < into.size(); ++i) into[i] += scale * t[i];
}

inline Tensor matmul_value(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.shape[0], k = a.shape[1], n = b.shape[1];
  Tensor out = Tensor::zeros({m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      if (av == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += av * b[p * n + j];
    }
  return out;
}

struct ConvDims {
  std::size_t n, c, h, w, o, k, pad;
};

inline ConvDims conv_dims_checked(const Tensor& x, const Tensor& w) {
  if (x.shape.size() != 4 || w.shape.size() != 4)
    throw std::invalid_argument("conv2d: expected 4-d input and kernel, got " + x.shape_str() +
                                " and " + w.shape_str());
  ConvDims d{x.shape[0], x.shape[1], x.shape[2], x.shape[3], w.shape[0], w.shape[2], 0};
  if (w.shape[1] != d.c)
    throw std::invalid_argument("conv2d: kernel channels " + w.shape_str() +
                                " do not match input " + x.shape_str());
  if (w.shape[2] != w.shape[3] || d.k % 2 == 0)
    throw std::invalid_argument("conv2d: only odd square kernels are supported, got " +
                                w.shape_str());
  d.pad = d.k / 2;
  return d;
}

inline Tensor conv2d_value(const Tensor& x, const Tensor& w) {
  const ConvDims d = conv_dims_checked(x, w);
  Tensor out = Tensor::zeros({d.n, d.o, d.h, d.w});
  auto xi = [&](std::size_t n, std::size_t c, std::size_t i, std::size_t j) {
    return x[((n * d.c + c) * d.h + i) * d.w + j];
  };
  for (std::size_t n = 0; n < d.n; ++n)
    for (std::size_t o = 0; o < d.o; ++o)
      for (std::size_t i = 0; i < d.h; ++i)
        for (std::size_t j = 0; j < d.w; ++j) {
          double acc = 0.0;
          for (std::size_t c = 0; c < d.c; ++c)
            for (std::size_t u = 0; u < d.k; ++u)
              for (std::size_t v = 0; v < d.k; ++v) {
                const std::ptrdiff_t ii = static_cast<std::ptrdiff_t>(i + u) -
                                          static_cast<std::ptrdiff_t>(d.pad);
                const std::ptrdiff_t jj = static_cast<std::ptrdiff_t>(j + v) -
                                          static_cast<std::ptrdiff_t>(d.pad);
                if (ii < 0 || jj < 0 || ii >= static_cast<std::ptrdiff_t>(d.h) ||
                    jj >= static_cast<std::ptrdiff_t>(d.w))
                  continue;
                acc += xi(n, c, static_cast<std::size_t>(ii), static_cast<std::size_t>(jj)) *
                       w[((o * d.c + c) * d.k + u) * d.k + v];
              }
          out[((n * d.o + o) * d.h + i) * d.w + j] = acc;
        }
  return out;
}

}  // namespace detail

// Reverse-mode autodiff tape. Define-by-run: one tape is built per training
// step, differentiated once, then discarded. Nodes are recorded in topological
// order by construction; every primitive validates shapes up front and checks
// the forward value for non-finite entries.
class Tape {
 public:
  // fn(tape, upstream adjoint of this node, all adjoints) accumulates into the
  // adjoints of this node's inputs.
  using BackwardFn = std::function<void(const Tape&, const Tensor&, GradientMap&)>;

  NodeId leaf(Tensor value, std::string name = "leaf") {
    return push(std::move(value), {}, nullptr, std::move(name));
  }

  // Generic entry point: dispatches on the op kind.
  NodeId record_primitive(OpKind kind, const std::vector<NodeId>& inputs) {
    switch (kind) {
      case OpKind::Add: return add(at(inputs, 0, "add"), at(inputs, 1, "add"));
      case OpKind::Sub: return sub(at(inputs, 0, "sub"), at(inputs, 1, "sub"));
      case OpKind::Mul: return mul(at(inputs, 0, "mul"), at(inputs, 1, "mul"));
      case OpKind::MatMul: return matmul(at(inputs, 0, "matmul"), at(inputs, 1, "matmul"));
      case OpKind::Conv2d: return conv2d(at(inputs, 0, "conv2d"), at(inputs, 1, "conv2d"));
      case OpKind::Relu: return relu(at(inputs, 0, "relu"));
      case OpKind::Square: return square(at(inputs, 0, "square"));
      case OpKind::Sum: return sum(at(inputs, 0, "sum"));
      case OpKind::Mean: return mean(at(inputs, 0, "mean"));
      case OpKind::L2Norm: return l2_norm(at(inputs, 0, "l2_norm"));
      case OpKind::ScalarMul:
        return scalar_mul(at(inputs, 0, "scalar_mul"), at(inputs, 1, "scalar_mul"));
    }
    throw std::invalid_argument("record_primitive: unknown op kind");
  }

  NodeId add(NodeId a, NodeId b) {
    require_same_shape("add", a, b);
    Tensor out = value(a);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += value(b)[i];
    return push(std::move(out), {a, b},
                [a, b](const Tape&, const Tensor& up, GradientMap& g) {
                  detail::accumulate(g.grad(a), up);
                  detail::accumulate(g.grad(b), up);
                },
                "add");
  }

  NodeId sub(NodeId a, NodeId b) {
    require_same_shape("sub", a, b);
    Tensor out = value(a);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= value(b)[i];
    return push(std::move(out), {a, b},
                [a, b](const Tape&, const Tensor& up, GradientMap& g) {
                  detail::accumulate(g.grad(a), up);
                  detail::accumulate(g.grad(b), up, -1.0);
                },
                "sub");
  }

  NodeId mul(NodeId a, NodeId b) {
    require_same_shape("mul", a, b);
    Tensor out = value(a);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= value(b)[i];
    return push(std::move(out), {a, b},
                [a, b](const Tape& t, const Tensor& up, GradientMap& g) {
                  const Tensor& av = t.value(a);
                  const Tensor& bv = t.value(b);
                  for (std::size_t i = 0; i < up.size(); ++i) {
                    g.grad(a)[i] += up[i] * bv[i];
                    g.grad(b)[i] += up[i] * av[i];
                  }
                },
                "mul");
  }

  NodeId matmul(NodeId a, NodeId b) {
    const Tensor& av = value(a);
    const Tensor& bv = value(b);
    if (av.shape.size() != 2 || bv.shape.size() != 2 || av.shape[1] != bv.shape[0])
      throw std::invalid_argument("matmul: incompatible shapes " + av.shape_str() + " and " +
                                  bv.shape_str());
    return push(detail::matmul_value(av, bv), {a, b},
                [a, b](const Tape& t, const Tensor& up, GradientMap& g) {
                  const Tensor& av = t.value(a);
                  const Tensor& bv = t.value(b);
                  const std::size_t m = av.shape[0], k = av.shape[1], n = bv.shape[1];
                  Tensor& da = g.grad(a);
                  Tensor& db = g.grad(b);
                  for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < n; ++j) {
                      const double u = up[i * n + j];
                      if (u == 0.0) continue;
                      for (std::size_t p = 0; p < k; ++p) {
                        da[i * k + p] += u * bv[p * n + j];
                        db[p * n + j] += u * av[i * k + p];
                      }
                    }
                },
                "matmul");
  }

  NodeId conv2d(NodeId x, NodeId w) {
    Tensor out = detail::conv2d_value(value(x), value(w));
    return push(std::move(out), {x, w},
                [x, w](const Tape& t, const Tensor& up, GradientMap& g) {
                  const Tensor& xv = t.value(x);
                  const Tensor& wv = t.value(w);
                  const detail::ConvDims d = detail::conv_dims_checked(xv, wv);
                  Tensor& dx = g.grad(x);
                  Tensor& dw = g.grad(w);
                  for (std::size_t n = 0; n < d.n; ++n)
                    for (std::size_t o = 0; o < d.o; ++o)
                      for (std::size_t i = 0; i < d.h; ++i)
                        for (std::size_t j = 0; j < d.w; ++j) {
                          const double u = up[((n * d.o + o) * d.h + i) * d.w + j];
                          if (u == 0.0) continue;
                          for (std::size_t c = 0; c < d.c; ++c)
                            for (std::size_t uu = 0; uu < d.k; ++uu)
                              for (std::size_t vv = 0; vv < d.k; ++vv) {
                                const std::ptrdiff_t ii = static_cast<std::ptrdiff_t>(i + uu) -
                                                          static_cast<std::ptrdiff_t>(d.pad);
                                const std::ptrdiff_t jj = static_cast<std::ptrdiff_t>(j + vv) -
                                                          static_cast<std::ptrdiff_t>(d.pad);
                                if (ii < 0 || jj < 0 || ii >= static_cast<std::ptrdiff_t>(d.h) ||
                                    jj >= static_cast<std::ptrdiff_t>(d.w))
                                  continue;
                                const std::size_t xidx =
                                    ((n * d.c + c) * d.h + static_cast<std::size_t>(ii)) * d.w +
                                    static_cast<std::size_t>(jj);
                                const std::size_t widx = ((o * d.c + c) * d.k + uu) * d.k + vv;
                                dx[xidx] += u * wv[widx];
                                dw[widx] += u * xv[xidx];
                              }
                        }
                },
                "conv2d");
  }

  NodeId relu(NodeId x) {
    Tensor out = value(x);
    for (double& v : out.data) v = v > 0.0 ? v : 0.0;
    return push(std::move(out), {x},
                [x](const Tape& t, const Tensor& up, GradientMap& g) {
                  const Tensor& xv = t.value(x);
                  for (std::size_t i = 0; i < up.size(); ++i)
                    if (xv[i] > 0.0) g.grad(x)[i] += up[i];
                },
                "relu");
  }

  NodeId square(NodeId x) {
    Tensor out = value(x);
    for (double& v : out.data) v = v * v;
    return push(std::move(out), {x},
                [x](const Tape& t, const Tensor& up, GradientMap& g) {
                  const Tensor& xv = t.value(x);
                  for (std::size_t i = 0; i < up.size(); ++i) g.grad(x)[i] += up[i] * 2.0 * xv[i];
                },
                "square");
  }

  NodeId sum(NodeId x) {
    double s = 0.0;
    for (double v : value(x).data) s += v;
    return push(Tensor::scalar(s), {x},
                [x](const Tape&, const Tensor& up, GradientMap& g) {
                  for (double& d : g.grad(x).data) d += up[0];
                },
                "sum");
  }

  NodeId mean(NodeId x) {
    const std::size_t n = value(x).size();
    double s = 0.0;
    for (double v : value(x).data) s += v;
    return push(Tensor::scalar(s / static_cast<double>(n)), {x},
                [x, n](const Tape&, const Tensor& up, GradientMap& g) {
                  const double inv = up[0] / static_cast<double>(n);
                  for (double& d : g.grad(x).data) d += inv;
                },
                "mean");
  }

  NodeId l2_norm(NodeId x) {
    return push(Tensor::scalar(l2_norm_value(value(x))), {x},
                [x](const Tape& t, const Tensor& up, GradientMap& g) {
                  const Tensor& xv = t.value(x);
                  const double norm = l2_norm_value(xv);
                  if (norm == 0.0) return;  // subgradient 0 at the origin
                  for (std::size_t i = 0; i < xv.size(); ++i)
                    g.grad(x)[i] += up[0] * xv[i] / norm;
                },
                "l2_norm");
  }

  // s is a single-element node; out = s * t elementwise. s and t both receive
  // exact gradients.
  NodeId scalar_mul(NodeId s, NodeId t) {
    const Tensor& sv = value(s);
    if (!sv.is_scalar())
      throw std::invalid_argument("scalar_mul: first input must be a scalar, got " +
                                  sv.shape_str() + " and " + value(t).shape_str());
    Tensor out = value(t);
    for (double& v : out.data) v *= sv[0];
    return push(std::move(out), {s, t},
                [s, t](const Tape& tp, const Tensor& up, GradientMap& g) {
                  const Tensor& tv = tp.value(t);
                  const double svv = tp.value(s)[0];
                  double ds = 0.0;
                  for (std::size_t i = 0; i < up.size(); ++i) {
                    ds += up[i] * tv[i];
                    g.grad(t)[i] += up[i] * svv;
                  }
                  g.grad(s)[0] += ds;
                },
                "scalar_mul");
  }

  // Constant multiplier that is not itself a node.
  NodeId scale(NodeId t, double c) {
    Tensor out = value(t);
    for (double& v : out.data) v *= c;
    return push(std::move(out), {t},
                [t, c](const Tape&, const Tensor& up, GradientMap& g) {
                  detail::accumulate(g.grad(t), up, c);
                },
                "scale");
  }

  // Forward value is a bit-exact copy; the backward rule passes nothing down.
  NodeId stop_gradient(NodeId t) {
    return push(value(t), {t}, nullptr, "stop_gradient", /*check_finite=*/false);
  }

  // Escape hatch for operations with hand-specified gradients (surrogate sign
  // rules, branch probes, reshapes). The caller owns anything captured by fn.
  NodeId record_custom(Tensor value, std::vector<NodeId> inputs, BackwardFn fn, std::string name,
                       bool check_finite = true) {
    return push(std::move(value), std::move(inputs), std::move(fn), std::move(name), check_finite);
  }

  const Tensor& value(NodeId id) const { return nodes_.at(static_cast<std::size_t>(id)).value; }

  std::size_t size() const { return nodes_.size(); }

  std::size_t count_ops(const std::string& name_prefix) const {
    std::size_t c = 0;
    for (const Node& n : nodes_)
      if (n.name.rfind(name_prefix, 0) == 0) ++c;
    return c;
  }

  // Seeds the loss adjoint with 1 and sweeps the tape in reverse. Adjoints are
  // zero-initialized, accumulation is addition, and a fresh map is produced on
  // every call, so repeated backward passes over one tape are identical.
  GradientMap backward(NodeId loss) const {
    const Tensor& lv = value(loss);
    if (!lv.is_scalar())
      throw std::invalid_argument("backward: loss must be a scalar node, got shape " +
                                  lv.shape_str());
    GradientMap g;
    g.adjoints.reserve(nodes_.size());
    for (const Node& n : nodes_) g.adjoints.push_back(Tensor::zeros(n.value.shape));
    g.adjoints[static_cast<std::size_t>(loss)][0] = 1.0;
    for (NodeId i = loss; i >= 0; --i) {
      const Node& n = nodes_[static_cast<std::size_t>(i)];
      if (n.backward) n.backward(*this, g.adjoints[static_cast<std::size_t>(i)], g);
    }
    return g;
  }

 private:
  struct Node {
    Tensor value;
    std::vector<NodeId> inputs;
    BackwardFn backward;
    std::string name;
  };

  static NodeId at(const std::vector<NodeId>& v, std::size_t i, const char* op) {
    if (i >= v.size())
      throw std::invalid_argument(std::string(op) + ": missing input operand " +
                                  std::to_string(i));
    return v[i];
  }

  void require_same_shape(const char* op, NodeId a, NodeId b) const {
    if (!value(a).same_shape(value(b)))
      throw std::invalid_argument(std::string(op) + ": shape mismatch " + value(a).shape_str() +
                                  " vs " + value(b).shape_str());
  }

  NodeId push(Tensor value, std::vector<NodeId> inputs, BackwardFn fn, std::string name,
              bool check_finite = true) {
    const NodeId id = static_cast<NodeId>(nodes_.size());
    for (NodeId in : inputs)
      if (in < 0 || in >= id)
        throw std::invalid_argument(name + ": input node " + std::to_string(in) +
                                    " does not precede node " + std::to_string(id));
    if (check_finite && !value.all_finite())
      throw std::runtime_error(name + ": forward pass produced non-finite values");
    nodes_.push_back(Node{std::move(value), std::move(inputs), std::move(fn), std::move(name)});
    return id;
  }

  std::vector<Node> nodes_;
};

}  // namespace surge
