#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "surge/dpgc.hpp"
#include "surge/models.hpp"
#include "surge/rng.hpp"

using namespace surge;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, Rng& r, double lo = -2.0, double hi = 2.0) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.data) v = r.uniform(lo, hi);
  return t;
}

DpgcLinear make_layer(Rng& r, std::size_t out_dim, std::size_t in_dim, double lambda) {
  DpgcLinear layer;
  layer.main.weight = random_tensor({out_dim, in_dim}, r);
  layer.main.reset_alphas();
  layer.init_aux();
  layer.aux.w_aux = random_tensor({out_dim, in_dim}, r);  // decorrelate from main
  layer.aux.ags.lambda = lambda;
  return layer;
}

}  // namespace

TEST_CASE("lambda_init") {
  CHECK(lambda_init(100) == doctest::Approx(0.1));
  CHECK(lambda_init(1) == 1.0);
  CHECK(lambda_init(64) == doctest::Approx(0.125));
  CHECK_THROWS_AS(lambda_init(0), std::invalid_argument);
}

TEST_CASE("forward value is bit-identical to the main branch alone") {
  Rng r = Rng::make(1, 0);
  for (int rep = 0; rep < 10; ++rep) {
    DpgcLinear layer = make_layer(r, 4, 6, r.uniform(0.0, 2.0));
    const Tensor x = random_tensor({6, 3}, r);

    Tape t1;
    const Tensor with_aux = t1.value(dpgc_forward(t1, t1.leaf(x), layer));

    BinarizedLinear main_only = layer.main;
    Tape t2;
    const Tensor plain = t2.value(main_only.forward(t2, t2.leaf(x)));

    CHECK(bitwise_equal(with_aux, plain));
  }
}

TEST_CASE("lambda zero reduces to pure STE gradients") {
  Rng r = Rng::make(2, 0);
  DpgcLinear layer = make_layer(r, 3, 5, 0.0);
  const Tensor x = random_tensor({5, 2}, r);

  Tape t1;
  const NodeId x1 = t1.leaf(x);
  const GradientMap g1 = t1.backward(t1.sum(t1.square(dpgc_forward(t1, x1, layer))));

  BinarizedLinear main_only = layer.main;
  Tape t2;
  const NodeId x2 = t2.leaf(x);
  const GradientMap g2 = t2.backward(t2.sum(t2.square(main_only.forward(t2, x2))));

  CHECK(bitwise_equal(g1.grad(x1), g2.grad(x2)));
  CHECK(bitwise_equal(g1.grad(layer.main.w_node), g2.grad(main_only.w_node)));
}

TEST_CASE("one-dimensional hand example of the decoupled chain rule") {
  DpgcLinear layer;
  layer.main.weight = Tensor({1, 1}, {0.8});
  layer.main.alpha_w = Tensor::scalar(0.8);
  layer.main.alpha_x = Tensor::scalar(0.5);
  layer.init_aux();
  layer.aux.w_aux = Tensor({1, 1}, {0.3});
  layer.aux.ags.lambda = 0.1;

  Tape t;
  const NodeId x = t.leaf(Tensor({1, 1}, {0.5}));
  const NodeId out = dpgc_forward(t, x, layer);
  const GradientMap g = t.backward(t.sum(out));
  // STE path 0.8*0.5*1 plus lambda * W_a = 0.1*0.3
  CHECK(g.grad(x)[0] == doctest::Approx(0.43));
}

TEST_CASE("gradient decomposition against independent per-branch recomputation") {
  Rng r = Rng::make(3, 0);
  for (int rep = 0; rep < 8; ++rep) {
    const double lambda = r.uniform(0.0, 1.5);
    DpgcLinear layer = make_layer(r, 4, 6, lambda);
    const Tensor x = random_tensor({6, 3}, r);

    Tape t;
    const NodeId xn = t.leaf(x);
    const NodeId out = dpgc_forward(t, xn, layer);
    const GradientMap g = t.backward(t.sum(t.square(out)));
    const BranchGradients bg = dpgc_backward(layer, g);

    // main branch alone on its own tape (loss has the same upstream because
    // the forward values are identical)
    BinarizedLinear main_only = layer.main;
    Tape tb;
    const NodeId xb = tb.leaf(x);
    const GradientMap gb_map = tb.backward(tb.sum(tb.square(main_only.forward(tb, xb))));
    CHECK(max_abs_diff(bg.g_b, gb_map.grad(xb)) == 0.0);

    // auxiliary branch alone: full-precision matmul with the main-branch
    // upstream 2*f_b
    Tape ta;
    const NodeId xa = ta.leaf(x);
    const NodeId fa = ta.matmul(ta.leaf(layer.aux.w_aux), xa);
    Tape tmain;
    const Tensor fb_vals = tmain.value(main_only.forward(tmain, tmain.leaf(x)));
    Tensor upstream = fb_vals;
    for (double& v : upstream.data) v *= 2.0;
    // chain the fixed upstream through sum(fa * upstream)
    const NodeId weighted = ta.sum(ta.mul(fa, ta.leaf(upstream)));
    const GradientMap ga_map = ta.backward(weighted);
    CHECK(max_abs_diff(bg.g_a, ga_map.grad(xa)) < 1e-12);

    // total equals g_b + lambda * g_a elementwise
    Tensor expect = bg.g_b;
    for (std::size_t i = 0; i < expect.size(); ++i) expect[i] += lambda * bg.g_a[i];
    CHECK(max_abs_diff(g.grad(xn), expect) < 1e-12);
  }
}

TEST_CASE("auxiliary input gradient matches finite differences of the FP branch") {
  Rng r = Rng::make(4, 0);
  DpgcLinear layer = make_layer(r, 3, 5, 0.7);
  const Tensor x = random_tensor({5, 1}, r);

  Tape t;
  const NodeId xn = t.leaf(x);
  const GradientMap g = t.backward(t.sum(dpgc_forward(t, xn, layer)));
  const Tensor& g_a = layer.aux.g_a();

  // data-side oracle: d/dx of sum(W_a x)
  const double h = 1e-5;
  for (std::size_t i = 0; i < x.size(); ++i) {
    auto eval = [&](double delta) {
      Tensor xx = x;
      xx[i] += delta;
      Tape tt;
      return tt.value(tt.sum(tt.matmul(tt.leaf(layer.aux.w_aux), tt.leaf(xx))))[0];
    };
    const double fd = (eval(h) - eval(-h)) / (2 * h);
    CHECK(std::abs(g_a[i] - fd) / std::max(std::abs(fd), 1.0) < 1e-6);
  }
}

TEST_CASE("weight gradient of the auxiliary branch carries lambda") {
  Rng r = Rng::make(5, 0);
  const double lambda = 0.37;
  DpgcLinear layer = make_layer(r, 2, 3, lambda);
  const Tensor x = random_tensor({3, 1}, r);

  Tape t;
  const NodeId xn = t.leaf(x);
  const GradientMap g = t.backward(t.sum(dpgc_forward(t, xn, layer)));
  const BranchGradients bg = dpgc_backward(layer, g);

  // dL/dW_a with upstream ones is x broadcast over rows; lambda scales it
  for (std::size_t o = 0; o < 2; ++o)
    for (std::size_t i = 0; i < 3; ++i)
      CHECK(bg.g_wa[o * 3 + i] == doctest::Approx(lambda * x[i]));
}

TEST_CASE("ags_update") {
  AgsState s;
  s.eta = 0.01;
  SUBCASE("norm-ratio arithmetic") {
    const double l = ags_update(s, Tensor::row({3, 4}), Tensor::row({0, 2}));
    CHECK(l == doctest::Approx(0.01 * 5.0 / (2.0 + 1e-8)));
    CHECK(s.last_gb_norm == doctest::Approx(5.0));
    CHECK(s.last_ga_norm == doctest::Approx(2.0));
  }
  SUBCASE("zero numerator gives zero") {
    CHECK(ags_update(s, Tensor::row({0, 0}), Tensor::row({1, 1})) == 0.0);
  }
  SUBCASE("stabilizer keeps the zero-denominator case finite") {
    const double l = ags_update(s, Tensor::row({3, 4}), Tensor::row({0, 0}));
    CHECK(l == doctest::Approx(0.01 * 5.0 / 1e-8));
    CHECK(std::isfinite(l));
  }
  SUBCASE("fixed mode records norms but keeps lambda") {
    s.adaptive = false;
    s.lambda = 0.5;
    CHECK(ags_update(s, Tensor::row({3, 4}), Tensor::row({1, 0})) == 0.5);
    CHECK(s.last_gb_norm == doctest::Approx(5.0));
  }
}

TEST_CASE("scope_mask") {
  const Tensor g_a = Tensor::row({1, 2, 3});
  const Tensor x = Tensor::row({1.5, 0.5, -2.0});
  SUBCASE("clipped_only keeps out-of-range entries") {
    const Tensor m = scope_mask(g_a, x, GradScope::ClippedOnly);
    CHECK(m[0] == 1.0);
    CHECK(m[1] == 0.0);
    CHECK(m[2] == 3.0);
  }
  SUBCASE("in_range_only is the complement") {
    const Tensor m = scope_mask(g_a, x, GradScope::InRangeOnly);
    CHECK(m[0] == 0.0);
    CHECK(m[1] == 2.0);
    CHECK(m[2] == 0.0);
  }
  SUBCASE("all is the identity and the two scopes partition it") {
    Rng r = Rng::make(6, 0);
    const Tensor g = random_tensor({32}, r);
    const Tensor xv = random_tensor({32}, r, -3.0, 3.0);
    const Tensor all = scope_mask(g, xv, GradScope::All);
    CHECK(bitwise_equal(all, g));
    const Tensor clip = scope_mask(g, xv, GradScope::ClippedOnly);
    const Tensor inr = scope_mask(g, xv, GradScope::InRangeOnly);
    for (std::size_t i = 0; i < g.size(); ++i) CHECK(clip[i] + inr[i] == g[i]);
  }
  SUBCASE("unknown scope tag fails at parse") {
    CHECK_THROWS_AS(parse_scope("everything"), std::invalid_argument);
    CHECK(parse_scope("clipped_only") == GradScope::ClippedOnly);
  }
}

TEST_CASE("scoped layers partition the input gradient") {
  Rng r = Rng::make(7, 0);
  const Tensor x = random_tensor({5, 2}, r, -2.5, 2.5);
  auto total_grad = [&](GradScope scope) {
    Rng rr = Rng::make(7, 1);
    DpgcLinear layer = make_layer(rr, 3, 5, 0.6);
    layer.aux.scope = scope;
    Tape t;
    const NodeId xn = t.leaf(x);
    const GradientMap g = t.backward(t.sum(t.square(dpgc_forward(t, xn, layer))));
    return g.grad(xn);
  };
  const Tensor g_all = total_grad(GradScope::All);
  const Tensor g_clip = total_grad(GradScope::ClippedOnly);
  const Tensor g_in = total_grad(GradScope::InRangeOnly);
  // the STE part g_b appears in every scope, the aux parts partition
  Rng rr = Rng::make(7, 1);
  DpgcLinear layer = make_layer(rr, 3, 5, 0.0);
  Tape t;
  const NodeId xn = t.leaf(x);
  const GradientMap g = t.backward(t.sum(t.square(dpgc_forward(t, xn, layer))));
  const Tensor& g_b = g.grad(xn);
  for (std::size_t i = 0; i < g_all.size(); ++i)
    CHECK(g_clip[i] + g_in[i] - g_b[i] == doctest::Approx(g_all[i]).epsilon(1e-12));
}

TEST_CASE("strip_auxiliary") {
  Rng r = Rng::make(8, 0);
  Model m = build_toy_model(8, Method::SteSurge, 99, 4);
  const Model stripped = strip_auxiliary(m);

  SUBCASE("outputs identical on many random inputs") {
    Model full = m;
    Model bare = stripped;
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
      const Tensor x = random_tensor({4, 1}, r);
      const Tensor a = full.forward_values(x);
      const Tensor b = bare.forward_values(x);
      worst = std::max(worst, max_abs_diff(a, b));
    }
    CHECK(worst == 0.0);
  }
  SUBCASE("auxiliary parameters are gone") {
    std::size_t aux_elems = 0;
    for (const Block& b : m.blocks)
      if (b.aux) aux_elems += b.aux->w_aux.size();
    CHECK(aux_elems > 0);
    CHECK(stripped.param_count() + aux_elems == m.param_count());
    for (const Block& b : stripped.blocks) CHECK(!b.aux);
  }
  SUBCASE("stripping twice is idempotent") {
    const Model twice = strip_auxiliary(stripped);
    CHECK(twice.param_count() == stripped.param_count());
    Model a = strip_auxiliary(stripped);
    Model b = strip_auxiliary(strip_auxiliary(stripped));
    const Tensor x = random_tensor({4, 1}, r);
    CHECK(bitwise_equal(a.forward_values(x), b.forward_values(x)));
  }
}

TEST_CASE("equal-shape auxiliary weights double the linear weight count") {
  Model m = build_toy_model(8, Method::SteSurge, 5, 4);
  std::size_t main_w = 0, aux_w = 0;
  for (const Block& b : m.blocks) {
    if (b.aux) {
      main_w += b.weights().size();
      aux_w += b.aux->w_aux.size();
    }
  }
  CHECK(main_w == aux_w);
}

TEST_CASE("branch gradients are unavailable before a backward pass") {
  Rng r = Rng::make(9, 0);
  DpgcLinear layer = make_layer(r, 2, 3, 0.5);
  CHECK_THROWS_AS(layer.aux.g_b(), std::logic_error);
  Tape t;
  dpgc_forward(t, t.leaf(random_tensor({3, 1}, r)), layer);
  CHECK_THROWS_AS(layer.aux.g_a(), std::logic_error);  // forward alone is not enough
}

TEST_CASE("ags dominance bound holds for the updating step's gradients") {
  Rng r = Rng::make(10, 0);
  for (int rep = 0; rep < 20; ++rep) {
    DpgcLinear layer = make_layer(r, 4, 6, r.uniform(0.0, 1.0));
    layer.aux.ags.eta = 0.01;
    const Tensor x = random_tensor({6, 2}, r);
    Tape t;
    const NodeId xn = t.leaf(x);
    t.backward(t.sum(t.square(dpgc_forward(t, xn, layer))));
    const double lambda_new = layer.aux.ags_step();
    const double gb = l2_norm_value(layer.aux.g_b());
    const double ga = l2_norm_value(layer.aux.g_a());
    CHECK(lambda_new * ga <= 0.01 * gb + 1e-15);
  }
}

TEST_CASE("lambda produced at step t is consumed at step t+1") {
  Rng r = Rng::make(11, 0);
  DpgcLinear layer = make_layer(r, 3, 4, lambda_init(12));
  double expected_next = layer.aux.ags.lambda;
  for (int step = 0; step < 5; ++step) {
    Tape t;
    const NodeId xn = t.leaf(random_tensor({4, 1}, r));
    const NodeId out = dpgc_forward(t, xn, layer);
    CHECK(layer.aux.lambda_used == expected_next);
    t.backward(t.sum(t.square(out)));
    expected_next = layer.aux.ags_step();
  }
}

TEST_CASE("conv dual path: forward identity and star-mode kernels") {
  Rng r = Rng::make(12, 0);
  DpgcConv2d layer;
  layer.main.weight = random_tensor({3, 2, 3, 3}, r);
  layer.main.reset_alphas();
  layer.init_aux(/*star_mode=*/true);
  layer.aux.ags.lambda = 0.4;
  CHECK(layer.aux.w_aux.shape == std::vector<std::size_t>{3, 2, 1, 1});
  CHECK(layer.aux.ags.lambda == 0.4);

  const Tensor x = random_tensor({2, 2, 5, 5}, r);
  Tape t1;
  const Tensor with_aux = t1.value(dpgc_forward(t1, t1.leaf(x), layer));
  BinarizedConv2d main_only = layer.main;
  Tape t2;
  const Tensor plain = t2.value(main_only.forward(t2, t2.leaf(x)));
  CHECK(bitwise_equal(with_aux, plain));

  // star-mode lambda_init uses the 1x1 cardinality
  DpgcConv2d fresh;
  fresh.main.weight = random_tensor({3, 2, 3, 3}, r);
  fresh.main.reset_alphas();
  fresh.init_aux(true);
  CHECK(fresh.aux.ags.lambda == doctest::Approx(1.0 / std::sqrt(6.0)));
}
