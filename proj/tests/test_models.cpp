#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "surge/models.hpp"
#include "surge/rng.hpp"

using namespace surge;

TEST_CASE("beale values") {
  CHECK(beale(3.0, 0.5) == 0.0);        // global minimum
  CHECK(beale(0.0, 0.0) == 14.203125);  // 1.5^2 + 2.25^2 + 2.625^2
}

TEST_CASE("beale gradient vanishes at the optimum") {
  Tape t;
  const NodeId x = t.leaf(Tensor::scalar(3.0));
  const NodeId y = t.leaf(Tensor::scalar(0.5));
  const GradientMap g = t.backward(beale_node(t, x, y));
  CHECK(g.grad(x)[0] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(g.grad(y)[0] == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("beale autodiff gradient matches finite differences at 100 random points") {
  Rng r = Rng::make(101, 0);
  const double h = 1e-5;
  for (int i = 0; i < 100; ++i) {
    const double px = r.uniform(-4.0, 4.0);
    const double py = r.uniform(-4.0, 4.0);
    Tape t;
    const NodeId x = t.leaf(Tensor::scalar(px));
    const NodeId y = t.leaf(Tensor::scalar(py));
    const GradientMap g = t.backward(beale_node(t, x, y));
    const double fdx = (beale(px + h, py) - beale(px - h, py)) / (2 * h);
    const double fdy = (beale(px, py + h) - beale(px, py - h)) / (2 * h);
    CHECK(std::abs(g.grad(x)[0] - fdx) / std::max(std::abs(fdx), 1.0) < 1e-6);
    CHECK(std::abs(g.grad(y)[0] - fdy) / std::max(std::abs(fdy), 1.0) < 1e-6);
  }
}

TEST_CASE("toy models share initialization across methods") {
  const Method methods[] = {Method::FP,     Method::STE,         Method::SteSurge,
                            Method::BiReal, Method::BiRealSurge, Method::SteNoise};
  Model ref = build_toy_model(16, Method::FP, 7);
  for (Method m : methods) {
    Model candidate = build_toy_model(16, m, 7);
    REQUIRE(candidate.blocks.size() == ref.blocks.size());
    for (std::size_t b = 0; b < ref.blocks.size(); ++b)
      CHECK(bitwise_equal(candidate.blocks[b].weights(), ref.blocks[b].weights()));
  }
  // different seed, different parameters
  Model other = build_toy_model(16, Method::FP, 8);
  CHECK(!bitwise_equal(other.blocks[0].weights(), ref.blocks[0].weights()));
}

TEST_CASE("FP mode records no quantization nodes") {
  Model m = build_toy_model(8, Method::FP, 3);
  Tape t;
  m.forward(t, t.leaf(Tensor::full({8, 1}, 1.0)));
  CHECK(t.count_ops("sign") == 0);
}

TEST_CASE("binarized modes record sign nodes; output stays 2-d") {
  Model m = build_toy_model(8, Method::STE, 3);
  Tape t;
  const NodeId out = m.forward(t, t.leaf(Tensor::full({8, 1}, 1.0)));
  CHECK(t.count_ops("sign") > 0);
  CHECK(t.value(out).shape == std::vector<std::size_t>{2, 1});
}

TEST_CASE("surge mode attaches two compensated layers with the cardinality seed") {
  Model m = build_toy_model(16, Method::SteSurge, 5, 8);
  int with_aux = 0;
  for (const Block& b : m.blocks) {
    if (!b.aux) continue;
    ++with_aux;
    CHECK(b.aux->ags.lambda ==
          doctest::Approx(1.0 / std::sqrt(static_cast<double>(b.aux->w_aux.size()))));
    CHECK(bitwise_equal(b.aux->w_aux, b.weights()));  // aux starts as a copy
  }
  CHECK(with_aux == 2);
  CHECK(!m.blocks.back().aux);  // output head stays plain
  CHECK(!m.blocks.back().binarized);
}

TEST_CASE("sgd_step") {
  Tensor p = Tensor::scalar(1.0);
  GradientMap g;
  g.adjoints.push_back(Tensor::scalar(2.0));
  std::vector<ParamRef> params{{"p", &p, 0}};
  sgd_step(params, g, 0.1);
  CHECK(p[0] == doctest::Approx(0.8));
  g.adjoints[0][0] = 0.0;
  sgd_step(params, g, 0.1);
  CHECK(p[0] == doctest::Approx(0.8));  // zero gradient leaves it fixed
}

TEST_CASE("sgd matches a hand-rolled loop on a 3-parameter model") {
  Tensor a = Tensor::scalar(1.0), b = Tensor::scalar(-2.0), c = Tensor::scalar(0.5);
  GradientMap g;
  g.adjoints.push_back(Tensor::scalar(0.3));
  g.adjoints.push_back(Tensor::scalar(-1.0));
  g.adjoints.push_back(Tensor::scalar(4.0));
  std::vector<ParamRef> params{{"a", &a, 0}, {"b", &b, 1}, {"c", &c, 2}};
  sgd_step(params, g, 0.05);
  CHECK(a[0] == doctest::Approx(1.0 - 0.05 * 0.3));
  CHECK(b[0] == doctest::Approx(-2.0 + 0.05 * 1.0));
  CHECK(c[0] == doctest::Approx(0.5 - 0.05 * 4.0));
}

TEST_CASE("adam first step follows the closed form") {
  AdamState s;
  s.lr = 0.001;
  Tensor p = Tensor::scalar(0.0);
  GradientMap g;
  g.adjoints.push_back(Tensor::scalar(1.0));
  std::vector<ParamRef> params{{"p", &p, 0}};
  adam_step(s, params, g);
  // mhat = g, vhat = g^2 at t=1, so dp = -lr * g / (|g| + eps)
  CHECK(std::abs(p[0] + 0.001) < 1e-6);
}

TEST_CASE("adam keeps symmetric parameters symmetric and ignores zero gradients") {
  AdamState s;
  Tensor p1 = Tensor::scalar(0.7), p2 = Tensor::scalar(0.7), q = Tensor::scalar(3.0);
  GradientMap g;
  g.adjoints.push_back(Tensor::scalar(0.4));
  g.adjoints.push_back(Tensor::scalar(0.4));
  g.adjoints.push_back(Tensor::scalar(0.0));
  std::vector<ParamRef> params{{"p1", &p1, 0}, {"p2", &p2, 1}, {"q", &q, 2}};
  for (int i = 0; i < 5; ++i) adam_step(s, params, g);
  CHECK(p1[0] == p2[0]);
  CHECK(q[0] == 3.0);
}

TEST_CASE("sgd with zero learning rate leaves every parameter fixed") {
  Model m = build_toy_model(8, Method::SteSurge, 13, 4);
  const Model before = m;
  Tape t;
  const NodeId out = m.forward(t, t.leaf(Tensor::full({4, 1}, 1.0)));
  const GradientMap g = t.backward(t.sum(t.square(out)));
  sgd_step(m.params(), g, 0.0);
  for (std::size_t b = 0; b < m.blocks.size(); ++b)
    CHECK(bitwise_equal(m.blocks[b].weights(), before.blocks[b].weights()));
}

TEST_CASE("classifier builder") {
  SUBCASE("3-layer MLP binarizes only the middle layer") {
    Model m = build_classifier({}, Method::STE, 1);
    REQUIRE(m.blocks.size() == 3);
    CHECK(!m.blocks[0].binarized);
    CHECK(m.blocks[1].binarized);
    CHECK(!m.blocks[2].binarized);
  }
  SUBCASE("all-FP config equals a plain MLP") {
    Model m = build_classifier({}, Method::FP, 1);
    Tape t;
    m.forward(t, t.leaf(Tensor::full({3, 4}, 0.5)));
    CHECK(t.count_ops("sign") == 0);
    CHECK(t.count_ops("dpgc") == 0);
  }
  SUBCASE("cnn with star mode uses 1x1 auxiliary kernels") {
    ClassifierConfig cc;
    cc.kind = "cnn";
    SurgeOptions opt;
    opt.surge_star = true;
    Model m = build_classifier(cc, Method::SteSurge, 1, opt);
    REQUIRE(m.blocks.size() == 3);
    REQUIRE(m.blocks[1].aux.has_value());
    CHECK(m.blocks[1].aux->w_aux.shape ==
          std::vector<std::size_t>{cc.channels, cc.channels, 1, 1});
    // forward runs end to end
    Tape t;
    const NodeId out = m.forward(t, t.leaf(Tensor::full({2, 1, 6, 6}, 0.3)));
    CHECK(t.value(out).shape == std::vector<std::size_t>{2, 2});
  }
  SUBCASE("invalid sizes are rejected") {
    ClassifierConfig cc;
    cc.hidden = 0;
    CHECK_THROWS_AS(build_classifier(cc, Method::STE, 1), std::invalid_argument);
  }
}

TEST_CASE("two moons dataset is deterministic, balanced and separable") {
  const Dataset d1 = two_moons(1000, 0.12, 0.7, 42);
  const Dataset d2 = two_moons(1000, 0.12, 0.7, 42);
  CHECK(bitwise_equal(d1.x_train, d2.x_train));
  CHECK(bitwise_equal(d1.y_test, d2.y_test));
  CHECK(d1.x_train.shape == std::vector<std::size_t>{3, 700});
  CHECK(d1.x_test.shape == std::vector<std::size_t>{3, 300});

  // constant third feature
  for (std::size_t i = 0; i < 700; ++i) CHECK(d1.x_train[2 * 700 + i] == 1.0);

  // roughly balanced classes
  std::size_t c0 = 0;
  for (std::size_t i = 0; i < 300; ++i)
    if (d1.y_test[0 * 300 + i] > 0) ++c0;
  CHECK(c0 > 100);
  CHECK(c0 < 200);

  // a full-precision model learns it comfortably
  Model m = build_classifier({}, Method::FP, 3);
  AdamState adam;
  for (int step = 0; step < 200; ++step) {
    Tape t;
    const NodeId out = m.forward(t, t.leaf(d1.x_train));
    const NodeId loss = t.mean(t.square(t.sub(out, t.leaf(d1.y_train))));
    const GradientMap g = t.backward(loss);
    adam_step(adam, m.params(), g);
  }
  CHECK(accuracy(m, d1.x_test, d1.y_test) > 0.85);
}

TEST_CASE("gaussian blobs dataset") {
  const Dataset d = gaussian_blobs(400, 0.5, 0.7, 9);
  CHECK(d.x_train.shape == std::vector<std::size_t>{3, 280});
  CHECK(d.y_train.shape == std::vector<std::size_t>{2, 280});
}

TEST_CASE("unknown method tag is rejected") {
  CHECK_THROWS_AS(parse_method("STE+MAGIC"), std::invalid_argument);
  CHECK(parse_method("BiReal+SURGE") == Method::BiRealSurge);
  CHECK(method_name(Method::SteNoise) == "STE+Noise");
}

TEST_CASE("toy builder accepts per-layer modes") {
  Model m = build_toy_model(8, std::array<Method, 2>{Method::FP, Method::SteSurge}, 4, 4);
  CHECK(!m.blocks[0].binarized);
  CHECK(m.blocks[1].binarized);
  CHECK(m.blocks[1].aux.has_value());
  Tape t;
  const NodeId out = m.forward(t, t.leaf(Tensor::full({4, 1}, 1.0)));
  const GradientMap g = t.backward(t.sum(t.square(out)));
  CHECK(g.grad(m.blocks[0].lin.w_node).size() == m.blocks[0].weights().size());
}
