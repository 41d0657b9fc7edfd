#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "surge/rng.hpp"
#include "surge/theory.hpp"

using namespace surge;
using namespace surge::theory;

namespace {

GradMomentModel aligned_noiseless(std::size_t d) {
  // delta_b == mu_a, no noise anywhere: the optimum is exactly 1
  GradMomentModel m;
  m.d = d;
  m.g_star.assign(d, 0.0);
  m.delta_b.assign(d, 0.0);
  m.mu_a.assign(d, 0.0);
  Rng r = Rng::make(5, 0);
  for (std::size_t i = 0; i < d; ++i) {
    m.g_star[i] = r.normal();
    m.delta_b[i] = 0.5 * r.normal();
    m.mu_a[i] = m.delta_b[i];
  }
  return m;
}

}  // namespace

TEST_CASE("zero-noise samples equal their means exactly") {
  GradMomentModel m = aligned_noiseless(6);
  const SampleSet s = sample_gradient_pairs(m, 10, 3);
  const std::vector<double> mb = m.mu_b();
  for (std::size_t i = 0; i < s.n; ++i)
    for (std::size_t j = 0; j < s.d; ++j) {
      CHECK(s.gb[i * s.d + j] == mb[j]);
      CHECK(s.ga[i * s.d + j] == m.mu_a[j]);
    }
}

TEST_CASE("sample mean of g_a stays within the CLT bound of mu_a") {
  GradMomentModel m = aligned_noiseless(8);
  m.sigma_a = 0.7;
  m.sigma_b = 0.4;
  const std::size_t n = 1000000;
  const SampleSet s = sample_gradient_pairs(m, n, 11);
  const double bound = 4.0 * m.sigma_a / std::sqrt(static_cast<double>(n));
  for (std::size_t j = 0; j < m.d; ++j) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += s.ga[i * s.d + j];
    CHECK(std::abs(acc / static_cast<double>(n) - m.mu_a[j]) < bound);
  }
}

TEST_CASE("branch noises are uncorrelated in the dot-product sense") {
  GradMomentModel m = aligned_noiseless(8);
  m.sigma_a = 0.5;
  m.sigma_b = 0.5;
  const std::size_t n = 200000;
  const SampleSet s = sample_gradient_pairs(m, n, 13);
  const std::vector<double> mb = m.mu_b();
  double cross = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < s.d; ++j)
      cross += (s.gb[i * s.d + j] - mb[j]) * (s.ga[i * s.d + j] - m.mu_a[j]);
  cross /= static_cast<double>(n);
  // MC error of the cross term is about sigma_b sigma_a sqrt(d/n)
  CHECK(std::abs(cross) < 6.0 * 0.25 * std::sqrt(8.0 / static_cast<double>(n)));
}

TEST_CASE("analytic optimum closed-form cases") {
  SUBCASE("perfect alignment, zero noise") {
    CHECK(lambda_star_analytic(aligned_noiseless(12)) == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("orthogonal compensator has zero optimum") {
    GradMomentModel m;
    m.d = 2;
    m.g_star = {1.0, 0.0};
    m.delta_b = {1.0, 0.0};
    m.mu_a = {0.0, 1.0};
    CHECK(lambda_star_analytic(m) == 0.0);
  }
  SUBCASE("degenerate compensator errors out") {
    GradMomentModel m;
    m.d = 2;
    m.g_star = {1.0, 0.0};
    m.delta_b = {1.0, 0.0};
    m.mu_a = {0.0, 0.0};
    m.sigma_a = 0.0;
    CHECK_THROWS_AS(lambda_star_analytic(m), std::invalid_argument);
  }
}

TEST_CASE("empirical error special cases") {
  GradMomentModel m = aligned_noiseless(5);
  const SampleSet s = sample_gradient_pairs(m, 64, 7);
  SUBCASE("lambda 0 with zero branch noise leaves the squared bias") {
    double db2 = 0.0;
    for (double v : m.delta_b) db2 += v * v;
    CHECK(expected_error_empirical(s, m.g_star, 0.0) == doctest::Approx(db2).epsilon(1e-12));
  }
  SUBCASE("aligned noiseless case cancels exactly at lambda 1") {
    CHECK(expected_error_empirical(s, m.g_star, 1.0) == doctest::Approx(0.0).epsilon(1e-12));
  }
}

TEST_CASE("error curve is convex in lambda") {
  const GradMomentModel m = random_moment_model(16, 21);
  const SampleSet s = sample_gradient_pairs(m, 2000, 22);
  std::vector<double> curve;
  for (int i = 0; i <= 40; ++i) curve.push_back(expected_error_empirical(s, m.g_star, -2.0 + 0.1 * i));
  for (std::size_t i = 1; i + 1 < curve.size(); ++i)
    CHECK(curve[i + 1] - 2.0 * curve[i] + curve[i - 1] >= -1e-9);
}

TEST_CASE("quadratic reduction equals the literal empirical estimator") {
  const GradMomentModel m = random_moment_model(12, 31);
  const SampleSet s = sample_gradient_pairs(m, 500, 32);
  const EmpiricalQuadratic q = reduce_error_quadratic(s, m.g_star);
  for (double lambda : {-1.3, -0.2, 0.0, 0.4, 0.9, 2.5}) {
    const double literal = expected_error_empirical(s, m.g_star, lambda);
    CHECK(std::abs(q.eval(lambda) - literal) / std::max(literal, 1.0) < 1e-9);
  }
}

TEST_CASE("grid oracle") {
  SUBCASE("zero-noise aligned case lands on the grid point nearest 1") {
    GradMomentModel m = aligned_noiseless(9);
    const SampleSet s = sample_gradient_pairs(m, 32, 3);
    const double l = lambda_star_grid_oracle(s, m.g_star, {0.0, 2.0, 2001});
    CHECK(std::abs(l - 1.0) < 1e-9);
  }
  SUBCASE("minimizer at an endpoint raises") {
    GradMomentModel m = aligned_noiseless(9);
    const SampleSet s = sample_gradient_pairs(m, 32, 3);
    CHECK_THROWS_AS(lambda_star_grid_oracle(s, m.g_star, {2.0, 4.0, 101}), std::runtime_error);
    // adaptive expansion recovers
    CHECK(lambda_star_grid_oracle_adaptive(s, m.g_star, {2.0, 4.0, 2001}) ==
          doctest::Approx(1.0).epsilon(1e-6));
  }
  SUBCASE("agrees with the three-point parabola vertex within one cell") {
    const GradMomentModel m = random_moment_model(16, 41);
    const SampleSet s = sample_gradient_pairs(m, 20000, 42);
    const GridSpec grid{-1.0, 1.0, 2001};
    const double l = lambda_star_grid_oracle(s, m.g_star, grid);
    const double h = (grid.hi - grid.lo) / 2000.0;
    const double f0 = expected_error_empirical(s, m.g_star, l - h);
    const double f1 = expected_error_empirical(s, m.g_star, l);
    const double f2 = expected_error_empirical(s, m.g_star, l + h);
    const double vertex = l + 0.5 * h * (f0 - f2) / (f0 - 2 * f1 + f2);
    CHECK(std::abs(vertex - l) <= h);
  }
}

TEST_CASE("oracle and analytic optimum agree at Monte-Carlo scale") {
  const GradMomentModel m = random_moment_model(32, 51);
  const SampleSet s = sample_gradient_pairs(m, 100000, 52);
  const double analytic = lambda_star_analytic(m);
  const double oracle =
      lambda_star_grid_oracle_adaptive(s, m.g_star, {analytic - 1.0, analytic + 1.0, 2001});
  CHECK(std::abs(analytic - oracle) / std::max(std::abs(analytic), 1e-6) < 0.05);
}

TEST_CASE("empirical curve has exactly one local minimum") {
  for (std::uint64_t seed : {61, 62, 63}) {
    const GradMomentModel m = random_moment_model(16, seed);
    const SampleSet s = sample_gradient_pairs(m, 5000, seed + 100);
    CHECK(grid_local_minima(s, m.g_star, {-3.0, 3.0, 4001}) == 1);
  }
}

TEST_CASE("bias-variance decomposition matches within Monte-Carlo error") {
  const GradMomentModel m = random_moment_model(24, 71);
  const std::size_t n = 100000;
  const SampleSet s = sample_gradient_pairs(m, n, 72);
  for (double lambda : {0.0, 0.3, 0.8}) {
    // analytic: ||lambda mu_a - delta_b||^2 + tr(Var(g_b)) + lambda^2 tr(Var(g_a))
    double bias2 = 0.0;
    for (std::size_t j = 0; j < m.d; ++j) {
      const double r = lambda * m.mu_a[j] - m.delta_b[j];
      bias2 += r * r;
    }
    const double analytic = bias2 + static_cast<double>(m.d) * m.sigma_b * m.sigma_b +
                            lambda * lambda * m.var_a_trace();
    const double empirical = expected_error_empirical(s, m.g_star, lambda);
    // per-sample variance of the squared norm drives the MC error; be generous
    const double tol = 10.0 * analytic / std::sqrt(static_cast<double>(n)) + 1e-9;
    CHECK(std::abs(empirical - analytic) < tol);
  }
}

TEST_CASE("norm-ratio parameterization is an identity on exact moments") {
  for (std::uint64_t seed : {81, 82, 83, 84}) {
    const GradMomentModel m = random_moment_model(32, seed);
    const double analytic = lambda_star_analytic(m);
    const NormRatioApprox nr = norm_ratio_approx(m);
    CHECK(std::abs(nr.lambda_approx - analytic) / std::max(std::abs(analytic), 1e-12) < 1e-12);
  }
}

TEST_CASE("noise-dominated compensator drives the approximation to zero") {
  GradMomentModel m = random_moment_model(16, 91);
  m.sigma_a = 1e6;
  const NormRatioApprox nr = norm_ratio_approx(m);
  CHECK(std::abs(nr.lambda_approx) < 1e-6);
  CHECK(nr.rho > 1e9);
}

TEST_CASE("norm-ratio rejects zero-norm moments") {
  GradMomentModel m;
  m.d = 2;
  m.g_star = {1.0, 1.0};
  m.delta_b = {0.0, 0.0};
  m.mu_a = {1.0, 0.0};
  CHECK_THROWS_AS(norm_ratio_approx(m), std::invalid_argument);
}

TEST_CASE("diagonal-covariance variant uses the explicit trace") {
  GradMomentModel m = aligned_noiseless(4);
  m.var_a_diag = {0.1, 0.2, 0.3, 0.4};
  const double tr = 1.0;
  double na2 = 0.0, num = 0.0;
  for (std::size_t j = 0; j < 4; ++j) {
    na2 += m.mu_a[j] * m.mu_a[j];
    num += m.delta_b[j] * m.mu_a[j];
  }
  CHECK(lambda_star_analytic(m) == doctest::Approx(num / (na2 + tr)));

  // sampling honors the per-coordinate profile and the oracle still agrees
  const SampleSet s = sample_gradient_pairs(m, 100000, 93);
  const double analytic = lambda_star_analytic(m);
  const double oracle =
      lambda_star_grid_oracle_adaptive(s, m.g_star, {analytic - 1.0, analytic + 1.0, 2001});
  CHECK(std::abs(analytic - oracle) / std::max(std::abs(analytic), 1e-6) < 0.05);
}

TEST_CASE("cosine similarity") {
  const std::vector<double> a{1.0, 2.0, -1.0};
  std::vector<double> b = a;
  CHECK(cosine_similarity(a, b) == doctest::Approx(1.0));
  for (double& v : b) v = -v;
  CHECK(cosine_similarity(a, b) == doctest::Approx(-1.0));
  CHECK(cosine_similarity({1.0, 0.0}, {0.0, 2.0}) == doctest::Approx(0.0));
  CHECK_THROWS_AS(cosine_similarity({0.0, 0.0}, {1.0, 1.0}), std::invalid_argument);
}

TEST_CASE("moment model validation") {
  GradMomentModel m;
  m.d = 3;
  m.g_star = {1, 2, 3};
  m.delta_b = {1, 2};  // wrong length
  m.mu_a = {1, 2, 3};
  CHECK_THROWS_AS(m.validate(), std::invalid_argument);
  CHECK_THROWS_AS(sample_gradient_pairs(m, 10, 1), std::invalid_argument);
}
