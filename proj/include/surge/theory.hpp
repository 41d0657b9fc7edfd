#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "surge/rng.hpp"

namespace surge::theory {

namespace detail {
inline double vec_dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}
inline double vec_norm(const std::vector<double>& a) { return std::sqrt(vec_dot(a, a)); }
}  // namespace detail

// Population description of the two gradient estimators at a fixed parameter
// point: the reference gradient g*, the baseline bias delta_b (so the main
// branch has mean g* - delta_b), the auxiliary mean mu_a, and the noise scales
// of both branches. Noise is isotropic by default; a per-coordinate variance
// profile for the auxiliary branch exercises the general trace form.
struct GradMomentModel {
  std::size_t d = 0;
  std::vector<double> g_star;
  std::vector<double> delta_b;
  std::vector<double> mu_a;
  double sigma_b = 0.0;
  double sigma_a = 0.0;
  std::vector<double> var_a_diag;  // empty => sigma_a^2 * I

  std::vector<double> mu_b() const {
    std::vector<double> out(d);
    for (std::size_t i = 0; i < d; ++i) out[i] = g_star[i] - delta_b[i];
    return out;
  }

  double var_a_trace() const {
    if (var_a_diag.empty()) return static_cast<double>(d) * sigma_a * sigma_a;
    double s = 0.0;
    for (double v : var_a_diag) s += v;
    return s;
  }

  void validate() const {
    if (d == 0 || g_star.size() != d || delta_b.size() != d || mu_a.size() != d)
      throw std::invalid_argument("GradMomentModel: inconsistent dimensions");
    if (!var_a_diag.empty() && var_a_diag.size() != d)
      throw std::invalid_argument("GradMomentModel: variance profile must have d entries");
  }
};

// n sampled (g_b, g_a) pairs stored row-major, one pair per row.
struct SampleSet {
  std::size_t n = 0;
  std::size_t d = 0;
  std::vector<double> gb;
  std::vector<double> ga;
};

// g_b = (g* - delta_b) + sigma_b z_b, g_a = mu_a + sigma_a z_a with z drawn
// independently per pair and per branch, so the cross-noise term vanishes.
inline SampleSet sample_gradient_pairs(const GradMomentModel& model, std::size_t n,
                                       std::uint64_t seed) {
  model.validate();
  if (n < 1) throw std::invalid_argument("sample_gradient_pairs: n must be >= 1");
  SampleSet s;
  s.n = n;
  s.d = model.d;
  s.gb.resize(n * model.d);
  s.ga.resize(n * model.d);
  Rng rb = Rng::make(seed, rng_stream::kTheorySamples);
  Rng ra = Rng::make(seed, rng_stream::kTheorySamples + 1);
  const std::vector<double> mb = model.mu_b();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < model.d; ++j) {
      const double sa = model.var_a_diag.empty() ? model.sigma_a : std::sqrt(model.var_a_diag[j]);
      s.gb[i * model.d + j] = mb[j] + model.sigma_b * rb.normal();
      s.ga[i * model.d + j] = model.mu_a[j] + sa * ra.normal();
    }
  }
  return s;
}

// <delta_b, mu_a> / (||mu_a||^2 + tr(Var(g_a)))
inline double lambda_star_analytic(const GradMomentModel& model) {
  model.validate();
  const double denom = detail::vec_dot(model.mu_a, model.mu_a) + model.var_a_trace();
  if (denom <= 0.0)
    throw std::invalid_argument("lambda_star_analytic: degenerate compensator (zero denominator)");
  return detail::vec_dot(model.delta_b, model.mu_a) / denom;
}

// mean over samples of ||g_b + lambda g_a - g*||^2
inline double expected_error_empirical(const SampleSet& s, const std::vector<double>& g_star,
                                       double lambda) {
  if (s.n == 0) throw std::invalid_argument("expected_error_empirical: empty sample set");
  double acc = 0.0;
  for (std::size_t i = 0; i < s.n; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < s.d; ++j) {
      const double r = s.gb[i * s.d + j] + lambda * s.ga[i * s.d + j] - g_star[j];
      row += r * r;
    }
    acc += row;
  }
  return acc / static_cast<double>(s.n);
}

// The empirical objective is exactly quadratic in lambda:
//   mean||g_b + lambda g_a - g*||^2 = A + 2 B lambda + C lambda^2
// with A = mean||g_b - g*||^2, B = mean<g_b - g*, g_a>, C = mean||g_a||^2.
// One pass over the samples yields the coefficients; grid evaluation then
// costs O(points) instead of O(points * n * d).
struct EmpiricalQuadratic {
  double a = 0.0, b = 0.0, c = 0.0;
  double eval(double lambda) const { return a + 2.0 * b * lambda + c * lambda * lambda; }
};

inline EmpiricalQuadratic reduce_error_quadratic(const SampleSet& s,
                                                 const std::vector<double>& g_star) {
  EmpiricalQuadratic q;
  for (std::size_t i = 0; i < s.n; ++i) {
    for (std::size_t j = 0; j < s.d; ++j) {
      const double r = s.gb[i * s.d + j] - g_star[j];
      const double ga = s.ga[i * s.d + j];
      q.a += r * r;
      q.b += r * ga;
      q.c += ga * ga;
    }
  }
  const double inv = 1.0 / static_cast<double>(s.n);
  q.a *= inv;
  q.b *= inv;
  q.c *= inv;
  return q;
}

struct GridSpec {
  double lo = -1.0;
  double hi = 1.0;
  std::size_t points = 2001;
};

// Brute-force argmin of the empirical error over a lambda grid. A minimizer
// on either endpoint means the bracket missed the minimum.
inline double lambda_star_grid_oracle(const SampleSet& s, const std::vector<double>& g_star,
                                      const GridSpec& grid) {
  if (grid.points < 3 || !(grid.hi > grid.lo))
    throw std::invalid_argument("lambda_star_grid_oracle: malformed grid");
  const EmpiricalQuadratic q = reduce_error_quadratic(s, g_star);
  const double step = (grid.hi - grid.lo) / static_cast<double>(grid.points - 1);
  double best_l = grid.lo, best_v = q.eval(grid.lo);
  std::size_t best_i = 0;
  for (std::size_t i = 1; i < grid.points; ++i) {
    const double l = grid.lo + static_cast<double>(i) * step;
    const double v = q.eval(l);
    if (v < best_v) {
      best_v = v;
      best_l = l;
      best_i = i;
    }
  }
  if (best_i == 0 || best_i == grid.points - 1)
    throw std::runtime_error("lambda_star_grid_oracle: bracket too small, minimizer at endpoint");
  return best_l;
}

// Doubles the bracket around its center on endpoint hits.
inline double lambda_star_grid_oracle_adaptive(const SampleSet& s,
                                               const std::vector<double>& g_star, GridSpec grid,
                                               int max_expansions = 16) {
  for (int i = 0; i < max_expansions; ++i) {
    try {
      return lambda_star_grid_oracle(s, g_star, grid);
    } catch (const std::runtime_error&) {
      const double mid = 0.5 * (grid.lo + grid.hi);
      const double half = (grid.hi - grid.lo);
      grid.lo = mid - half;
      grid.hi = mid + half;
    }
  }
  throw std::runtime_error("lambda_star_grid_oracle: bracket expansion failed to converge");
}

// Count of strict local minima of the empirical error over the grid (flat
// valleys count once).
inline int grid_local_minima(const SampleSet& s, const std::vector<double>& g_star,
                             const GridSpec& grid) {
  const EmpiricalQuadratic q = reduce_error_quadratic(s, g_star);
  const double step = (grid.hi - grid.lo) / static_cast<double>(grid.points - 1);
  std::vector<double> v(grid.points);
  for (std::size_t i = 0; i < grid.points; ++i)
    v[i] = q.eval(grid.lo + static_cast<double>(i) * step);
  int minima = 0;
  bool descending = false;
  for (std::size_t i = 1; i < grid.points; ++i) {
    if (v[i] < v[i - 1]) descending = true;
    if (v[i] > v[i - 1] && descending) {
      ++minima;
      descending = false;
    }
  }
  return minima;
}

// Norm-ratio decomposition: cos_theta, kappa, rho and the resulting
// lambda ~= eta ||mu_b|| / ||mu_a|| with eta = kappa cos_theta / (1 + rho).
// Computed from exact population moments this is an identity with the
// analytic optimum, not an approximation.
struct NormRatioApprox {
  double lambda_approx = 0.0;
  double eta = 0.0;
  double cos_theta = 0.0;
  double kappa = 0.0;
  double rho = 0.0;
};

inline NormRatioApprox norm_ratio_approx(const GradMomentModel& model) {
  model.validate();
  const std::vector<double> mb = model.mu_b();
  const double nb = detail::vec_norm(mb);
  const double na = detail::vec_norm(model.mu_a);
  const double nd = detail::vec_norm(model.delta_b);
  if (nb == 0.0 || na == 0.0 || nd == 0.0)
    throw std::invalid_argument("norm_ratio_approx: zero-norm moment vector");
  NormRatioApprox out;
  out.cos_theta = detail::vec_dot(model.delta_b, model.mu_a) / (nd * na);
  out.kappa = nd / nb;
  out.rho = model.var_a_trace() / (na * na);
  out.eta = out.kappa * out.cos_theta / (1.0 + out.rho);
  out.lambda_approx = out.eta * nb / na;
  return out;
}

inline double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size())
    throw std::invalid_argument("cosine_similarity: dimension mismatch");
  const double na = detail::vec_norm(a);
  const double nb = detail::vec_norm(b);
  if (na == 0.0 || nb == 0.0)
    throw std::invalid_argument("cosine_similarity: zero vector");
  return detail::vec_dot(a, b) / (na * nb);
}

// Synthetic moment models with meaningful bias/compensator alignment, used by
// the Monte-Carlo verification sweeps.
inline GradMomentModel random_moment_model(std::size_t d, std::uint64_t seed) {
  Rng r = Rng::make(seed, rng_stream::kTheoryModel);
  GradMomentModel m;
  m.d = d;
  m.g_star.resize(d);
  m.delta_b.resize(d);
  m.mu_a.resize(d);
  for (std::size_t i = 0; i < d; ++i) m.g_star[i] = r.normal();
  // bias partially aligned with g*, bounded by ~0.45 sqrt(d)
  for (std::size_t i = 0; i < d; ++i) m.delta_b[i] = 0.3 * m.g_star[i] + 0.3 * r.normal();
  // compensator mean aligned with the bias plus a moderate orthogonal part
  for (std::size_t i = 0; i < d; ++i) m.mu_a[i] = m.delta_b[i] + 0.35 * r.normal();
  m.sigma_b = 0.2;
  const double spread = r.uniform(0.2, 0.6);
  m.sigma_a = spread / std::sqrt(static_cast<double>(d));
  return m;
}

}  // namespace surge::theory
