#pragma once

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/quadrature/exp_sinh.hpp>
#include <cmath>
#include <random>
#include <vector>

#include "stmoe/dist.hpp"
#include "stmoe/model.hpp"

namespace stmoe::testing {

/// Adaptive Gauss-Kronrod integral over [a, b].
template <class F>
double integrate(F f, double a, double b, double tol = 1e-13) {
  return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, a, b, 20, tol);
}

/// Integral of a density over the whole real line: Gauss-Kronrod pieces
/// around the centre and exp-sinh for both tails.
template <class F>
double integrate_line(F f, double centre, double scale) {
  double total = 0.0;
  const double edges[] = {-1e3, -100, -20, -5, -1, -0.2, 0, 0.2, 1, 5, 20, 100, 1e3};
  for (std::size_t j = 0; j + 1 < std::size(edges); ++j) {
    total += integrate(f, centre + scale * edges[j], centre + scale * edges[j + 1]);
  }
  boost::math::quadrature::exp_sinh<double> tail;
  const double hi = centre + scale * 1e3;
  const double lo = centre - scale * 1e3;
  total += tail.integrate([&](double t) { return f(hi + t); }, 1e-14);
  total += tail.integrate([&](double t) { return f(lo - t); }, 1e-14);
  return total;
}

inline Dataset linear_dataset(const std::vector<double>& x, const std::vector<double>& y) {
  Dataset d;
  const auto n = static_cast<Eigen::Index>(x.size());
  d.y = Eigen::Map<const VectorXd>(y.data(), n);
  d.X.resize(n, 2);
  d.X.col(0).setOnes();
  d.X.col(1) = Eigen::Map<const VectorXd>(x.data(), n);
  d.R = d.X;
  return d;
}

/// Random K-expert model with p = q = 2 and moderate parameters.
inline ModelParams random_model(Family family, Eigen::Index K, std::mt19937_64& rng,
                                double nu_lo = 1.5, double nu_hi = 30.0) {
  std::normal_distribution<double> z(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ModelParams m;
  m.family = family;
  m.gating.alpha.resize(K - 1, 2);
  for (Eigen::Index k = 0; k + 1 < K; ++k) {
    m.gating.alpha(k, 0) = z(rng);
    m.gating.alpha(k, 1) = 3.0 * z(rng);
  }
  for (Eigen::Index k = 0; k < K; ++k) {
    ExpertParams e;
    e.beta = VectorXd(2);
    e.beta << z(rng), z(rng);
    e.sigma2 = 0.05 + u(rng);
    if (family == Family::STMoE) {
      e.lambda = 6.0 * z(rng);
      e.nu = nu_lo + (nu_hi - nu_lo) * u(rng);
    } else {
      e.lambda = 0.0;
      e.nu = std::numeric_limits<double>::infinity();
    }
    m.experts.push_back(e);
  }
  return m;
}

inline Dataset random_dataset(Eigen::Index n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::normal_distribution<double> z(0.0, 1.0);
  std::vector<double> x(static_cast<std::size_t>(n)), y(static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = u(rng);
    y[i] = x[i] + z(rng);
  }
  return linear_dataset(x, y);
}

/// Ratio importance-sampling estimate of E[g | y] and its delta-method
/// standard error, with draws of (u, w) from the prior and weights equal to
/// the conditional density of y.
struct McEstimate {
  double mean = 0.0;
  double se = 0.0;
};

struct LatentMc {
  McEstimate w, e1, e2, e3;
};

inline LatentMc latent_moments_mc(double y, const SkewTParams& p, std::size_t draws,
                                  std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::gamma_distribution<double> gam(0.5 * p.nu, 2.0 / p.nu);
  std::normal_distribution<double> z(0.0, 1.0);
  const double delta = p.delta();
  const double sigma = std::sqrt(p.sigma2);
  const double c2 = (1.0 - delta * delta) * p.sigma2;
  std::vector<double> wt(draws), g[4];
  for (auto& v : g) v.resize(draws);
  double wmax = -INFINITY;
  std::vector<double> logwt(draws);
  for (std::size_t s = 0; s < draws; ++s) {
    const double w = gam(rng);
    const double u = std::fabs(z(rng)) * sigma / std::sqrt(w);
    const double var = c2 / w;
    const double r = y - p.mu - delta * u;
    logwt[s] = -0.5 * std::log(var) - 0.5 * r * r / var;
    wmax = std::max(wmax, logwt[s]);
    g[0][s] = w;
    g[1][s] = w * u;
    g[2][s] = w * u * u;
    g[3][s] = std::log(w);
  }
  double sw = 0.0;
  for (std::size_t s = 0; s < draws; ++s) {
    wt[s] = std::exp(logwt[s] - wmax);
    sw += wt[s];
  }
  McEstimate out[4];
  for (int j = 0; j < 4; ++j) {
    double num = 0.0;
    for (std::size_t s = 0; s < draws; ++s) num += wt[s] * g[j][s];
    const double mean = num / sw;
    double v = 0.0;
    for (std::size_t s = 0; s < draws; ++s) {
      const double t = wt[s] * (g[j][s] - mean);
      v += t * t;
    }
    out[j] = {mean, std::sqrt(v) / sw};
  }
  return {out[0], out[1], out[2], out[3]};
}

}  // namespace stmoe::testing
