#include "stmoe/dist.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "stmoe/specfun.hpp"

namespace stmoe {

double SkewTParams::sigma() const { return std::sqrt(sigma2); }

double SkewTParams::delta() const { return lambda_to_delta(lambda); }

void SkewTParams::validate() const {
  if (!(sigma2 > 0.0) || !std::isfinite(sigma2)) {
    throw std::domain_error("skew-t: sigma2 must be positive and finite, got " +
                            std::to_string(sigma2));
  }
  if (!(nu > 0.0)) {
    throw std::domain_error("skew-t: nu must be positive, got " +
                            std::to_string(nu));
  }
  if (!std::isfinite(mu) || !std::isfinite(lambda)) {
    throw std::domain_error("skew-t: mu and lambda must be finite");
  }
}

double lambda_to_delta(double lambda) {
  return lambda / std::hypot(1.0, lambda);
}

double delta_to_lambda(double delta) {
  if (!(std::fabs(delta) < 1.0)) {
    throw std::domain_error("delta_to_lambda: delta must lie in (-1, 1)");
  }
  return delta / std::sqrt(1.0 - delta * delta);
}

double normal_logpdf(double y, double mu, double sigma2) {
  const double r = y - mu;
  return -0.5 * (std::log(2.0 * std::numbers::pi * sigma2) + r * r / sigma2);
}

double skew_normal_logpdf(double y, double mu, double sigma2, double lambda) {
  if (!(sigma2 > 0.0)) {
    throw std::domain_error("skew_normal_pdf: sigma2 must be positive");
  }
  const double d = (y - mu) / std::sqrt(sigma2);
  return std::log(2.0) + normal_logpdf(y, mu, sigma2) +
         specfun::normal_logcdf(lambda * d);
}

double skew_normal_pdf(double y, double mu, double sigma2, double lambda) {
  return std::exp(skew_normal_logpdf(y, mu, sigma2, lambda));
}

double skew_t_logpdf(double y, const SkewTParams& p) {
  p.validate();
  const double sigma = p.sigma();
  const double d = (y - p.mu) / sigma;
  const double m = p.lambda * d * std::sqrt((p.nu + 1.0) / (p.nu + d * d));
  return std::log(2.0 / sigma) + specfun::student_t_logpdf(d, p.nu) +
         specfun::student_t_logcdf(m, p.nu + 1.0);
}

double skew_t_pdf(double y, const SkewTParams& p) {
  return std::exp(skew_t_logpdf(y, p));
}

double xi_factor(double nu) {
  if (!(nu > 1.0)) {
    throw std::domain_error("xi_factor: requires nu > 1, got " +
                            std::to_string(nu));
  }
  // Gamma((nu-1)/2)/Gamma(nu/2) = exp(-log_gamma_half_ratio((nu-1)/2)).
  return std::sqrt(nu / std::numbers::pi) *
         std::exp(-specfun::log_gamma_half_ratio(0.5 * (nu - 1.0)));
}

double draw_skew_normal_standard(double delta, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const double u = normal(rng);
  const double e = normal(rng);
  return delta * std::fabs(u) + std::sqrt(1.0 - delta * delta) * e;
}

double draw_skew_t(const SkewTParams& p, Rng& rng) {
  const double u = draw_skew_normal_standard(p.delta(), rng);
  // Gamma(shape nu/2, rate nu/2) == Gamma(shape nu/2, scale 2/nu).
  std::gamma_distribution<double> gamma(0.5 * p.nu, 2.0 / p.nu);
  const double w = gamma(rng);
  return p.mu + p.sigma() * u / std::sqrt(w);
}

std::vector<double> sample_skew_t(const SkewTParams& p, std::size_t n,
                                  std::uint64_t seed) {
  p.validate();
  Rng rng(seed);
  std::vector<double> out(n);
  for (auto& v : out) v = draw_skew_t(p, rng);
  return out;
}

}  // namespace stmoe
