#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace stmoe {

/// Location/scale/skewness/degrees-of-freedom of a univariate skew-t law.
struct SkewTParams {
  double mu = 0.0;
  double sigma2 = 1.0;
  double lambda = 0.0;
  double nu = 1.0;

  double sigma() const;
  double delta() const;
  /// Throws std::domain_error unless sigma2 > 0 and nu > 0.
  void validate() const;
};

double lambda_to_delta(double lambda);
double delta_to_lambda(double delta);

double normal_logpdf(double y, double mu, double sigma2);

double skew_normal_logpdf(double y, double mu, double sigma2, double lambda);
double skew_normal_pdf(double y, double mu, double sigma2, double lambda);

double skew_t_logpdf(double y, const SkewTParams& p);
double skew_t_pdf(double y, const SkewTParams& p);

/// Skew-t moment factor sqrt(nu/pi) Gamma((nu-1)/2) / Gamma(nu/2); nu > 1.
double xi_factor(double nu);

using Rng = std::mt19937_64;

/// One draw Y = mu + sigma U / sqrt(W), U ~ SN(lambda), W ~ Gamma(nu/2, rate nu/2).
double draw_skew_t(const SkewTParams& p, Rng& rng);
double draw_skew_normal_standard(double delta, Rng& rng);

std::vector<double> sample_skew_t(const SkewTParams& p, std::size_t n,
                                  std::uint64_t seed);

}  // namespace stmoe
