#pragma once

#include <utility>

// Scalar special functions used by the densities and the degrees-of-freedom
// update. All functions are pure and throw std::domain_error outside their
// domain.
namespace stmoe::specfun {

double log_gamma(double x);
double digamma(double x);

/// ln Gamma(x + 1/2) - ln Gamma(x), accurate for very large x where the
/// direct difference of two log-gammas loses all significant digits.
double log_gamma_half_ratio(double x);

/// Log-density of the standard Student t with nu degrees of freedom.
double student_t_logpdf(double x, double nu);
double student_t_pdf(double x, double nu);

/// CDF of the standard Student t, via the regularized incomplete beta.
double student_t_cdf(double x, double nu);
/// log T_nu(x); stays finite far into the lower tail.
double student_t_logcdf(double x, double nu);

struct NormalPdfCdf {
  double pdf;
  double cdf;
};

NormalPdfCdf normal_pdf_cdf(double x);
double normal_cdf(double x);
double normal_logcdf(double x);

}  // namespace stmoe::specfun
