#include "stmoe/specfun.hpp"

#include <boost/math/special_functions/beta.hpp>
#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/erf.hpp>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace stmoe::specfun {

namespace {

void require_positive(double x, const char* what) {
  if (!(x > 0.0) || std::isnan(x)) {
    throw std::domain_error(std::string(what) + ": argument must be > 0, got " +
                            std::to_string(x));
  }
}

// Above this many degrees of freedom the incomplete-beta route is replaced by
// the normal CDF with the first Fisher correction term (error O(nu^-2)).
constexpr double kLargeNu = 1e7;

}  // namespace

double log_gamma(double x) {
  require_positive(x, "log_gamma");
  return std::lgamma(x);
}

double digamma(double x) {
  require_positive(x, "digamma");
  return boost::math::digamma(x);
}

double log_gamma_half_ratio(double x) {
  require_positive(x, "log_gamma_half_ratio");
  if (x < 50.0) {
    return std::lgamma(x + 0.5) - std::lgamma(x);
  }
  // Asymptotic series of ln Gamma(x+1/2) - ln Gamma(x) in 1/x.
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  return 0.5 * std::log(x) - inv / 8.0 + inv2 * inv / 192.0 +
         inv2 * inv2 * inv / 640.0 - 17.0 * inv2 * inv2 * inv2 * inv / 14336.0;
}

double student_t_logpdf(double x, double nu) {
  require_positive(nu, "student_t_pdf");
  const double log_norm = log_gamma_half_ratio(0.5 * nu) -
                          0.5 * std::log(nu * std::numbers::pi);
  const double ax = std::fabs(x);
  double log_kernel;
  if (ax > 1e100) {
    // log(1 + x^2/nu) without overflowing x^2.
    log_kernel = 2.0 * std::log(ax) - std::log(nu);
  } else {
    log_kernel = std::log1p(x * x / nu);
  }
  return log_norm - 0.5 * (nu + 1.0) * log_kernel;
}

double student_t_pdf(double x, double nu) {
  return std::exp(student_t_logpdf(x, nu));
}

double student_t_cdf(double x, double nu) {
  require_positive(nu, "student_t_cdf");
  if (std::isinf(x)) return x > 0 ? 1.0 : 0.0;
  if (nu > kLargeNu) {
    const auto [pdf, cdf] = normal_pdf_cdf(x);
    if (pdf == 0.0) return cdf;
    return cdf - pdf * (x * x * x + x) / (4.0 * nu);
  }
  const double ax = std::fabs(x);
  if (ax > 1e100) {
    // nu / (nu + x^2) underflows the incomplete beta argument; use the
    // leading term of its power series.
    const double log_tail = student_t_logpdf(x, nu) + std::log(ax / nu);
    const double tail = std::exp(log_tail);
    return x > 0 ? 1.0 - tail : tail;
  }
  const double x2 = x * x;
  // Lower tail: T = I_{nu/(nu+x^2)}(nu/2, 1/2) / 2, computed without
  // cancellation. For small |x| the complementary form is more accurate.
  double tail;
  if (nu < 2.0 * x2) {
    tail = 0.5 * boost::math::ibeta(0.5 * nu, 0.5, nu / (nu + x2));
  } else {
    tail = 0.5 * boost::math::ibetac(0.5, 0.5 * nu, x2 / (nu + x2));
  }
  return x > 0 ? 1.0 - tail : tail;
}

double student_t_logcdf(double x, double nu) {
  const double c = student_t_cdf(x, nu);
  if (c > 0.0) return std::log(c);
  if (nu > kLargeNu) return normal_logcdf(x);
  // Polynomial lower tail: T(x) ~ t(x) * |x| / nu for x -> -inf.
  return student_t_logpdf(x, nu) + std::log(std::fabs(x) / nu);
}

NormalPdfCdf normal_pdf_cdf(double x) {
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return {pdf, normal_cdf(x)};
}

double normal_cdf(double x) {
  return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

double normal_logcdf(double x) {
  if (x > -30.0) return std::log(normal_cdf(x));
  // Mills-ratio expansion for the far lower tail.
  const double x2 = x * x;
  const double series = 1.0 - 1.0 / x2 + 3.0 / (x2 * x2) - 15.0 / (x2 * x2 * x2);
  return -0.5 * x2 - std::log(-x) - 0.5 * std::log(2.0 * std::numbers::pi) +
         std::log(series);
}

}  // namespace stmoe::specfun
