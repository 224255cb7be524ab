#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "doctest.h"
#include "stmoe/dist.hpp"
#include "stmoe/specfun.hpp"
#include "support.hpp"

using namespace stmoe;
using doctest::Approx;

TEST_CASE("lambda/delta conversion") {
  for (double l : {-50.0, -3.0, 0.0, 0.4, 10.0}) {
    const double d = lambda_to_delta(l);
    CHECK(std::fabs(d) < 1.0);
    CHECK(delta_to_lambda(d) == Approx(l).epsilon(1e-12));
  }
  SkewTParams p{0.0, 1.0, 3.0, 5.0};
  CHECK(p.delta() == Approx(3.0 / std::sqrt(10.0)).epsilon(1e-15));
  CHECK_THROWS_AS(delta_to_lambda(1.0), std::domain_error);
  CHECK(lambda_to_delta(1e200) == Approx(1.0));
}

TEST_CASE("skew_normal_pdf reduces to the normal density at lambda = 0") {
  for (double y = -4.0; y <= 4.0; y += 0.37) {
    CHECK(skew_normal_pdf(y, 0.3, 2.0, 0.0) == Approx(std::exp(normal_logpdf(y, 0.3, 2.0))).epsilon(1e-14));
  }
  CHECK(skew_normal_pdf(0.0, 0.0, 1.0, 3.0) == Approx(specfun::normal_pdf_cdf(0.0).pdf).epsilon(1e-15));
}

TEST_CASE("skew_normal_pdf integrates to one") {
  for (double lambda : {-10.0, 0.0, 3.0}) {
    const double mu = 0.5, s2 = 0.3, s = std::sqrt(s2);
    double total = 0.0;
    for (int j = -40; j < 40; ++j) {
      total += testing::integrate([&](double y) { return skew_normal_pdf(y, mu, s2, lambda); },
                                  mu + j * s, mu + (j + 1) * s);
    }
    CHECK(std::fabs(total - 1.0) < 1e-8);
  }
}

TEST_CASE("skew_t_pdf special cases") {
  const SkewTParams sym{0.4, 2.5, 0.0, 4.0};
  for (double y = -6.0; y <= 6.0; y += 0.5) {
    const double d = (y - sym.mu) / sym.sigma();
    CHECK(skew_t_pdf(y, sym) == Approx(specfun::student_t_pdf(d, sym.nu) / sym.sigma()).epsilon(1e-13));
  }
  const SkewTParams p{1.0, 4.0, -3.0, 2.5};
  CHECK(skew_t_pdf(1.0, p) == Approx(specfun::student_t_pdf(0.0, 2.5) / 2.0).epsilon(1e-14));
}

TEST_CASE("skew_t_pdf matches high-precision references") {
  // mpmath values
  CHECK(skew_t_pdf(0.7, {0.0, 1.0, 3.0, 5.0}) == Approx(0.553299529743394737).epsilon(1e-12));
  CHECK(skew_t_pdf(-0.3, {0.2, 0.01, -10.0, 7.0}) == Approx(0.0176308530847108079).epsilon(1e-11));
}

TEST_CASE("skew_t_pdf integrates to one on the parameter grid") {
  for (double lambda : {-10.0, -3.0, 0.0, 3.0, 10.0}) {
    for (double nu : {1.0, 3.0, 5.0, 30.0, 1e4}) {
      const SkewTParams p{0.0, 1.0, lambda, nu};
      const double total = testing::integrate_line([&](double y) { return skew_t_pdf(y, p); }, 0.0, 1.0);
      CAPTURE(lambda);
      CAPTURE(nu);
      CHECK(std::fabs(total - 1.0) <= 1e-6);
    }
  }
  for (const SkewTParams p : {SkewTParams{0, 1, 3, 5}, SkewTParams{0, 1, -10, 7}}) {
    const double total = testing::integrate_line([&](double y) { return skew_t_pdf(y, p); }, 0.0, 1.0);
    CHECK(std::fabs(total - 1.0) <= 1e-7);
  }
}

TEST_CASE("skew_t_pdf tends to the skew-normal as nu grows") {
  for (double lambda : {-10.0, -1.0, 0.0, 3.0}) {
    const SkewTParams p{0.2, 0.5, lambda, 1e8};
    for (double y = -3.0; y <= 3.0; y += 0.1) {
      CHECK(std::fabs(skew_t_pdf(y, p) - skew_normal_pdf(y, 0.2, 0.5, lambda)) <= 1e-4);
    }
  }
}

TEST_CASE("skew flip symmetry and positivity") {
  for (double lambda : {-7.0, 0.5, 3.0}) {
    const SkewTParams a{0.3, 1.7, lambda, 3.5};
    const SkewTParams b{0.3, 1.7, -lambda, 3.5};
    for (double u = -8.0; u <= 8.0; u += 0.3) {
      CHECK(skew_t_pdf(a.mu + u, a) == Approx(skew_t_pdf(a.mu - u, b)).epsilon(1e-13));
      CHECK(skew_t_pdf(a.mu + u, a) >= 0.0);
    }
  }
}

TEST_CASE("log densities stay finite where densities underflow") {
  const SkewTParams p{0.0, 0.01, -10.0, 1.0};
  const double v = skew_t_logpdf(50.0, p);
  CHECK(std::isfinite(v));
  CHECK(skew_t_pdf(50.0, p) >= 0.0);
  CHECK(std::isfinite(skew_normal_logpdf(40.0, 0.0, 1.0, -10.0)));
}

TEST_CASE("invalid parameters") {
  CHECK_THROWS_AS(skew_normal_pdf(0.0, 0.0, 0.0, 1.0), std::domain_error);
  CHECK_THROWS_AS(skew_normal_pdf(0.0, 0.0, -1.0, 1.0), std::domain_error);
  CHECK_THROWS_AS(skew_t_pdf(0.0, SkewTParams{0.0, 0.0, 1.0, 3.0}), std::domain_error);
  CHECK_THROWS_AS(skew_t_pdf(0.0, SkewTParams{0.0, 1.0, 1.0, 0.0}), std::domain_error);
  CHECK_THROWS_AS(sample_skew_t(SkewTParams{0.0, 1.0, 1.0, -2.0}, 5, 1), std::domain_error);
  CHECK_THROWS_AS(xi_factor(1.0), std::domain_error);
}

TEST_CASE("xi factor reference") {
  CHECK(xi_factor(5.0) == Approx(0.949016724556236078).epsilon(1e-13));
  // Large nu tends to sqrt(2/pi).
  CHECK(xi_factor(1e12) == Approx(std::sqrt(2.0 / std::numbers::pi)).epsilon(1e-10));
}

TEST_CASE("sampler determinism") {
  const SkewTParams p{0.0, 1.0, 3.0, 5.0};
  CHECK(sample_skew_t(p, 1000, 42) == sample_skew_t(p, 1000, 42));
  CHECK(sample_skew_t(p, 1000, 42) != sample_skew_t(p, 1000, 43));
}

namespace {
double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}
double var_of(const std::vector<double>& v) {
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}
}  // namespace

TEST_CASE("sampler moments") {
  const std::size_t n = 100000;
  const auto near_normal = sample_skew_t({0.0, 1.0, 0.0, 1e6}, n, 11);
  CHECK(std::fabs(mean_of(near_normal)) <= 4.0 / std::sqrt(static_cast<double>(n)));
  CHECK(std::fabs(var_of(near_normal) - 1.0) <= 0.05);

  const SkewTParams p{0.0, 1.0, 3.0, 5.0};
  const auto draws = sample_skew_t(p, n, 12);
  const double expected = 0.900316316157106070;  // sigma delta xi(nu), mpmath
  const double se = std::sqrt(var_of(draws) / static_cast<double>(n));
  CHECK(std::fabs(mean_of(draws) - expected) <= 4.0 * se);
}

TEST_CASE("sampler agrees with the density (Kolmogorov-Smirnov)") {
  for (const SkewTParams p : {SkewTParams{0.0, 1.0, 3.0, 5.0}, SkewTParams{1.0, 0.25, -10.0, 2.0}}) {
    const std::size_t n = 100000;
    auto draws = sample_skew_t(p, n, 99);
    std::sort(draws.begin(), draws.end());
    const auto pdf = [&](double y) { return skew_t_pdf(y, p); };
    // CDF at the smallest draw from the lower tail, then cumulative pieces.
    double cdf = testing::integrate_line([&](double y) { return y <= draws.front() ? pdf(y) : 0.0; },
                                  draws.front(), p.sigma());
    double ks = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (i > 0) {
        cdf += boost::math::quadrature::gauss_kronrod<double, 15>::integrate(pdf, draws[i - 1], draws[i], 0);
      }
      const double lo = static_cast<double>(i) / n;
      const double hi = static_cast<double>(i + 1) / n;
      ks = std::max({ks, std::fabs(cdf - lo), std::fabs(hi - cdf)});
    }
    CHECK(ks < 1.628 / std::sqrt(static_cast<double>(n)));
  }
}
