#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "stmoe/ecm.hpp"
#include "stmoe/predict.hpp"
#include "stmoe/sim.hpp"
#include "support.hpp"

using namespace stmoe;
using doctest::Approx;

namespace {
VectorXd vec2(double a, double b) {
  VectorXd v(2);
  v << a, b;
  return v;
}

ModelParams one_expert(Family family, double sigma2, double lambda, double nu) {
  ModelParams m;
  m.family = family;
  m.gating.alpha.resize(0, 2);
  ExpertParams e;
  e.beta = vec2(0.5, -1.5);
  e.sigma2 = sigma2;
  e.lambda = lambda;
  e.nu = nu;
  m.experts = {e};
  return m;
}
}  // namespace

TEST_CASE("NMoE K = 1 moments") {
  const ModelParams m = one_expert(Family::NMoE, 0.3, 0.0, INFINITY);
  const VectorXd x = vec2(1.0, 0.2);
  const Prediction p = predict(x, x, m);
  CHECK(p.mean == 0.5 - 1.5 * 0.2);
  REQUIRE(p.variance_defined);
  CHECK(*p.variance == 0.3);
}

TEST_CASE("STMoE with lambda = 0 has t moments") {
  const ModelParams m = one_expert(Family::STMoE, 0.3, 0.0, 5.0);
  const VectorXd x = vec2(1.0, -0.4);
  const Prediction p = predict(x, x, m);
  CHECK(p.mean == Approx(0.5 + 1.5 * 0.4).epsilon(1e-15));
  CHECK(*p.variance == Approx(0.3 * 5.0 / 3.0).epsilon(1e-14));
}

TEST_CASE("STMoE expert moments: closed form and Monte Carlo") {
  const ModelParams m = one_expert(Family::STMoE, 1.0, 3.0, 5.0);
  const auto& e = m.experts[0];
  const VectorXd x = vec2(1.0, 0.0);
  // mpmath: sigma delta xi(5) and (5/3 - delta^2 xi^2)
  CHECK(*expert_mean(e, x, Family::STMoE) - 0.5 == Approx(0.900316316157106070).epsilon(1e-13));
  CHECK(*expert_variance(e, Family::STMoE) == Approx(0.856097197527964495).epsilon(1e-13));

  const std::size_t n = 1000000;
  const auto draws = sample_skew_t({0.0, 1.0, 3.0, 5.0}, n, 2024);
  const double mean = std::accumulate(draws.begin(), draws.end(), 0.0) / n;
  double m2 = 0.0, m4 = 0.0;
  for (double v : draws) {
    m2 += (v - mean) * (v - mean);
    m4 += std::pow(v - mean, 4);
  }
  m2 /= n;
  m4 /= n;
  const double mean_se = std::sqrt(m2 / n);
  CHECK(std::fabs(mean - 0.900316316157106070) <= 3.0 * mean_se);
  // nu = 5 has a finite fourth moment, so the sample-variance SE is estimable.
  const double var_se = std::sqrt((m4 - m2 * m2) / n);
  CHECK(std::fabs(m2 - 0.856097197527964495) <= 3.0 * var_se);
}

TEST_CASE("undefined moments") {
  const VectorXd x = vec2(1.0, 0.0);
  CHECK_FALSE(expert_mean(one_expert(Family::STMoE, 1.0, 1.0, 1.0).experts[0], x, Family::STMoE));
  CHECK_FALSE(expert_variance(one_expert(Family::STMoE, 1.0, 1.0, 2.0).experts[0], Family::STMoE));

  try {
    predict(x, x, one_expert(Family::STMoE, 1.0, 1.0, 0.9));
    FAIL("expected UndefinedMomentError");
  } catch (const UndefinedMomentError& err) {
    CHECK(err.components() == std::vector<int>{1});
  }

  const Prediction p = predict(x, x, one_expert(Family::STMoE, 1.0, 1.0, 1.5));
  CHECK_FALSE(p.variance_defined);
  CHECK_FALSE(p.variance.has_value());
  CHECK(std::isfinite(p.mean));

  MatrixXd X(2, 2);
  X << 1.0, 0.0, 1.0, 0.5;
  try {
    predict_band(X, X, one_expert(Family::STMoE, 1.0, 1.0, 1.5));
    FAIL("expected UndefinedMomentError");
  } catch (const UndefinedMomentError& err) {
    CHECK(err.components() == std::vector<int>{1});
    CHECK(std::string(err.what()).find("row 1") != std::string::npos);
  }
}

TEST_CASE("negligible gate mass is excluded from the definedness check") {
  ModelParams m = reference_truth(Family::STMoE);
  m.experts[1].nu = 0.8;  // mean undefined for expert 2
  // At x = 1 the gate of expert 2 is 1 / (1 + e^10) > 1e-12, at x = 5 it is e^-50.
  m.gating.alpha(0, 1) = 10.0;
  CHECK_THROWS_AS(predict(vec2(1.0, 1.0), vec2(1.0, 1.0), m), UndefinedMomentError);
  const Prediction p = predict(vec2(1.0, 5.0), vec2(1.0, 5.0), m);
  CHECK(std::isfinite(p.mean));
  CHECK(p.variance_defined);
}

TEST_CASE("mixture invariants on random models") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int t = 0; t < 200; ++t) {
    const ModelParams m = testing::random_model(t % 3 ? Family::STMoE : Family::NMoE, 2 + t % 3, rng, 2.1, 40.0);
    const VectorXd x = vec2(1.0, u(rng));
    const Prediction p = predict(x, x, m);
    CHECK(std::fabs(p.mean - p.gate.dot(p.per_expert_mean)) <= 1e-12);
    REQUIRE(p.variance_defined);
    CHECK(*p.variance >= 0.0);

    // Permutation invariance.
    std::vector<int> order(static_cast<std::size_t>(m.K()));
    std::iota(order.rbegin(), order.rend(), 0);
    const Prediction q = predict(x, x, permute_experts(m, order));
    CHECK(q.mean == Approx(p.mean).epsilon(1e-12));
    CHECK(*q.variance == Approx(*p.variance).epsilon(1e-11));
  }
}

TEST_CASE("prediction band") {
  const ModelParams nm = reference_truth(Family::NMoE);
  MatrixXd X(5, 2);
  X << 1, -0.8, 1, -0.3, 1, 0.0, 1, 0.25, 1, 0.9;
  const auto zero = predict_band(X, X, nm, 0.0);
  for (const auto& b : zero) {
    CHECK(b.lower == b.mean);
    CHECK(b.upper == b.mean);
  }
  // Hand evaluation of the two-expert mixture moments.
  const auto band = predict_band(X, X, nm);
  for (Eigen::Index i = 0; i < 5; ++i) {
    const double x = X(i, 1);
    const double g1 = 1.0 / (1.0 + std::exp(-10.0 * x));
    const double m1 = x, m2 = -x, s2 = 0.01;
    const double mean = g1 * m1 + (1 - g1) * m2;
    const double var = g1 * (s2 + m1 * m1) + (1 - g1) * (s2 + m2 * m2) - mean * mean;
    CHECK(band[static_cast<std::size_t>(i)].mean == Approx(mean).epsilon(1e-10).scale(1e-10));
    CHECK(std::fabs(band[static_cast<std::size_t>(i)].upper - (mean + 2 * std::sqrt(var))) <= 1e-10);
    CHECK(std::fabs(band[static_cast<std::size_t>(i)].lower - (mean - 2 * std::sqrt(var))) <= 1e-10);
  }
  const ModelParams k1 = one_expert(Family::NMoE, 0.25, 0.0, INFINITY);
  for (const auto& b : predict_band(X, X, k1)) CHECK(b.upper - b.mean == Approx(2.0 * 0.5).epsilon(1e-14));
  CHECK_THROWS_AS(predict_band(X, X.topRows(2), nm), std::invalid_argument);
  CHECK_THROWS_AS(predict(VectorXd::Ones(3), vec2(1, 0), nm), std::invalid_argument);
}

TEST_CASE("MAP partition") {
  CHECK(map_partition(MatrixXd::Ones(4, 1)) == std::vector<int>{1, 1, 1, 1});
  MatrixXd t(3, 2);
  t << 0.2, 0.8, 0.5, 0.5, 0.9, 0.1;
  CHECK(map_partition(t) == std::vector<int>{2, 1, 1});
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.01, 1.0);
  MatrixXd tau(50, 3);
  for (Eigen::Index i = 0; i < tau.size(); ++i) tau(i) = u(rng);
  MatrixXd scaled = tau;
  for (Eigen::Index i = 0; i < 50; ++i) scaled.row(i) *= 0.1 + 10.0 * u(rng);
  CHECK(map_partition(tau) == map_partition(scaled));
}
