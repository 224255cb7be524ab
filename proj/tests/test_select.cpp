#include <cmath>
#include <random>

#include "doctest.h"
#include "stmoe/select.hpp"
#include "stmoe/sim.hpp"
#include "support.hpp"

using namespace stmoe;
using doctest::Approx;

TEST_CASE("free parameter counts") {
  CHECK(free_params(2, 2, 2, Family::NMoE) == 11);
  CHECK(free_params(2, 2, 2, Family::STMoE) == 15);
  for (Eigen::Index K = 1; K <= 6; ++K) {
    for (Eigen::Index p = 1; p <= 4; ++p) {
      for (Eigen::Index q = 1; q <= 3; ++q) {
        CHECK(free_params(K, p, q, Family::STMoE) - free_params(K, p, q, Family::NMoE) == 2 * K);
      }
    }
  }
}

TEST_CASE("criteria formulas") {
  const CriteriaRow zero = information_criteria(2, -123.4, -130.0, 0, 500.0);
  CHECK(zero.aic == -123.4);
  CHECK(zero.bic == -123.4);
  const CriteriaRow e2 = information_criteria(2, -50.0, -60.0, 11, std::exp(2.0));
  CHECK(e2.bic == Approx(-50.0 - 11.0).epsilon(1e-15));
  CHECK(e2.icl == Approx(-60.0 - 11.0).epsilon(1e-15));
  for (double n : {8.0, 100.0, 1e4}) {
    const CriteriaRow r = information_criteria(3, -10.0, -12.0, 15, n);
    CHECK(r.bic == Approx(r.aic - 15.0 * (0.5 * std::log(n) - 1.0)).epsilon(1e-14));
    CHECK(r.aic >= r.bic);
  }
}

TEST_CASE("criteria of a fitted model") {
  SimConfig sc;
  sc.truth = reference_truth(Family::STMoE);
  sc.n = 300;
  sc.seed = 3;
  const Dataset d = simulate(sc).data;
  FitConfig cfg;
  cfg.seed = 1;
  for (Family fam : {Family::NMoE, Family::STMoE}) {
    const FittedModel fm = fit(d, 2, fam, cfg);
    const CriteriaRow r = criteria(fm, d);
    CHECK(r.eta == free_params(2, 2, 2, fam));
    CHECK(r.loglik == fm.loglik);
    CHECK(r.bic == Approx(r.aic - r.eta * (0.5 * std::log(300.0) - 1.0)).epsilon(1e-13));
    CHECK(r.icl <= r.bic + 1e-9);
    // Hardened labels: the complete log-likelihood sums log(pi f) at the MAP expert.
    const MatrixXd joint = joint_log_densities(d, fm.params);
    double manual = 0.0;
    for (Eigen::Index i = 0; i < d.n(); ++i) {
      Eigen::Index k;
      fm.tau.row(i).maxCoeff(&k);
      manual += joint(i, k);
    }
    CHECK(r.complete_loglik == Approx(manual).epsilon(1e-13));
  }
}

TEST_CASE("select_k contracts") {
  SimConfig sc;
  sc.truth = reference_truth(Family::NMoE);
  sc.n = 200;
  sc.seed = 4;
  const Dataset d = simulate(sc).data;
  FitConfig cfg;
  cfg.n_starts = 2;
  const SelectionTable one = select_k(d, Family::NMoE, {1}, cfg);
  CHECK(one.best_aic == 1);
  CHECK(one.best_bic == 1);
  CHECK(one.best_icl == 1);

  const SelectionTable t = select_k(d, Family::NMoE, {1, 2, 3}, cfg);
  REQUIRE(t.entries.size() == 3);
  for (const auto& e : t.entries) {
    REQUIRE(e.row);
    if (e.K == t.best_aic) for (const auto& o : t.entries) CHECK(e.row->aic >= o.row->aic);
    if (e.K == t.best_bic) for (const auto& o : t.entries) CHECK(e.row->bic >= o.row->bic);
    if (e.K == t.best_icl) for (const auto& o : t.entries) CHECK(e.row->icl >= o.row->icl);
  }
  CHECK(t.best_bic == 2);
  CHECK_THROWS_AS(select_k(d, Family::NMoE, {}, cfg), std::invalid_argument);
}

TEST_CASE("select_k records failed K without aborting") {
  SimConfig sc;
  sc.truth = reference_truth(Family::NMoE);
  sc.n = 12;
  sc.seed = 5;
  const Dataset d = simulate(sc).data;
  FitConfig cfg;
  cfg.n_starts = 1;
  // K = 7 needs 14 observations for the initial partition.
  const SelectionTable t = select_k(d, Family::NMoE, {1, 7}, cfg);
  CHECK(t.entries[0].row.has_value());
  CHECK_FALSE(t.entries[1].row.has_value());
  CHECK_FALSE(t.entries[1].error.empty());
  CHECK(t.best_bic == 1);
  CHECK_THROWS_AS(select_k(d, Family::NMoE, {7}, cfg), FitError);
}

TEST_CASE("BIC prefers one expert on a null model") {
  int wins = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(1000 + seed);
    std::normal_distribution<double> z(0.0, 1.0);
    Dataset d;
    d.y.resize(200);
    for (Eigen::Index i = 0; i < 200; ++i) d.y(i) = z(rng);
    d.X = MatrixXd::Ones(200, 1);
    d.R = d.X;
    FitConfig cfg;
    cfg.seed = seed;
    cfg.n_starts = 2;
    const SelectionTable t = select_k(d, Family::STMoE, {1, 2}, cfg);
    REQUIRE(t.entries[0].row);
    REQUIRE(t.entries[1].row);
    if (t.entries[0].row->bic > t.entries[1].row->bic) ++wins;
  }
  CHECK(wins >= 16);
}
