#include "stmoe/ecm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <random>

#include "stmoe/dist.hpp"
#include "stmoe/estep.hpp"

namespace stmoe {

namespace {

double sample_variance(const VectorXd& y) {
  if (y.size() < 2) return 1.0;
  const double mean = y.mean();
  return (y.array() - mean).square().sum() / static_cast<double>(y.size() - 1);
}

double sigma2_floor(const Dataset& data) {
  return 1e-10 * std::max(sample_variance(data.y), 1e-300);
}

bool hard_ols(const Dataset& data, const std::vector<Eigen::Index>& idx, double floor,
              ExpertParams& out) {
  if (static_cast<Eigen::Index>(idx.size()) < data.p()) return false;
  const Dataset sub = data.rows(idx);
  Eigen::ColPivHouseholderQR<MatrixXd> qr(sub.X);
  if (qr.rank() < sub.X.cols()) return false;
  out.beta = qr.solve(sub.y);
  const VectorXd resid = sub.y - sub.X * out.beta;
  out.sigma2 = std::max(resid.squaredNorm() / static_cast<double>(idx.size()), floor);
  return true;
}

FittedModel run_start(const Dataset& data, Eigen::Index K, Family family, const FitConfig& cfg,
                      int start) {
  const auto seed = start_seed(cfg.seed, start);
  const ModelParams init = initialize(data, K, family, seed, start == 0, cfg.constraints,
                                      cfg.alpha_init_sd);
  FittedModel fm = fit_from(data, init, cfg);
  fm.start_index = start;
  fm.seed = seed;
  return fm;
}

// Re-seeds expert k from the worst-explained observations and resets the gate.
void reseed_expert(const Dataset& data, const EStepMoments& E, Eigen::Index k, double floor,
                   ModelParams& psi) {
  const auto n = data.n();
  auto take = static_cast<Eigen::Index>(std::ceil(0.03 * static_cast<double>(n)));
  take = std::clamp<Eigen::Index>(take, std::min<Eigen::Index>(data.p() + 1, n), n);
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  std::stable_sort(idx.begin(), idx.end(), [&](Eigen::Index a, Eigen::Index b) {
    return E.log_density(a) < E.log_density(b);
  });
  idx.resize(static_cast<std::size_t>(take));
  auto& e = psi.experts[static_cast<std::size_t>(k)];
  ExpertParams seeded = e;
  if (hard_ols(data, idx, floor, seeded)) {
    e.beta = seeded.beta;
    e.sigma2 = seeded.sigma2;
  }
  if (!psi.constraints.fix_lambda_zero) e.lambda = 0.0;
  psi.gating.alpha.setZero();
}

}  // namespace

void FitConfig::validate() const {
  if (!(tol > 0.0)) throw std::invalid_argument("fit config: tol must be > 0");
  if (max_iter < 1) throw std::invalid_argument("fit config: max_iter must be >= 1");
  if (n_starts < 1) throw std::invalid_argument("fit config: n_starts must be >= 1");
  if (!(nu_min > 0.0) || !(nu_max > nu_min)) {
    throw std::invalid_argument("fit config: need 0 < nu_min < nu_max");
  }
  if (constraints.fix_nu && !(*constraints.fix_nu > 0.0)) {
    throw std::invalid_argument("fit config: fixed nu must be > 0");
  }
}

std::uint64_t start_seed(std::uint64_t seed, int start) {
  if (start == 0) return seed;
  // splitmix64 of (seed, start)
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(start);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

ModelParams initialize(const Dataset& data, Eigen::Index K, Family family, std::uint64_t seed,
                       bool null_gating, const Constraints& constraints, double alpha_sd) {
  data.validate();
  if (K < 1) throw std::invalid_argument("initialize: K must be >= 1");
  if (data.n() < K * data.p()) {
    throw std::invalid_argument("initialize: need n >= K*p observations (n = " +
                                std::to_string(data.n()) + ")");
  }
  Rng rng(seed);
  const double floor = sigma2_floor(data);
  ModelParams psi;
  psi.family = family;
  psi.constraints = constraints;
  psi.experts.resize(static_cast<std::size_t>(K));

  std::uniform_int_distribution<Eigen::Index> pick(0, K - 1);
  bool ok = false;
  for (int attempt = 0; attempt < 50 && !ok; ++attempt) {
    std::vector<std::vector<Eigen::Index>> groups(static_cast<std::size_t>(K));
    for (Eigen::Index i = 0; i < data.n(); ++i) {
      groups[static_cast<std::size_t>(pick(rng))].push_back(i);
    }
    ok = true;
    for (Eigen::Index k = 0; k < K && ok; ++k) {
      ok = hard_ols(data, groups[static_cast<std::size_t>(k)], floor,
                    psi.experts[static_cast<std::size_t>(k)]);
    }
  }
  if (!ok) throw FitError("initialize: no usable random partition after 50 attempts");

  psi.gating.alpha = MatrixXd::Zero(K - 1, data.q());
  if (!null_gating) {
    std::normal_distribution<double> normal(0.0, alpha_sd);
    for (Eigen::Index k = 0; k < K - 1; ++k) {
      for (Eigen::Index j = 0; j < data.q(); ++j) psi.gating.alpha(k, j) = normal(rng);
    }
  }

  std::uniform_real_distribution<double> nu_law(1.0, 200.0);
  std::uniform_real_distribution<double> delta_law(-1.0, 1.0);
  for (auto& e : psi.experts) {
    if (family == Family::NMoE) {
      e.lambda = 0.0;
      e.nu = std::numeric_limits<double>::infinity();
      continue;
    }
    const double nu = nu_law(rng);
    double delta = delta_law(rng);
    delta = std::clamp(delta, -kDeltaEdge, kDeltaEdge);
    e.nu = constraints.fix_nu ? *constraints.fix_nu : nu;
    e.lambda = constraints.fix_lambda_zero ? 0.0 : delta_to_lambda(delta);
  }
  return psi;
}

std::vector<int> canonical_order(const ModelParams& psi) {
  std::vector<int> order(static_cast<std::size_t>(psi.K()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return psi.experts[static_cast<std::size_t>(a)].beta(0) <
           psi.experts[static_cast<std::size_t>(b)].beta(0);
  });
  return order;
}

FittedModel fit_from(const Dataset& data, const ModelParams& init, const FitConfig& cfg) {
  cfg.validate();
  data.validate();
  init.validate();
  init.check_compatible(data);

  const auto n = data.n();
  const auto K = init.K();
  const double floor = sigma2_floor(data);
  const double empty_mass = 1e-6 * static_cast<double>(n);
  const bool skew_free = init.family == Family::STMoE && !init.constraints.fix_lambda_zero;
  const bool nu_free = init.family == Family::STMoE && !init.constraints.fix_nu;

  auto estep = [&](const ModelParams& psi) {
    try {
      EStepMoments E = run_estep(data, psi);
      if (!std::isfinite(E.loglik)) throw FitError("ECM: non-finite log-likelihood");
      return E;
    } catch (const DegenerateRowError& err) {
      throw FitError(std::string("ECM aborted: ") + err.what());
    }
  };

  FittedModel fm;
  ModelParams psi = init;
  if (psi.family == Family::STMoE) {
    for (auto& e : psi.experts) {
      if (psi.constraints.fix_lambda_zero) e.lambda = 0.0;
      if (psi.constraints.fix_nu) e.nu = *psi.constraints.fix_nu;
    }
  }
  EStepMoments E = estep(psi);
  fm.loglik_trace.push_back(E.loglik);

  for (int iter = 1; iter <= cfg.max_iter; ++iter) {
    fm.n_iter = iter;
    ModelParams next = psi;

    // CM-step 1
    next.gating = irls_update_gating(E.tau, data.R, psi.gating, cfg.irls).alpha_new;

    std::vector<Eigen::Index> empty;
    for (Eigen::Index k = 0; k < K; ++k) {
      auto& e = next.experts[static_cast<std::size_t>(k)];
      if (E.tau.col(k).sum() < empty_mass) {
        empty.push_back(k);
        continue;
      }
      if (psi.family == Family::NMoE) {
        const ExpertRegression reg = update_normal_expert(data, E.tau.col(k), floor);
        e.beta = reg.beta;
        e.sigma2 = reg.sigma2;
        continue;
      }
      // CM-step 2 at the current skewness
      const double delta_cur = skew_free ? e.delta() : 0.0;
      const ExpertRegression reg = update_expert_regression(data, E, k, delta_cur, floor);
      e.beta = reg.beta;
      e.sigma2 = reg.sigma2;
      // CM-step 3
      if (skew_free) {
        const SkewnessResult sk = solve_skewness(data, E, k, reg.beta, reg.sigma2, delta_cur);
        if (sk.stalled) ++fm.skew_stalls;
        e.lambda = delta_to_lambda(sk.delta);
      }
      // CM-step 4
      if (nu_free) e.nu = solve_dof(dof_statistic(E, k), cfg.nu_min, cfg.nu_max);
    }

    if (!empty.empty() && fm.reseeds < cfg.max_reseeds) {
      for (auto k : empty) reseed_expert(data, E, k, floor, next);
      ++fm.reseeds;
      psi = next;
      E = estep(psi);
      fm.loglik_trace.assign(1, E.loglik);
      continue;
    }

    EStepMoments E_next = estep(next);
    const double prev = fm.loglik_trace.back();
    if (nu_free && cfg.monotone_guard && E_next.loglik < prev) {
      ModelParams held = next;
      for (Eigen::Index k = 0; k < K; ++k) {
        held.experts[static_cast<std::size_t>(k)].nu = psi.experts[static_cast<std::size_t>(k)].nu;
      }
      EStepMoments E_held = estep(held);
      if (E_held.loglik > E_next.loglik) {
        next = std::move(held);
        E_next = std::move(E_held);
        ++fm.nu_reverts;
      }
    }
    psi = std::move(next);
    E = std::move(E_next);
    fm.loglik_trace.push_back(E.loglik);
    const double rel = std::fabs(E.loglik - prev) / std::max(std::fabs(prev), 1.0);
    if (rel < cfg.tol) {
      fm.converged = true;
      break;
    }
  }

  const std::vector<int> order = canonical_order(psi);
  fm.params = permute_experts(psi, order);
  fm.tau.resize(n, K);
  for (Eigen::Index j = 0; j < K; ++j) fm.tau.col(j) = E.tau.col(order[static_cast<std::size_t>(j)]);
  fm.loglik = fm.loglik_trace.back();
  return fm;
}

FittedModel fit(const Dataset& data, Eigen::Index K, Family family, const FitConfig& cfg) {
  cfg.validate();
  return run_start(data, K, family, cfg, 0);
}

FittedModel multi_start_fit(const Dataset& data, Eigen::Index K, Family family,
                            const FitConfig& cfg) {
  cfg.validate();
  data.validate();
  std::optional<FittedModel> best;
  std::vector<double> logliks;
  std::string last_error;
  for (int s = 0; s < cfg.n_starts; ++s) {
    try {
      FittedModel fm = run_start(data, K, family, cfg, s);
      logliks.push_back(fm.loglik);
      if (!best || fm.loglik > best->loglik) best = std::move(fm);
    } catch (const std::exception& err) {
      // A numerical failure ends this start only.
      logliks.push_back(std::numeric_limits<double>::quiet_NaN());
      last_error = err.what();
    }
  }
  if (!best) {
    throw FitError("all " + std::to_string(cfg.n_starts) + " starts failed; last error: " +
                   last_error);
  }
  best->start_logliks = std::move(logliks);
  return *best;
}

}  // namespace stmoe
