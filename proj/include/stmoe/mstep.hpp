#pragma once

#include <functional>
#include <vector>

#include "stmoe/estep.hpp"
#include "stmoe/model.hpp"

namespace stmoe {

// ---------------------------------------------------------------------------
// CM-step 1: gating network by Newton-Raphson (IRLS)
// ---------------------------------------------------------------------------

struct Q1Eval {
  double value = 0.0;
  VectorXd grad;  // length (K-1)*q, block k holds d/d alpha_k
  MatrixXd hess;  // (K-1)q x (K-1)q
};

/// Q1(alpha) = sum_i sum_k tau_ik log pi_k(r_i; alpha), with exact gradient
/// and Hessian in the flattened (K-1)*q parameterization.
Q1Eval q1_value_grad_hess(const GatingParams& alpha, const MatrixXd& tau, const MatrixXd& R);
double q1_value(const GatingParams& alpha, const MatrixXd& tau, const MatrixXd& R);

struct IrlsConfig {
  double tol_inner = 1e-10;
  int max_inner = 50;
  int max_halvings = 30;
};

struct IrlsReport {
  GatingParams alpha_new;
  std::vector<double> q1_trace;
  int iterations = 0;
  bool converged = false;
};

IrlsReport irls_update_gating(const MatrixXd& tau, const MatrixXd& R,
                              const GatingParams& alpha_init, const IrlsConfig& cfg = {});

// ---------------------------------------------------------------------------
// CM-step 2: expert regression coefficients and scale
// ---------------------------------------------------------------------------

struct ExpertRegression {
  VectorXd beta;
  double sigma2 = 0.0;
};

/// Closed-form maximizer of Q2 over (beta_k, sigma2_k) at fixed delta_k.
ExpertRegression update_expert_regression(const Dataset& data, const EStepMoments& m,
                                          Eigen::Index k, double delta_k,
                                          double sigma2_min = 0.0);

/// Weighted least squares for the normal expert (the tau-weighted Gaussian
/// regression update).
ExpertRegression update_normal_expert(const Dataset& data, const VectorXd& weights,
                                      double sigma2_min = 0.0);

/// Q2(theta_k) with moments held at the current E-step.
double q2_value(const Dataset& data, const EStepMoments& m, Eigen::Index k,
                const VectorXd& beta, double sigma2, double delta);

// ---------------------------------------------------------------------------
// CM-step 3: skewness
// ---------------------------------------------------------------------------

/// Sufficient statistics of the delta equation at fixed (beta, sigma2):
/// g(delta) = delta(1-delta^2) s_tau + (1+delta^2) s_b - delta s_a.
struct SkewnessStats {
  double s_tau = 0.0;  // sum tau
  double s_a = 0.0;    // sum tau (w d^2 + e2 / sigma2)
  double s_b = 0.0;    // sum tau d e1 / sigma
  double sigma2 = 1.0;

  double equation(double delta) const;
  /// Q2 up to the delta-independent regression part.
  double objective(double delta) const;
};

SkewnessStats skewness_stats(const Dataset& data, const EStepMoments& m, Eigen::Index k,
                             const VectorXd& beta, double sigma2);

struct SkewnessResult {
  double delta = 0.0;
  bool stalled = false;
  int roots_found = 0;
};

inline constexpr double kDeltaEdge = 0.999999;
inline constexpr int kDeltaScanIntervals = 400;

SkewnessResult solve_skewness(const SkewnessStats& stats, double delta_current);
SkewnessResult solve_skewness(const Dataset& data, const EStepMoments& m, Eigen::Index k,
                              const VectorXd& beta_new, double sigma2_new,
                              double delta_current);

// ---------------------------------------------------------------------------
// CM-step 4: degrees of freedom
// ---------------------------------------------------------------------------

inline constexpr double kNuMin = 0.5;
inline constexpr double kNuMax = 200.0;

/// sum tau (e3 - w) / sum tau for expert k.
double dof_statistic(const EStepMoments& m, Eigen::Index k);
/// -psi(nu/2) + log(nu/2) + 1 + statistic.
double dof_equation(double nu, double statistic);
double solve_dof(double statistic, double nu_min = kNuMin, double nu_max = kNuMax);
double solve_dof(const Dataset& data, const EStepMoments& m, Eigen::Index k,
                 double nu_min = kNuMin, double nu_max = kNuMax);

/// Q3(nu_k) with moments held at the current E-step.
double q3_value(const EStepMoments& m, Eigen::Index k, double nu);

// ---------------------------------------------------------------------------

/// Brent's zero finder on a bracket with f(a) f(b) <= 0. At most 200 iterations.
double brent_root(const std::function<double(double)>& f, double a, double b, double tol);

}  // namespace stmoe
