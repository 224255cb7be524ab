#include "stmoe/mstep.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "stmoe/specfun.hpp"

namespace stmoe {

namespace {

// Solves A x = b for symmetric positive (semi)definite A. On a failed or
// ill-conditioned factorization a ridge 1e-8 (1 + |diag|) is added.
VectorXd solve_spd(MatrixXd A, const VectorXd& b) {
  for (int attempt = 0; attempt < 8; ++attempt) {
    Eigen::LDLT<MatrixXd> ldlt(A);
    if (ldlt.info() == Eigen::Success && ldlt.isPositive()) {
      const VectorXd D = ldlt.vectorD();
      const double dmax = D.cwiseAbs().maxCoeff();
      if (D.minCoeff() > 1e-14 * std::max(dmax, 1e-300)) {
        VectorXd x = ldlt.solve(b);
        if (x.allFinite()) return x;
      }
    }
    const double scale = std::pow(10.0, attempt);
    for (Eigen::Index j = 0; j < A.rows(); ++j) {
      A(j, j) += 1e-8 * scale * (1.0 + std::fabs(A(j, j)));
    }
  }
  throw std::runtime_error("solve_spd: matrix could not be repaired");
}

void check_tau_r(const GatingParams& alpha, const MatrixXd& tau, const MatrixXd& R) {
  if (tau.rows() != R.rows()) {
    throw std::invalid_argument("Q1: tau and R row counts differ");
  }
  if (tau.cols() != alpha.num_experts()) {
    throw std::invalid_argument("Q1: tau has " + std::to_string(tau.cols()) +
                                " columns, gating has K = " +
                                std::to_string(alpha.num_experts()));
  }
  if (alpha.num_experts() > 1 && R.cols() != alpha.q()) {
    throw std::invalid_argument("Q1: R has " + std::to_string(R.cols()) +
                                " columns, gating has q = " + std::to_string(alpha.q()));
  }
}

GatingParams unflatten(const VectorXd& v, Eigen::Index K, Eigen::Index q) {
  GatingParams g;
  g.alpha.resize(K - 1, q);
  for (Eigen::Index k = 0; k < K - 1; ++k) g.alpha.row(k) = v.segment(k * q, q).transpose();
  return g;
}

VectorXd flatten(const GatingParams& g) {
  VectorXd v(g.alpha.size());
  for (Eigen::Index k = 0; k < g.alpha.rows(); ++k) {
    v.segment(k * g.q(), g.q()) = g.alpha.row(k).transpose();
  }
  return v;
}

}  // namespace

double q1_value(const GatingParams& alpha, const MatrixXd& tau, const MatrixXd& R) {
  check_tau_r(alpha, tau, R);
  double value = 0.0;
  for (Eigen::Index i = 0; i < tau.rows(); ++i) {
    const VectorXd log_pi = gating_log_probs(R.row(i).transpose(), alpha);
    value += tau.row(i).dot(log_pi);
  }
  return value;
}

Q1Eval q1_value_grad_hess(const GatingParams& alpha, const MatrixXd& tau, const MatrixXd& R) {
  check_tau_r(alpha, tau, R);
  const auto K = alpha.num_experts();
  const auto q = K > 1 ? alpha.q() : R.cols();
  const auto dim = (K - 1) * q;
  Q1Eval out;
  out.grad = VectorXd::Zero(dim);
  out.hess = MatrixXd::Zero(dim, dim);
  for (Eigen::Index i = 0; i < tau.rows(); ++i) {
    const VectorXd r = R.row(i).transpose();
    const VectorXd log_pi = gating_log_probs(r, alpha);
    const VectorXd pi = log_pi.array().exp();
    const double mass = tau.row(i).sum();
    out.value += tau.row(i).dot(log_pi);
    const MatrixXd rr = r * r.transpose();
    for (Eigen::Index k = 0; k < K - 1; ++k) {
      out.grad.segment(k * q, q) += (tau(i, k) - mass * pi(k)) * r;
      for (Eigen::Index l = 0; l < K - 1; ++l) {
        const double c = mass * pi(k) * ((k == l ? 1.0 : 0.0) - pi(l));
        out.hess.block(k * q, l * q, q, q) -= c * rr;
      }
    }
  }
  return out;
}

IrlsReport irls_update_gating(const MatrixXd& tau, const MatrixXd& R,
                              const GatingParams& alpha_init, const IrlsConfig& cfg) {
  check_tau_r(alpha_init, tau, R);
  IrlsReport rep;
  rep.alpha_new = alpha_init;
  const auto K = alpha_init.num_experts();
  if (K == 1) {
    rep.q1_trace.push_back(0.0);
    rep.converged = true;
    return rep;
  }
  const auto q = alpha_init.q();
  Q1Eval cur = q1_value_grad_hess(rep.alpha_new, tau, R);
  rep.q1_trace.push_back(cur.value);
  for (int it = 0; it < cfg.max_inner; ++it) {
    const VectorXd step = solve_spd(-cur.hess, cur.grad);
    const VectorXd base = flatten(rep.alpha_new);
    double rate = 1.0;
    GatingParams trial;
    double trial_value = -std::numeric_limits<double>::infinity();
    bool improved = false;
    for (int h = 0; h <= cfg.max_halvings; ++h) {
      trial = unflatten(base + rate * step, K, q);
      trial_value = q1_value(trial, tau, R);
      if (trial_value >= cur.value) {
        improved = true;
        break;
      }
      rate *= 0.5;
    }
    if (!improved) {
      // No ascent along the Newton direction: at a stationary point up to
      // round-off.
      rep.converged = true;
      break;
    }
    ++rep.iterations;
    const double change = trial_value - cur.value;
    rep.alpha_new = trial;
    rep.q1_trace.push_back(trial_value);
    const double denom = std::max(std::fabs(trial_value), 1e-300);
    if (std::fabs(change) / denom < cfg.tol_inner) {
      rep.converged = true;
      break;
    }
    cur = q1_value_grad_hess(rep.alpha_new, tau, R);
  }
  return rep;
}

ExpertRegression update_normal_expert(const Dataset& data, const VectorXd& weights,
                                      double sigma2_min) {
  const double total = weights.sum();
  if (!(total > 0.0)) throw std::invalid_argument("update_normal_expert: zero total weight");
  const MatrixXd A = data.X.transpose() * weights.asDiagonal() * data.X;
  const VectorXd b = data.X.transpose() * weights.cwiseProduct(data.y);
  ExpertRegression out;
  out.beta = solve_spd(A, b);
  const VectorXd resid = data.y - data.X * out.beta;
  out.sigma2 = std::max(weights.dot(resid.cwiseAbs2()) / total, sigma2_min);
  return out;
}

ExpertRegression update_expert_regression(const Dataset& data, const EStepMoments& m,
                                          Eigen::Index k, double delta_k, double sigma2_min) {
  const VectorXd tau = m.tau.col(k);
  const VectorXd tw = tau.cwiseProduct(m.w.col(k));
  const double s_tau = tau.sum();
  if (!(tw.sum() > 0.0)) {
    throw std::invalid_argument("update_expert_regression: sum tau*w must be positive");
  }
  const MatrixXd A = data.X.transpose() * tw.asDiagonal() * data.X;
  const VectorXd target = tw.cwiseProduct(data.y) - delta_k * tau.cwiseProduct(m.e1.col(k));
  ExpertRegression out;
  out.beta = solve_spd(A, data.X.transpose() * target);
  const VectorXd resid = data.y - data.X * out.beta;
  double num = 0.0;
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    num += tau(i) * (m.w(i, k) * resid(i) * resid(i) - 2.0 * delta_k * m.e1(i, k) * resid(i) +
                     m.e2(i, k));
  }
  out.sigma2 = std::max(num / (2.0 * (1.0 - delta_k * delta_k) * s_tau), sigma2_min);
  return out;
}

double SkewnessStats::equation(double delta) const {
  const double d2 = delta * delta;
  return delta * (1.0 - d2) * s_tau + (1.0 + d2) * s_b - delta * s_a;
}

double SkewnessStats::objective(double delta) const {
  const double c = 1.0 - delta * delta;
  return -0.5 * s_tau * std::log(c) - (s_a - 2.0 * delta * s_b) / (2.0 * c);
}

SkewnessStats skewness_stats(const Dataset& data, const EStepMoments& m, Eigen::Index k,
                             const VectorXd& beta, double sigma2) {
  SkewnessStats s;
  s.sigma2 = sigma2;
  const double sigma = std::sqrt(sigma2);
  const VectorXd resid = data.y - data.X * beta;
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    const double t = m.tau(i, k);
    const double d = resid(i) / sigma;
    s.s_tau += t;
    s.s_a += t * (m.w(i, k) * d * d + m.e2(i, k) / sigma2);
    s.s_b += t * d * m.e1(i, k) / sigma;
  }
  return s;
}

double q2_value(const Dataset& data, const EStepMoments& m, Eigen::Index k,
                const VectorXd& beta, double sigma2, double delta) {
  const SkewnessStats s = skewness_stats(data, m, k, beta, sigma2);
  return s.s_tau * (-std::log(2.0 * std::numbers::pi) - std::log(sigma2)) + s.objective(delta);
}

SkewnessResult solve_skewness(const SkewnessStats& stats, double delta_current) {
  const auto f = [&](double x) { return stats.equation(x); };
  std::vector<double> roots;
  const double h = 2.0 * kDeltaEdge / kDeltaScanIntervals;
  double x0 = -kDeltaEdge;
  double f0 = f(x0);
  if (f0 == 0.0) roots.push_back(x0);
  for (int j = 1; j <= kDeltaScanIntervals; ++j) {
    const double x1 = j == kDeltaScanIntervals ? kDeltaEdge : -kDeltaEdge + j * h;
    const double f1 = f(x1);
    if (f1 == 0.0) {
      roots.push_back(x1);
    } else if (f0 != 0.0 && std::signbit(f0) != std::signbit(f1)) {
      roots.push_back(brent_root(f, x0, x1, 1e-15));
    }
    x0 = x1;
    f0 = f1;
  }
  SkewnessResult out;
  out.roots_found = static_cast<int>(roots.size());
  if (roots.empty()) {
    out.delta = delta_current;
    out.stalled = true;
    return out;
  }
  double best = roots.front();
  double best_value = stats.objective(best);
  for (double r : roots) {
    const double v = stats.objective(r);
    if (v > best_value) {
      best = r;
      best_value = v;
    }
  }
  // A pair of roots closer than the scan spacing can hide the maximizer; never
  // move to a worse value than the current delta.
  if (std::fabs(delta_current) < 1.0 && stats.objective(delta_current) > best_value) {
    best = delta_current;
  }
  out.delta = best;
  return out;
}

SkewnessResult solve_skewness(const Dataset& data, const EStepMoments& m, Eigen::Index k,
                              const VectorXd& beta_new, double sigma2_new,
                              double delta_current) {
  return solve_skewness(skewness_stats(data, m, k, beta_new, sigma2_new), delta_current);
}

double dof_statistic(const EStepMoments& m, Eigen::Index k) {
  const double s_tau = m.tau.col(k).sum();
  if (!(s_tau > 0.0)) throw std::invalid_argument("dof_statistic: sum tau must be positive");
  return m.tau.col(k).dot(m.e3.col(k) - m.w.col(k)) / s_tau;
}

double dof_equation(double nu, double statistic) {
  return -specfun::digamma(0.5 * nu) + std::log(0.5 * nu) + 1.0 + statistic;
}

double solve_dof(double statistic, double nu_min, double nu_max) {
  const auto f = [&](double nu) { return dof_equation(nu, statistic); };
  const double f_hi = f(nu_max);
  if (f_hi >= 0.0) return nu_max;
  const double f_lo = f(nu_min);
  if (f_lo <= 0.0) return nu_min;
  return brent_root(f, nu_min, nu_max, 1e-10);
}

double solve_dof(const Dataset& /*data*/, const EStepMoments& m, Eigen::Index k,
                 double nu_min, double nu_max) {
  return solve_dof(dof_statistic(m, k), nu_min, nu_max);
}

double q3_value(const EStepMoments& m, Eigen::Index k, double nu) {
  const double half = 0.5 * nu;
  const double c = -std::lgamma(half) + half * std::log(half);
  double total = 0.0;
  for (Eigen::Index i = 0; i < m.tau.rows(); ++i) {
    total += m.tau(i, k) * (c - half * m.w(i, k) + half * m.e3(i, k));
  }
  return total;
}

double brent_root(const std::function<double(double)>& f, double a, double b, double tol) {
  double fa = f(a);
  double fb = f(b);
  if (!std::isfinite(fa) || !std::isfinite(fb) || fa * fb > 0.0) {
    throw std::invalid_argument("brent_root: f(a) and f(b) must bracket a root");
  }
  if (fa == 0.0) return a;
  if (fb == 0.0) return b;
  constexpr double eps = std::numeric_limits<double>::epsilon();
  double c = b, fc = fb, d = 0.0, e = 0.0;
  for (int iter = 0; iter < 200; ++iter) {
    if ((fb > 0.0 && fc > 0.0) || (fb < 0.0 && fc < 0.0)) {
      c = a;
      fc = fa;
      e = d = b - a;
    }
    if (std::fabs(fc) < std::fabs(fb)) {
      a = b;
      b = c;
      c = a;
      fa = fb;
      fb = fc;
      fc = fa;
    }
    const double tol1 = 2.0 * eps * std::fabs(b) + 0.5 * tol;
    const double xm = 0.5 * (c - b);
    if (std::fabs(xm) <= tol1 || fb == 0.0) return b;
    if (std::fabs(e) >= tol1 && std::fabs(fa) > std::fabs(fb)) {
      // Inverse quadratic interpolation, or secant when only two points.
      double p, q, r;
      const double s = fb / fa;
      if (a == c) {
        p = 2.0 * xm * s;
        q = 1.0 - s;
      } else {
        q = fa / fc;
        r = fb / fc;
        p = s * (2.0 * xm * q * (q - r) - (b - a) * (r - 1.0));
        q = (q - 1.0) * (r - 1.0) * (s - 1.0);
      }
      if (p > 0.0) q = -q;
      p = std::fabs(p);
      const double min1 = 3.0 * xm * q - std::fabs(tol1 * q);
      const double min2 = std::fabs(e * q);
      if (2.0 * p < std::min(min1, min2)) {
        e = d;
        d = p / q;
      } else {
        d = xm;
        e = d;
      }
    } else {
      d = xm;
      e = d;
    }
    a = b;
    fa = fb;
    b += std::fabs(d) > tol1 ? d : std::copysign(tol1, xm);
    fb = f(b);
  }
  return b;
}

}  // namespace stmoe
