#include "stmoe/estep.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "stmoe/dist.hpp"
#include "stmoe/specfun.hpp"

namespace stmoe {

namespace {

// Fills tau, log_density and loglik from the joint log densities.
void normalize_rows(const MatrixXd& joint, EStepMoments& out) {
  const auto n = joint.rows();
  out.tau.resize(n, joint.cols());
  out.log_density.resize(n);
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double lse = log_sum_exp(joint.row(i).transpose());
    if (!std::isfinite(lse)) {
      throw DegenerateRowError(
          i, "E-step: mixture density is zero or non-finite at row " + std::to_string(i + 1));
    }
    out.log_density(i) = lse;
    out.tau.row(i) = (joint.row(i).array() - lse).exp();
    out.tau.row(i) /= out.tau.row(i).sum();
    total += lse;
  }
  out.loglik = total;
}

struct ExpertConstants {
  double sigma;
  double delta;
  double one_minus_delta2;
  double nu;
  double lambda;
  double digamma_half_nu1;
  double t3_scale;
};

ExpertConstants constants_for(const ExpertParams& e) {
  ExpertConstants c{};
  c.sigma = std::sqrt(e.sigma2);
  c.lambda = e.lambda;
  c.delta = lambda_to_delta(e.lambda);
  c.one_minus_delta2 = 1.0 / (1.0 + e.lambda * e.lambda);
  c.nu = e.nu;
  c.digamma_half_nu1 = specfun::digamma(0.5 * (e.nu + 1.0));
  c.t3_scale = std::sqrt((e.nu + 3.0) / (e.nu + 1.0));
  return c;
}

}  // namespace

MatrixXd posterior_tau(const Dataset& data, const ModelParams& psi) {
  EStepMoments m;
  normalize_rows(joint_log_densities(data, psi), m);
  return m.tau;
}

EStepMoments latent_moments(const Dataset& data, const ModelParams& psi) {
  if (psi.family != Family::STMoE) {
    throw std::invalid_argument("latent_moments: requires the STMoE family");
  }
  psi.check_compatible(data);
  const auto n = data.n();
  const auto K = psi.K();

  std::vector<ExpertConstants> consts;
  consts.reserve(static_cast<std::size_t>(K));
  for (const auto& e : psi.experts) consts.push_back(constants_for(e));

  EStepMoments out;
  out.w.resize(n, K);
  out.e1.resize(n, K);
  out.e2.resize(n, K);
  out.e3.resize(n, K);
  out.d.resize(n, K);
  out.M.resize(n, K);
  MatrixXd joint(n, K);
  MatrixXd log_fk(n, K);
  MatrixXd log_t1(n, K);

  for (Eigen::Index i = 0; i < n; ++i) {
    const VectorXd log_pi = gating_log_probs(data.R.row(i).transpose(), psi.gating);
    for (Eigen::Index k = 0; k < K; ++k) {
      const auto& e = psi.experts[static_cast<std::size_t>(k)];
      const auto& c = consts[static_cast<std::size_t>(k)];
      const double r = data.y(i) - data.X.row(i).dot(e.beta);
      const double d = r / c.sigma;
      const double d2 = d * d;
      const double M = c.lambda * d * std::sqrt((c.nu + 1.0) / (c.nu + d2));
      const double lt1 = specfun::student_t_logcdf(M, c.nu + 1.0);
      const double lf = std::log(2.0 / c.sigma) + specfun::student_t_logpdf(d, c.nu) + lt1;
      out.d(i, k) = d;
      out.M(i, k) = M;
      log_t1(i, k) = lt1;
      log_fk(i, k) = lf;
      joint(i, k) = log_pi(k) + lf;
    }
  }
  normalize_rows(joint, out);

  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index k = 0; k < K; ++k) {
      const auto& c = consts[static_cast<std::size_t>(k)];
      const double d = out.d(i, k);
      const double d2 = d * d;
      const double r = d * c.sigma;
      const double M = out.M(i, k);
      const double base = (c.nu + 1.0) / (c.nu + d2);
      const double lt3 = specfun::student_t_logcdf(M * c.t3_scale, c.nu + 3.0);
      const double w = base * std::exp(lt3 - log_t1(i, k));

      // Truncated-normal correction shared by e1 and e2; the density in the
      // denominator is the expert's own skew-t density.
      const double log_h = 0.5 * std::log(c.one_minus_delta2) - std::log(std::numbers::pi) -
                           log_fk(i, k) -
                           (0.5 * c.nu + 1.0) * std::log1p(d2 / (c.nu * c.one_minus_delta2));
      const double h = std::exp(log_h);

      out.w(i, k) = w;
      out.e1(i, k) = c.delta * r * w + h;
      out.e2(i, k) = c.delta * c.delta * r * r * w + c.one_minus_delta2 * c.sigma * c.sigma +
                     c.delta * r * h;

      const double t_ratio =
          std::exp(specfun::student_t_logpdf(M, c.nu + 1.0) - log_t1(i, k));
      const double skew_term = c.lambda * d * (d2 - 1.0) /
                               std::sqrt((c.nu + 1.0) * std::pow(c.nu + d2, 3.0)) * t_ratio;
      out.e3(i, k) = w - std::log(0.5 * (c.nu + d2)) - base + c.digamma_half_nu1 + skew_term;
    }
  }
  return out;
}

EStepMoments run_estep(const Dataset& data, const ModelParams& psi) {
  if (psi.family == Family::STMoE) return latent_moments(data, psi);
  psi.check_compatible(data);
  const auto n = data.n();
  const auto K = psi.K();
  EStepMoments out;
  out.d.resize(n, K);
  for (Eigen::Index k = 0; k < K; ++k) {
    const auto& e = psi.experts[static_cast<std::size_t>(k)];
    out.d.col(k) = (data.y - data.X * e.beta) / std::sqrt(e.sigma2);
  }
  normalize_rows(joint_log_densities(data, psi), out);
  out.w = MatrixXd::Ones(n, K);
  out.e1 = MatrixXd::Zero(n, K);
  out.e2 = MatrixXd::Zero(n, K);
  out.e3 = MatrixXd::Zero(n, K);
  out.M = MatrixXd::Zero(n, K);
  return out;
}

}  // namespace stmoe
