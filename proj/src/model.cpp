#include "stmoe/model.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "stmoe/dist.hpp"

namespace stmoe {

void Dataset::validate() const {
  if (y.size() == 0) throw std::invalid_argument("dataset: no observations");
  if (X.rows() != y.size() || R.rows() != y.size()) {
    throw std::invalid_argument("dataset: y, X and R must have equal row counts (" +
                                std::to_string(y.size()) + ", " +
                                std::to_string(X.rows()) + ", " +
                                std::to_string(R.rows()) + ")");
  }
  if (X.cols() < 1 || R.cols() < 1) {
    throw std::invalid_argument("dataset: X and R need at least one column");
  }
  if (!y.allFinite() || !X.allFinite() || !R.allFinite()) {
    throw std::invalid_argument("dataset: non-finite entries");
  }
}

Dataset Dataset::rows(const std::vector<Eigen::Index>& idx) const {
  Dataset out;
  out.y.resize(static_cast<Eigen::Index>(idx.size()));
  out.X.resize(out.y.size(), X.cols());
  out.R.resize(out.y.size(), R.cols());
  for (Eigen::Index j = 0; j < out.y.size(); ++j) {
    const auto i = idx[static_cast<std::size_t>(j)];
    out.y(j) = y(i);
    out.X.row(j) = X.row(i);
    out.R.row(j) = R.row(i);
  }
  return out;
}

Dataset Dataset::concat(const Dataset& a, const Dataset& b) {
  if (a.p() != b.p() || a.q() != b.q()) {
    throw std::invalid_argument("dataset concat: column counts differ");
  }
  Dataset out;
  out.y.resize(a.n() + b.n());
  out.y << a.y, b.y;
  out.X.resize(a.n() + b.n(), a.p());
  out.X << a.X, b.X;
  out.R.resize(a.n() + b.n(), a.q());
  out.R << a.R, b.R;
  return out;
}

std::string to_string(Family f) { return f == Family::NMoE ? "nmoe" : "stmoe"; }

Family family_from_string(const std::string& s) {
  if (s == "nmoe" || s == "NMoE") return Family::NMoE;
  if (s == "stmoe" || s == "STMoE") return Family::STMoE;
  throw std::invalid_argument("unknown model family '" + s + "' (expected nmoe or stmoe)");
}

double ExpertParams::delta() const { return lambda_to_delta(lambda); }

void ModelParams::validate() const {
  if (experts.empty()) throw std::invalid_argument("model: K must be >= 1");
  if (gating.alpha.rows() != K() - 1) {
    throw std::invalid_argument("model: gating has " + std::to_string(gating.alpha.rows()) +
                                " rows, expected K-1 = " + std::to_string(K() - 1));
  }
  if (K() > 1 && gating.alpha.cols() < 1) {
    throw std::invalid_argument("model: gating needs q >= 1");
  }
  if (!gating.alpha.allFinite()) throw std::invalid_argument("model: non-finite gating");
  const auto p0 = experts.front().beta.size();
  for (std::size_t k = 0; k < experts.size(); ++k) {
    const auto& e = experts[k];
    const auto tag = "expert " + std::to_string(k + 1);
    if (e.beta.size() != p0 || p0 < 1) {
      throw std::invalid_argument("model: " + tag + " has inconsistent beta length");
    }
    if (!e.beta.allFinite()) throw std::invalid_argument("model: " + tag + " non-finite beta");
    if (!(e.sigma2 > 0.0) || !std::isfinite(e.sigma2)) {
      throw std::invalid_argument("model: " + tag + " sigma2 must be positive");
    }
    if (family == Family::STMoE) {
      if (!std::isfinite(e.lambda)) throw std::invalid_argument("model: " + tag + " lambda");
      if (!(e.nu > 0.0)) throw std::invalid_argument("model: " + tag + " nu must be positive");
    }
  }
}

void ModelParams::check_compatible(const Dataset& data) const {
  if (data.p() != p()) {
    throw std::invalid_argument("dimension mismatch: model p = " + std::to_string(p()) +
                                ", data p = " + std::to_string(data.p()));
  }
  if (K() > 1 && data.q() != q()) {
    throw std::invalid_argument("dimension mismatch: model q = " + std::to_string(q()) +
                                ", data q = " + std::to_string(data.q()));
  }
}

double log_sum_exp(const Eigen::Ref<const VectorXd>& v) {
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

VectorXd gating_log_probs(const Eigen::Ref<const VectorXd>& r, const GatingParams& gp) {
  const auto K = gp.num_experts();
  VectorXd eta(K);
  if (K > 1) {
    if (r.size() != gp.q()) {
      throw std::invalid_argument("gating_probs: r has length " + std::to_string(r.size()) +
                                  ", expected " + std::to_string(gp.q()));
    }
    eta.head(K - 1) = gp.alpha * r;
  }
  eta(K - 1) = 0.0;
  return eta.array() - log_sum_exp(eta);
}

VectorXd gating_probs(const Eigen::Ref<const VectorXd>& r, const GatingParams& gp) {
  VectorXd pi = gating_log_probs(r, gp).array().exp();
  return pi / pi.sum();
}

double expert_logpdf(double y, const Eigen::Ref<const VectorXd>& x, const ExpertParams& e,
                     Family family) {
  if (x.size() != e.beta.size()) {
    throw std::invalid_argument("expert_logpdf: x has length " + std::to_string(x.size()) +
                                ", expected " + std::to_string(e.beta.size()));
  }
  const double mu = e.beta.dot(x);
  if (family == Family::NMoE) return normal_logpdf(y, mu, e.sigma2);
  return skew_t_logpdf(y, SkewTParams{mu, e.sigma2, e.lambda, e.nu});
}

double mixture_logpdf(double y, const Eigen::Ref<const VectorXd>& x,
                      const Eigen::Ref<const VectorXd>& r, const ModelParams& psi) {
  const VectorXd log_pi = gating_log_probs(r, psi.gating);
  VectorXd terms(psi.K());
  for (Eigen::Index k = 0; k < psi.K(); ++k) {
    terms(k) = log_pi(k) + expert_logpdf(y, x, psi.experts[static_cast<std::size_t>(k)],
                                         psi.family);
  }
  return log_sum_exp(terms);
}

MatrixXd joint_log_densities(const Dataset& data, const ModelParams& psi) {
  psi.check_compatible(data);
  const auto n = data.n();
  const auto K = psi.K();
  MatrixXd out(n, K);
  for (Eigen::Index i = 0; i < n; ++i) {
    const VectorXd log_pi = gating_log_probs(data.R.row(i).transpose(), psi.gating);
    for (Eigen::Index k = 0; k < K; ++k) {
      out(i, k) = log_pi(k) + expert_logpdf(data.y(i), data.X.row(i).transpose(),
                                            psi.experts[static_cast<std::size_t>(k)],
                                            psi.family);
    }
  }
  return out;
}

double log_likelihood(const Dataset& data, const ModelParams& psi) {
  const MatrixXd joint = joint_log_densities(data, psi);
  double total = 0.0;
  for (Eigen::Index i = 0; i < joint.rows(); ++i) {
    total += log_sum_exp(joint.row(i).transpose());
  }
  return total;
}

ModelParams permute_experts(const ModelParams& psi, const std::vector<int>& order) {
  const auto K = psi.K();
  if (static_cast<Eigen::Index>(order.size()) != K) {
    throw std::invalid_argument("permute_experts: order has wrong length");
  }
  ModelParams out = psi;
  // Full K x q coefficient matrix with the implicit zero row restored.
  MatrixXd full = MatrixXd::Zero(K, psi.q());
  if (K > 1) full.topRows(K - 1) = psi.gating.alpha;
  const Eigen::RowVectorXd last = full.row(order.back());
  out.gating.alpha.resize(K - 1, psi.q());
  for (Eigen::Index j = 0; j < K; ++j) {
    const auto old = order[static_cast<std::size_t>(j)];
    out.experts[static_cast<std::size_t>(j)] = psi.experts[static_cast<std::size_t>(old)];
    if (j < K - 1) out.gating.alpha.row(j) = full.row(old) - last;
  }
  return out;
}

}  // namespace stmoe
