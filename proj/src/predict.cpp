#include "stmoe/predict.hpp"

#include <cmath>
#include <sstream>

#include "stmoe/dist.hpp"

namespace stmoe {

namespace {

std::string list_components(const std::vector<int>& ks) {
  std::ostringstream os;
  for (std::size_t j = 0; j < ks.size(); ++j) os << (j ? ", " : "") << ks[j];
  return os.str();
}

}  // namespace

std::optional<double> expert_mean(const ExpertParams& e, const Eigen::Ref<const VectorXd>& x,
                                  Family family) {
  const double linear = e.beta.dot(x);
  if (family == Family::NMoE) return linear;
  if (!(e.nu > 1.0)) return std::nullopt;
  return linear + std::sqrt(e.sigma2) * e.delta() * xi_factor(e.nu);
}

std::optional<double> expert_variance(const ExpertParams& e, Family family) {
  if (family == Family::NMoE) return e.sigma2;
  if (!(e.nu > 2.0)) return std::nullopt;
  const double xi = xi_factor(e.nu);
  const double delta = e.delta();
  return (e.nu / (e.nu - 2.0) - delta * delta * xi * xi) * e.sigma2;
}

Prediction predict(const Eigen::Ref<const VectorXd>& x, const Eigen::Ref<const VectorXd>& r,
                   const ModelParams& psi) {
  if (x.size() != psi.p()) {
    throw std::invalid_argument("predict: x has length " + std::to_string(x.size()) +
                                ", expected " + std::to_string(psi.p()));
  }
  const auto K = psi.K();
  Prediction out;
  out.gate = gating_probs(r, psi.gating);
  out.per_expert_mean.resize(K);
  VectorXd var(K);
  std::vector<int> no_mean;
  bool var_ok = true;
  for (Eigen::Index k = 0; k < K; ++k) {
    const auto& e = psi.experts[static_cast<std::size_t>(k)];
    const bool matters = out.gate(k) > kNegligibleGate;
    const auto m = expert_mean(e, x, psi.family);
    const auto v = expert_variance(e, psi.family);
    if (!m) {
      if (matters) no_mean.push_back(static_cast<int>(k + 1));
      out.per_expert_mean(k) = e.beta.dot(x);
    } else {
      out.per_expert_mean(k) = *m;
    }
    if (!v) {
      if (matters) var_ok = false;
      var(k) = 0.0;
    } else {
      var(k) = *v;
    }
  }
  if (!no_mean.empty()) {
    throw UndefinedMomentError("predict: mean undefined (nu <= 1) for expert(s) " +
                                   list_components(no_mean),
                               no_mean);
  }
  // Experts with negligible gate mass contribute nothing to either moment.
  VectorXd g = out.gate;
  for (Eigen::Index k = 0; k < K; ++k) {
    const auto& e = psi.experts[static_cast<std::size_t>(k)];
    if (g(k) <= kNegligibleGate &&
        (!expert_mean(e, x, psi.family) || !expert_variance(e, psi.family))) {
      g(k) = 0.0;
    }
  }
  out.mean = g.dot(out.per_expert_mean);
  if (var_ok) {
    // Law of total variance in its non-negative form.
    const VectorXd spread = (out.per_expert_mean.array() - out.mean).square().matrix();
    out.variance = g.dot(var) + g.dot(spread);
    out.variance_defined = true;
  }
  return out;
}

std::vector<Band> predict_band(const MatrixXd& X, const MatrixXd& R, const ModelParams& psi,
                               double width) {
  if (X.rows() != R.rows()) throw std::invalid_argument("predict_band: X and R rows differ");
  std::vector<Band> out;
  out.reserve(static_cast<std::size_t>(X.rows()));
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    const Prediction p = predict(X.row(i).transpose(), R.row(i).transpose(), psi);
    if (!p.variance_defined) {
      std::vector<int> bad;
      for (Eigen::Index k = 0; k < psi.K(); ++k) {
        if (p.gate(k) > kNegligibleGate &&
            !expert_variance(psi.experts[static_cast<std::size_t>(k)], psi.family)) {
          bad.push_back(static_cast<int>(k + 1));
        }
      }
      throw UndefinedMomentError("predict_band: variance undefined (nu <= 2) at row " +
                                     std::to_string(i + 1) + " for expert(s) " +
                                     list_components(bad),
                                 bad);
    }
    const double half = width * std::sqrt(*p.variance);
    out.push_back({p.mean, p.mean - half, p.mean + half});
  }
  return out;
}

std::vector<int> map_partition(const MatrixXd& tau) {
  std::vector<int> labels(static_cast<std::size_t>(tau.rows()));
  for (Eigen::Index i = 0; i < tau.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index k = 1; k < tau.cols(); ++k) {
      if (tau(i, k) > tau(i, best)) best = k;
    }
    labels[static_cast<std::size_t>(i)] = static_cast<int>(best + 1);
  }
  return labels;
}

}  // namespace stmoe
