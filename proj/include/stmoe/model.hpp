#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

namespace stmoe {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Responses with row-aligned expert covariates X (n x p) and gating
/// covariates R (n x q). By convention the first column of X and R is the
/// intercept.
struct Dataset {
  VectorXd y;
  MatrixXd X;
  MatrixXd R;

  Eigen::Index n() const { return y.size(); }
  Eigen::Index p() const { return X.cols(); }
  Eigen::Index q() const { return R.cols(); }

  /// Throws std::invalid_argument on empty data, mismatched row counts or
  /// non-finite entries.
  void validate() const;

  Dataset rows(const std::vector<Eigen::Index>& idx) const;
  static Dataset concat(const Dataset& a, const Dataset& b);
};

enum class Family { NMoE, STMoE };

std::string to_string(Family f);
Family family_from_string(const std::string& s);

/// Multinomial-logistic gate coefficients. Row k holds alpha_k for
/// k = 0..K-2; alpha for the last expert is structurally zero.
struct GatingParams {
  MatrixXd alpha;

  Eigen::Index num_experts() const { return alpha.rows() + 1; }
  Eigen::Index q() const { return alpha.cols(); }
};

struct ExpertParams {
  VectorXd beta;
  double sigma2 = 1.0;
  double lambda = 0.0;  // ignored for NMoE
  double nu = 30.0;     // ignored for NMoE

  double delta() const;
};

struct Constraints {
  bool fix_lambda_zero = false;
  std::optional<double> fix_nu;

  bool operator==(const Constraints&) const = default;
};

struct ModelParams {
  Family family = Family::STMoE;
  GatingParams gating;
  std::vector<ExpertParams> experts;
  Constraints constraints;

  Eigen::Index K() const { return static_cast<Eigen::Index>(experts.size()); }
  Eigen::Index p() const { return experts.empty() ? 0 : experts.front().beta.size(); }
  Eigen::Index q() const { return gating.q(); }

  /// Structural checks: K >= 1, consistent dimensions, sigma2 > 0, nu > 0.
  void validate() const;
  /// Throws std::invalid_argument when data dimensions do not match.
  void check_compatible(const Dataset& data) const;
};

/// pi_k(r; alpha) for all k, normalized by log-sum-exp.
VectorXd gating_probs(const Eigen::Ref<const VectorXd>& r, const GatingParams& gp);
VectorXd gating_log_probs(const Eigen::Ref<const VectorXd>& r, const GatingParams& gp);

/// log f_k(y | x) for one expert under the model family.
double expert_logpdf(double y, const Eigen::Ref<const VectorXd>& x,
                     const ExpertParams& e, Family family);

double mixture_logpdf(double y, const Eigen::Ref<const VectorXd>& x,
                      const Eigen::Ref<const VectorXd>& r, const ModelParams& psi);

double log_likelihood(const Dataset& data, const ModelParams& psi);

/// n x K matrix of log(pi_k(r_i) f_k(y_i | x_i)).
MatrixXd joint_log_densities(const Dataset& data, const ModelParams& psi);

double log_sum_exp(const Eigen::Ref<const VectorXd>& v);

/// Reorders experts by `order` (order[j] = old index placed at position j)
/// and re-expresses the gate so the new last expert carries the zero vector.
ModelParams permute_experts(const ModelParams& psi, const std::vector<int>& order);

}  // namespace stmoe
