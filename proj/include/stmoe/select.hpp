#pragma once

#include <optional>
#include <string>
#include <vector>

#include "stmoe/ecm.hpp"

namespace stmoe {

/// Information criteria for one fitted number of experts. All criteria are
/// to be maximized.
struct CriteriaRow {
  Eigen::Index K = 0;
  double loglik = 0.0;
  double complete_loglik = 0.0;
  long eta = 0;
  double aic = 0.0;
  double bic = 0.0;
  double icl = 0.0;
};

/// Free parameter count: K(p+q+3)-q-1 (NMoE) or K(p+q+5)-q-1 (STMoE), with
/// p and q the covariate-vector lengths.
long free_params(Eigen::Index K, Eigen::Index p, Eigen::Index q, Family family);

/// Complete-data log-likelihood with MAP-hardened labels:
/// sum_i log(pi_{z_i}(r_i) f_{z_i}(y_i | x_i)).
double complete_loglik(const Dataset& data, const ModelParams& psi, const MatrixXd& tau);

/// AIC = logL - eta, BIC = logL - eta log(n)/2, ICL = logLc - eta log(n)/2.
CriteriaRow information_criteria(Eigen::Index K, double loglik, double complete_loglik,
                                 long eta, double n);

CriteriaRow criteria(const FittedModel& fit, const Dataset& data);

struct SelectionEntry {
  Eigen::Index K = 0;
  std::optional<CriteriaRow> row;
  std::string error;  // set when the fit for this K failed
};

struct SelectionTable {
  std::vector<SelectionEntry> entries;
  Eigen::Index best_aic = 0;
  Eigen::Index best_bic = 0;
  Eigen::Index best_icl = 0;
};

SelectionTable select_k(const Dataset& data, Family family,
                        const std::vector<Eigen::Index>& k_range, const FitConfig& cfg);

}  // namespace stmoe
