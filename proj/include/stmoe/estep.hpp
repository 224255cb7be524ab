#pragma once

#include <stdexcept>
#include <string>

#include "stmoe/model.hpp"

namespace stmoe {

/// Posterior memberships and conditional latent moments for every
/// (observation, expert) pair. All matrices are n x K.
struct EStepMoments {
  MatrixXd tau;  // P(Z_i = k | y_i)
  MatrixXd w;    // E[W | y, Z = k]
  MatrixXd e1;   // E[W |U| | y, Z = k]
  MatrixXd e2;   // E[W U^2 | y, Z = k]
  MatrixXd e3;   // E[log W | y, Z = k], one-step-late form
  MatrixXd d;    // standardized residual (y - beta'x) / sigma
  MatrixXd M;    // lambda d sqrt((nu+1)/(nu+d^2))
  VectorXd log_density;  // log f(y_i | r_i, x_i) of the mixture
  double loglik = 0.0;
};

/// Raised when every expert assigns zero density to an observation.
class DegenerateRowError : public std::runtime_error {
 public:
  DegenerateRowError(Eigen::Index row, const std::string& what)
      : std::runtime_error(what), row_(row) {}
  Eigen::Index row() const { return row_; }

 private:
  Eigen::Index row_;
};

MatrixXd posterior_tau(const Dataset& data, const ModelParams& psi);

/// Full STMoE E-step. Throws std::invalid_argument for the NMoE family.
EStepMoments latent_moments(const Dataset& data, const ModelParams& psi);

/// Family-dispatching E-step used by the ECM driver. For NMoE only tau, d,
/// log_density and loglik are meaningful; w = 1 and e1 = e2 = e3 = 0.
EStepMoments run_estep(const Dataset& data, const ModelParams& psi);

}  // namespace stmoe
