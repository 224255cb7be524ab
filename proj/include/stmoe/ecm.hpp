#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "stmoe/mstep.hpp"
#include "stmoe/model.hpp"

namespace stmoe {

struct FitConfig {
  double tol = 1e-6;       // relative observed log-likelihood change
  int max_iter = 1500;
  int n_starts = 10;
  std::uint64_t seed = 0;
  double nu_min = kNuMin;
  double nu_max = kNuMax;
  Constraints constraints;
  IrlsConfig irls;
  /// Reject a degrees-of-freedom update that lowers the observed
  /// log-likelihood (the one-step-late e3 makes that step inexact).
  bool monotone_guard = true;
  int max_reseeds = 5;
  /// Standard deviation of the random gating initialization.
  double alpha_init_sd = 0.5;

  void validate() const;
};

struct FittedModel {
  ModelParams params;
  double loglik = 0.0;
  std::vector<double> loglik_trace;
  MatrixXd tau;
  int n_iter = 0;
  bool converged = false;
  int start_index = 0;
  std::uint64_t seed = 0;
  int reseeds = 0;          // trace restarts after empty-component reseeding
  int skew_stalls = 0;      // CM-step 3 found no root and kept delta
  int nu_reverts = 0;       // guarded degrees-of-freedom steps that were undone
  std::vector<double> start_logliks;  // multi-start only; NaN for failed starts
};

class FitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Random-partition initialization. With null_gating the gate starts at
/// equal proportions.
ModelParams initialize(const Dataset& data, Eigen::Index K, Family family,
                       std::uint64_t seed, bool null_gating = false,
                       const Constraints& constraints = {}, double alpha_sd = 0.5);

/// ECM iterations from a given starting point.
FittedModel fit_from(const Dataset& data, const ModelParams& init, const FitConfig& cfg);

/// Single start with seed cfg.seed and the null gating initialization.
FittedModel fit(const Dataset& data, Eigen::Index K, Family family, const FitConfig& cfg);

std::uint64_t start_seed(std::uint64_t seed, int start);

/// cfg.n_starts independent fits; returns the highest log-likelihood one
/// (ties go to the lowest start index).
FittedModel multi_start_fit(const Dataset& data, Eigen::Index K, Family family,
                            const FitConfig& cfg);

/// Experts sorted by intercept; gate re-expressed accordingly. Returns the
/// permutation applied (position j holds the old index).
std::vector<int> canonical_order(const ModelParams& psi);

}  // namespace stmoe
