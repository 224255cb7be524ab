#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stmoe/ecm.hpp"
#include "stmoe/model.hpp"

namespace stmoe {

/// Two-expert linear truth used by the simulation studies:
/// alpha_1 = (0, 10), beta_1 = (0, 1), beta_2 = (0, -1), sigma = 0.1,
/// lambda = (3, -10), nu = (5, 7).
ModelParams reference_truth(Family family);

struct SimConfig {
  ModelParams truth;
  Eigen::Index n = 500;
  double outlier_rate = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SimulatedData {
  Dataset data;
  std::vector<int> labels;        // generating expert, 1-based; 0 for outliers
  std::vector<bool> outlier;
};

/// Covariates uniform on (-1, 1) with x_i = r_i = (1, x_i...); labels drawn
/// from the gate, responses from the chosen expert. Ignores outlier_rate.
SimulatedData generate(const SimConfig& cfg);

struct Contamination {
  Dataset data;
  std::vector<bool> replaced;
};

/// Each row independently replaced with probability c by a fresh covariate
/// draw and response -2.
Contamination inject_outliers(const Dataset& data, double c, std::uint64_t seed);

/// generate() followed by inject_outliers() at cfg.outlier_rate.
SimulatedData simulate(const SimConfig& cfg);

inline constexpr double kOutlierResponse = -2.0;

/// (1/n) sum_i (E_truth[Y | r_i, x_i] - E_est[Y | r_i, x_i])^2.
double mse_mean_function(const ModelParams& truth, const ModelParams& est, const Dataset& data);

/// Relabels est to the expert permutation minimizing the total squared beta
/// error against truth.
ModelParams align_to_truth(const ModelParams& truth, const ModelParams& est);

struct ParameterErrors {
  std::vector<std::string> names;
  VectorXd squared_error;
};

/// Per-coordinate squared errors after label alignment. Coordinates are the
/// gate coefficients, then per expert beta, sigma, and (STMoE) lambda, nu.
ParameterErrors mse_parameters(const ModelParams& truth, const ModelParams& est);

std::vector<std::string> parameter_names(const ModelParams& psi);
VectorXd parameter_vector(const ModelParams& psi);

// ---------------------------------------------------------------------------
// Simulation studies
// ---------------------------------------------------------------------------

struct ConsistencyConfig {
  std::vector<Eigen::Index> n_grid{50, 100, 200, 500, 1000};
  int trials = 20;
  std::uint64_t seed = 0;
  Family truth_family = Family::STMoE;
  Family fit_family = Family::STMoE;
  FitConfig fit;
};

struct ConsistencyRow {
  Eigen::Index n = 0;
  std::vector<std::string> names;
  VectorXd mean_squared_error;  // averaged over successful trials
  int successes = 0;
  int failures = 0;
};

std::vector<ConsistencyRow> run_consistency(const ConsistencyConfig& cfg);

struct RobustnessConfig {
  std::vector<double> c_grid{0.0, 0.01, 0.02, 0.03, 0.04, 0.05};
  Eigen::Index n = 500;
  int trials = 10;
  std::uint64_t seed = 0;
  Family truth_family = Family::NMoE;
  std::vector<Family> fit_families{Family::NMoE, Family::STMoE};
  FitConfig fit;
};

struct RobustnessRow {
  double c = 0.0;
  Family fit_family = Family::NMoE;
  std::vector<double> mse;  // per trial; NaN when the fit failed or the mean is undefined
  double mean = 0.0;
  double median = 0.0;
  int failures = 0;
};

std::vector<RobustnessRow> run_robustness(const RobustnessConfig& cfg);

double median_of(std::vector<double> values);

}  // namespace stmoe
