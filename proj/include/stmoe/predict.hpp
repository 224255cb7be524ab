#pragma once

#include <optional>
#include <stdexcept>
#include <vector>

#include "stmoe/model.hpp"

namespace stmoe {

/// Raised when a skew-t mean or variance does not exist for the fitted nu.
class UndefinedMomentError : public std::domain_error {
 public:
  UndefinedMomentError(const std::string& what, std::vector<int> components)
      : std::domain_error(what), components_(std::move(components)) {}
  /// 1-based expert indices responsible.
  const std::vector<int>& components() const { return components_; }

 private:
  std::vector<int> components_;
};

struct Prediction {
  double mean = 0.0;
  std::optional<double> variance;
  bool variance_defined = false;
  VectorXd per_expert_mean;
  VectorXd gate;
};

/// Gate mass at or below this is ignored when checking moment existence.
inline constexpr double kNegligibleGate = 1e-12;

/// Expert mean/variance under the family. Returns nullopt when undefined.
std::optional<double> expert_mean(const ExpertParams& e, const Eigen::Ref<const VectorXd>& x,
                                  Family family);
std::optional<double> expert_variance(const ExpertParams& e, Family family);

Prediction predict(const Eigen::Ref<const VectorXd>& x, const Eigen::Ref<const VectorXd>& r,
                   const ModelParams& psi);

struct Band {
  double mean = 0.0;
  double lower = 0.0;
  double upper = 0.0;
};

/// mean +/- width * sd at every row of (X, R).
std::vector<Band> predict_band(const MatrixXd& X, const MatrixXd& R, const ModelParams& psi,
                               double width = 2.0);

/// MAP labels, 1-based; ties go to the smallest index.
std::vector<int> map_partition(const MatrixXd& tau);

}  // namespace stmoe
