#include "stmoe/sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

#include "stmoe/dist.hpp"
#include "stmoe/predict.hpp"

namespace stmoe {

ModelParams reference_truth(Family family) {
  ModelParams psi;
  psi.family = family;
  psi.gating.alpha = MatrixXd(1, 2);
  psi.gating.alpha << 0.0, 10.0;
  ExpertParams e1, e2;
  e1.beta = VectorXd(2);
  e1.beta << 0.0, 1.0;
  e2.beta = VectorXd(2);
  e2.beta << 0.0, -1.0;
  e1.sigma2 = e2.sigma2 = 0.01;
  if (family == Family::STMoE) {
    e1.lambda = 3.0;
    e1.nu = 5.0;
    e2.lambda = -10.0;
    e2.nu = 7.0;
  } else {
    e1.lambda = e2.lambda = 0.0;
    e1.nu = e2.nu = std::numeric_limits<double>::infinity();
  }
  psi.experts = {e1, e2};
  return psi;
}

void SimConfig::validate() const {
  truth.validate();
  if (n < 1) throw std::invalid_argument("simulation: n must be >= 1");
  if (!(outlier_rate >= 0.0 && outlier_rate <= 1.0)) {
    throw std::invalid_argument("simulation: outlier rate must lie in [0, 1]");
  }
  if (truth.K() > 1 && truth.q() != truth.p()) {
    throw std::invalid_argument("simulation: generator uses x = r and needs p == q");
  }
}

SimulatedData generate(const SimConfig& cfg) {
  cfg.validate();
  const auto n = cfg.n;
  const auto p = cfg.truth.p();
  const auto K = cfg.truth.K();
  Rng rng(cfg.seed);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);

  SimulatedData out;
  out.data.y.resize(n);
  out.data.X.resize(n, p);
  out.labels.resize(static_cast<std::size_t>(n));
  out.outlier.assign(static_cast<std::size_t>(n), false);
  for (Eigen::Index i = 0; i < n; ++i) {
    out.data.X(i, 0) = 1.0;
    for (Eigen::Index j = 1; j < p; ++j) out.data.X(i, j) = unif(rng);
    const VectorXd x = out.data.X.row(i).transpose();
    const VectorXd gate = gating_probs(x, cfg.truth.gating);
    const double u = u01(rng);
    Eigen::Index z = K - 1;
    double acc = 0.0;
    for (Eigen::Index k = 0; k < K; ++k) {
      acc += gate(k);
      if (u < acc) {
        z = k;
        break;
      }
    }
    const auto& e = cfg.truth.experts[static_cast<std::size_t>(z)];
    const double mu = e.beta.dot(x);
    if (cfg.truth.family == Family::NMoE) {
      out.data.y(i) = mu + std::sqrt(e.sigma2) * normal(rng);
    } else {
      out.data.y(i) = draw_skew_t(SkewTParams{mu, e.sigma2, e.lambda, e.nu}, rng);
    }
    out.labels[static_cast<std::size_t>(i)] = static_cast<int>(z + 1);
  }
  out.data.R = out.data.X;
  return out;
}

Contamination inject_outliers(const Dataset& data, double c, std::uint64_t seed) {
  if (!(c >= 0.0 && c <= 1.0)) {
    throw std::invalid_argument("inject_outliers: c must lie in [0, 1]");
  }
  Rng rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  Contamination out{data, std::vector<bool>(static_cast<std::size_t>(data.n()), false)};
  const bool shared = data.R.cols() == data.X.cols();
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    if (!(u01(rng) < c)) continue;
    out.replaced[static_cast<std::size_t>(i)] = true;
    for (Eigen::Index j = 1; j < data.X.cols(); ++j) out.data.X(i, j) = unif(rng);
    if (shared) {
      out.data.R.row(i) = out.data.X.row(i);
    } else {
      for (Eigen::Index j = 1; j < data.R.cols(); ++j) out.data.R(i, j) = unif(rng);
    }
    out.data.y(i) = kOutlierResponse;
  }
  return out;
}

SimulatedData simulate(const SimConfig& cfg) {
  SimulatedData sim = generate(cfg);
  if (cfg.outlier_rate > 0.0) {
    Contamination cont = inject_outliers(sim.data, cfg.outlier_rate, start_seed(cfg.seed, 1));
    sim.data = std::move(cont.data);
    for (std::size_t i = 0; i < cont.replaced.size(); ++i) {
      if (cont.replaced[i]) {
        sim.outlier[i] = true;
        sim.labels[i] = 0;
      }
    }
  }
  return sim;
}

double mse_mean_function(const ModelParams& truth, const ModelParams& est, const Dataset& data) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    const VectorXd x = data.X.row(i).transpose();
    const VectorXd r = data.R.row(i).transpose();
    const double diff = predict(x, r, truth).mean - predict(x, r, est).mean;
    total += diff * diff;
  }
  return total / static_cast<double>(data.n());
}

ModelParams align_to_truth(const ModelParams& truth, const ModelParams& est) {
  if (truth.K() != est.K() || truth.p() != est.p()) {
    throw std::invalid_argument("align_to_truth: models differ in K or p");
  }
  std::vector<int> perm(static_cast<std::size_t>(est.K()));
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<int> best = perm;
  double best_err = std::numeric_limits<double>::infinity();
  do {
    double err = 0.0;
    for (std::size_t j = 0; j < perm.size(); ++j) {
      err += (truth.experts[j].beta - est.experts[static_cast<std::size_t>(perm[j])].beta)
                 .squaredNorm();
    }
    if (err < best_err) {
      best_err = err;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return permute_experts(est, best);
}

std::vector<std::string> parameter_names(const ModelParams& psi) {
  std::vector<std::string> names;
  for (Eigen::Index k = 0; k < psi.K() - 1; ++k) {
    for (Eigen::Index j = 0; j < psi.q(); ++j) {
      names.push_back("alpha" + std::to_string(k + 1) + std::to_string(j));
    }
  }
  for (Eigen::Index k = 0; k < psi.K(); ++k) {
    for (Eigen::Index j = 0; j < psi.p(); ++j) {
      names.push_back("beta" + std::to_string(k + 1) + std::to_string(j));
    }
  }
  for (Eigen::Index k = 0; k < psi.K(); ++k) names.push_back("sigma" + std::to_string(k + 1));
  if (psi.family == Family::STMoE) {
    for (Eigen::Index k = 0; k < psi.K(); ++k) names.push_back("lambda" + std::to_string(k + 1));
    for (Eigen::Index k = 0; k < psi.K(); ++k) names.push_back("nu" + std::to_string(k + 1));
  }
  return names;
}

VectorXd parameter_vector(const ModelParams& psi) {
  std::vector<double> v;
  for (Eigen::Index k = 0; k < psi.K() - 1; ++k) {
    for (Eigen::Index j = 0; j < psi.q(); ++j) v.push_back(psi.gating.alpha(k, j));
  }
  for (const auto& e : psi.experts) {
    for (Eigen::Index j = 0; j < e.beta.size(); ++j) v.push_back(e.beta(j));
  }
  for (const auto& e : psi.experts) v.push_back(std::sqrt(e.sigma2));
  if (psi.family == Family::STMoE) {
    for (const auto& e : psi.experts) v.push_back(e.lambda);
    for (const auto& e : psi.experts) v.push_back(e.nu);
  }
  return Eigen::Map<VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

ParameterErrors mse_parameters(const ModelParams& truth, const ModelParams& est) {
  if (truth.family != est.family || truth.K() != est.K() || truth.p() != est.p() ||
      truth.q() != est.q()) {
    throw std::invalid_argument("mse_parameters: truth and estimate differ in shape or family");
  }
  const ModelParams aligned = align_to_truth(truth, est);
  ParameterErrors out;
  out.names = parameter_names(truth);
  out.squared_error = (parameter_vector(truth) - parameter_vector(aligned)).array().square();
  return out;
}

double median_of(std::vector<double> values) {
  values.erase(std::remove_if(values.begin(), values.end(),
                              [](double v) { return std::isnan(v); }),
               values.end());
  if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(values.begin(), values.end());
  const auto m = values.size() / 2;
  return values.size() % 2 ? values[m] : 0.5 * (values[m - 1] + values[m]);
}

std::vector<ConsistencyRow> run_consistency(const ConsistencyConfig& cfg) {
  const ModelParams truth = reference_truth(cfg.truth_family);
  std::vector<ConsistencyRow> rows;
  for (std::size_t g = 0; g < cfg.n_grid.size(); ++g) {
    ConsistencyRow row;
    row.n = cfg.n_grid[g];
    row.names = parameter_names(reference_truth(cfg.fit_family));
    row.mean_squared_error = VectorXd::Zero(static_cast<Eigen::Index>(row.names.size()));
    const auto grid_seed = start_seed(cfg.seed, static_cast<int>(g) + 1);
    for (int t = 0; t < cfg.trials; ++t) {
      const auto data_seed = start_seed(grid_seed, t + 1);
      SimConfig sc{truth, row.n, 0.0, data_seed};
      const SimulatedData sim = generate(sc);
      FitConfig fc = cfg.fit;
      fc.seed = start_seed(data_seed, 1000);
      try {
        const FittedModel fm = multi_start_fit(sim.data, truth.K(), cfg.fit_family, fc);
        ModelParams ref = truth;
        ref.family = cfg.fit_family;
        if (cfg.fit_family != truth.family) {
          for (auto& e : ref.experts) {
            e.lambda = 0.0;
            e.nu = std::numeric_limits<double>::infinity();
          }
        }
        row.mean_squared_error += mse_parameters(ref, fm.params).squared_error;
        ++row.successes;
      } catch (const std::exception&) {
        ++row.failures;
      }
    }
    if (row.successes > 0) row.mean_squared_error /= static_cast<double>(row.successes);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::vector<RobustnessRow> run_robustness(const RobustnessConfig& cfg) {
  const ModelParams truth = reference_truth(cfg.truth_family);
  std::vector<RobustnessRow> rows;
  for (std::size_t ci = 0; ci < cfg.c_grid.size(); ++ci) {
    for (Family fam : cfg.fit_families) {
      RobustnessRow row;
      row.c = cfg.c_grid[ci];
      row.fit_family = fam;
      rows.push_back(row);
    }
  }
  for (int t = 0; t < cfg.trials; ++t) {
    const auto data_seed = start_seed(cfg.seed, t + 1);
    const SimulatedData base = generate(SimConfig{truth, cfg.n, 0.0, data_seed});
    for (std::size_t ci = 0; ci < cfg.c_grid.size(); ++ci) {
      const double c = cfg.c_grid[ci];
      const Contamination cont =
          inject_outliers(base.data, c, start_seed(data_seed, static_cast<int>(ci) + 1));
      for (std::size_t fi = 0; fi < cfg.fit_families.size(); ++fi) {
        RobustnessRow& row = rows[ci * cfg.fit_families.size() + fi];
        FitConfig fc = cfg.fit;
        fc.seed = start_seed(data_seed, 1000 + static_cast<int>(ci));
        double mse = std::numeric_limits<double>::quiet_NaN();
        try {
          const FittedModel fm = multi_start_fit(cont.data, truth.K(), row.fit_family, fc);
          mse = mse_mean_function(truth, fm.params, cont.data);
        } catch (const std::exception&) {
          ++row.failures;
        }
        row.mse.push_back(mse);
      }
    }
  }
  for (auto& row : rows) {
    double sum = 0.0;
    int count = 0;
    for (double v : row.mse) {
      if (!std::isnan(v)) {
        sum += v;
        ++count;
      }
    }
    row.mean = count ? sum / count : std::numeric_limits<double>::quiet_NaN();
    row.median = median_of(row.mse);
  }
  return rows;
}

}  // namespace stmoe
