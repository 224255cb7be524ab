#include "stmoe/select.hpp"

#include <cmath>
#include <stdexcept>

#include "stmoe/predict.hpp"

namespace stmoe {

long free_params(Eigen::Index K, Eigen::Index p, Eigen::Index q, Family family) {
  const long extra = family == Family::NMoE ? 3 : 5;
  return static_cast<long>(K) * (static_cast<long>(p + q) + extra) - static_cast<long>(q) - 1;
}

double complete_loglik(const Dataset& data, const ModelParams& psi, const MatrixXd& tau) {
  const MatrixXd joint = joint_log_densities(data, psi);
  const std::vector<int> labels = map_partition(tau);
  double total = 0.0;
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    total += joint(i, labels[static_cast<std::size_t>(i)] - 1);
  }
  return total;
}

CriteriaRow information_criteria(Eigen::Index K, double loglik, double complete_loglik,
                                 long eta, double n) {
  CriteriaRow row;
  row.K = K;
  row.loglik = loglik;
  row.complete_loglik = complete_loglik;
  row.eta = eta;
  const double half_log_n = 0.5 * std::log(n);
  const auto e = static_cast<double>(eta);
  row.aic = loglik - e;
  row.bic = loglik - e * half_log_n;
  row.icl = complete_loglik - e * half_log_n;
  return row;
}

CriteriaRow criteria(const FittedModel& fit, const Dataset& data) {
  const auto K = fit.params.K();
  return information_criteria(K, fit.loglik, complete_loglik(data, fit.params, fit.tau),
                              free_params(K, data.p(), data.q(), fit.params.family),
                              static_cast<double>(data.n()));
}

SelectionTable select_k(const Dataset& data, Family family,
                        const std::vector<Eigen::Index>& k_range, const FitConfig& cfg) {
  if (k_range.empty()) throw std::invalid_argument("select_k: empty K range");
  SelectionTable table;
  const CriteriaRow* best[3] = {nullptr, nullptr, nullptr};
  for (auto K : k_range) {
    SelectionEntry entry;
    entry.K = K;
    try {
      const FittedModel fm = multi_start_fit(data, K, family, cfg);
      entry.row = criteria(fm, data);
    } catch (const std::exception& err) {
      entry.error = err.what();
    }
    table.entries.push_back(std::move(entry));
  }
  for (const auto& entry : table.entries) {
    if (!entry.row) continue;
    const CriteriaRow& r = *entry.row;
    // Ties go to the smaller K.
    auto better = [&](const CriteriaRow* b, double CriteriaRow::*field) {
      return b == nullptr || r.*field > b->*field ||
             (r.*field == b->*field && r.K < b->K);
    };
    if (better(best[0], &CriteriaRow::aic)) best[0] = &r;
    if (better(best[1], &CriteriaRow::bic)) best[1] = &r;
    if (better(best[2], &CriteriaRow::icl)) best[2] = &r;
  }
  if (best[0] == nullptr) {
    throw FitError("select_k: every K failed; first error: " + table.entries.front().error);
  }
  table.best_aic = best[0]->K;
  table.best_bic = best[1]->K;
  table.best_icl = best[2]->K;
  return table;
}

}  // namespace stmoe
