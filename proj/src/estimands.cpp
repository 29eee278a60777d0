#include "selinf/estimands.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "selinf/lasso.hpp"

namespace selinf {

SubmodelTarget submodel_target(const Eigen::MatrixXd& sigma_true,
                               const Eigen::VectorXd& beta_true, const std::vector<int>& model) {
  const int m = static_cast<int>(model.size());
  SubmodelTarget out;
  out.model = model;
  if (m == 0) {
    out.targets.resize(0);
    return out;
  }
  Eigen::MatrixXd sigma_m(m, m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) sigma_m(i, j) = sigma_true(model[i], model[j]);
  const Eigen::VectorXd sigma_beta = sigma_true * beta_true;
  Eigen::VectorXd rhs(m);
  for (int i = 0; i < m; ++i) rhs[i] = sigma_beta[model[i]];

  Eigen::LDLT<Eigen::MatrixXd> ldlt(sigma_m);
  const Eigen::VectorXd d = ldlt.vectorD();
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
      d.minCoeff() <= 1e-12 * std::max(1.0, d.maxCoeff()))
    throw linalg_error("submodel_target: singular submodel covariance");
  out.targets = ldlt.solve(rhs);
  return out;
}

namespace {

std::optional<double> ratio(long num, long den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

GeneralEstimands aggregate_general(const std::vector<VariableOutcome>& outcomes,
                                   double zero_tol) {
  long cov_num = 0, cov_den = 0;
  long pow_num = 0, pow_den = 0;
  long t1_num = 0, t1_den = 0;
  for (const auto& o : outcomes) {
    if (!o.interval_available()) continue;
    ++cov_den;
    if (*o.covered) ++cov_num;
    const bool zero_target = std::abs(*o.target) <= zero_tol;
    if (zero_target) {
      ++t1_den;
      if (*o.excludes_zero) ++t1_num;
    } else {
      ++pow_den;
      if (*o.excludes_zero) ++pow_num;
    }
  }
  return {ratio(cov_num, cov_den), ratio(pow_num, pow_den), ratio(t1_num, t1_den)};
}

ConditionalEstimands aggregate_conditional(const std::vector<VariableOutcome>& outcomes,
                                           int variable, int n_sim, double zero_tol) {
  long cov_num = 0, cov_den = 0;
  long pow_num = 0, pow_den = 0;
  long t1_num = 0, t1_den = 0;
  long selected = 0;
  for (const auto& o : outcomes) {
    if (o.variable != variable) continue;
    if (o.selected) ++selected;
    if (!o.interval_available()) continue;
    ++cov_den;
    if (*o.covered) ++cov_num;
    const bool zero_target = std::abs(*o.target) <= zero_tol;
    if (zero_target) {
      ++t1_den;
      if (*o.excludes_zero) ++t1_num;
    } else {
      ++pow_den;
      if (*o.excludes_zero) ++pow_num;
    }
  }
  ConditionalEstimands out;
  out.coverage = ratio(cov_num, cov_den);
  out.power = ratio(pow_num, pow_den);
  out.type1 = ratio(t1_num, t1_den);
  out.selection_freq = n_sim > 0 ? static_cast<double>(selected) / n_sim : 0.0;
  return out;
}

SelectionMetrics selection_metrics(const std::vector<VariableOutcome>& outcomes,
                                   const std::vector<int>& true_support, int p, int n_sim) {
  SelectionMetrics out;
  out.per_variable_freq.assign(p, 0.0);
  const std::set<int> support(true_support.begin(), true_support.end());

  std::map<int, std::set<int>> models;  // iteration -> selected set
  std::set<int> iterations;
  for (const auto& o : outcomes) {
    iterations.insert(o.iteration);
    if (o.selected) {
      models[o.iteration].insert(o.variable);
      out.per_variable_freq[o.variable] += 1.0;
    }
  }
  long exact = 0, any_fp = 0;
  for (int it : iterations) {
    const auto& sel = models[it];  // absent -> empty model
    if (sel == support) ++exact;
    bool fp = false;
    for (int j : sel)
      if (!support.count(j)) fp = true;
    if (fp) ++any_fp;
  }
  const double denom = n_sim > 0 ? n_sim : 1.0;
  out.true_model_freq = exact / denom;
  out.any_false_positive_freq = any_fp / denom;
  for (double& f : out.per_variable_freq) f /= denom;
  return out;
}

double validation_r2(const Eigen::VectorXd& y_valid, const Eigen::VectorXd& y_hat) {
  if (y_valid.size() != y_hat.size())
    throw std::invalid_argument("validation_r2: length mismatch");
  const double mean = y_valid.mean();
  const double tss = (y_valid.array() - mean).matrix().squaredNorm();
  if (!(tss > 0.0)) throw std::invalid_argument("validation_r2: constant validation outcome");
  const double rss = (y_valid - y_hat).squaredNorm();
  return 1.0 - rss / tss;
}

WidthSummary width_summary(const std::vector<VariableOutcome>& outcomes) {
  std::vector<double> widths;
  long total = 0, unstable = 0, infinite = 0;
  for (const auto& o : outcomes) {
    if (!o.interval_available() && !o.degenerate) continue;
    ++total;
    if (o.unstable()) ++unstable;
    if (o.flag_infinite) ++infinite;
    if (o.interval_available() && std::isfinite(o.width)) widths.push_back(o.width);
  }
  WidthSummary out;
  if (!widths.empty()) {
    std::sort(widths.begin(), widths.end());
    auto q = [&](double p) {
      const double h = (widths.size() - 1.0) * p;
      const auto lo = static_cast<std::size_t>(h);
      if (lo + 1 >= widths.size()) return widths.back();
      return widths[lo] + (widths[lo + 1] - widths[lo]) * (h - lo);
    };
    out.median_width = q(0.5);
    out.iqr_width = q(0.75) - q(0.25);
  }
  if (total > 0) {
    out.unstable_rate = static_cast<double>(unstable) / total;
    out.infinite_rate = static_cast<double>(infinite) / total;
  }
  return out;
}

}  // namespace selinf
