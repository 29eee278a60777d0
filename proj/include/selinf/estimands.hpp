#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

namespace selinf {

struct SubmodelTarget {
  std::vector<int> model;
  Eigen::VectorXd targets;  // beta_{j,M}, aligned with model
};

// beta_M = Sigma_M^{-1} Sigma_{M,F} beta (population projection coefficients).
SubmodelTarget submodel_target(const Eigen::MatrixXd& sigma_true,
                               const Eigen::VectorXd& beta_true, const std::vector<int>& model);

// One row of the per-variable simulation record.
struct VariableOutcome {
  int iteration = 0;
  std::string method;
  int variable = 0;
  bool selected = false;
  std::optional<double> estimate;
  std::optional<double> lower;
  std::optional<double> upper;
  std::optional<double> p_value;
  std::optional<double> target;
  std::optional<bool> covered;        // present iff selected and interval available
  std::optional<bool> excludes_zero;  // same availability
  double width = 0.0;                 // +inf for boundary-hitting intervals
  bool flag_infinite = false;
  bool flag_excludes_estimate = false;
  bool degenerate = false;
  std::string failure;  // empty, or a failure-taxonomy code

  bool interval_available() const { return covered.has_value(); }
  bool unstable() const { return flag_infinite || flag_excludes_estimate || degenerate; }
};

struct GeneralEstimands {
  std::optional<double> coverage;
  std::optional<double> power;  // over intervals with nonzero target
  std::optional<double> type1;  // over intervals with zero target
};

struct ConditionalEstimands {
  std::optional<double> coverage;
  std::optional<double> power;
  std::optional<double> type1;
  double selection_freq = 0.0;
};

// Targets classified as zero when |target| <= zero_tol (exact for the toy
// designs; widen for Monte-Carlo population matrices).
GeneralEstimands aggregate_general(const std::vector<VariableOutcome>& outcomes,
                                   double zero_tol = 1e-12);

ConditionalEstimands aggregate_conditional(const std::vector<VariableOutcome>& outcomes,
                                           int variable, int n_sim, double zero_tol = 1e-12);

struct SelectionMetrics {
  double true_model_freq = 0.0;
  double any_false_positive_freq = 0.0;
  std::vector<double> per_variable_freq;
};

SelectionMetrics selection_metrics(const std::vector<VariableOutcome>& outcomes,
                                   const std::vector<int>& true_support, int p, int n_sim);

double validation_r2(const Eigen::VectorXd& y_valid, const Eigen::VectorXd& y_hat);

struct WidthSummary {
  std::optional<double> median_width;  // over finite-width intervals
  std::optional<double> iqr_width;
  double unstable_rate = 0.0;  // over all available-or-degenerate intervals
  double infinite_rate = 0.0;
};

WidthSummary width_summary(const std::vector<VariableOutcome>& outcomes);

}  // namespace selinf
