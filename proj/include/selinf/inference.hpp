#pragma once

#include <Eigen/Dense>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "selinf/lasso.hpp"
#include "selinf/rng.hpp"

namespace selinf {

// Raised when observed data contradicts a derived selection event or
// truncation bracket (solver/threshold mismatch).
class consistency_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct OlsFit {
  std::vector<int> model;        // ascending column indices
  Eigen::VectorXd coefficients;  // aligned with model
  Eigen::VectorXd std_errors;
  double residual_sd = 0.0;
  int df = 0;                    // n - |model| - 1
  double intercept = 0.0;
  Eigen::MatrixXd xtx_inv;       // (X_M' X_M)^{-1} on centered columns
  Eigen::VectorXd col_mean;      // centering shifts used for the fit
};

struct SelectiveInterval {
  int variable = -1;
  double estimate = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  double p_value = 1.0;
  bool flag_infinite = false;          // a search-grid boundary was hit
  bool flag_excludes_estimate = false;
  bool lower_at_bound = false;         // which side(s) hit the boundary
  bool upper_at_bound = false;
  bool degenerate = false;             // no usable interval (recorded unstable)
  std::string method;

  double effective_lower() const {
    return lower_at_bound ? -std::numeric_limits<double>::infinity() : lower;
  }
  double effective_upper() const {
    return upper_at_bound ? std::numeric_limits<double>::infinity() : upper;
  }
  bool covers(double value) const {
    return value >= effective_lower() && value <= effective_upper();
  }
  double width() const {
    return flag_infinite ? std::numeric_limits<double>::infinity() : upper - lower;
  }
};

// {fixed-lambda Lasso selects exactly this model with these signs} as the
// polyhedron {y : A y <= b}.
struct PolyhedralEvent {
  Eigen::MatrixXd a_matrix;
  Eigen::VectorXd b_vector;
  double lambda = 0.0;
  Eigen::VectorXd weights;
  std::vector<int> model;
  std::vector<int> signs;
};

struct PosiConstant {
  double k = 0.0;
  double alpha = 0.1;
  int model_space = 0;  // cap on |M|
  int n_mc = 0;
  double df = 0.0;      // degrees of freedom of the variance estimate (inf ok)
  double base_quantile = 0.0;  // t (or z) 1 - alpha/2 quantile: lower sandwich bound
  double scheffe = 0.0;        // sqrt(d F_{d,df;1-alpha}): upper sandwich bound
  int rank = 0;
  std::vector<double> sorted_max_stats;  // ascending; reference for p-values
};

// Least squares on the columns in `model` with an unpenalized intercept
// (columns and y are centered internally). Throws linalg_error naming the
// offending columns when X_M is rank deficient.
OlsFit ols_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const std::vector<int>& model);

std::vector<SelectiveInterval> wald_ci(const OlsFit& fit, double alpha);

// Selection procedure used on the selection half of a split: returns the
// active set.
using Selector =
    std::function<std::vector<int>(const Eigen::MatrixXd&, const Eigen::VectorXd&, Rng&)>;

// Random 50/50 row split (odd n: the extra row goes to the inference half);
// classical Wald intervals on the held-out half restricted to the selection.
std::pair<std::vector<int>, std::vector<SelectiveInterval>> split_inference(
    const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Selector& selector,
    double alpha, Rng& rng);

// Constraint construction for the fixed-lambda Lasso on the given design
// (already rescaled when penalty weights are in play). If y_check is passed
// the observed vector is verified to satisfy every row.
PolyhedralEvent polyhedral_constraints(const Eigen::MatrixXd& x, double lambda,
                                       const Eigen::VectorXd& weights,
                                       const std::vector<int>& model,
                                       const std::vector<int>& signs,
                                       const Eigen::VectorXd* y_check = nullptr);

// One-dimensional slice of the polyhedron along eta: bounds v- <= eta'y <= v+
// of the truncated Gaussian law of eta'y.
std::pair<double, double> truncation_interval(const Eigen::VectorXd& eta,
                                              const Eigen::VectorXd& y,
                                              const PolyhedralEvent& event);

struct SiOptions {
  double grid_radius = 1000.0;  // in units of sd(eta'y)
  int grid_steps = 1000;
};

// Equal-tailed interval for the mean of a Gaussian with standard deviation
// sd observed at `obs`, truncated to [vlo, vup]. The search grid spans
// +-grid_radius * sd; hitting an end sets the *_at_bound flags and pins the
// endpoint at the grid bound. Degenerate truncation windows mark the result
// degenerate instead of failing.
SelectiveInterval si_interval_for_contrast(double obs, double sd, double vlo, double vup,
                                           double alpha, const SiOptions& opts = {});

// Equal-tailed truncated-Gaussian confidence intervals for every active
// variable of the fit, treating sigma_hat as known. Weighted fits run on the
// rescaled design internally; endpoints map back via division by w_j.
std::vector<SelectiveInterval> selective_ci_exact(const Eigen::MatrixXd& x,
                                                  const Eigen::VectorXd& y,
                                                  const PenalizedFit& fit, double sigma_hat,
                                                  double alpha, const SiOptions& opts = {});

// Monte-Carlo max-|t| constant over all submodels up to max_size.
// df = inf treats sigma as known.
PosiConstant posi_constant(const Eigen::MatrixXd& x, double alpha, int max_size, double df,
                           int n_mc, Rng& rng);

std::vector<SelectiveInterval> posi_ci(const OlsFit& fit, const PosiConstant& k, double alpha);

}  // namespace selinf
