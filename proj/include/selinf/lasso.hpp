#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>
#include <vector>

namespace selinf {

class linalg_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LassoOptions {
  double coord_tol = 1e-9;    // max coordinate change per sweep
  int max_sweeps = 100000;
  double zero_threshold = 1e-7;  // coefficients at or below this are exact zeros
};

// Solution of min_b 1/2 ||y_c - X b||^2 + lambda * sum_j w_j |b_j|, with y
// centered internally (unpenalized intercept).
struct PenalizedFit {
  double lambda = 0.0;
  Eigen::VectorXd weights;
  Eigen::VectorXd coefficients;
  double intercept = 0.0;
  std::vector<int> active_set;  // ascending indices with nonzero coefficient
  std::vector<int> signs;       // +-1, aligned with active_set
  int n_iter = 0;
  bool converged = false;
  double kkt_residual = 0.0;    // max stationarity violation at the solution
};

PenalizedFit fit_lasso(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                       double lambda, const Eigen::VectorXd& weights,
                       const LassoOptions& opts = {},
                       const Eigen::VectorXd* warm_start = nullptr);

PenalizedFit fit_lasso(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                       double lambda, const LassoOptions& opts = {});

// Penalty weights 1/|b_ols| from the full-model least squares fit, capped at
// kMaxAdaptiveWeight where a coefficient is numerically zero.
inline constexpr double kMaxAdaptiveWeight = 1e6;
Eigen::VectorXd adaptive_weights(const Eigen::MatrixXd& x, const Eigen::VectorXd& y);

// Column j scaled by 1/w_j. A weighted fit on x equals a unit-weight fit on
// the rescaled matrix with coefficients mapped back as b_j = b_tilde_j / w_j.
Eigen::MatrixXd rescale_for_weights(const Eigen::MatrixXd& x, const Eigen::VectorXd& weights);

// Log-spaced grid from lambda_max = max_j |x_j' y_c| / w_j down to
// eps * lambda_max; the first value yields the empty model.
std::vector<double> lambda_path(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                const Eigen::VectorXd& weights, int n_lambda,
                                double eps = 1e-3);

}  // namespace selinf
