#include "selinf/lasso.hpp"

#include <cmath>

namespace selinf {

namespace {

double soft_threshold(double z, double g) {
  if (z > g) return z - g;
  if (z < -g) return z + g;
  return 0.0;
}

}  // namespace

PenalizedFit fit_lasso(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                       double lambda, const Eigen::VectorXd& weights,
                       const LassoOptions& opts, const Eigen::VectorXd* warm_start) {
  const int p = static_cast<int>(x.cols());
  if (weights.size() != p) throw std::invalid_argument("fit_lasso: weight length mismatch");
  if (lambda < 0.0) throw std::invalid_argument("fit_lasso: negative lambda");
  for (int j = 0; j < p; ++j) {
    if (!(weights[j] > 0.0) || !std::isfinite(weights[j]))
      throw std::invalid_argument("fit_lasso: weights must be positive and finite");
  }

  PenalizedFit fit;
  fit.lambda = lambda;
  fit.weights = weights;
  fit.intercept = y.mean();
  const Eigen::VectorXd yc = y.array() - fit.intercept;

  Eigen::VectorXd col_sq(p);
  for (int j = 0; j < p; ++j) col_sq[j] = x.col(j).squaredNorm();

  Eigen::VectorXd beta = (warm_start && warm_start->size() == p)
                             ? *warm_start
                             : Eigen::VectorXd::Zero(p);
  Eigen::VectorXd r = yc - x * beta;

  int sweep = 0;
  bool converged = false;
  for (; sweep < opts.max_sweeps; ++sweep) {
    double max_change = 0.0;
    for (int j = 0; j < p; ++j) {
      if (col_sq[j] <= 0.0) continue;  // constant column stays at zero
      const double old = beta[j];
      const double z = x.col(j).dot(r) + col_sq[j] * old;
      const double next = soft_threshold(z, lambda * weights[j]) / col_sq[j];
      if (next != old) {
        r += x.col(j) * (old - next);
        beta[j] = next;
        max_change = std::max(max_change, std::abs(next - old));
      }
    }
    if (max_change <= opts.coord_tol) {
      converged = true;
      ++sweep;
      break;
    }
  }

  for (int j = 0; j < p; ++j) {
    if (std::abs(beta[j]) <= opts.zero_threshold) beta[j] = 0.0;
  }
  r = yc - x * beta;

  fit.coefficients = beta;
  fit.n_iter = sweep;
  fit.converged = converged;
  for (int j = 0; j < p; ++j) {
    if (beta[j] != 0.0) {
      fit.active_set.push_back(j);
      fit.signs.push_back(beta[j] > 0.0 ? 1 : -1);
    }
  }

  double kkt = 0.0;
  for (int j = 0; j < p; ++j) {
    const double grad = x.col(j).dot(r);
    if (beta[j] != 0.0) {
      kkt = std::max(kkt, std::abs(grad - lambda * weights[j] * (beta[j] > 0.0 ? 1.0 : -1.0)));
    } else {
      kkt = std::max(kkt, std::max(0.0, std::abs(grad) - lambda * weights[j]));
    }
  }
  fit.kkt_residual = kkt;
  return fit;
}

PenalizedFit fit_lasso(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                       double lambda, const LassoOptions& opts) {
  return fit_lasso(x, y, lambda, Eigen::VectorXd::Ones(x.cols()), opts);
}

Eigen::VectorXd adaptive_weights(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  const int n = static_cast<int>(x.rows());
  const int p = static_cast<int>(x.cols());
  if (n <= p) throw linalg_error("adaptive_weights: requires n > p");
  const Eigen::VectorXd yc = y.array() - y.mean();
  Eigen::MatrixXd xc = x;
  for (int j = 0; j < p; ++j) xc.col(j).array() -= x.col(j).mean();

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(xc);
  qr.setThreshold(1e-10);
  if (qr.rank() < p) {
    std::string msg = "adaptive_weights: rank-deficient design, dependent columns:";
    const auto perm = qr.colsPermutation().indices();
    for (int k = qr.rank(); k < p; ++k) msg += " " + std::to_string(perm[k]);
    throw linalg_error(msg);
  }
  const Eigen::VectorXd beta = qr.solve(yc);
  Eigen::VectorXd w(p);
  for (int j = 0; j < p; ++j) {
    const double a = std::abs(beta[j]);
    w[j] = (a > 1.0 / kMaxAdaptiveWeight) ? 1.0 / a : kMaxAdaptiveWeight;
  }
  return w;
}

Eigen::MatrixXd rescale_for_weights(const Eigen::MatrixXd& x, const Eigen::VectorXd& weights) {
  Eigen::MatrixXd out = x;
  for (int j = 0; j < x.cols(); ++j) out.col(j) /= weights[j];
  return out;
}

std::vector<double> lambda_path(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                const Eigen::VectorXd& weights, int n_lambda, double eps) {
  if (n_lambda < 2) throw std::invalid_argument("lambda_path: n_lambda must be >= 2");
  const Eigen::VectorXd yc = y.array() - y.mean();
  double lambda_max = 0.0;
  for (int j = 0; j < x.cols(); ++j) {
    lambda_max = std::max(lambda_max, std::abs(x.col(j).dot(yc)) / weights[j]);
  }
  if (lambda_max <= 0.0) lambda_max = 1.0;  // constant outcome: arbitrary scale
  std::vector<double> grid(n_lambda);
  const double log_max = std::log(lambda_max);
  const double log_min = std::log(eps * lambda_max);
  for (int k = 0; k < n_lambda; ++k) {
    grid[k] = std::exp(log_max + (log_min - log_max) * k / (n_lambda - 1));
  }
  grid.front() = lambda_max;
  return grid;
}

}  // namespace selinf
