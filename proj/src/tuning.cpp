#include "selinf/tuning.hpp"

#include <cmath>

#include "selinf/datagen.hpp"

namespace selinf {

TuningResult cv_lambda(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                       const Eigen::VectorXd& weights, int k, Rng& rng, int n_lambda) {
  const int n = static_cast<int>(x.rows());
  if (k < 2) throw config_error("cv_lambda: k must be >= 2");
  if (n < 2 * k) throw config_error("cv_lambda: need n >= 2k observations");

  const std::vector<double> grid = lambda_path(x, y, weights, n_lambda);
  const std::vector<int> perm = rng.permutation(n);

  // fold f gets rows perm[f * n / k .. (f+1) * n / k).
  Eigen::MatrixXd fold_err(k, n_lambda);
  for (int f = 0; f < k; ++f) {
    const int lo = static_cast<int>(static_cast<long>(f) * n / k);
    const int hi = static_cast<int>(static_cast<long>(f + 1) * n / k);
    const int n_hold = hi - lo;
    const int n_train = n - n_hold;
    Eigen::MatrixXd x_train(n_train, x.cols()), x_hold(n_hold, x.cols());
    Eigen::VectorXd y_train(n_train), y_hold(n_hold);
    int it = 0, ih = 0;
    for (int r = 0; r < n; ++r) {
      const bool held = r >= lo && r < hi;
      const int row = perm[r];
      if (held) {
        x_hold.row(ih) = x.row(row);
        y_hold[ih++] = y[row];
      } else {
        x_train.row(it) = x.row(row);
        y_train[it++] = y[row];
      }
    }
    Eigen::VectorXd warm = Eigen::VectorXd::Zero(x.cols());
    for (int g = 0; g < n_lambda; ++g) {
      const PenalizedFit fit = fit_lasso(x_train, y_train, grid[g], weights, {}, &warm);
      warm = fit.coefficients;
      const Eigen::VectorXd pred =
          (x_hold * fit.coefficients).array() + fit.intercept;
      fold_err(f, g) = (y_hold - pred).squaredNorm() / n_hold;
    }
  }

  TuningResult res;
  res.method = TuningMethod::kCV;
  res.cv_curve.resize(n_lambda);
  int best = 0;
  for (int g = 0; g < n_lambda; ++g) {
    const double mean = fold_err.col(g).mean();
    double ss = 0.0;
    for (int f = 0; f < k; ++f) ss += (fold_err(f, g) - mean) * (fold_err(f, g) - mean);
    res.cv_curve[g] = {grid[g], mean, std::sqrt(ss / (k - 1.0) / k)};
    // grid is decreasing, so strict improvement keeps the larger lambda on ties
    if (mean < res.cv_curve[best].mean_error) best = g;
  }
  res.lambda = grid[best];
  return res;
}

double one_se_lambda(const TuningResult& cv) {
  if (cv.cv_curve.empty()) throw config_error("one_se_lambda: needs a CV curve");
  std::size_t best = 0;
  for (std::size_t g = 1; g < cv.cv_curve.size(); ++g)
    if (cv.cv_curve[g].mean_error < cv.cv_curve[best].mean_error) best = g;
  const double bar = cv.cv_curve[best].mean_error + cv.cv_curve[best].fold_se;
  for (std::size_t g = 0; g <= best; ++g)
    if (cv.cv_curve[g].mean_error <= bar) return cv.cv_curve[g].lambda;
  return cv.cv_curve[best].lambda;
}

TuningResult negahban_lambda(const Eigen::MatrixXd& x, double sigma_hat, int n_mc, Rng& rng) {
  if (!(sigma_hat > 0.0)) throw config_error("negahban_lambda: sigma_hat must be positive");
  if (n_mc < 100) throw config_error("negahban_lambda: n_mc must be >= 100");
  const int n = static_cast<int>(x.rows());
  Eigen::VectorXd z(n);
  double acc = 0.0;
  for (int m = 0; m < n_mc; ++m) {
    for (int i = 0; i < n; ++i) z[i] = rng.normal();
    // eps = sigma_hat * z, so the max correlates linearly with sigma_hat
    acc += (x.transpose() * z).cwiseAbs().maxCoeff();
  }
  TuningResult res;
  res.method = TuningMethod::kNeg;
  res.lambda = 2.0 * sigma_hat * acc / n_mc;
  return res;
}

}  // namespace selinf
