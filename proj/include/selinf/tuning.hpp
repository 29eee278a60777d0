#pragma once

#include <Eigen/Dense>
#include <vector>

#include "selinf/lasso.hpp"
#include "selinf/rng.hpp"

namespace selinf {

enum class TuningMethod { kCV, kNeg };

// Which point of the CV curve a selection front-end uses.
enum class CvRule { kMin, kOneSe };

struct CvPoint {
  double lambda;
  double mean_error;  // mean squared prediction error over folds
  double fold_se;     // standard error across fold means
};

struct TuningResult {
  TuningMethod method = TuningMethod::kCV;
  double lambda = 0.0;
  std::vector<CvPoint> cv_curve;  // empty for Neg
};

// K-fold cross-validation over the warm-started lambda path computed on the
// full tuning data. Folds come from one random permutation split into k
// near-equal blocks; the winner minimizes the mean held-out squared error,
// ties broken toward the larger lambda.
TuningResult cv_lambda(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                       const Eigen::VectorXd& weights, int k, Rng& rng,
                       int n_lambda = 100);

// Largest lambda whose mean CV error is within one fold standard error of
// the curve minimum (the common sparser alternative to the minimizer).
double one_se_lambda(const TuningResult& cv);

// Fixed penalty 2 E ||X' eps||_inf with eps ~ N(0, sigma_hat^2 I_n),
// approximated by n_mc Monte-Carlo draws. Does not look at y.
TuningResult negahban_lambda(const Eigen::MatrixXd& x, double sigma_hat, int n_mc, Rng& rng);

}  // namespace selinf
