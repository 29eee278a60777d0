#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "selinf/datagen.hpp"
#include "selinf/estimands.hpp"
#include "selinf/lasso.hpp"
#include "selinf/stats.hpp"

using namespace selinf;

namespace {

VariableOutcome outcome(int iter, int var, bool selected, double target, bool covered,
                        bool excludes_zero, double width = 1.0) {
  VariableOutcome o;
  o.iteration = iter;
  o.method = "m";
  o.variable = var;
  o.selected = selected;
  if (selected) {
    o.target = target;
    o.covered = covered;
    o.excludes_zero = excludes_zero;
    o.width = width;
    o.estimate = target;
    o.lower = target - width / 2;
    o.upper = target + width / 2;
  }
  return o;
}

}  // namespace

TEST_CASE("submodel targets restrict cleanly under independence") {
  const Eigen::MatrixXd sigma = Eigen::MatrixXd::Identity(4, 4);
  Eigen::VectorXd beta(4);
  beta << 1, 1, 0, 0;
  const auto t = submodel_target(sigma, beta, {0});
  REQUIRE(t.targets.size() == 1);
  CHECK(t.targets[0] == doctest::Approx(1.0));
}

TEST_CASE("correlated designs shift the single-variable target to rho") {
  const auto design = build_toy_correlation("correlated");
  Eigen::VectorXd beta(4);
  beta << 1, 0, 0, 0;
  const auto t = submodel_target(design.sigma, beta, {1});
  CHECK(t.targets[0] == doctest::Approx(0.8).epsilon(1e-12));
}

TEST_CASE("targets under the full model reproduce beta") {
  const auto design = build_toy_correlation("blocks_2_2");
  Eigen::VectorXd beta(4);
  beta << 1, 0, 0.1, 0;
  const auto t = submodel_target(design.sigma, beta, {0, 1, 2, 3});
  for (int j = 0; j < 4; ++j) CHECK(t.targets[j] == doctest::Approx(beta[j]).epsilon(1e-10));
}

TEST_CASE("block designs give exactly-zero targets across blocks") {
  const auto design = build_toy_correlation("blocks_2_2");
  Eigen::VectorXd beta(4);
  beta << 1, 0, 0, 0;
  // variable 3 lives in the other block: its submodel target is exactly 0
  const auto t = submodel_target(design.sigma, beta, {2, 3});
  CHECK(std::abs(t.targets[0]) <= 1e-12);
  CHECK(std::abs(t.targets[1]) <= 1e-12);
}

TEST_CASE("submodel targets match the large-sample OLS slope") {
  const auto design = build_toy_correlation("correlated");
  Eigen::VectorXd beta(4);
  beta << 1, 0, 0, 0;
  const auto t = submodel_target(design.sigma, beta, {1, 2});

  const long n = 200000;
  Rng rng(99);
  Eigen::LLT<Eigen::MatrixXd> llt(design.sigma);
  const Eigen::MatrixXd chol_l = llt.matrixL();
  Eigen::MatrixXd x(n, 4);
  Eigen::VectorXd z(4);
  for (long i = 0; i < n; ++i) {
    for (int k = 0; k < 4; ++k) z[k] = rng.normal();
    x.row(i) = (chol_l * z).transpose();
  }
  const Eigen::VectorXd y = x * beta;
  Eigen::MatrixXd xm(n, 2);
  xm.col(0) = x.col(1);
  xm.col(1) = x.col(2);
  const Eigen::VectorXd ols = (xm.transpose() * xm).ldlt().solve(xm.transpose() * y);
  CHECK(std::abs(t.targets[0] - ols[0]) < 0.01);
  CHECK(std::abs(t.targets[1] - ols[1]) < 0.01);
}

TEST_CASE("singular submodel covariance raises") {
  Eigen::MatrixXd sigma = Eigen::MatrixXd::Constant(3, 3, 1.0);
  Eigen::VectorXd beta = Eigen::VectorXd::Ones(3);
  CHECK_THROWS_AS(submodel_target(sigma, beta, {0, 1}), linalg_error);
}

TEST_CASE("general aggregates handle full coverage and empty denominators") {
  std::vector<VariableOutcome> rows;
  for (int i = 0; i < 5; ++i) rows.push_back(outcome(i, 0, true, 1.0, true, true));
  const auto g = aggregate_general(rows);
  CHECK(*g.coverage == 1.0);
  CHECK(*g.power == 1.0);
  CHECK(!g.type1.has_value());  // nobody has a zero target
}

TEST_CASE("type-one error counts only zero-target intervals") {
  std::vector<VariableOutcome> rows;
  rows.push_back(outcome(0, 0, true, 0.0, true, true));    // false positive
  rows.push_back(outcome(1, 0, true, 0.0, true, false));
  rows.push_back(outcome(2, 0, true, 2.0, true, true));    // true positive
  const auto g = aggregate_general(rows);
  CHECK(*g.type1 == doctest::Approx(0.5));
  CHECK(*g.power == doctest::Approx(1.0));
}

TEST_CASE("general coverage is the frequency-weighted mix of conditionals") {
  Rng rng(7);
  std::vector<VariableOutcome> rows;
  const int n_sim = 200;
  for (int i = 0; i < n_sim; ++i) {
    for (int j = 0; j < 3; ++j) {
      const bool selected = rng.uniform() < 0.3 + 0.2 * j;
      if (!selected) {
        rows.push_back(outcome(i, j, false, 0, false, false));
        continue;
      }
      rows.push_back(outcome(i, j, true, j == 0 ? 1.0 : 0.0, rng.uniform() < 0.9,
                             rng.uniform() < 0.5));
    }
  }
  const auto g = aggregate_general(rows);
  double mix = 0.0, weight_sum = 0.0;
  for (int j = 0; j < 3; ++j) {
    const auto c = aggregate_conditional(rows, j, n_sim);
    if (!c.coverage) continue;
    // weights: selection frequencies normalized over variables
    mix += *c.coverage * c.selection_freq;
    weight_sum += c.selection_freq;
  }
  CHECK(*g.coverage == doctest::Approx(mix / weight_sum).epsilon(1e-12));
}

TEST_CASE("conditional aggregates of never-selected variables are undefined") {
  std::vector<VariableOutcome> rows = {outcome(0, 0, false, 0, false, false)};
  const auto c = aggregate_conditional(rows, 0, 10);
  CHECK(!c.coverage.has_value());
  CHECK(c.selection_freq == 0.0);
}

TEST_CASE("selection metrics count exact matches and false positives") {
  std::vector<VariableOutcome> rows;
  // iteration 0 selects exactly {0}; iteration 1 selects {0, 1}
  rows.push_back(outcome(0, 0, true, 1, true, true));
  rows.push_back(outcome(0, 1, false, 0, false, false));
  rows.push_back(outcome(1, 0, true, 1, true, true));
  rows.push_back(outcome(1, 1, true, 0, true, false));
  const auto m = selection_metrics(rows, {0}, 2, 2);
  CHECK(m.true_model_freq == doctest::Approx(0.5));
  CHECK(m.any_false_positive_freq == doctest::Approx(0.5));
  CHECK(m.per_variable_freq[0] == doctest::Approx(1.0));
  CHECK(m.per_variable_freq[1] == doctest::Approx(0.5));
}

TEST_CASE("empty true support counts empty models as correct") {
  std::vector<VariableOutcome> rows;
  rows.push_back(outcome(0, 0, false, 0, false, false));
  rows.push_back(outcome(0, 1, false, 0, false, false));
  const auto m = selection_metrics(rows, {}, 2, 1);
  CHECK(m.true_model_freq == doctest::Approx(1.0));
  CHECK(m.any_false_positive_freq == doctest::Approx(0.0));
}

TEST_CASE("validation R2 pins its endpoints") {
  Eigen::VectorXd y(4);
  y << 1, 2, 3, 4;
  CHECK(validation_r2(y, y) == doctest::Approx(1.0));
  CHECK(validation_r2(y, Eigen::VectorXd::Constant(4, y.mean())) == doctest::Approx(0.0));
  CHECK_THROWS(validation_r2(Eigen::VectorXd::Constant(4, 1.0), y));
}

TEST_CASE("width summary separates finite widths from unstable flags") {
  std::vector<VariableOutcome> rows;
  for (int i = 0; i < 4; ++i) rows.push_back(outcome(i, 0, true, 1.0, true, true, 2.0));
  auto inf_row = outcome(4, 0, true, 1.0, true, true, kInf);
  inf_row.flag_infinite = true;
  rows.push_back(inf_row);
  auto excl = outcome(5, 0, true, 1.0, true, true, 3.0);
  excl.flag_excludes_estimate = true;
  rows.push_back(excl);

  const auto w = width_summary(rows);
  CHECK(*w.median_width == doctest::Approx(2.0));
  CHECK(w.infinite_rate == doctest::Approx(1.0 / 6.0));
  CHECK(w.unstable_rate == doctest::Approx(2.0 / 6.0));
}
