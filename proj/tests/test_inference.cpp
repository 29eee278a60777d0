#include <doctest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "selinf/inference.hpp"
#include "selinf/stats.hpp"
#include "selinf/datagen.hpp"

using namespace selinf;

namespace {

Eigen::MatrixXd random_matrix(int n, int p, Rng& rng) {
  Eigen::MatrixXd x(n, p);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < p; ++j) x(i, j) = rng.normal();
  return x;
}

Eigen::VectorXd noise(int n, Rng& rng) {
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = rng.normal();
  return v;
}

Eigen::MatrixXd orthonormal_columns(int n, int p, Rng& rng) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(random_matrix(n, p, rng));
  return Eigen::MatrixXd(qr.householderQ()) * Eigen::MatrixXd::Identity(n, p);
}

Eigen::MatrixXd standardize(Eigen::MatrixXd x) {
  const int n = static_cast<int>(x.rows());
  for (int j = 0; j < x.cols(); ++j) {
    x.col(j).array() -= x.col(j).mean();
    x.col(j) /= std::sqrt(x.col(j).squaredNorm() / n);
  }
  return x;
}

}  // namespace

TEST_CASE("empty model gives an intercept-only fit") {
  Rng rng(41);
  const Eigen::MatrixXd x = random_matrix(30, 3, rng);
  const Eigen::VectorXd y = noise(30, rng);
  const auto fit = ols_fit(x, y, {});
  CHECK(fit.model.empty());
  CHECK(fit.df == 29);
  CHECK(fit.intercept == doctest::Approx(y.mean()));
}

TEST_CASE("orthonormal columns give unit Gram OLS") {
  Rng rng(42);
  const Eigen::MatrixXd x = orthonormal_columns(40, 3, rng);
  const Eigen::VectorXd y = x.col(0) * 2.0 + 0.3 * noise(40, rng);
  const auto fit = ols_fit(x, y, {0, 1, 2});
  const Eigen::VectorXd yc = y.array() - y.mean();
  for (int k = 0; k < 3; ++k) {
    // columns are orthonormal but not centered; centering changes the Gram
    // matrix only slightly, so estimates track x_j' y_c closely
    CHECK(fit.coefficients[k] == doctest::Approx(x.col(k).dot(yc)).epsilon(0.15));
  }
  // exact identity on a centered orthonormal system
  Eigen::MatrixXd xc = x;
  for (int j = 0; j < 3; ++j) xc.col(j).array() -= x.col(j).mean();
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(xc);
  const Eigen::MatrixXd q = Eigen::MatrixXd(qr.householderQ()).leftCols(3);
  const auto qfit = ols_fit(q, y, {0, 1, 2});
  for (int k = 0; k < 3; ++k) {
    CHECK(qfit.coefficients[k] == doctest::Approx(q.col(k).dot(yc)).epsilon(1e-10));
    CHECK(qfit.std_errors[k] == doctest::Approx(qfit.residual_sd).epsilon(1e-10));
  }
}

TEST_CASE("OLS estimates stay within five standard errors of truth") {
  Rng rng(43);
  int bad = 0;
  for (int rep = 0; rep < 100; ++rep) {
    const Eigen::MatrixXd x = standardize(random_matrix(40, 4, rng));
    const Eigen::VectorXd y = x.col(0) + 0.8 * noise(40, rng);
    const auto fit = ols_fit(x, y, {0, 1, 2, 3});
    for (int k = 0; k < 4; ++k) {
      const double truth = k == 0 ? 1.0 : 0.0;
      if (std::abs(fit.coefficients[k] - truth) > 5.0 * fit.std_errors[k]) ++bad;
    }
  }
  CHECK(bad <= 1);
}

TEST_CASE("rank-deficient OLS names an offending column") {
  Rng rng(44);
  Eigen::MatrixXd x(30, 3);
  x.col(0) = noise(30, rng);
  x.col(1) = noise(30, rng);
  x.col(2) = x.col(0) + x.col(1);
  try {
    ols_fit(x, noise(30, rng), {0, 1, 2});
    FAIL("expected linalg_error");
  } catch (const linalg_error& e) {
    CHECK(std::string(e.what()).find("dependent columns") != std::string::npos);
  }
}

TEST_CASE("Wald intervals hit the large-sample half width") {
  OlsFit fit;
  fit.model = {0};
  fit.coefficients = Eigen::VectorXd::Constant(1, 1.0);
  fit.std_errors = Eigen::VectorXd::Constant(1, 0.5);
  fit.df = 100000000;
  const auto cis = wald_ci(fit, 0.10);
  REQUIRE(cis.size() == 1);
  CHECK(cis[0].upper - cis[0].lower == doctest::Approx(2 * 0.8224).epsilon(1e-3));

  fit.coefficients[0] = 0.0;
  const auto zero = wald_ci(fit, 0.10)[0];
  CHECK(zero.lower == doctest::Approx(-zero.upper).epsilon(1e-12));
  CHECK(zero.p_value == doctest::Approx(1.0));
}

TEST_CASE("split keeps the extra row on the inference half and honors empty selections") {
  Rng rng(45);
  const Eigen::MatrixXd x = standardize(random_matrix(41, 4, rng));
  const Eigen::VectorXd y = x.col(0) + noise(41, rng);

  int seen_rows = -1;
  Selector probe = [&](const Eigen::MatrixXd& xs, const Eigen::VectorXd&, Rng&) {
    seen_rows = static_cast<int>(xs.rows());
    return std::vector<int>{};
  };
  const auto [model, cis] = split_inference(x, y, probe, 0.10, rng);
  CHECK(seen_rows == 20);  // selection half gets floor(41/2)
  CHECK(model.empty());
  CHECK(cis.empty());

  Selector pick_first = [](const Eigen::MatrixXd&, const Eigen::VectorXd&, Rng&) {
    return std::vector<int>{0};
  };
  const auto [m2, c2] = split_inference(x, y, pick_first, 0.10, rng);
  REQUIRE(m2 == std::vector<int>{0});
  REQUIRE(c2.size() == 1);
  CHECK(c2[0].lower < c2[0].upper);
}

TEST_CASE("split conditional coverage is near nominal") {
  Rng rng(46);
  int covered = 0, total = 0;
  Selector sel = [](const Eigen::MatrixXd& xs, const Eigen::VectorXd& ys, Rng&) {
    // plain marginal screen at a fixed threshold
    std::vector<int> m;
    const Eigen::VectorXd yc = ys.array() - ys.mean();
    for (int j = 0; j < xs.cols(); ++j)
      if (std::abs(xs.col(j).dot(yc)) > 0.5 * xs.rows()) m.push_back(j);
    return m;
  };
  for (int rep = 0; rep < 400; ++rep) {
    const Eigen::MatrixXd x = standardize(random_matrix(60, 4, rng));
    const Eigen::VectorXd y = x.col(0) + noise(60, rng);
    const auto [model, cis] = split_inference(x, y, sel, 0.10, rng);
    for (const auto& ci : cis) {
      // identity population covariance: the target of variable j in any model
      // containing variable 0 is 1 for j = 0 and 0 otherwise
      const bool has_signal = std::find(model.begin(), model.end(), 0) != model.end();
      if (!has_signal) continue;
      const double target = ci.variable == 0 ? 1.0 : 0.0;
      ++total;
      if (ci.lower <= target && target <= ci.upper) ++covered;
    }
  }
  REQUIRE(total > 300);
  CHECK(static_cast<double>(covered) / total > 0.85);
}

TEST_CASE("single-variable polyhedron matches the scalar KKT event") {
  Rng rng(47);
  Eigen::VectorXd xcol = noise(50, rng);
  xcol.array() -= xcol.mean();
  xcol /= xcol.norm();  // unit column
  Eigen::MatrixXd x = xcol;
  Eigen::VectorXd y = 3.0 * xcol + 0.2 * noise(50, rng);
  const Eigen::VectorXd yc = y.array() - y.mean();

  const double lambda = 0.5;
  const auto fit = fit_lasso(x, y, lambda);
  REQUIRE(fit.active_set == std::vector<int>{0});
  REQUIRE(fit.signs == std::vector<int>{1});

  const auto ev = polyhedral_constraints(x, lambda, Eigen::VectorXd::Ones(1), fit.active_set,
                                         fit.signs, &yc);
  REQUIRE(ev.a_matrix.rows() == 1);  // |M| active rows, 2(p - |M|) = 0 inactive
  CHECK((ev.a_matrix.row(0).transpose() + xcol).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(ev.b_vector[0] == doctest::Approx(-lambda));

  const auto [vlo, vup] = truncation_interval(xcol, yc, ev);
  CHECK(vlo == doctest::Approx(lambda));  // lambda / ||x||^2 with unit norm
  CHECK(vup == kInf);
}

TEST_CASE("constraint counts follow the construction") {
  Rng rng(48);
  const Eigen::MatrixXd x = standardize(random_matrix(40, 4, rng));
  const Eigen::VectorXd y = x.col(0) + 2.0 * x.col(2) + 0.5 * noise(40, rng);
  const auto fit = fit_lasso(x, y, 8.0);
  REQUIRE(!fit.active_set.empty());
  const Eigen::VectorXd yc = y.array() - y.mean();
  const auto ev = polyhedral_constraints(x, fit.lambda, fit.weights, fit.active_set, fit.signs,
                                         &yc);
  const auto m = static_cast<long>(fit.active_set.size());
  CHECK(ev.a_matrix.rows() == 2 * (4 - m) + m);
}

TEST_CASE("polyhedron membership agrees with refitting on perturbed outcomes") {
  Rng rng(49);
  const Eigen::MatrixXd x = standardize(random_matrix(40, 4, rng));
  const Eigen::VectorXd y = x.col(0) + 0.7 * noise(40, rng);
  const double lambda = 10.0;
  const auto fit = fit_lasso(x, y, lambda);
  REQUIRE(!fit.active_set.empty());
  const Eigen::VectorXd yc = y.array() - y.mean();
  const auto ev =
      polyhedral_constraints(x, lambda, fit.weights, fit.active_set, fit.signs, &yc);

  int checked = 0, agree = 0;
  for (int rep = 0; rep < 2000; ++rep) {
    const Eigen::VectorXd yp = y + 0.4 * noise(40, rng);
    const Eigen::VectorXd ypc = yp.array() - yp.mean();
    const Eigen::VectorXd slack = ev.b_vector - ev.a_matrix * ypc;
    if (slack.minCoeff() < 1e-4 && slack.minCoeff() > -1e-4) continue;  // boundary band
    const bool inside = slack.minCoeff() >= 0.0;
    const auto refit = fit_lasso(x, yp, lambda);
    const bool same = refit.active_set == fit.active_set && refit.signs == fit.signs;
    ++checked;
    if (same == inside) ++agree;
  }
  REQUIRE(checked > 1500);
  CHECK(static_cast<double>(agree) / checked >= 0.998);
}

TEST_CASE("empty constraint set leaves the statistic untruncated") {
  PolyhedralEvent ev;
  ev.a_matrix.resize(0, 5);
  ev.b_vector.resize(0);
  Rng rng(50);
  Eigen::VectorXd eta = noise(5, rng);
  Eigen::VectorXd y = noise(5, rng);
  const auto [vlo, vup] = truncation_interval(eta, y, ev);
  CHECK(vlo == -kInf);
  CHECK(vup == kInf);
}

TEST_CASE("untruncated selective interval reduces to the known-sigma Wald interval") {
  const double obs = 1.3, sd = 0.4, alpha = 0.10;
  const auto ci = si_interval_for_contrast(obs, sd, -kInf, kInf, alpha);
  const double z = norm_quantile(1.0 - alpha / 2.0);
  CHECK(ci.lower == doctest::Approx(obs - z * sd).epsilon(1e-6));
  CHECK(ci.upper == doctest::Approx(obs + z * sd).epsilon(1e-6));
  CHECK(!ci.flag_infinite);
  CHECK(!ci.flag_excludes_estimate);
}

TEST_CASE("selective intervals respect the truncation geometry") {
  // statistic just above a left truncation: interval shifts far left of a
  // Wald interval and may exclude the estimate
  const auto ci = si_interval_for_contrast(1.05, 1.0, 1.0, kInf, 0.10);
  CHECK(ci.upper < 1.05 + 1.6449);
  const auto wide = si_interval_for_contrast(5.0, 1.0, 1.0, kInf, 0.10);
  CHECK(wide.lower == doctest::Approx(5.0 - 1.6449).epsilon(0.05));
}

TEST_CASE("degenerate truncation windows are flagged, not fatal") {
  const auto ci = si_interval_for_contrast(1.0, 1.0, 1.0 - 1e-14, 1.0 + 1e-14, 0.10);
  CHECK(ci.degenerate);
}

TEST_CASE("selective CIs through the full path bracket their estimates most of the time") {
  Rng rng(51);
  const Eigen::MatrixXd x = standardize(random_matrix(100, 4, rng));
  const Eigen::VectorXd y = 2.0 * x.col(1) + noise(100, rng);
  const auto fit = fit_lasso(x, y, 30.0);
  REQUIRE(!fit.active_set.empty());
  const auto cis = selective_ci_exact(x, y, fit, 1.0, 0.10);
  REQUIRE(cis.size() == fit.active_set.size());
  for (const auto& ci : cis) {
    CHECK(ci.lower <= ci.upper);
    if (ci.flag_infinite) {
      // boundary endpoints sit at the +-1000 sd grid edge by construction
      CHECK((ci.lower_at_bound || ci.upper_at_bound));
    }
  }
}

TEST_CASE("weighted selective CI equals the rescaled-column CI mapped back") {
  Rng rng(52);
  const Eigen::MatrixXd x = standardize(random_matrix(60, 4, rng));
  const Eigen::VectorXd y = 2.0 * x.col(0) - x.col(2) + noise(60, rng);
  Eigen::VectorXd w(4);
  w << 0.5, 2.0, 1.5, 0.8;
  const double lambda = 12.0;
  const auto wf = fit_lasso(x, y, lambda, w);
  REQUIRE(!wf.active_set.empty());
  const auto cis_w = selective_ci_exact(x, y, wf, 1.0, 0.10);

  const auto rf = fit_lasso(rescale_for_weights(x, w), y, lambda);
  REQUIRE(rf.active_set == wf.active_set);
  const auto cis_r = selective_ci_exact(rescale_for_weights(x, w), y, rf, 1.0, 0.10);
  REQUIRE(cis_r.size() == cis_w.size());
  for (std::size_t k = 0; k < cis_w.size(); ++k) {
    const double wj = w[cis_w[k].variable];
    CHECK(cis_w[k].lower == doctest::Approx(cis_r[k].lower / wj).epsilon(1e-8));
    CHECK(cis_w[k].upper == doctest::Approx(cis_r[k].upper / wj).epsilon(1e-8));
  }
}

TEST_CASE("single-contrast constant is the normal quantile") {
  Rng rng(53);
  Eigen::MatrixXd x = noise(40, rng);
  Rng mc(54);
  const auto k = posi_constant(x, 0.10, 1, kInf, 400000, mc);
  CHECK(std::abs(k.k - 1.6449) < 0.01);
  CHECK(k.rank == 1);
}

TEST_CASE("posi constants are sandwiched and monotone") {
  Rng rng(55);
  // monotone in the model-space cap on a fixed design with common draws
  const Eigen::MatrixXd x = standardize(random_matrix(50, 4, rng));
  double prev = 0.0;
  for (int cap = 1; cap <= 4; ++cap) {
    Rng mc(91);
    const auto k = posi_constant(x, 0.10, cap, kInf, 20000, mc);
    CHECK(k.k >= prev - 1e-12);
    CHECK(k.k >= k.base_quantile - 0.02);
    CHECK(k.k <= k.scheffe + 1e-9);
    prev = k.k;
  }
  // monotone in dimension across orthonormal designs
  prev = 0.0;
  for (int p = 1; p <= 6; ++p) {
    Rng gen(100 + p);
    const Eigen::MatrixXd q = orthonormal_columns(60, p, gen);
    Rng mc(92);
    const auto k = posi_constant(q, 0.10, p, kInf, 20000, mc);
    CHECK(k.k >= prev - 0.01);
    prev = k.k;
  }
}

TEST_CASE("posi constant respects finite-df inflation") {
  Rng rng(56);
  const Eigen::MatrixXd x = standardize(random_matrix(40, 3, rng));
  Rng mc1(7), mc2(7);
  const auto k_inf = posi_constant(x, 0.10, 3, kInf, 20000, mc1);
  const auto k_10 = posi_constant(x, 0.10, 3, 10.0, 20000, mc2);
  CHECK(k_10.k > k_inf.k);
  CHECK(k_10.scheffe > k_inf.scheffe);
}

TEST_CASE("posi intervals are symmetric multiples of the standard error") {
  OlsFit fit;
  fit.model = {0};
  fit.coefficients = Eigen::VectorXd::Constant(1, 1.0);
  fit.std_errors = Eigen::VectorXd::Constant(1, 0.4);
  fit.df = 30;
  PosiConstant k;
  k.k = 2.0;
  k.n_mc = 1000;
  k.sorted_max_stats.assign(1000, 1.0);
  const auto cis = posi_ci(fit, k, 0.10);
  REQUIRE(cis.size() == 1);
  CHECK(cis[0].lower == doctest::Approx(0.2));
  CHECK(cis[0].upper == doctest::Approx(1.8));
  // |t| = 2.5 > K: p-value comes from the reference draws (all below 2.5)
  CHECK(cis[0].p_value == doctest::Approx(1.0 / 1001.0));

  fit.std_errors[0] = 0.6;  // |t| = 1.67 <= K
  CHECK(posi_ci(fit, k, 0.10)[0].p_value == doctest::Approx(1.0));
}

TEST_CASE("posi intervals always contain the Wald interval at the same level") {
  Rng rng(57);
  const Eigen::MatrixXd x = standardize(random_matrix(50, 4, rng));
  const Eigen::VectorXd y = x.col(0) + noise(50, rng);
  const auto fit = ols_fit(x, y, {0, 2});
  Rng mc(3);
  const auto k = posi_constant(x, 0.10, 4, fit.df, 20000, mc);
  const auto wald = wald_ci(fit, 0.10);
  const auto posi = posi_ci(fit, k, 0.10);
  for (std::size_t i = 0; i < wald.size(); ++i) {
    CHECK(posi[i].lower <= wald[i].lower + 1e-9);
    CHECK(posi[i].upper >= wald[i].upper - 1e-9);
  }
}

TEST_CASE("enumeration above 20 candidates requires a cap") {
  Rng rng(58);
  const Eigen::MatrixXd x = random_matrix(40, 21, rng);
  Rng mc(1);
  CHECK_THROWS_AS(posi_constant(x, 0.10, 21, kInf, 1000, mc), config_error);
}
