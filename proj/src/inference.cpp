#include "selinf/inference.hpp"

#include <algorithm>
#include <cmath>

#include "selinf/datagen.hpp"
#include "selinf/stats.hpp"

namespace selinf {

namespace {

Eigen::MatrixXd select_columns(const Eigen::MatrixXd& x, const std::vector<int>& model) {
  Eigen::MatrixXd out(x.rows(), static_cast<int>(model.size()));
  for (std::size_t k = 0; k < model.size(); ++k) out.col(static_cast<int>(k)) = x.col(model[k]);
  return out;
}

std::vector<int> complement(int p, const std::vector<int>& model) {
  std::vector<int> rest;
  std::vector<bool> in(p, false);
  for (int j : model) in[j] = true;
  for (int j = 0; j < p; ++j)
    if (!in[j]) rest.push_back(j);
  return rest;
}

}  // namespace

OlsFit ols_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const std::vector<int>& model) {
  const int n = static_cast<int>(x.rows());
  const int m = static_cast<int>(model.size());
  if (m >= n - 1) throw linalg_error("ols_fit: model too large for n");

  OlsFit fit;
  fit.model = model;
  fit.intercept = y.mean();
  const Eigen::VectorXd yc = y.array() - fit.intercept;

  if (m == 0) {
    fit.coefficients.resize(0);
    fit.std_errors.resize(0);
    fit.df = n - 1;
    fit.residual_sd = std::sqrt(yc.squaredNorm() / fit.df);
    fit.xtx_inv.resize(0, 0);
    fit.col_mean.resize(0);
    return fit;
  }

  Eigen::MatrixXd xm = select_columns(x, model);
  fit.col_mean.resize(m);
  for (int k = 0; k < m; ++k) {
    fit.col_mean[k] = xm.col(k).mean();
    xm.col(k).array() -= fit.col_mean[k];
  }

  const Eigen::MatrixXd gram = xm.transpose() * xm;
  Eigen::LLT<Eigen::MatrixXd> llt(gram);
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(xm);
  qr.setThreshold(1e-10);
  if (llt.info() != Eigen::Success || qr.rank() < m) {
    std::string msg = "ols_fit: rank-deficient design, dependent columns:";
    const auto perm = qr.colsPermutation().indices();
    for (int k = qr.rank(); k < m; ++k) msg += " " + std::to_string(model[perm[k]]);
    throw linalg_error(msg);
  }

  fit.xtx_inv = llt.solve(Eigen::MatrixXd::Identity(m, m));
  fit.coefficients = fit.xtx_inv * (xm.transpose() * yc);
  fit.df = n - m - 1;
  const double ssr = (yc - xm * fit.coefficients).squaredNorm();
  fit.residual_sd = fit.df > 0 ? std::sqrt(ssr / fit.df) : 0.0;
  fit.intercept = y.mean() - fit.col_mean.dot(fit.coefficients);
  fit.std_errors.resize(m);
  for (int k = 0; k < m; ++k) fit.std_errors[k] = fit.residual_sd * std::sqrt(fit.xtx_inv(k, k));
  return fit;
}

std::vector<SelectiveInterval> wald_ci(const OlsFit& fit, double alpha) {
  if (fit.df < 1) throw linalg_error("wald_ci: needs df >= 1");
  const double q = student_t_quantile(1.0 - alpha / 2.0, fit.df);
  std::vector<SelectiveInterval> out;
  out.reserve(fit.model.size());
  for (std::size_t k = 0; k < fit.model.size(); ++k) {
    SelectiveInterval ci;
    ci.variable = fit.model[k];
    ci.estimate = fit.coefficients[static_cast<int>(k)];
    const double se = fit.std_errors[static_cast<int>(k)];
    ci.lower = ci.estimate - q * se;
    ci.upper = ci.estimate + q * se;
    if (se > 0.0) {
      const double t = std::abs(ci.estimate) / se;
      ci.p_value = 2.0 * (1.0 - student_t_cdf(t, fit.df));
    } else {
      ci.p_value = 1.0;
    }
    out.push_back(ci);
  }
  return out;
}

std::pair<std::vector<int>, std::vector<SelectiveInterval>> split_inference(
    const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Selector& selector,
    double alpha, Rng& rng) {
  const int n = static_cast<int>(x.rows());
  const int p = static_cast<int>(x.cols());
  if (n < 4 + 2 * p) throw config_error("split_inference: needs n >= 4 + 2p");

  const std::vector<int> perm = rng.permutation(n);
  const int n_sel = n / 2;  // odd n: extra row goes to the inference half
  Eigen::MatrixXd x_sel(n_sel, p), x_inf(n - n_sel, p);
  Eigen::VectorXd y_sel(n_sel), y_inf(n - n_sel);
  for (int r = 0; r < n; ++r) {
    if (r < n_sel) {
      x_sel.row(r) = x.row(perm[r]);
      y_sel[r] = y[perm[r]];
    } else {
      x_inf.row(r - n_sel) = x.row(perm[r]);
      y_inf[r - n_sel] = y[perm[r]];
    }
  }

  const std::vector<int> model = selector(x_sel, y_sel, rng);
  if (model.empty()) return {{}, {}};
  if (static_cast<int>(model.size()) >= static_cast<int>(x_inf.rows()) - 1)
    throw linalg_error("split_inference: selected model exceeds inference-half df");

  const OlsFit fit = ols_fit(x_inf, y_inf, model);
  return {model, wald_ci(fit, alpha)};
}

PolyhedralEvent polyhedral_constraints(const Eigen::MatrixXd& x, double lambda,
                                       const Eigen::VectorXd& weights,
                                       const std::vector<int>& model,
                                       const std::vector<int>& signs,
                                       const Eigen::VectorXd* y_check) {
  const int p = static_cast<int>(x.cols());
  const int m = static_cast<int>(model.size());
  if (m == 0) throw config_error("polyhedral_constraints: empty model");
  if (static_cast<int>(signs.size()) != m)
    throw config_error("polyhedral_constraints: signs/model mismatch");

  const Eigen::MatrixXd xm = select_columns(x, model);
  const std::vector<int> rest = complement(p, model);
  const Eigen::MatrixXd xr = select_columns(x, rest);

  Eigen::LLT<Eigen::MatrixXd> llt(xm.transpose() * xm);
  if (llt.info() != Eigen::Success)
    throw linalg_error("polyhedral_constraints: X_M not full rank");
  const Eigen::MatrixXd g = llt.solve(Eigen::MatrixXd::Identity(m, m));

  Eigen::VectorXd s(m);
  for (int k = 0; k < m; ++k) s[k] = signs[k];

  const int n_rest = static_cast<int>(rest.size());
  Eigen::MatrixXd a(2 * n_rest + m, x.rows());
  Eigen::VectorXd b(2 * n_rest + m);

  if (n_rest > 0) {
    // Residual-forming part: rows of X_{-M}'(I - P_M) / lambda.
    const Eigen::MatrixXd xr_t_res =
        (xr.transpose() - (xr.transpose() * xm) * (g * xm.transpose())) / lambda;
    const Eigen::VectorXd cross = xr.transpose() * xm * (g * s);
    a.topRows(n_rest) = xr_t_res;
    b.head(n_rest) = Eigen::VectorXd::Ones(n_rest) - cross;
    a.middleRows(n_rest, n_rest) = -xr_t_res;
    b.segment(n_rest, n_rest) = Eigen::VectorXd::Ones(n_rest) + cross;
  }
  // Sign part: -diag(s) (X_M'X_M)^{-1} X_M' y <= -lambda diag(s) (X_M'X_M)^{-1} s.
  a.bottomRows(m) = -(s.asDiagonal() * (g * xm.transpose()));
  b.tail(m) = -lambda * (s.asDiagonal() * (g * s));

  PolyhedralEvent ev;
  ev.a_matrix = std::move(a);
  ev.b_vector = std::move(b);
  ev.lambda = lambda;
  ev.weights = weights;
  ev.model = model;
  ev.signs = signs;

  if (y_check) {
    const Eigen::VectorXd slack = ev.b_vector - ev.a_matrix * (*y_check);
    for (int i = 0; i < slack.size(); ++i) {
      if (slack[i] < -1e-6 * (1.0 + std::abs(ev.b_vector[i])))
        throw consistency_error("polyhedral_constraints: observed y violates row " +
                                std::to_string(i) + " by " + std::to_string(-slack[i]));
    }
  }
  return ev;
}

std::pair<double, double> truncation_interval(const Eigen::VectorXd& eta,
                                              const Eigen::VectorXd& y,
                                              const PolyhedralEvent& event) {
  const double eta_sq = eta.squaredNorm();
  if (!(eta_sq > 0.0)) throw config_error("truncation_interval: zero contrast");
  const double stat = eta.dot(y);
  const Eigen::VectorXd c = eta / eta_sq;
  const Eigen::VectorXd z = y - c * stat;
  const Eigen::VectorXd rho = event.a_matrix * c;
  const Eigen::VectorXd rem = event.b_vector - event.a_matrix * z;

  double v_minus = -kInf, v_plus = kInf;
  for (int i = 0; i < rho.size(); ++i) {
    if (rho[i] > 1e-12) {
      v_plus = std::min(v_plus, rem[i] / rho[i]);
    } else if (rho[i] < -1e-12) {
      v_minus = std::max(v_minus, rem[i] / rho[i]);
    }
  }
  const double tol = 1e-6 * (1.0 + std::abs(stat));
  if (stat < v_minus - tol || stat > v_plus + tol)
    throw consistency_error("truncation_interval: statistic outside the bracket");
  return {v_minus, v_plus};
}

namespace {

// P_theta[eta'y > observed | truncation], increasing in theta.
double si_pivot(double theta, double obs, double sd, double vlo, double vup) {
  const double f = truncnorm_cdf((obs - theta) / sd, (vlo - theta) / sd, (vup - theta) / sd);
  return std::isnan(f) ? kNaN : 1.0 - f;
}

double bisect_pivot(double lo, double hi, double target, double obs, double sd, double vlo,
                    double vup) {
  // invariant: pivot(lo) < target <= pivot(hi)
  for (int it = 0; it < 200 && hi - lo > 1e-11 * sd; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double v = si_pivot(mid, obs, sd, vlo, vup);
    if (std::isnan(v)) break;
    if (v < target)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

SelectiveInterval si_interval_for_contrast(double obs, double sd, double vlo, double vup,
                                           double alpha, const SiOptions& opts) {
  SelectiveInterval ci;
  ci.estimate = obs;
  if (!(vup - vlo > 1e-10 * sd)) {
    ci.degenerate = true;
    ci.lower = ci.upper = obs;
    ci.p_value = kNaN;
    return ci;
  }

  const double radius = opts.grid_radius * sd;
  const int steps = opts.grid_steps;
  auto grid_at = [&](int idx) { return -radius + 2.0 * radius * idx / steps; };
  std::vector<double> pv(steps + 1);
  for (int i = 0; i <= steps; ++i) {
    pv[i] = si_pivot(grid_at(i), obs, sd, vlo, vup);
    if (std::isnan(pv[i])) {
      ci.degenerate = true;
      ci.lower = ci.upper = obs;
      ci.p_value = kNaN;
      return ci;
    }
  }

  const double lo_target = alpha / 2.0;
  const double hi_target = 1.0 - alpha / 2.0;

  int k_lo = -1;
  for (int i = 0; i <= steps; ++i) {
    if (pv[i] >= lo_target) {
      k_lo = i;
      break;
    }
  }
  int k_hi = -1;
  for (int i = steps; i >= 0; --i) {
    if (pv[i] <= hi_target) {
      k_hi = i;
      break;
    }
  }

  double lower, upper;
  if (k_lo < 0) {
    // pivot below alpha/2 on the whole grid: interval beyond the right end
    lower = upper = radius;
    ci.lower_at_bound = ci.upper_at_bound = true;
  } else if (k_hi < 0) {
    // pivot above 1 - alpha/2 everywhere: interval beyond the left end
    lower = upper = -radius;
    ci.lower_at_bound = ci.upper_at_bound = true;
  } else {
    if (k_lo == 0) {
      lower = -radius;
      ci.lower_at_bound = true;
    } else {
      lower = bisect_pivot(grid_at(k_lo - 1), grid_at(k_lo), lo_target, obs, sd, vlo, vup);
    }
    if (k_hi == steps) {
      upper = radius;
      ci.upper_at_bound = true;
    } else {
      upper = bisect_pivot(grid_at(k_hi), grid_at(k_hi + 1), hi_target, obs, sd, vlo, vup);
    }
  }
  if (lower > upper) std::swap(lower, upper);

  ci.lower = lower;
  ci.upper = upper;
  ci.flag_infinite = ci.lower_at_bound || ci.upper_at_bound;
  const double p0 = si_pivot(0.0, obs, sd, vlo, vup);
  ci.p_value = std::isnan(p0) ? kNaN : (obs > 0.0 ? p0 : 1.0 - p0);
  ci.flag_excludes_estimate = !ci.covers(obs);
  return ci;
}

std::vector<SelectiveInterval> selective_ci_exact(const Eigen::MatrixXd& x,
                                                  const Eigen::VectorXd& y,
                                                  const PenalizedFit& fit, double sigma_hat,
                                                  double alpha, const SiOptions& opts) {
  if (fit.active_set.empty()) throw config_error("selective_ci_exact: empty active set");
  if (!(sigma_hat > 0.0)) throw config_error("selective_ci_exact: sigma_hat must be positive");

  const bool weighted = (fit.weights.array() != 1.0).any();
  const Eigen::MatrixXd xw = weighted ? rescale_for_weights(x, fit.weights) : x;
  const Eigen::VectorXd yc = y.array() - y.mean();

  const PolyhedralEvent event = polyhedral_constraints(
      xw, fit.lambda, Eigen::VectorXd::Ones(x.cols()), fit.active_set, fit.signs, &yc);

  const int m = static_cast<int>(fit.active_set.size());
  const Eigen::MatrixXd xm = select_columns(xw, fit.active_set);
  Eigen::LLT<Eigen::MatrixXd> llt(xm.transpose() * xm);
  if (llt.info() != Eigen::Success) throw linalg_error("selective_ci_exact: X_M not full rank");
  const Eigen::MatrixXd g = llt.solve(Eigen::MatrixXd::Identity(m, m));

  std::vector<SelectiveInterval> out;
  out.reserve(m);
  for (int k = 0; k < m; ++k) {
    const int j = fit.active_set[k];
    const double wj = fit.weights[j];

    const Eigen::VectorXd eta = xm * g.col(k);
    const double obs = eta.dot(yc);
    const double sd = sigma_hat * eta.norm();
    const auto [vlo, vup] = truncation_interval(eta, yc, event);

    SelectiveInterval ci = si_interval_for_contrast(obs, sd, vlo, vup, alpha, opts);
    ci.variable = j;
    // weighted fits ran on rescaled columns; map back (order preserved, w > 0)
    ci.estimate /= wj;
    ci.lower /= wj;
    ci.upper /= wj;
    out.push_back(ci);
  }
  return out;
}

PosiConstant posi_constant(const Eigen::MatrixXd& x, double alpha, int max_size, double df,
                           int n_mc, Rng& rng) {
  const int n = static_cast<int>(x.rows());
  const int p = static_cast<int>(x.cols());
  if (n_mc < 500) throw config_error("posi_constant: n_mc must be >= 500");
  if (max_size <= 0) max_size = p;
  max_size = std::min(max_size, p);
  if (p > 20 && max_size >= 20)
    throw config_error(
        "posi_constant: full enumeration beyond 20 candidates is not feasible; "
        "pass max_size to cap the submodel size");

  Eigen::MatrixXd xc = x;
  for (int j = 0; j < p; ++j) xc.col(j).array() -= x.col(j).mean();

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(xc);
  qr.setThreshold(1e-10);
  const int d = static_cast<int>(qr.rank());
  const Eigen::MatrixXd q_thin =
      qr.householderQ() * Eigen::MatrixXd::Identity(n, d);
  const Eigen::MatrixXd cx = q_thin.transpose() * xc;  // d x p

  // Draw order is fixed: Z first, then the chi-square scale draws, so runs
  // with equal seeds share randomness across designs.
  Eigen::MatrixXd z(d, n_mc);
  for (int c = 0; c < n_mc; ++c)
    for (int r = 0; r < d; ++r) z(r, c) = rng.normal();
  Eigen::VectorXd scale(n_mc);
  if (std::isfinite(df)) {
    const int idf = static_cast<int>(df);
    for (int c = 0; c < n_mc; ++c) scale[c] = std::sqrt(rng.chi_square(idf) / df);
  } else {
    scale.setOnes();
  }

  Eigen::VectorXd running_max = Eigen::VectorXd::Zero(n_mc);
  const int chunk = 4096;
  Eigen::MatrixXd buf(d, chunk);
  int used = 0;
  auto flush = [&]() {
    if (used == 0) return;
    const Eigen::MatrixXd dots = (buf.leftCols(used).transpose() * z).cwiseAbs();
    for (int c = 0; c < n_mc; ++c)
      running_max[c] = std::max(running_max[c], dots.col(c).maxCoeff());
    used = 0;
  };

  // Enumerate nonempty submodels by size, lexicographic within size.
  std::vector<int> comb;
  std::function<void(int, int)> visit = [&](int start, int remaining) {
    if (!comb.empty()) {
      const int m = static_cast<int>(comb.size());
      Eigen::MatrixXd cm(d, m);
      for (int k = 0; k < m; ++k) cm.col(k) = cx.col(comb[k]);
      Eigen::LLT<Eigen::MatrixXd> llt(cm.transpose() * cm);
      if (llt.info() == Eigen::Success) {
        const Eigen::MatrixXd w = cm * llt.solve(Eigen::MatrixXd::Identity(m, m));
        for (int k = 0; k < m; ++k) {
          const double norm = w.col(k).norm();
          if (!(norm > 1e-12)) continue;
          buf.col(used++) = w.col(k) / norm;
          if (used == chunk) flush();
        }
      }
    }
    if (remaining == 0) return;
    for (int j = start; j < p; ++j) {
      comb.push_back(j);
      visit(j + 1, remaining - 1);
      comb.pop_back();
    }
  };
  visit(0, max_size);
  flush();

  std::vector<double> stats(n_mc);
  for (int c = 0; c < n_mc; ++c) stats[c] = running_max[c] / scale[c];
  std::sort(stats.begin(), stats.end());

  PosiConstant out;
  out.alpha = alpha;
  out.model_space = max_size;
  out.n_mc = n_mc;
  out.df = df;
  out.rank = d;
  const int idx = std::max(0, static_cast<int>(std::ceil((1.0 - alpha) * n_mc)) - 1);
  out.k = stats[idx];
  out.base_quantile = student_t_quantile(1.0 - alpha / 2.0, df);
  out.scheffe = std::sqrt(d * f_quantile(1.0 - alpha, d, df));
  out.sorted_max_stats = std::move(stats);
  return out;
}

std::vector<SelectiveInterval> posi_ci(const OlsFit& fit, const PosiConstant& k, double alpha) {
  (void)alpha;  // level is baked into k
  std::vector<SelectiveInterval> out;
  out.reserve(fit.model.size());
  for (std::size_t i = 0; i < fit.model.size(); ++i) {
    SelectiveInterval ci;
    ci.variable = fit.model[i];
    ci.estimate = fit.coefficients[static_cast<int>(i)];
    const double se = fit.std_errors[static_cast<int>(i)];
    ci.lower = ci.estimate - k.k * se;
    ci.upper = ci.estimate + k.k * se;
    const double t = se > 0.0 ? std::abs(ci.estimate) / se : 0.0;
    if (t <= k.k) {
      ci.p_value = 1.0;
    } else {
      // conservative surrogate from the max-|t| reference draws
      const auto it =
          std::lower_bound(k.sorted_max_stats.begin(), k.sorted_max_stats.end(), t);
      const auto count = std::distance(it, k.sorted_max_stats.end());
      ci.p_value = static_cast<double>(count + 1) / (k.n_mc + 1.0);
    }
    out.push_back(ci);
  }
  return out;
}

}  // namespace selinf
