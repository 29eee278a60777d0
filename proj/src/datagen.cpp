#include "selinf/datagen.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <mutex>

namespace selinf {

namespace {

// Quantile with linear interpolation on a sorted copy.
double quantile_sorted(const std::vector<double>& v, double p) {
  const double h = (static_cast<double>(v.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= v.size()) return v.back();
  const double frac = h - static_cast<double>(lo);
  return v[lo] + (v[lo + 1] - v[lo]) * frac;
}

// Nearest unit-diagonal positive definite matrix: clamp eigenvalues to a
// floor relative to the largest, rescale the diagonal back to one, repeat
// until the floor holds. Leaves already-PD matrices untouched.
Eigen::MatrixXd project_correlation(Eigen::MatrixXd sigma, double rel_floor = 1e-4) {
  for (int pass = 0; pass < 50; ++pass) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sigma);
    const double floor_val = rel_floor * eig.eigenvalues().maxCoeff();
    if (eig.eigenvalues().minCoeff() >= floor_val) return sigma;
    Eigen::VectorXd lam = eig.eigenvalues().cwiseMax(floor_val);
    sigma = eig.eigenvectors() * lam.asDiagonal() * eig.eigenvectors().transpose();
    const Eigen::VectorXd d = sigma.diagonal().cwiseSqrt();
    for (int i = 0; i < sigma.rows(); ++i)
      for (int j = 0; j < sigma.cols(); ++j) sigma(i, j) /= d[i] * d[j];
    sigma = ((sigma + sigma.transpose()) / 2.0).eval();
    sigma.diagonal().setOnes();
  }
  return sigma;
}

Eigen::MatrixXd constant_correlation(int p, double off_diag) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Constant(p, p, off_diag);
  m.diagonal().setOnes();
  return m;
}

Eigen::MatrixXd block_correlation(const std::vector<int>& sizes, const std::vector<double>& off_diags) {
  int p = 0;
  for (int s : sizes) p += s;
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(p, p);
  int at = 0;
  for (std::size_t b = 0; b < sizes.size(); ++b) {
    m.block(at, at, sizes[b], sizes[b]).setConstant(off_diags[b]);
    at += sizes[b];
  }
  m.diagonal().setOnes();
  return m;
}

}  // namespace

std::string setup_name(Setup s) { return s == Setup::kToy ? "toy" : "realistic"; }

std::string Scenario::id() const {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", target_r2);
  return setup_name(setup) + ":" + correlation_id + ":" + coefficient_id + ":r" + buf +
         ":v" + std::to_string(obs_per_variable);
}

const std::vector<std::string>& toy_correlation_ids() {
  static const std::vector<std::string> ids = {
      "uncorrelated", "correlated",   "correlated_neg", "blocks_2_2",
      "blocks_2_2_neg", "blocks_1_3", "blocks_1_3_neg"};
  return ids;
}

CorrelationDesign build_toy_correlation(const std::string& design_id) {
  CorrelationDesign d;
  d.name = design_id;
  if (design_id == "uncorrelated") {
    d.sigma = Eigen::MatrixXd::Identity(4, 4);
  } else if (design_id == "correlated") {
    d.sigma = constant_correlation(4, 0.8);
  } else if (design_id == "correlated_neg") {
    // The constant -0.8 matrix on 4 variables is not positive definite;
    // ship its nearest unit-diagonal PD projection (off-diagonals near -1/3).
    d.sigma = project_correlation(constant_correlation(4, -0.8));
  } else if (design_id == "blocks_2_2") {
    d.sigma = block_correlation({2, 2}, {0.8, 0.8});
  } else if (design_id == "blocks_2_2_neg") {
    d.sigma = block_correlation({2, 2}, {0.8, -0.8});
  } else if (design_id == "blocks_1_3") {
    d.sigma = block_correlation({1, 3}, {0.0, 0.8});
  } else if (design_id == "blocks_1_3_neg") {
    // Same issue for the 3x3 block of -0.8 (projection near -1/2).
    d.sigma = project_correlation(block_correlation({1, 3}, {0.0, -0.8}));
  } else {
    throw config_error("unknown toy correlation design: " + design_id);
  }
  return d;
}

TransformPipeline toy_pipeline() {
  TransformPipeline pl;
  pl.is_identity = true;
  for (int j = 0; j < 4; ++j) {
    pl.column_transforms.push_back([j](const Eigen::VectorXd& z) { return z[j]; });
    pl.truncate_multipliers.push_back(std::nullopt);
  }
  return pl;
}

std::pair<CorrelationDesign, TransformPipeline> build_realistic_design() {
  CorrelationDesign d;
  d.name = "realistic";
  Eigen::MatrixXd sigma = Eigen::MatrixXd::Identity(15, 15);
  const struct { int i, j; double r; } pairs[] = {
      {0, 1, 0.8},  {0, 8, 0.5},  {2, 4, 0.5},   {2, 8, -0.8}, {3, 5, -0.8}, {3, 6, -0.5},
      {4, 5, -0.5}, {4, 11, 0.8}, {5, 6, 0.8},   {5, 10, 0.8}, {5, 13, 0.5}, {6, 10, 0.5},
      {6, 13, 0.5}, {7, 8, -0.5}, {7, 10, 0.5},  {10, 13, 0.8}};
  for (const auto& pr : pairs) {
    sigma(pr.i, pr.j) = pr.r;
    sigma(pr.j, pr.i) = pr.r;
  }
  d.sigma = project_correlation(sigma);

  TransformPipeline pl;
  auto add = [&pl](std::function<double(const Eigen::VectorXd&)> f, bool truncate) {
    pl.column_transforms.push_back(std::move(f));
    pl.truncate_multipliers.push_back(truncate ? std::optional<double>(5.0) : std::nullopt);
  };
  add([](const Eigen::VectorXd& z) { return std::floor(10.0 * z[0] + 55.0); }, true);     // v1
  add([](const Eigen::VectorXd& z) { return z[1] < 0.6 ? 1.0 : 0.0; }, false);            // v2
  add([](const Eigen::VectorXd& z) { return std::exp(0.4 * z[2] + 3.0); }, true);         // v3
  add([](const Eigen::VectorXd& z) { return z[3] >= -1.2 ? 1.0 : 0.0; }, false);          // v4
  add([](const Eigen::VectorXd& z) { return z[3] >= 0.75 ? 1.0 : 0.0; }, false);          // v5
  add([](const Eigen::VectorXd& z) { return std::exp(0.5 * z[4] + 1.5); }, true);         // v6
  add([](const Eigen::VectorXd& z) { return std::floor(std::max(0.0, 100.0 * std::exp(z[5]) - 20.0)); }, true);  // v7
  add([](const Eigen::VectorXd& z) { return std::floor(std::max(0.0, 80.0 * std::exp(z[6]) - 20.0)); }, true);   // v8
  add([](const Eigen::VectorXd& z) { return z[7] < -0.35 ? 1.0 : 0.0; }, false);          // v9
  add([](const Eigen::VectorXd& z) { return (z[8] >= 0.5 && z[8] < 1.5) ? 1.0 : 0.0; }, false);  // v10
  add([](const Eigen::VectorXd& z) { return z[8] >= 1.5 ? 1.0 : 0.0; }, false);           // v11
  add([](const Eigen::VectorXd& z) { return 0.01 * std::floor(100.0 * (z[9] + 4.0) * (z[9] + 4.0)); }, true);    // v12
  add([](const Eigen::VectorXd& z) { return std::floor(10.0 * z[10] + 55.0); }, true);    // v13
  add([](const Eigen::VectorXd& z) { return std::floor(10.0 * z[11] + 55.0); }, true);    // v14
  add([](const Eigen::VectorXd& z) { return std::floor(10.0 * z[12] + 55.0); }, true);    // v15
  add([](const Eigen::VectorXd& z) { return z[13] < 0.0 ? 1.0 : 0.0; }, false);           // v16
  add([](const Eigen::VectorXd& z) { return z[14] < 0.0 ? 1.0 : 0.0; }, false);           // v17
  return {d, pl};
}

Eigen::MatrixXd TransformPipeline::apply(const Eigen::MatrixXd& latent) const {
  const int n = static_cast<int>(latent.rows());
  const int p = output_dim();
  Eigen::MatrixXd out(n, p);
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd z = latent.row(i).transpose();
    for (int j = 0; j < p; ++j) out(i, j) = column_transforms[j](z);
  }
  for (int j = 0; j < p; ++j) {
    if (!truncate_multipliers[j]) continue;
    std::vector<double> col(out.col(j).data(), out.col(j).data() + n);
    std::sort(col.begin(), col.end());
    const double med = quantile_sorted(col, 0.5);
    const double iqr = quantile_sorted(col, 0.75) - quantile_sorted(col, 0.25);
    if (iqr <= 0.0) continue;
    const double lo = med - *truncate_multipliers[j] * iqr;
    const double hi = med + *truncate_multipliers[j] * iqr;
    for (int i = 0; i < n; ++i) out(i, j) = std::clamp(out(i, j), lo, hi);
  }
  return out;
}

const std::vector<std::string>& coefficient_ids(Setup setup) {
  static const std::vector<std::string> toy = {"v1",      "v12",     "v1234",  "v3",
                                               "v34",     "v13",     "v12_dec", "v34_dec",
                                               "v13_dec", "v13_inc"};
  static const std::vector<std::string> realistic = {
      "c2",     "c3",    "c34",    "c3w4",   "c34w",   "c3neg4", "c34neg",
      "c23",    "c2w3",  "c23w",   "c2neg3", "c23neg", "c234"};
  return setup == Setup::kToy ? toy : realistic;
}

CoefficientStructure coefficient_structure(Setup setup, const std::string& id) {
  CoefficientStructure c;
  c.name = id;
  if (setup == Setup::kToy) {
    static const std::map<std::string, std::array<double, 4>> table = {
        {"v1", {1, 0, 0, 0}},        {"v12", {1, 1, 0, 0}},     {"v1234", {1, 1, 1, 1}},
        {"v3", {0, 0, 1, 0}},        {"v34", {0, 0, 1, 1}},     {"v13", {1, 0, 1, 0}},
        {"v12_dec", {1, 0.1, 0, 0}}, {"v34_dec", {0, 0, 1, 0.1}},
        {"v13_dec", {1, 0, 0.1, 0}}, {"v13_inc", {0.1, 0, 1, 0}}};
    const auto it = table.find(id);
    if (it == table.end()) throw config_error("unknown toy coefficient structure: " + id);
    c.beta = Eigen::Map<const Eigen::Vector4d>(it->second.data());
    return c;
  }
  // Realistic structures over clusters of final variables (1-based in the
  // names): cluster2 = {v2, v4, v14}, cluster3 = {v7, v8, v13},
  // cluster4 = {v4, v5, v16}. A "w"/"neg" directly after a cluster digit
  // modifies that cluster.
  auto make = [](std::initializer_list<std::pair<int, double>> entries) {
    Eigen::VectorXd b = Eigen::VectorXd::Zero(17);
    for (const auto& [var_1based, val] : entries) b[var_1based - 1] = val;
    return b;
  };
  if (id == "c2") c.beta = make({{2, 1}, {4, 1}, {14, 1}});
  else if (id == "c3") c.beta = make({{7, 1}, {8, 1}, {13, 1}});
  else if (id == "c34") c.beta = make({{7, 1}, {8, 1}, {13, 1}, {4, 1}, {5, 1}, {16, 1}});
  else if (id == "c3w4") c.beta = make({{7, 0.1}, {8, 0.1}, {13, 0.1}, {4, 1}, {5, 1}, {16, 1}});
  else if (id == "c34w") c.beta = make({{7, 1}, {8, 1}, {13, 1}, {4, 0.1}, {5, 0.1}, {16, 0.1}});
  else if (id == "c3neg4") c.beta = make({{7, -1}, {8, -1}, {13, -1}, {4, 1}, {5, 1}, {16, 1}});
  else if (id == "c34neg") c.beta = make({{7, 1}, {8, 1}, {13, 1}, {4, -1}, {5, -1}, {16, -1}});
  else if (id == "c23") c.beta = make({{2, 1}, {4, 1}, {14, 1}, {7, 1}, {8, 1}, {13, 1}});
  else if (id == "c2w3") c.beta = make({{2, 0.1}, {4, 0.1}, {14, 0.1}, {7, 1}, {8, 1}, {13, 1}});
  else if (id == "c23w") c.beta = make({{2, 1}, {4, 1}, {14, 1}, {7, 0.1}, {8, 0.1}, {13, 0.1}});
  else if (id == "c2neg3") c.beta = make({{2, -1}, {4, -1}, {14, -1}, {7, 1}, {8, 1}, {13, 1}});
  else if (id == "c23neg") c.beta = make({{2, 1}, {4, 1}, {14, 1}, {7, -1}, {8, -1}, {13, -1}});
  else if (id == "c234")
    c.beta = make({{2, 1}, {4, 1}, {14, 1}, {7, 1}, {8, 1}, {13, 1}, {5, 1}, {16, 1}});
  else throw config_error("unknown realistic coefficient structure: " + id);
  return c;
}

void standardize_columns(const Eigen::MatrixXd& x, Eigen::MatrixXd& x_std,
                         Eigen::VectorXd& mean, Eigen::VectorXd& sd) {
  const int n = static_cast<int>(x.rows());
  const int p = static_cast<int>(x.cols());
  x_std.resize(n, p);
  mean.resize(p);
  sd.resize(p);
  for (int j = 0; j < p; ++j) {
    mean[j] = x.col(j).mean();
    const Eigen::VectorXd c = x.col(j).array() - mean[j];
    sd[j] = std::sqrt(c.squaredNorm() / n);
    if (!(sd[j] > 0.0)) throw data_error("constant column " + std::to_string(j));
    x_std.col(j) = c / sd[j];
  }
}

namespace {

std::pair<CorrelationDesign, TransformPipeline> scenario_design(const Scenario& sc) {
  if (sc.setup == Setup::kToy) return {build_toy_correlation(sc.correlation_id), toy_pipeline()};
  return build_realistic_design();
}

Eigen::MatrixXd draw_latent(const Eigen::MatrixXd& chol_l, int n, Rng& rng) {
  const int d = static_cast<int>(chol_l.rows());
  Eigen::MatrixXd z(n, d);
  for (int i = 0; i < n; ++i)
    for (int k = 0; k < d; ++k) z(i, k) = rng.normal();
  return z * chol_l.transpose();
}

}  // namespace

Dataset sample_dataset(const Scenario& scenario, Rng& rng) {
  const auto [design, pipeline] = scenario_design(scenario);
  const auto coef = coefficient_structure(scenario.setup, scenario.coefficient_id);
  const int n = scenario.n();
  if (n < scenario.p() + 2) throw config_error("sample_dataset: n < p + 2");

  Eigen::LLT<Eigen::MatrixXd> llt(design.sigma);
  if (llt.info() != Eigen::Success)
    throw data_error("correlation design is not positive definite: " + design.name);
  const Eigen::MatrixXd chol_l = llt.matrixL();

  Dataset ds;
  bool ok = false;
  for (int attempt = 0; attempt < kRedrawCap && !ok; ++attempt) {
    const Eigen::MatrixXd latent = draw_latent(chol_l, n, rng);
    ds.x_raw = pipeline.apply(latent);
    try {
      standardize_columns(ds.x_raw, ds.x_std, ds.col_mean, ds.col_sd);
      ok = true;
    } catch (const data_error&) {
      // constant column; redraw the whole dataset
    }
  }
  if (!ok) throw data_error("degenerate data after redraw cap in scenario " + scenario.id());

  ds.beta_true = coef.beta;
  const Eigen::VectorXd eta = ds.x_std * ds.beta_true;
  const double var_eta = eta.squaredNorm() / n;  // columns are centered, so is eta
  ds.noise_sd = std::sqrt(var_eta * (1.0 / scenario.target_r2 - 1.0));
  ds.y.resize(n);
  ds.y_valid.resize(n);
  for (int i = 0; i < n; ++i) ds.y[i] = eta[i] + ds.noise_sd * rng.normal();
  for (int i = 0; i < n; ++i) ds.y_valid[i] = eta[i] + ds.noise_sd * rng.normal();
  ds.sigma_true = scenario_population_sigma(scenario.setup, scenario.correlation_id);
  return ds;
}

Eigen::MatrixXd population_sigma(const CorrelationDesign& design,
                                 const TransformPipeline& pipeline, long n_mc, Rng& rng) {
  if (pipeline.is_identity) return design.sigma;
  if (n_mc < 100000) throw config_error("population_sigma: n_mc too small");

  Eigen::LLT<Eigen::MatrixXd> llt(design.sigma);
  const Eigen::MatrixXd chol_l = llt.matrixL();
  const int p = pipeline.output_dim();

  Eigen::MatrixXd x(n_mc, p);
  const long block = 65536;
  Eigen::VectorXd zrow(design.sigma.rows());
  for (long done = 0; done < n_mc; done += block) {
    const long m = std::min(block, n_mc - done);
    const Eigen::MatrixXd latent = draw_latent(chol_l, static_cast<int>(m), rng);
    for (long i = 0; i < m; ++i) {
      zrow = latent.row(i).transpose();
      for (int j = 0; j < p; ++j) x(done + i, j) = pipeline.column_transforms[j](zrow);
    }
  }
  // Winsorize flagged columns with the large-sample quantiles, as in the
  // per-dataset pipeline.
  for (int j = 0; j < p; ++j) {
    if (!pipeline.truncate_multipliers[j]) continue;
    std::vector<double> col(x.col(j).data(), x.col(j).data() + n_mc);
    std::sort(col.begin(), col.end());
    const double med = quantile_sorted(col, 0.5);
    const double iqr = quantile_sorted(col, 0.75) - quantile_sorted(col, 0.25);
    if (iqr <= 0.0) continue;
    const double lo = med - *pipeline.truncate_multipliers[j] * iqr;
    const double hi = med + *pipeline.truncate_multipliers[j] * iqr;
    for (long i = 0; i < n_mc; ++i) x(i, j) = std::clamp(x(i, j), lo, hi);
  }
  Eigen::MatrixXd xs;
  Eigen::VectorXd mu, sd;
  standardize_columns(x, xs, mu, sd);
  Eigen::MatrixXd corr = (xs.transpose() * xs) / static_cast<double>(n_mc);
  corr = ((corr + corr.transpose()) / 2.0).eval();
  corr.diagonal().setOnes();
  return corr;
}

const Eigen::MatrixXd& scenario_population_sigma(Setup setup, const std::string& correlation_id) {
  static std::mutex mtx;
  static std::map<std::string, Eigen::MatrixXd> cache;
  const std::string key = setup_name(setup) + ":" + correlation_id;
  std::scoped_lock lock(mtx);
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;
  Eigen::MatrixXd sigma;
  if (setup == Setup::kToy) {
    sigma = build_toy_correlation(correlation_id).sigma;
  } else {
    const auto [design, pipeline] = build_realistic_design();
    // Fixed internal seed: submodel targets must not move across runs.
    Rng rng(derive_seed({hash_label("population-sigma")}));
    sigma = population_sigma(design, pipeline, 1000000, rng);
  }
  return cache.emplace(key, std::move(sigma)).first->second;
}

}  // namespace selinf
