#include "selinf/harness.hpp"

#include <zlib.h>

#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "selinf/tuning.hpp"

namespace selinf {

namespace fs = std::filesystem;

bool MethodSpec::adaptive() const {
  switch (id) {
    case MethodId::kALassoCvSplit:
    case MethodId::kALassoCvPosi:
    case MethodId::kALassoCvSi:
    case MethodId::kALassoNegSi:
      return true;
    default:
      return false;
  }
}

bool MethodSpec::uses_cv() const {
  switch (id) {
    case MethodId::kLassoCvSplit:
    case MethodId::kLassoCvPosi:
    case MethodId::kLassoCvSi:
    case MethodId::kALassoCvSplit:
    case MethodId::kALassoCvPosi:
    case MethodId::kALassoCvSi:
      return true;
    default:
      return false;
  }
}

std::string MethodSpec::name() const {
  switch (id) {
    case MethodId::kFull: return "Full";
    case MethodId::kOracle: return "Oracle";
    case MethodId::kLassoCvSplit: return "Lasso-CV-Split";
    case MethodId::kLassoCvPosi: return "Lasso-CV-PoSI";
    case MethodId::kLassoCvSi: return "Lasso-CV-SI";
    case MethodId::kLassoNegSi: return "Lasso-Neg-SI";
    case MethodId::kALassoCvSplit: return "ALasso-CV-Split";
    case MethodId::kALassoCvPosi: return "ALasso-CV-PoSI";
    case MethodId::kALassoCvSi: return "ALasso-CV-SI";
    case MethodId::kALassoNegSi: return "ALasso-Neg-SI";
  }
  return "?";
}

const std::vector<MethodSpec>& all_methods() {
  static const std::vector<MethodSpec> m = {
      {MethodId::kFull},         {MethodId::kOracle},       {MethodId::kLassoCvSplit},
      {MethodId::kLassoCvPosi},  {MethodId::kLassoCvSi},    {MethodId::kLassoNegSi},
      {MethodId::kALassoCvSplit},{MethodId::kALassoCvPosi}, {MethodId::kALassoCvSi},
      {MethodId::kALassoNegSi}};
  return m;
}

MethodSpec method_from_name(const std::string& name) {
  for (const auto& m : all_methods())
    if (m.name() == name) return m;
  throw config_error("unknown method: " + name);
}

double target_zero_tolerance(Setup setup) {
  return setup == Setup::kToy ? 1e-12 : 1e-3;
}

RunConfig builtin_grid(const std::string& name) {
  RunConfig cfg;
  cfg.r2_values = {0.2, 0.5, 0.8};
  cfg.opv_values = {5, 10, 50};
  cfg.iterations = 900;
  cfg.methods = all_methods();
  if (name == "toy-full") {
    cfg.setup = Setup::kToy;
    cfg.correlation_ids = toy_correlation_ids();
    cfg.coefficient_ids = coefficient_ids(Setup::kToy);
  } else if (name == "realistic-full") {
    cfg.setup = Setup::kRealistic;
    cfg.correlation_ids = {"realistic"};
    cfg.coefficient_ids = coefficient_ids(Setup::kRealistic);
  } else {
    throw config_error("unknown built-in grid: " + name);
  }
  return cfg;
}

std::vector<Scenario> enumerate_scenarios(const RunConfig& config) {
  if (config.correlation_ids.empty() || config.coefficient_ids.empty() ||
      config.r2_values.empty() || config.opv_values.empty())
    throw config_error("enumerate_scenarios: empty factor list");
  std::vector<double> r2s = config.r2_values;
  std::sort(r2s.begin(), r2s.end());
  std::vector<int> opvs = config.opv_values;
  std::sort(opvs.begin(), opvs.end());

  std::vector<Scenario> out;
  for (const auto& corr : config.correlation_ids)
    for (const auto& coef : config.coefficient_ids)
      for (double r2 : r2s)
        for (int opv : opvs) {
          Scenario sc;
          sc.setup = config.setup;
          sc.correlation_id = corr;
          sc.coefficient_id = coef;
          sc.target_r2 = r2;
          sc.obs_per_variable = opv;
          out.push_back(sc);
        }
  return out;
}

namespace {

std::vector<int> all_indices(int p) {
  std::vector<int> v(p);
  for (int j = 0; j < p; ++j) v[j] = j;
  return v;
}

std::vector<int> support_of(const Eigen::VectorXd& beta) {
  std::vector<int> v;
  for (int j = 0; j < beta.size(); ++j)
    if (beta[j] != 0.0) v.push_back(j);
  return v;
}

Eigen::VectorXd predict(const OlsFit& fit, const Eigen::MatrixXd& x) {
  Eigen::VectorXd yhat = Eigen::VectorXd::Constant(x.rows(), fit.intercept);
  for (std::size_t k = 0; k < fit.model.size(); ++k)
    yhat += x.col(fit.model[k]) * fit.coefficients[static_cast<int>(k)];
  return yhat;
}

// Intervals indexed by variable for outcome assembly.
std::map<int, const SelectiveInterval*> by_variable(const std::vector<SelectiveInterval>& cis) {
  std::map<int, const SelectiveInterval*> m;
  for (const auto& ci : cis) m[ci.variable] = &ci;
  return m;
}

void assemble_outcomes(MethodIterationResult& res, const Dataset& ds, int iteration,
                       const std::string& method, const std::vector<SelectiveInterval>& cis) {
  const int p = static_cast<int>(ds.x_std.cols());
  std::optional<SubmodelTarget> targets;
  if (!res.model.empty()) targets = submodel_target(ds.sigma_true, ds.beta_true, res.model);
  const auto ci_map = by_variable(cis);

  res.outcomes.clear();
  res.outcomes.reserve(p);
  std::map<int, int> model_pos;
  for (std::size_t k = 0; k < res.model.size(); ++k) model_pos[res.model[k]] = static_cast<int>(k);

  for (int j = 0; j < p; ++j) {
    VariableOutcome o;
    o.iteration = iteration;
    o.method = method;
    o.variable = j;
    o.selected = model_pos.count(j) > 0;
    if (o.selected && targets) o.target = targets->targets[model_pos[j]];
    const auto it = ci_map.find(j);
    if (it != ci_map.end()) {
      const SelectiveInterval& ci = *it->second;
      o.estimate = ci.estimate;
      if (ci.degenerate) {
        o.degenerate = true;
        o.failure = kFailDegenerateInterval;
        o.width = kNaN;
      } else {
        o.lower = ci.lower;
        o.upper = ci.upper;
        o.p_value = ci.p_value;
        o.width = ci.width();
        o.flag_infinite = ci.flag_infinite;
        o.flag_excludes_estimate = ci.flag_excludes_estimate;
        if (o.target) {
          o.covered = ci.covers(*o.target);
          o.excludes_zero = !ci.covers(0.0);
        }
      }
    } else if (!res.failure.empty()) {
      o.failure = res.failure;
    }
    res.outcomes.push_back(std::move(o));
  }
}

struct SharedFits {
  OlsFit full;
  double sigma_hat = 0.0;
  Eigen::VectorXd adaptive_w;
  bool adaptive_ok = false;
  std::string adaptive_failure;

  std::optional<PenalizedFit> lasso_cv, alasso_cv;
  std::string lasso_cv_failure, alasso_cv_failure;
  std::optional<double> neg_lambda;
  std::optional<PenalizedFit> lasso_neg, alasso_neg;
  std::optional<PosiConstant> posi;
};

int clamped_folds(int folds, int n) { return std::min(folds, n / 2); }

PenalizedFit cv_select_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                           const Eigen::VectorXd& weights, const RunSettings& st, Rng& rng) {
  const int k = clamped_folds(st.cv_folds, static_cast<int>(x.rows()));
  const TuningResult cv = cv_lambda(x, y, weights, k, rng, st.n_lambda);
  const double lambda = st.cv_rule == CvRule::kMin ? cv.lambda : one_se_lambda(cv);
  PenalizedFit fit = fit_lasso(x, y, lambda, weights);
  if (!fit.converged) throw consistency_error(kFailNonConverged);
  return fit;
}

std::string classify_failure(const std::exception& e) {
  const std::string msg = e.what();
  for (const char* code : {kFailNoSelection, kFailRankDeficient, kFailNonConverged,
                           kFailDegenerateInterval}) {
    if (msg == code) return code;
  }
  if (dynamic_cast<const linalg_error*>(&e)) return kFailRankDeficient;
  return kFailDegenerateInterval;
}

}  // namespace

IterationRecord run_iteration(const Scenario& scenario, const std::vector<MethodSpec>& methods,
                              std::uint64_t master_seed, int iteration,
                              const RunSettings& settings) {
  const auto t0 = std::chrono::steady_clock::now();
  IterationRecord rec;
  rec.scenario_id = scenario.id();
  rec.iteration = iteration;
  rec.seed = derive_seed({master_seed, hash_label(rec.scenario_id),
                          static_cast<std::uint64_t>(iteration)});

  const int p = scenario.p();
  const double alpha = settings.alpha;

  // Dataset- or full-model-level failures poison every method of the
  // iteration with a typed code; the grid keeps going.
  Dataset ds;
  SharedFits shared;
  std::string iteration_failure;
  try {
    Rng rng_data(derive_seed({rec.seed, hash_label("data")}));
    ds = sample_dataset(scenario, rng_data);
    shared.full = ols_fit(ds.x_std, ds.y, all_indices(p));
    shared.sigma_hat = shared.full.residual_sd;
  } catch (const std::exception& e) {
    iteration_failure = classify_failure(e);
  }
  if (!iteration_failure.empty()) {
    for (const auto& method : methods) {
      MethodIterationResult res;
      res.failure = iteration_failure;
      for (int j = 0; j < p; ++j) {
        VariableOutcome o;
        o.iteration = iteration;
        o.method = method.name();
        o.variable = j;
        o.failure = iteration_failure;
        res.outcomes.push_back(std::move(o));
      }
      rec.per_method[method.name()] = std::move(res);
    }
    rec.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rec;
  }

  const int n = static_cast<int>(ds.x_std.rows());
  try {
    shared.adaptive_w = adaptive_weights(ds.x_std, ds.y);
    shared.adaptive_ok = true;
  } catch (const std::exception& e) {
    shared.adaptive_failure = classify_failure(e);
  }

  const Eigen::VectorXd unit_w = Eigen::VectorXd::Ones(p);

  auto need = [&](MethodId id) {
    for (const auto& m : methods)
      if (m.id == id) return true;
    return false;
  };

  // Shared selections: one CV draw per selector, one Negahban penalty, one
  // PoSI constant; all on dedicated sub-streams so method order is immaterial.
  if (need(MethodId::kLassoCvPosi) || need(MethodId::kLassoCvSi)) {
    Rng r(derive_seed({rec.seed, hash_label("cv:lasso")}));
    try {
      shared.lasso_cv = cv_select_fit(ds.x_std, ds.y, unit_w, settings, r);
    } catch (const std::exception& e) {
      shared.lasso_cv_failure = classify_failure(e);
    }
  }
  if (need(MethodId::kALassoCvPosi) || need(MethodId::kALassoCvSi)) {
    Rng r(derive_seed({rec.seed, hash_label("cv:alasso")}));
    if (shared.adaptive_ok) {
      try {
        shared.alasso_cv = cv_select_fit(ds.x_std, ds.y, shared.adaptive_w, settings, r);
      } catch (const std::exception& e) {
        shared.alasso_cv_failure = classify_failure(e);
      }
    } else {
      shared.alasso_cv_failure = shared.adaptive_failure;
    }
  }
  if (need(MethodId::kLassoNegSi) || need(MethodId::kALassoNegSi)) {
    Rng r(derive_seed({rec.seed, hash_label("neg")}));
    shared.neg_lambda = negahban_lambda(ds.x_std, shared.sigma_hat, settings.neg_mc, r).lambda;
    if (need(MethodId::kLassoNegSi))
      shared.lasso_neg = fit_lasso(ds.x_std, ds.y, *shared.neg_lambda, unit_w);
    if (need(MethodId::kALassoNegSi) && shared.adaptive_ok)
      shared.alasso_neg = fit_lasso(ds.x_std, ds.y, *shared.neg_lambda, shared.adaptive_w);
  }
  if (need(MethodId::kLassoCvPosi) || need(MethodId::kALassoCvPosi)) {
    Rng r(derive_seed({rec.seed, hash_label("posi")}));
    const int n_mc = scenario.setup == Setup::kToy ? settings.posi_mc_toy
                                                   : settings.posi_mc_realistic;
    shared.posi = posi_constant(ds.x_std, alpha, p, shared.full.df, n_mc, r);
  }

  auto refit_valid_r2 = [&](const std::vector<int>& model) -> std::optional<double> {
    try {
      const OlsFit refit = ols_fit(ds.x_std, ds.y, model);
      return validation_r2(ds.y_valid, predict(refit, ds.x_std));
    } catch (const std::exception&) {
      return std::nullopt;
    }
  };

  // Full-model sigma_hat SEs on the submodel coordinates, as PoSI requires.
  auto posi_fit = [&](const std::vector<int>& model) {
    OlsFit fit = ols_fit(ds.x_std, ds.y, model);
    for (int k = 0; k < static_cast<int>(model.size()); ++k)
      fit.std_errors[k] = shared.sigma_hat * std::sqrt(fit.xtx_inv(k, k));
    return fit;
  };

  for (const auto& method : methods) {
    const auto m0 = std::chrono::steady_clock::now();
    MethodIterationResult res;
    std::vector<SelectiveInterval> cis;
    try {
      switch (method.id) {
        case MethodId::kFull: {
          res.model = all_indices(p);
          cis = wald_ci(shared.full, alpha);
          res.valid_r2 = refit_valid_r2(res.model);
          break;
        }
        case MethodId::kOracle: {
          res.model = support_of(ds.beta_true);
          const OlsFit fit = ols_fit(ds.x_std, ds.y, res.model);
          cis = wald_ci(fit, alpha);
          res.valid_r2 = refit_valid_r2(res.model);
          break;
        }
        case MethodId::kLassoCvSplit:
        case MethodId::kALassoCvSplit: {
          const bool adaptive = method.adaptive();
          Rng r(derive_seed({rec.seed, hash_label(adaptive ? "split:alasso" : "split:lasso")}));
          Selector selector = [&](const Eigen::MatrixXd& xs, const Eigen::VectorXd& ys,
                                  Rng& rr) {
            return select_lasso_cv(xs, ys, adaptive, settings, rr);
          };
          auto [model, ivs] = split_inference(ds.x_std, ds.y, selector, alpha, r);
          res.model = model;
          cis = std::move(ivs);
          if (res.model.empty()) {
            res.failure = kFailNoSelection;
            res.valid_r2 = refit_valid_r2({});
          } else {
            // predictions must come from the inference half only: rebuild the
            // same split deterministically
            Rng r2(derive_seed({rec.seed, hash_label(adaptive ? "split:alasso" : "split:lasso")}));
            const std::vector<int> perm = r2.permutation(n);
            const int n_sel = n / 2;
            Eigen::MatrixXd x_inf(n - n_sel, p);
            Eigen::VectorXd y_inf(n - n_sel);
            for (int rI = n_sel; rI < n; ++rI) {
              x_inf.row(rI - n_sel) = ds.x_std.row(perm[rI]);
              y_inf[rI - n_sel] = ds.y[perm[rI]];
            }
            const OlsFit bfit = ols_fit(x_inf, y_inf, res.model);
            res.valid_r2 = validation_r2(ds.y_valid, predict(bfit, ds.x_std));
          }
          break;
        }
        case MethodId::kLassoCvPosi:
        case MethodId::kALassoCvPosi: {
          const auto& sel = method.adaptive() ? shared.alasso_cv : shared.lasso_cv;
          const auto& fail = method.adaptive() ? shared.alasso_cv_failure
                                               : shared.lasso_cv_failure;
          if (!sel) throw consistency_error(fail.empty() ? kFailDegenerateInterval : fail);
          res.model = sel->active_set;
          res.lambda = sel->lambda;
          if (res.model.empty()) {
            res.failure = kFailNoSelection;
          } else {
            cis = posi_ci(posi_fit(res.model), *shared.posi, alpha);
          }
          res.valid_r2 = refit_valid_r2(res.model);
          break;
        }
        case MethodId::kLassoCvSi:
        case MethodId::kALassoCvSi:
        case MethodId::kLassoNegSi:
        case MethodId::kALassoNegSi: {
          const bool adaptive = method.adaptive();
          const bool neg = !method.uses_cv();
          const std::optional<PenalizedFit>* fitp;
          std::string fail;
          if (neg) {
            fitp = adaptive ? &shared.alasso_neg : &shared.lasso_neg;
            if (adaptive && !shared.adaptive_ok) fail = shared.adaptive_failure;
          } else {
            fitp = adaptive ? &shared.alasso_cv : &shared.lasso_cv;
            fail = adaptive ? shared.alasso_cv_failure : shared.lasso_cv_failure;
          }
          if (!*fitp) throw consistency_error(fail.empty() ? kFailDegenerateInterval : fail);
          const PenalizedFit& fit = **fitp;
          if (!fit.converged) throw consistency_error(kFailNonConverged);
          res.model = fit.active_set;
          res.lambda = fit.lambda;
          if (res.model.empty()) {
            res.failure = kFailNoSelection;
          } else {
            cis = selective_ci_exact(ds.x_std, ds.y, fit, shared.sigma_hat, alpha, settings.si);
          }
          res.valid_r2 = refit_valid_r2(res.model);
          break;
        }
      }
    } catch (const std::exception& e) {
      res.failure = classify_failure(e);
      res.model.clear();
      cis.clear();
      res.valid_r2.reset();
    }
    for (auto& ci : cis) ci.method = method.name();
    assemble_outcomes(res, ds, iteration, method.name(), cis);
    res.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - m0).count();
    rec.per_method[method.name()] = std::move(res);
  }

  rec.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rec;
}

ScenarioSummary summarize_scenario(const Scenario& scenario,
                                   const std::vector<MethodSpec>& methods,
                                   const std::vector<IterationRecord>& records,
                                   double zero_tol) {
  ScenarioSummary out;
  out.scenario = scenario;
  const int p = scenario.p();
  const auto support = support_of(coefficient_structure(scenario.setup,
                                                        scenario.coefficient_id).beta);
  for (const auto& method : methods) {
    ScenarioMethodSummary s;
    s.method = method.name();
    s.n_iterations = static_cast<int>(records.size());

    std::vector<VariableOutcome> rows;
    double r2_sum = 0.0;
    int r2_count = 0;
    int unstable_iters = 0;
    for (const auto& rec : records) {
      const auto it = rec.per_method.find(s.method);
      if (it == rec.per_method.end()) continue;
      const auto& mres = it->second;
      bool any_unstable = false;
      for (const auto& o : mres.outcomes) {
        any_unstable = any_unstable || o.unstable();
        rows.push_back(o);
      }
      if (any_unstable) ++unstable_iters;
      if (mres.valid_r2) {
        r2_sum += *mres.valid_r2;
        ++r2_count;
      }
      if (!mres.failure.empty()) ++s.failure_counts[mres.failure];
      for (const auto& o : mres.outcomes) {
        if (!o.failure.empty() && o.failure != mres.failure) {
          ++s.failure_counts[o.failure];
          break;  // count once per iteration
        }
      }
    }
    s.general = aggregate_general(rows, zero_tol);
    for (int j = 0; j < p; ++j)
      s.conditional.push_back(aggregate_conditional(rows, j, s.n_iterations, zero_tol));
    s.selection = selection_metrics(rows, support, p, s.n_iterations);
    s.widths = width_summary(rows);
    s.iteration_unstable_rate =
        s.n_iterations > 0 ? static_cast<double>(unstable_iters) / s.n_iterations : 0.0;
    if (r2_count > 0) s.mean_valid_r2 = r2_sum / r2_count;
    out.methods.push_back(std::move(s));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

namespace {

std::string fmt_num(double v) {
  if (std::isnan(v)) return "NA";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  // shortest round-trip form: resumed runs must reload the exact value
  char buf[40];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string fmt_opt(const std::optional<double>& v) { return v ? fmt_num(*v) : "NA"; }
std::string fmt_optb(const std::optional<bool>& v) { return v ? (*v ? "1" : "0") : "NA"; }

double parse_num(const std::string& s) {
  if (s == "NA") return kNaN;
  if (s == "inf") return kInf;
  if (s == "-inf") return -kInf;
  return std::stod(s);
}

std::uint32_t row_crc(const std::string& body) {
  return static_cast<std::uint32_t>(
      ::crc32(0L, reinterpret_cast<const Bytef*>(body.data()),
              static_cast<uInt>(body.size())));
}

constexpr const char* kIterationsHeader =
    "scenario,iteration,method,variable,selected,estimate,lower,upper,p_value,target,"
    "covered,excludes_zero,width,flag_infinite,flag_excludes_estimate,failure,valid_r2,crc";

std::string iteration_rows(const IterationRecord& rec,
                           const std::vector<MethodSpec>& methods) {
  std::string out;
  for (const auto& method : methods) {
    const auto& mres = rec.per_method.at(method.name());
    for (const auto& o : mres.outcomes) {
      std::string body = rec.scenario_id + "," + std::to_string(rec.iteration) + "," +
                         method.name() + "," + std::to_string(o.variable + 1) + "," +
                         (o.selected ? "1" : "0") + "," + fmt_opt(o.estimate) + "," +
                         fmt_opt(o.lower) + "," + fmt_opt(o.upper) + "," + fmt_opt(o.p_value) +
                         "," + fmt_opt(o.target) + "," + fmt_optb(o.covered) + "," +
                         fmt_optb(o.excludes_zero) + "," +
                         (o.interval_available() ? fmt_num(o.width) : "NA") + "," +
                         (o.flag_infinite ? "1" : "0") + "," +
                         (o.flag_excludes_estimate ? "1" : "0") + "," + o.failure + "," +
                         fmt_opt(mres.valid_r2);
      char crc[16];
      std::snprintf(crc, sizeof(crc), "%08x", row_crc(body));
      out += body + "," + crc + "\n";
    }
  }
  return out;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

struct LoadedIterations {
  // scenario -> iteration -> per-method rows (only complete groups)
  std::map<std::string, std::map<int, std::map<std::string, MethodIterationResult>>> groups;
};

// Reads an existing iterations file, verifying every complete row's CRC.
// A trailing line without newline is a crash artifact and is dropped; any
// other integrity violation refuses the resume.
LoadedIterations load_iterations(const std::string& path,
                                 const std::set<std::string>& wanted_scenarios,
                                 int expected_rows_per_group) {
  LoadedIterations out;
  std::ifstream in(path, std::ios::binary);
  if (!in) return out;
  std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (content.empty()) return out;

  std::size_t pos = 0;
  long line_no = 0;
  std::map<std::string, std::map<int, std::map<std::string, std::vector<VariableOutcome>>>> raw;
  std::map<std::string, std::map<int, std::map<std::string, std::optional<double>>>> raw_r2;
  while (pos < content.size()) {
    const std::size_t nl = content.find('\n', pos);
    if (nl == std::string::npos) break;  // incomplete trailing line: drop
    const std::string line = content.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (line_no == 1) {
      if (line != kIterationsHeader)
        throw data_error("iterations file has an unexpected header; refusing resume");
      continue;
    }
    if (line.empty()) continue;
    const std::size_t last = line.rfind(',');
    if (last == std::string::npos)
      throw data_error("iterations file row " + std::to_string(line_no) + " is malformed");
    const std::string body = line.substr(0, last);
    char expect[16];
    std::snprintf(expect, sizeof(expect), "%08x", row_crc(body));
    if (line.substr(last + 1) != expect)
      throw data_error("iterations file row " + std::to_string(line_no) +
                       " failed its integrity check; refusing resume");
    const auto f = split_csv(line);
    if (f.size() != 18)
      throw data_error("iterations file row " + std::to_string(line_no) + " is malformed");
    const std::string& scenario = f[0];
    if (!wanted_scenarios.count(scenario)) continue;
    const int iter = std::stoi(f[1]);
    const std::string& method = f[2];

    VariableOutcome o;
    o.iteration = iter;
    o.method = method;
    o.variable = std::stoi(f[3]) - 1;
    o.selected = f[4] == "1";
    if (f[5] != "NA") o.estimate = parse_num(f[5]);
    if (f[6] != "NA") o.lower = parse_num(f[6]);
    if (f[7] != "NA") o.upper = parse_num(f[7]);
    if (f[8] != "NA") o.p_value = parse_num(f[8]);
    if (f[9] != "NA") o.target = parse_num(f[9]);
    if (f[10] != "NA") o.covered = f[10] == "1";
    if (f[11] != "NA") o.excludes_zero = f[11] == "1";
    o.width = f[12] == "NA" ? kNaN : parse_num(f[12]);
    o.flag_infinite = f[13] == "1";
    o.flag_excludes_estimate = f[14] == "1";
    o.failure = f[15];
    o.degenerate = o.failure == kFailDegenerateInterval && o.selected && !o.covered.has_value();
    raw[scenario][iter][method].push_back(std::move(o));
    raw_r2[scenario][iter][method] = f[16] == "NA" ? std::nullopt
                                                   : std::optional<double>(parse_num(f[16]));
  }

  for (auto& [scenario, iters] : raw) {
    for (auto& [iter, methods] : iters) {
      int rows = 0;
      for (const auto& [m, v] : methods) rows += static_cast<int>(v.size());
      if (rows != expected_rows_per_group) continue;  // incomplete group: re-run
      auto& dst = out.groups[scenario][iter];
      for (auto& [m, v] : methods) {
        MethodIterationResult res;
        for (const auto& o : v)
          if (o.selected) res.model.push_back(o.variable);
        std::sort(res.model.begin(), res.model.end());
        res.valid_r2 = raw_r2[scenario][iter][m];
        res.outcomes = std::move(v);
        std::sort(res.outcomes.begin(), res.outcomes.end(),
                  [](const auto& a, const auto& b) { return a.variable < b.variable; });
        // method-level failure: mirrored on every row when selection failed
        if (!res.outcomes.empty() && !res.outcomes.front().failure.empty() &&
            res.model.empty())
          res.failure = res.outcomes.front().failure;
        dst[m] = std::move(res);
      }
    }
  }
  return out;
}

std::string summary_header(int p) {
  std::string h =
      "scenario,setup,correlation,coefficients,r2,opv,n,method,n_iterations,coverage,power,"
      "type1,true_model_freq,any_fp_freq,median_width,iqr_width,unstable_rate,infinite_rate,"
      "iter_unstable_rate,mean_valid_r2,fail_no_selection,fail_rank_deficient,"
      "fail_non_converged,fail_degenerate_interval";
  const char* blocks[] = {"sel_freq", "cond_cov", "cond_pow", "cond_t1"};
  for (const char* b : blocks)
    for (int j = 1; j <= p; ++j) h += "," + std::string(b) + "_v" + std::to_string(j);
  return h;
}

std::string summary_rows(const ScenarioSummary& sum) {
  std::string out;
  const Scenario& sc = sum.scenario;
  const int p = sc.p();
  for (const auto& m : sum.methods) {
    std::string row = sc.id() + "," + setup_name(sc.setup) + "," + sc.correlation_id + "," +
                      sc.coefficient_id + "," + fmt_num(sc.target_r2) + "," +
                      std::to_string(sc.obs_per_variable) + "," + std::to_string(sc.n()) + "," +
                      m.method + "," + std::to_string(m.n_iterations) + "," +
                      fmt_opt(m.general.coverage) + "," + fmt_opt(m.general.power) + "," +
                      fmt_opt(m.general.type1) + "," + fmt_num(m.selection.true_model_freq) +
                      "," + fmt_num(m.selection.any_false_positive_freq) + "," +
                      fmt_opt(m.widths.median_width) + "," + fmt_opt(m.widths.iqr_width) + "," +
                      fmt_num(m.widths.unstable_rate) + "," + fmt_num(m.widths.infinite_rate) +
                      "," + fmt_num(m.iteration_unstable_rate) + "," +
                      fmt_opt(m.mean_valid_r2);
    for (const char* code : {kFailNoSelection, kFailRankDeficient, kFailNonConverged,
                             kFailDegenerateInterval}) {
      const auto it = m.failure_counts.find(code);
      row += "," + std::to_string(it == m.failure_counts.end() ? 0 : it->second);
    }
    for (int j = 0; j < p; ++j) row += "," + fmt_num(m.conditional[j].selection_freq);
    for (int j = 0; j < p; ++j) row += "," + fmt_opt(m.conditional[j].coverage);
    for (int j = 0; j < p; ++j) row += "," + fmt_opt(m.conditional[j].power);
    for (int j = 0; j < p; ++j) row += "," + fmt_opt(m.conditional[j].type1);
    out += row + "\n";
  }
  return out;
}

}  // namespace

namespace {

std::string config_fingerprint(const RunConfig& c) {
  std::ostringstream os;
  os << setup_name(c.setup) << "|";
  for (const auto& s : c.correlation_ids) os << s << ",";
  os << "|";
  for (const auto& s : c.coefficient_ids) os << s << ",";
  os << "|";
  for (double v : c.r2_values) os << fmt_num(v) << ",";
  os << "|";
  for (int v : c.opv_values) os << v << ",";
  os << "|" << c.iterations << "|" << c.master_seed << "|";
  for (const auto& m : c.methods) os << m.name() << ",";
  os << "|" << fmt_num(c.settings.alpha) << "|" << c.settings.cv_folds << "|"
     << c.settings.n_lambda << "|" << c.settings.neg_mc << "|" << c.settings.posi_mc_toy
     << "|" << c.settings.posi_mc_realistic << "|" << fmt_num(c.settings.si.grid_radius)
     << "|" << c.settings.si.grid_steps;
  return os.str();
}

}  // namespace

RunOutputs run_grid(const RunConfig& config, const std::string& out_dir, int workers,
                    bool quiet) {
  fs::create_directories(out_dir);
  RunOutputs paths;
  paths.iterations_path = (fs::path(out_dir) / "iterations.csv").string();
  paths.summary_path = (fs::path(out_dir) / "summary.csv").string();
  paths.timings_path = (fs::path(out_dir) / "timings.csv").string();
  const std::string manifest_path = (fs::path(out_dir) / "run_manifest.txt").string();

  const std::vector<Scenario> scenarios = enumerate_scenarios(config);
  const int p = scenarios.front().p();
  const int rows_per_group =
      static_cast<int>(config.methods.size()) * p;
  const double zero_tol = target_zero_tolerance(config.setup);

  // A resume must target the identical run configuration.
  const std::string fingerprint = config_fingerprint(config);
  const bool have_prior = fs::exists(paths.iterations_path) &&
                          fs::file_size(paths.iterations_path) > 0;
  if (have_prior) {
    std::ifstream mf(manifest_path);
    std::string prior((std::istreambuf_iterator<char>(mf)), std::istreambuf_iterator<char>());
    if (prior != fingerprint)
      throw data_error("existing output in " + out_dir +
                       " was produced by a different configuration; refusing resume");
  } else {
    std::ofstream mf(manifest_path, std::ios::trunc);
    mf << fingerprint;
  }

  // scenarios already summarized in an earlier run are skipped outright
  std::set<std::string> done_scenarios;
  if (fs::exists(paths.summary_path) && fs::file_size(paths.summary_path) > 0) {
    std::ifstream in(paths.summary_path);
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
      if (first) {
        first = false;
        if (line != summary_header(p))
          throw data_error("summary file has an unexpected header; refusing resume");
        continue;
      }
      const auto f = split_csv(line);
      if (!f.empty()) done_scenarios.insert(f[0]);
    }
  }

  std::set<std::string> wanted;
  for (const auto& sc : scenarios)
    if (!done_scenarios.count(sc.id())) wanted.insert(sc.id());
  const LoadedIterations loaded =
      load_iterations(paths.iterations_path, wanted, rows_per_group);

  const bool fresh_iter = !have_prior;
  std::ofstream iter_out(paths.iterations_path, std::ios::app | std::ios::binary);
  if (!iter_out) throw data_error("cannot open " + paths.iterations_path);
  if (fresh_iter) iter_out << kIterationsHeader << "\n";

  const bool fresh_summary =
      !fs::exists(paths.summary_path) || fs::file_size(paths.summary_path) == 0;
  std::ofstream summary_out(paths.summary_path, std::ios::app | std::ios::binary);
  if (fresh_summary) summary_out << summary_header(p) << "\n";

  const bool fresh_timings =
      !fs::exists(paths.timings_path) || fs::file_size(paths.timings_path) == 0;
  std::ofstream timings_out(paths.timings_path, std::ios::app | std::ios::binary);
  if (fresh_timings) timings_out << "scenario,method,iterations_timed,mean_seconds\n";

  if (workers < 1) workers = 1;

  int scenario_idx = 0;
  for (const auto& sc : scenarios) {
    ++scenario_idx;
    if (done_scenarios.count(sc.id())) continue;
    const auto sc_loaded_it = loaded.groups.find(sc.id());

    std::vector<IterationRecord> records(config.iterations);
    std::vector<bool> was_loaded(config.iterations, false);
    if (sc_loaded_it != loaded.groups.end()) {
      for (const auto& [iter, methods] : sc_loaded_it->second) {
        if (iter < 0 || iter >= config.iterations) continue;
        records[iter].scenario_id = sc.id();
        records[iter].iteration = iter;
        records[iter].per_method = methods;
        was_loaded[iter] = true;
      }
    }

    std::atomic<int> next{0};
    std::mutex mtx;
    std::exception_ptr first_error;
    auto worker = [&]() {
      while (true) {
        const int it = next.fetch_add(1);
        if (it >= config.iterations) return;
        if (was_loaded[it]) continue;
        try {
          IterationRecord rec =
              run_iteration(sc, config.methods, config.master_seed, it, config.settings);
          std::scoped_lock lock(mtx);
          records[it] = std::move(rec);
        } catch (...) {
          std::scoped_lock lock(mtx);
          if (!first_error) first_error = std::current_exception();
          return;
        }
      }
    };
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);

    std::map<std::string, std::pair<double, int>> method_time;
    for (int it = 0; it < config.iterations; ++it) {
      if (!was_loaded[it]) {
        iter_out << iteration_rows(records[it], config.methods);
        for (const auto& [name, mres] : records[it].per_method) {
          method_time[name].first += mres.seconds;
          method_time[name].second += 1;
        }
      }
    }
    iter_out.flush();

    const ScenarioSummary sum = summarize_scenario(sc, config.methods, records, zero_tol);
    summary_out << summary_rows(sum);
    summary_out.flush();

    for (const auto& m : config.methods) {
      const auto [total, count] = method_time[m.name()];
      timings_out << sc.id() << "," << m.name() << "," << count << ","
                  << fmt_num(count > 0 ? total / count : kNaN) << "\n";
    }
    timings_out.flush();

    if (!quiet) {
      std::map<std::string, int> fails;
      for (const auto& m : sum.methods)
        for (const auto& [code, cnt] : m.failure_counts) fails[code] += cnt;
      std::string fail_note;
      for (const auto& [code, cnt] : fails)
        fail_note += " " + code + "=" + std::to_string(cnt);
      std::fprintf(stderr, "[%d/%zu] %s done%s\n", scenario_idx, scenarios.size(),
                   sc.id().c_str(), fail_note.empty() ? "" : (";" + fail_note).c_str());
    }
  }
  return paths;
}

std::vector<double> bootstrap_selection_frequencies(const Eigen::MatrixXd& x,
                                                    const Eigen::VectorXd& y,
                                                    const Selector& selector, int n_boot,
                                                    Rng& rng) {
  if (n_boot < 1) throw config_error("bootstrap_selection_frequencies: n_boot must be >= 1");
  const int n = static_cast<int>(x.rows());
  const int p = static_cast<int>(x.cols());
  std::vector<double> freq(p, 0.0);
  Eigen::MatrixXd xb(n, p);
  Eigen::VectorXd yb(n);
  for (int b = 0; b < n_boot; ++b) {
    for (int i = 0; i < n; ++i) {
      const int row = static_cast<int>(rng.below(n));
      xb.row(i) = x.row(row);
      yb[i] = y[row];
    }
    std::vector<int> model;
    try {
      model = selector(xb, yb, rng);
    } catch (const std::exception&) {
      // a failing resample counts as the empty model
    }
    for (int j : model) freq[j] += 1.0;
  }
  for (double& f : freq) f /= n_boot;
  return freq;
}

std::vector<int> select_lasso_cv(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                 bool adaptive, const RunSettings& settings, Rng& rng,
                                 PenalizedFit* fit_out) {
  Eigen::VectorXd weights = adaptive ? adaptive_weights(x, y)
                                     : Eigen::VectorXd::Ones(x.cols());
  PenalizedFit fit = cv_select_fit(x, y, weights, settings, rng);
  if (fit_out) *fit_out = fit;
  return fit.active_set;
}

}  // namespace selinf
