#include "selinf/analyze.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "selinf/tuning.hpp"

namespace selinf {

namespace {

char sniff_delimiter(const std::string& header) {
  const char candidates[] = {',', ';', '\t'};
  char best = ',';
  long best_count = -1;
  for (char c : candidates) {
    const long count = std::count(header.begin(), header.end(), c);
    if (count > best_count) {
      best_count = count;
      best = c;
    }
  }
  return best;
}

std::vector<std::string> split_at(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == delim) {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

Table read_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open dataset file: " + path);
  std::string line;
  if (!std::getline(in, line)) throw data_error("empty dataset file: " + path);
  const char delim = sniff_delimiter(line);
  Table t;
  t.columns = split_at(line, delim);

  std::vector<std::vector<double>> rows;
  long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split_at(line, delim);
    if (cells.size() != t.columns.size())
      throw data_error(path + ": row " + std::to_string(line_no) + " has " +
                       std::to_string(cells.size()) + " cells, expected " +
                       std::to_string(t.columns.size()));
    std::vector<double> row(cells.size());
    for (std::size_t c = 0; c < cells.size(); ++c) {
      try {
        std::size_t used = 0;
        row[c] = std::stod(cells[c], &used);
        if (used != cells[c].size()) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        throw data_error(path + ": non-numeric cell '" + cells[c] + "' in column " +
                         t.columns[c] + ", row " + std::to_string(line_no));
      }
    }
    rows.push_back(std::move(row));
  }
  t.values.resize(static_cast<int>(rows.size()), static_cast<int>(t.columns.size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c)
      t.values(static_cast<int>(r), static_cast<int>(c)) = rows[r][c];
  return t;
}

Table load_bodyfat(const std::string& path) {
  Table raw = read_table(path);
  auto col = [&](const std::string& name) {
    const auto it = std::find(raw.columns.begin(), raw.columns.end(), name);
    if (it == raw.columns.end()) throw data_error("body-fat fixture lacks column " + name);
    return static_cast<int>(it - raw.columns.begin());
  };
  const int c_case = col("case");
  // Case 42 carries a physically impossible height (29.5 in) and is dropped,
  // as in the source publication.
  std::vector<int> keep;
  for (int r = 0; r < raw.values.rows(); ++r)
    if (raw.values(r, c_case) != 42.0) keep.push_back(r);

  Table t;
  t.columns = {"siri", "age",   "weight", "height", "neck",    "chest", "abdom",
               "hip",  "thigh", "knee",   "ankle",  "biceps",  "forearm", "wrist"};
  t.values.resize(static_cast<int>(keep.size()), static_cast<int>(t.columns.size()));
  for (std::size_t i = 0; i < keep.size(); ++i) {
    const int r = keep[i];
    for (std::size_t c = 0; c < t.columns.size(); ++c)
      t.values(static_cast<int>(i), static_cast<int>(c)) = raw.values(r, col(t.columns[c]));
  }
  // years -> decades, inches -> dm, pounds -> kg
  t.values.col(1) /= 10.0;
  t.values.col(3) *= 0.254;
  t.values.col(2) *= 0.45359237;
  return t;
}

namespace {

struct Standardized {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
  Eigen::VectorXd col_sd;
  std::vector<std::string> names;
};

Standardized standardize_table(const Table& table, const std::string& outcome) {
  const auto it = std::find(table.columns.begin(), table.columns.end(), outcome);
  if (it == table.columns.end()) throw data_error("outcome column not found: " + outcome);
  const int yc = static_cast<int>(it - table.columns.begin());
  const int n = static_cast<int>(table.values.rows());
  const int p = static_cast<int>(table.columns.size()) - 1;
  if (n <= p + 2) throw data_error("analyze: needs n > p + 2 observations");

  Standardized s;
  s.y = table.values.col(yc);
  Eigen::MatrixXd x(n, p);
  int at = 0;
  for (int c = 0; c < static_cast<int>(table.columns.size()); ++c) {
    if (c == yc) continue;
    x.col(at) = table.values.col(c);
    s.names.push_back(table.columns[c]);
    ++at;
  }
  Eigen::VectorXd mean;
  try {
    standardize_columns(x, s.x, mean, s.col_sd);
  } catch (const data_error& e) {
    throw data_error(std::string("analyze: ") + e.what() + " is constant");
  }
  return s;
}

Selector method_selector(const MethodSpec& method, const RunSettings& settings) {
  switch (method.id) {
    case MethodId::kFull:
      return [](const Eigen::MatrixXd& x, const Eigen::VectorXd&, Rng&) {
        std::vector<int> all(x.cols());
        for (int j = 0; j < x.cols(); ++j) all[j] = j;
        return all;
      };
    case MethodId::kLassoCvSplit:
    case MethodId::kALassoCvSplit: {
      const bool adaptive = method.adaptive();
      return [adaptive, settings](const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                  Rng& rng) {
        Selector inner = [adaptive, settings](const Eigen::MatrixXd& xs,
                                              const Eigen::VectorXd& ys, Rng& rr) {
          return select_lasso_cv(xs, ys, adaptive, settings, rr);
        };
        // selection part of the split procedure only
        const int n = static_cast<int>(x.rows());
        const std::vector<int> perm = rng.permutation(n);
        const int n_sel = n / 2;
        Eigen::MatrixXd xs(n_sel, x.cols());
        Eigen::VectorXd ys(n_sel);
        for (int r = 0; r < n_sel; ++r) {
          xs.row(r) = x.row(perm[r]);
          ys[r] = y[perm[r]];
        }
        return inner(xs, ys, rng);
      };
    }
    case MethodId::kLassoNegSi:
    case MethodId::kALassoNegSi: {
      const bool adaptive = method.adaptive();
      return [adaptive, settings](const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                  Rng& rng) {
        std::vector<int> all(x.cols());
        for (int j = 0; j < x.cols(); ++j) all[j] = j;
        const OlsFit full = ols_fit(x, y, all);
        const double lambda =
            negahban_lambda(x, full.residual_sd, settings.neg_mc, rng).lambda;
        const Eigen::VectorXd w = adaptive ? adaptive_weights(x, y)
                                           : Eigen::VectorXd::Ones(x.cols());
        return fit_lasso(x, y, lambda, w).active_set;
      };
    }
    default: {
      const bool adaptive = method.adaptive();
      return [adaptive, settings](const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                  Rng& rng) {
        return select_lasso_cv(x, y, adaptive, settings, rng);
      };
    }
  }
}

}  // namespace

AnalyzeReport analyze_dataset(const Table& table, const std::string& outcome,
                              const std::vector<MethodSpec>& methods,
                              const AnalyzeOptions& options) {
  for (const auto& m : methods)
    if (m.id == MethodId::kOracle)
      throw config_error("analyze: the Oracle method needs known truth and is not available");

  const Standardized s = standardize_table(table, outcome);
  const int n = static_cast<int>(s.x.rows());
  const int p = static_cast<int>(s.x.cols());
  const double alpha = options.alpha;
  const RunSettings& settings = options.settings;

  std::vector<int> all(p);
  for (int j = 0; j < p; ++j) all[j] = j;
  const OlsFit full = ols_fit(s.x, s.y, all);
  const double sigma_hat = full.residual_sd;

  std::optional<PosiConstant> posi;
  auto posi_for = [&]() -> const PosiConstant& {
    if (!posi) {
      Rng r(derive_seed({options.seed, hash_label("posi")}));
      posi = posi_constant(s.x, alpha, p, full.df, settings.posi_mc_toy, r);
    }
    return *posi;
  };

  AnalyzeReport report;
  report.predictors = s.names;

  for (const auto& method : methods) {
    AnalyzeMethodReport mr;
    mr.method = method.name();
    std::vector<int> model;
    std::vector<SelectiveInterval> cis;
    try {
      switch (method.id) {
        case MethodId::kFull: {
          model = all;
          cis = wald_ci(full, alpha);
          break;
        }
        case MethodId::kLassoCvSplit:
        case MethodId::kALassoCvSplit: {
          Rng r(derive_seed({options.seed, hash_label(mr.method), hash_label("run")}));
          const bool adaptive = method.adaptive();
          Selector inner = [&](const Eigen::MatrixXd& xs, const Eigen::VectorXd& ys,
                               Rng& rr) {
            return select_lasso_cv(xs, ys, adaptive, settings, rr);
          };
          std::tie(model, cis) = split_inference(s.x, s.y, inner, alpha, r);
          if (model.empty()) mr.failure = kFailNoSelection;
          break;
        }
        case MethodId::kLassoCvPosi:
        case MethodId::kALassoCvPosi: {
          Rng r(derive_seed({options.seed, hash_label(mr.method), hash_label("run")}));
          PenalizedFit fit;
          model = select_lasso_cv(s.x, s.y, method.adaptive(), settings, r, &fit);
          mr.lambda = fit.lambda;
          if (model.empty()) {
            mr.failure = kFailNoSelection;
          } else {
            OlsFit sub = ols_fit(s.x, s.y, model);
            for (int k = 0; k < static_cast<int>(model.size()); ++k)
              sub.std_errors[k] = sigma_hat * std::sqrt(sub.xtx_inv(k, k));
            cis = posi_ci(sub, posi_for(), alpha);
          }
          break;
        }
        default: {  // SI under CV or Neg tuning
          Rng r(derive_seed({options.seed, hash_label(mr.method), hash_label("run")}));
          PenalizedFit fit;
          if (method.uses_cv()) {
            select_lasso_cv(s.x, s.y, method.adaptive(), settings, r, &fit);
          } else {
            const double lambda =
                negahban_lambda(s.x, sigma_hat, settings.neg_mc, r).lambda;
            const Eigen::VectorXd w = method.adaptive() ? adaptive_weights(s.x, s.y)
                                                        : Eigen::VectorXd::Ones(p);
            fit = fit_lasso(s.x, s.y, lambda, w);
          }
          model = fit.active_set;
          mr.lambda = fit.lambda;
          if (model.empty()) {
            mr.failure = kFailNoSelection;
          } else {
            cis = selective_ci_exact(s.x, s.y, fit, sigma_hat, alpha, settings.si);
          }
          break;
        }
      }
    } catch (const std::exception& e) {
      mr.failure = e.what();
      model.clear();
      cis.clear();
    }

    Rng boot_rng(derive_seed({options.seed, hash_label(mr.method), hash_label("bootstrap")}));
    const std::vector<double> freq = bootstrap_selection_frequencies(
        s.x, s.y, method_selector(method, settings), options.n_boot, boot_rng);

    std::map<int, const SelectiveInterval*> ci_map;
    for (const auto& ci : cis) ci_map[ci.variable] = &ci;
    std::vector<bool> in_model(p, false);
    for (int j : model) in_model[j] = true;

    for (int j = 0; j < p; ++j) {
      AnalyzeVariableReport vr;
      vr.name = s.names[j];
      vr.selected = in_model[j];
      vr.bootstrap_freq = freq[j];
      const auto it = ci_map.find(j);
      if (it != ci_map.end()) {
        const SelectiveInterval& ci = *it->second;
        vr.estimate_std = ci.estimate;
        vr.estimate = ci.estimate / s.col_sd[j];
        if (ci.degenerate) {
          vr.degenerate = true;
        } else {
          vr.lower = ci.lower / s.col_sd[j];
          vr.upper = ci.upper / s.col_sd[j];
          vr.p_value = ci.p_value;
          vr.flag_infinite = ci.flag_infinite;
          vr.flag_excludes_estimate = ci.flag_excludes_estimate;
        }
      }
      mr.variables.push_back(std::move(vr));
    }
    report.methods.push_back(std::move(mr));
  }
  return report;
}

namespace {

std::string fmt(double v, int prec = 4) {
  if (std::isnan(v)) return "NA";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
  return buf;
}

std::string fmt_opt4(const std::optional<double>& v) { return v ? fmt(*v) : "NA"; }

}  // namespace

std::string format_analyze_report(const AnalyzeReport& report) {
  std::ostringstream os;
  for (const auto& mr : report.methods) {
    os << "== " << mr.method;
    if (!std::isnan(mr.lambda)) os << "  (lambda = " << fmt(mr.lambda) << ")";
    os << " ==\n";
    if (!mr.failure.empty()) os << "  [" << mr.failure << "]\n";
    os << "  variable    sel  boot%   estimate      lower      upper    p-value  flags\n";
    for (const auto& vr : mr.variables) {
      char line[160];
      std::string flags;
      if (vr.flag_infinite) flags += "I";
      if (vr.flag_excludes_estimate) flags += "E";
      if (vr.degenerate) flags += "D";
      std::snprintf(line, sizeof(line), "  %-10s  %3s  %5.0f  %9s  %9s  %9s  %9s  %s\n",
                    vr.name.c_str(), vr.selected ? "yes" : "no", 100.0 * vr.bootstrap_freq,
                    fmt_opt4(vr.estimate).c_str(), fmt_opt4(vr.lower).c_str(),
                    fmt_opt4(vr.upper).c_str(), fmt_opt4(vr.p_value).c_str(), flags.c_str());
      os << line;
    }
    os << "\n";
  }
  return os.str();
}

std::string analyze_report_csv(const AnalyzeReport& report) {
  std::ostringstream os;
  os << "method,variable,selected,bootstrap_freq,estimate_std,estimate,lower,upper,p_value,"
        "flag_infinite,flag_excludes_estimate,degenerate,failure\n";
  for (const auto& mr : report.methods) {
    for (const auto& vr : mr.variables) {
      os << mr.method << "," << vr.name << "," << (vr.selected ? 1 : 0) << ","
         << fmt(vr.bootstrap_freq, 10) << "," << fmt_opt4(vr.estimate_std) << ","
         << fmt_opt4(vr.estimate) << "," << fmt_opt4(vr.lower) << "," << fmt_opt4(vr.upper)
         << "," << fmt_opt4(vr.p_value) << "," << (vr.flag_infinite ? 1 : 0) << ","
         << (vr.flag_excludes_estimate ? 1 : 0) << "," << (vr.degenerate ? 1 : 0) << ","
         << mr.failure << "\n";
    }
  }
  return os.str();
}

}  // namespace selinf
