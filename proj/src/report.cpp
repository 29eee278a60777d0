#include "selinf/report.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include "selinf/datagen.hpp"

namespace selinf {

namespace {

struct SummaryTable {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  int col(const std::string& name, const std::string& path) const {
    const auto it = std::find(columns.begin(), columns.end(), name);
    if (it == columns.end())
      throw data_error("summary file " + path + " lacks required column " + name);
    return static_cast<int>(it - columns.begin());
  }
};

SummaryTable read_summary(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw data_error("cannot open summary file: " + path);
  SummaryTable t;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::string cur;
    for (char c : line) {
      if (c == ',') {
        cells.push_back(cur);
        cur.clear();
      } else {
        cur += c;
      }
    }
    cells.push_back(cur);
    if (first) {
      t.columns = std::move(cells);
      first = false;
    } else {
      t.rows.push_back(std::move(cells));
    }
  }
  if (t.columns.empty()) throw data_error("summary file is empty: " + path);
  return t;
}

int detect_p(const SummaryTable& t) {
  int p = 0;
  for (const auto& c : t.columns)
    if (c.rfind("sel_freq_v", 0) == 0) ++p;
  return p;
}

}  // namespace

const std::vector<std::string>& report_kinds() {
  static const std::vector<std::string> kinds = {
      "coverage", "model-selection", "freq-vs-coverage", "width", "prediction"};
  return kinds;
}

std::string build_report(const std::string& summary_path, const std::string& kind) {
  const SummaryTable t = read_summary(summary_path);
  std::ostringstream os;

  auto c = [&](const std::string& name) { return t.col(name, summary_path); };

  if (kind == "coverage") {
    const int cs = c("scenario"), cm = c("method"), cc = c("coverage"), cp = c("power"),
              ct = c("type1"), cr = c("r2"), co = c("opv");
    os << "scenario,method,r2,opv,coverage,power,type1\n";
    for (const auto& r : t.rows)
      os << r[cs] << "," << r[cm] << "," << r[cr] << "," << r[co] << "," << r[cc] << ","
         << r[cp] << "," << r[ct] << "\n";
  } else if (kind == "model-selection") {
    const int cs = c("scenario"), cm = c("method"), cf = c("true_model_freq"),
              ca = c("any_fp_freq"), cr = c("r2"), co = c("opv");
    os << "scenario,method,r2,opv,true_model_freq,any_fp_freq\n";
    for (const auto& r : t.rows)
      os << r[cs] << "," << r[cm] << "," << r[cr] << "," << r[co] << "," << r[cf] << ","
         << r[ca] << "\n";
  } else if (kind == "freq-vs-coverage") {
    const int p = detect_p(t);
    const int cs = c("scenario"), cm = c("method"), cc = c("coefficients");
    std::vector<int> freq_cols(p), cov_cols(p);
    for (int j = 0; j < p; ++j) {
      freq_cols[j] = c("sel_freq_v" + std::to_string(j + 1));
      cov_cols[j] = c("cond_cov_v" + std::to_string(j + 1));
    }
    os << "scenario,method,variable,selection_freq,conditional_coverage,is_true_predictor\n";
    for (const auto& r : t.rows) {
      Setup setup = r[c("setup")] == "toy" ? Setup::kToy : Setup::kRealistic;
      const auto coef = coefficient_structure(setup, r[cc]);
      for (int j = 0; j < p; ++j) {
        os << r[cs] << "," << r[cm] << ",v" << (j + 1) << "," << r[freq_cols[j]] << ","
           << r[cov_cols[j]] << "," << (coef.beta[j] != 0.0 ? 1 : 0) << "\n";
      }
    }
  } else if (kind == "width") {
    const int cs = c("scenario"), cm = c("method"), cw = c("median_width"),
              ci = c("iqr_width"), cu = c("unstable_rate"), cf = c("infinite_rate"),
              cu2 = c("iter_unstable_rate");
    os << "scenario,method,median_width,iqr_width,unstable_rate,infinite_rate,"
          "iter_unstable_rate\n";
    for (const auto& r : t.rows)
      os << r[cs] << "," << r[cm] << "," << r[cw] << "," << r[ci] << "," << r[cu] << ","
         << r[cf] << "," << r[cu2] << "\n";
  } else if (kind == "prediction") {
    const int cs = c("scenario"), cm = c("method"), cv = c("mean_valid_r2"), cr = c("r2"),
              co = c("opv");
    os << "scenario,method,r2,opv,mean_valid_r2,r2_gap\n";
    for (const auto& r : t.rows) {
      std::string gap = "NA";
      if (r[cv] != "NA") {
        char buf[40];
        std::snprintf(buf, sizeof(buf), "%.10g", std::stod(r[cv]) - std::stod(r[cr]));
        gap = buf;
      }
      os << r[cs] << "," << r[cm] << "," << r[cr] << "," << r[co] << "," << r[cv] << ","
         << gap << "\n";
    }
  } else {
    throw config_error("unknown report kind: " + kind);
  }
  return os.str();
}

}  // namespace selinf
