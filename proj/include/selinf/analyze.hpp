#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "selinf/harness.hpp"

namespace selinf {

struct Table {
  std::vector<std::string> columns;
  Eigen::MatrixXd values;  // rows x columns, numeric
};

// Delimiter-separated text with a header row; the delimiter is sniffed from
// the header (comma, semicolon or tab). Non-numeric cells are errors.
Table read_table(const std::string& path);

// Bundled body-fat study data: drops the one implausible individual (case 42)
// and applies the unit conversions (age in decades, height in dm, weight in
// kg). Outcome column is "siri".
Table load_bodyfat(const std::string& path);

struct AnalyzeVariableReport {
  std::string name;
  bool selected = false;
  std::optional<double> estimate_std;  // standardized scale
  std::optional<double> estimate;      // original units (slope)
  std::optional<double> lower;
  std::optional<double> upper;
  std::optional<double> p_value;
  bool flag_infinite = false;
  bool flag_excludes_estimate = false;
  bool degenerate = false;
  double bootstrap_freq = 0.0;
};

struct AnalyzeMethodReport {
  std::string method;
  std::string failure;  // nonempty if the method could not run
  double lambda = kNaN;
  std::vector<AnalyzeVariableReport> variables;
};

struct AnalyzeOptions {
  double alpha = 0.10;
  int n_boot = 100;
  std::uint64_t seed = 1;
  RunSettings settings;

  // The case-study workflow extracts CV-tuned models at the one-SE point of
  // the curve (the reference tooling's coefficient default); the simulation
  // harness keeps the curve minimum.
  AnalyzeOptions() { settings.cv_rule = CvRule::kOneSe; }
};

struct AnalyzeReport {
  std::vector<std::string> predictors;
  std::vector<AnalyzeMethodReport> methods;
};

// Standardizes the predictors, runs every requested method, and reports
// per-variable estimates, selective CIs (back-transformed to original units
// by the standardization scale), p-values, stability flags and bootstrap
// selection frequencies.
AnalyzeReport analyze_dataset(const Table& table, const std::string& outcome,
                              const std::vector<MethodSpec>& methods,
                              const AnalyzeOptions& options);

std::string format_analyze_report(const AnalyzeReport& report);
std::string analyze_report_csv(const AnalyzeReport& report);

}  // namespace selinf
