#pragma once

#include <Eigen/Dense>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "selinf/datagen.hpp"
#include "selinf/estimands.hpp"
#include "selinf/inference.hpp"
#include "selinf/stats.hpp"
#include "selinf/tuning.hpp"

namespace selinf {

// The ten method rows of the comparison: two references plus every
// selector/tuner/inference combination studied.
enum class MethodId {
  kFull,
  kOracle,
  kLassoCvSplit,
  kLassoCvPosi,
  kLassoCvSi,
  kLassoNegSi,
  kALassoCvSplit,
  kALassoCvPosi,
  kALassoCvSi,
  kALassoNegSi,
};

struct MethodSpec {
  MethodId id;
  bool adaptive() const;
  bool uses_cv() const;
  std::string name() const;
};

MethodSpec method_from_name(const std::string& name);
const std::vector<MethodSpec>& all_methods();

// Failure taxonomy codes recorded per method-iteration.
inline constexpr const char* kFailNoSelection = "no-selection";
inline constexpr const char* kFailRankDeficient = "rank-deficient";
inline constexpr const char* kFailNonConverged = "non-converged";
inline constexpr const char* kFailDegenerateInterval = "degenerate-interval";

struct RunSettings {
  double alpha = 0.10;
  int cv_folds = 10;
  int n_lambda = 100;
  int neg_mc = 1000;
  int posi_mc_toy = 1000;
  int posi_mc_realistic = 500;
  CvRule cv_rule = CvRule::kMin;  // the simulation study tunes at the minimum
  SiOptions si;
};

struct MethodIterationResult {
  std::string failure;  // method-level failure code, empty when the method ran
  std::vector<int> model;
  double lambda = kNaN;
  std::optional<double> valid_r2;
  std::vector<VariableOutcome> outcomes;  // one per candidate variable
  double seconds = 0.0;
};

struct IterationRecord {
  std::string scenario_id;
  int iteration = 0;
  std::uint64_t seed = 0;
  std::map<std::string, MethodIterationResult> per_method;
  double wall_seconds = 0.0;
};

struct RunConfig {
  Setup setup = Setup::kToy;
  std::vector<std::string> correlation_ids;
  std::vector<std::string> coefficient_ids;
  std::vector<double> r2_values;
  std::vector<int> opv_values;
  int iterations = 900;
  std::uint64_t master_seed = 1;
  std::vector<MethodSpec> methods;
  RunSettings settings;
};

// Built-in grids "toy-full" (630 scenarios) and "realistic-full" (117).
RunConfig builtin_grid(const std::string& name);

// Full factorial product in canonical order: correlation id, coefficient id,
// R^2 ascending, observations-per-variable ascending.
std::vector<Scenario> enumerate_scenarios(const RunConfig& config);

IterationRecord run_iteration(const Scenario& scenario, const std::vector<MethodSpec>& methods,
                              std::uint64_t master_seed, int iteration,
                              const RunSettings& settings);

struct ScenarioMethodSummary {
  std::string method;
  int n_iterations = 0;
  GeneralEstimands general;
  std::vector<ConditionalEstimands> conditional;  // per variable
  SelectionMetrics selection;
  WidthSummary widths;
  double iteration_unstable_rate = 0.0;  // iterations with any unstable interval
  std::optional<double> mean_valid_r2;
  std::map<std::string, int> failure_counts;
};

struct ScenarioSummary {
  Scenario scenario;
  std::vector<ScenarioMethodSummary> methods;
};

// Deterministic aggregation of per-variable rows into the summary blocks.
ScenarioSummary summarize_scenario(const Scenario& scenario,
                                   const std::vector<MethodSpec>& methods,
                                   const std::vector<IterationRecord>& records,
                                   double zero_tol);

// Zero-target classification tolerance per setup (exact block designs vs the
// Monte-Carlo population matrix).
double target_zero_tolerance(Setup setup);

struct RunOutputs {
  std::string iterations_path;
  std::string summary_path;
  std::string timings_path;
};

// Runs every scenario of the config with `workers` threads at iteration
// granularity, streaming iteration rows append-only (one CRC-marked row per
// scenario/iteration/method/variable) and writing one summary row per
// scenario/method. Completed (scenario, iteration) groups found in an
// existing iterations file are skipped; rows failing their integrity check
// stop the run before any work.
RunOutputs run_grid(const RunConfig& config, const std::string& out_dir, int workers,
                    bool quiet = false);

// Per-variable inclusion fractions over bootstrap resamples of the rows.
std::vector<double> bootstrap_selection_frequencies(const Eigen::MatrixXd& x,
                                                    const Eigen::VectorXd& y,
                                                    const Selector& selector, int n_boot,
                                                    Rng& rng);

// Selection front-ends shared by the harness, the bootstrap and the case
// study: Lasso/ALasso with CV-tuned or Negahban penalty on given data.
std::vector<int> select_lasso_cv(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                 bool adaptive, const RunSettings& settings, Rng& rng,
                                 PenalizedFit* fit_out = nullptr);

}  // namespace selinf
