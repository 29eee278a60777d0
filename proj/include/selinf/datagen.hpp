#pragma once

#include <Eigen/Dense>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "selinf/rng.hpp"

namespace selinf {

class config_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class data_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Latent-variable correlation matrix: symmetric, unit diagonal, positive
// definite (Cholesky must succeed).
struct CorrelationDesign {
  std::string name;
  Eigen::MatrixXd sigma;
};

// Column maps from the latent draw to the final predictors plus optional
// winsorization (clamp at median +- multiplier * IQR of the generated column).
struct TransformPipeline {
  std::vector<std::function<double(const Eigen::VectorXd&)>> column_transforms;
  std::vector<std::optional<double>> truncate_multipliers;  // one per output column

  int output_dim() const { return static_cast<int>(column_transforms.size()); }
  bool is_identity = false;  // toy pipeline marker

  // Applies all transforms to latent rows, then winsorizes flagged columns.
  Eigen::MatrixXd apply(const Eigen::MatrixXd& latent) const;
};

struct CoefficientStructure {
  std::string name;
  Eigen::VectorXd beta;
};

enum class Setup { kToy, kRealistic };

std::string setup_name(Setup s);

struct Scenario {
  Setup setup = Setup::kToy;
  std::string correlation_id;
  std::string coefficient_id;
  double target_r2 = 0.5;
  int obs_per_variable = 10;

  int p() const { return setup == Setup::kToy ? 4 : 17; }
  int n() const { return obs_per_variable * p(); }
  std::string id() const;
};

struct Dataset {
  Eigen::MatrixXd x_raw;
  Eigen::MatrixXd x_std;   // columns with mean 0 and (n-denominator) SD 1
  Eigen::VectorXd y;
  Eigen::VectorXd y_valid;
  Eigen::MatrixXd sigma_true;  // population covariance of standardized predictors
  Eigen::VectorXd beta_true;
  double noise_sd = 0.0;
  Eigen::VectorXd col_mean;  // standardization shift per column
  Eigen::VectorXd col_sd;    // standardization scale per column
};

// The 7 toy designs: uncorrelated, correlated(+-0.8) and the 2x2 / 1+3 block
// variants.
CorrelationDesign build_toy_correlation(const std::string& design_id);
const std::vector<std::string>& toy_correlation_ids();

// 15-latent-variable design with 17 output transforms, mirroring the
// realistic clinical-data generator.
std::pair<CorrelationDesign, TransformPipeline> build_realistic_design();

CoefficientStructure coefficient_structure(Setup setup, const std::string& id);
const std::vector<std::string>& coefficient_ids(Setup setup);

TransformPipeline toy_pipeline();

inline constexpr int kRedrawCap = 100;

Dataset sample_dataset(const Scenario& scenario, Rng& rng);

// Toy: returns the design matrix exactly. Realistic: Monte-Carlo estimate of
// the correlation matrix of the standardized transformed variables.
Eigen::MatrixXd population_sigma(const CorrelationDesign& design,
                                 const TransformPipeline& pipeline, long n_mc, Rng& rng);

// Population covariance of the standardized predictors for a scenario; the
// realistic matrix is estimated once with a fixed internal seed and cached.
const Eigen::MatrixXd& scenario_population_sigma(Setup setup, const std::string& correlation_id);

// Standardize columns to mean zero, SD one (n denominator). Throws data_error
// on a constant column.
void standardize_columns(const Eigen::MatrixXd& x, Eigen::MatrixXd& x_std,
                         Eigen::VectorXd& mean, Eigen::VectorXd& sd);

}  // namespace selinf
