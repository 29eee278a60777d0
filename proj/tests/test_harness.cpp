#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "selinf/harness.hpp"

using namespace selinf;
namespace fs = std::filesystem;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

RunConfig tiny_config() {
  RunConfig cfg;
  cfg.setup = Setup::kToy;
  cfg.correlation_ids = {"uncorrelated"};
  cfg.coefficient_ids = {"v1"};
  cfg.r2_values = {0.5};
  cfg.opv_values = {10};
  cfg.iterations = 24;
  cfg.master_seed = 42;
  cfg.methods = {method_from_name("Full"), method_from_name("Oracle"),
                 method_from_name("Lasso-CV-SI")};
  return cfg;
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("the ten methods of the comparison are constructible by name") {
  CHECK(all_methods().size() == 10);
  for (const auto& m : all_methods()) {
    const auto parsed = method_from_name(m.name());
    CHECK(parsed.id == m.id);
  }
  CHECK_THROWS_AS(method_from_name("Lasso-AIC-SI"), config_error);
  CHECK(method_from_name("ALasso-CV-SI").adaptive());
  CHECK(!method_from_name("Lasso-Neg-SI").uses_cv());
}

TEST_CASE("built-in grids reproduce the published scenario counts") {
  CHECK(enumerate_scenarios(builtin_grid("toy-full")).size() == 630);
  CHECK(enumerate_scenarios(builtin_grid("realistic-full")).size() == 117);
  CHECK_THROWS_AS(builtin_grid("nope"), config_error);

  RunConfig single = tiny_config();
  CHECK(enumerate_scenarios(single).size() == 1);

  RunConfig empty = tiny_config();
  empty.r2_values.clear();
  CHECK_THROWS_AS(enumerate_scenarios(empty), config_error);
}

TEST_CASE("scenario order is canonical") {
  const auto scenarios = enumerate_scenarios(builtin_grid("toy-full"));
  CHECK(scenarios.front().correlation_id == "uncorrelated");
  CHECK(scenarios.front().coefficient_id == "v1");
  CHECK(scenarios.front().target_r2 == 0.2);
  CHECK(scenarios.front().obs_per_variable == 5);
  CHECK(scenarios[1].obs_per_variable == 10);
  CHECK(scenarios[2].obs_per_variable == 50);
  CHECK(scenarios[3].target_r2 == 0.5);
}

TEST_CASE("iterations are bit-reproducible from their seed triplet") {
  const auto cfg = tiny_config();
  const auto scenarios = enumerate_scenarios(cfg);
  const auto r1 = run_iteration(scenarios[0], cfg.methods, cfg.master_seed, 3, cfg.settings);
  const auto r2 = run_iteration(scenarios[0], cfg.methods, cfg.master_seed, 3, cfg.settings);
  REQUIRE(r1.per_method.size() == r2.per_method.size());
  for (const auto& [name, a] : r1.per_method) {
    const auto& b = r2.per_method.at(name);
    CHECK(a.model == b.model);
    REQUIRE(a.outcomes.size() == b.outcomes.size());
    for (std::size_t k = 0; k < a.outcomes.size(); ++k) {
      CHECK(a.outcomes[k].selected == b.outcomes[k].selected);
      if (a.outcomes[k].estimate)
        CHECK(*a.outcomes[k].estimate == *b.outcomes[k].estimate);
      if (a.outcomes[k].lower) CHECK(*a.outcomes[k].lower == *b.outcomes[k].lower);
    }
  }
}

TEST_CASE("oracle always uses the true support and Full always reports p intervals") {
  RunConfig cfg = tiny_config();
  cfg.methods = {method_from_name("Full"), method_from_name("Oracle")};
  const auto scenarios = enumerate_scenarios(cfg);
  for (int it = 0; it < 8; ++it) {
    const auto rec = run_iteration(scenarios[0], cfg.methods, 7, it, cfg.settings);
    CHECK(rec.per_method.at("Oracle").model == std::vector<int>{0});
    const auto& full = rec.per_method.at("Full");
    CHECK(full.model.size() == 4);
    int with_interval = 0;
    for (const auto& o : full.outcomes)
      if (o.interval_available()) ++with_interval;
    CHECK(with_interval == 4);
  }
}

TEST_CASE("grid runs are identical across worker counts and resumable") {
  const auto cfg = tiny_config();

  TempDir d1("selinf_w1");
  TempDir d4("selinf_w4");
  run_grid(cfg, d1.path.string(), 1, true);
  run_grid(cfg, d4.path.string(), 4, true);
  CHECK(slurp((d1.path / "summary.csv").string()) ==
        slurp((d4.path / "summary.csv").string()));
  CHECK(slurp((d1.path / "iterations.csv").string()) ==
        slurp((d4.path / "iterations.csv").string()));

  // simulate an interrupted run: keep the header and the first 8 complete
  // iteration groups, drop the summary, then resume
  TempDir dres("selinf_resume");
  run_grid(cfg, dres.path.string(), 2, true);
  const std::string full_iter = slurp((dres.path / "iterations.csv").string());
  const std::string full_summary = slurp((dres.path / "summary.csv").string());

  std::istringstream is(full_iter);
  std::string line, truncated;
  int kept = 0;
  const int rows_per_group = 3 * 4;  // methods x p
  while (std::getline(is, line)) {
    truncated += line + "\n";
    if (++kept > 8 * rows_per_group) break;  // header plus eight groups
  }
  {
    std::ofstream out(dres.path / "iterations.csv", std::ios::trunc | std::ios::binary);
    out << truncated;
  }
  fs::remove(dres.path / "summary.csv");
  fs::remove(dres.path / "timings.csv");
  run_grid(cfg, dres.path.string(), 2, true);
  CHECK(slurp((dres.path / "summary.csv").string()) == full_summary);

  // a corrupted complete row refuses the resume
  TempDir dbad("selinf_corrupt");
  run_grid(cfg, dbad.path.string(), 2, true);
  std::string content = slurp((dbad.path / "iterations.csv").string());
  const auto pos = content.find("Full");
  content[pos + 60] = content[pos + 60] == '1' ? '2' : '1';
  {
    std::ofstream out(dbad.path / "iterations.csv", std::ios::trunc | std::ios::binary);
    out << content;
  }
  fs::remove(dbad.path / "summary.csv");
  CHECK_THROWS_AS(run_grid(cfg, dbad.path.string(), 2, true), data_error);

  // a different configuration refuses to reuse the directory
  TempDir dcfg("selinf_cfgmismatch");
  run_grid(cfg, dcfg.path.string(), 2, true);
  RunConfig other = cfg;
  other.master_seed = 43;
  fs::remove(dcfg.path / "summary.csv");
  CHECK_THROWS_AS(run_grid(other, dcfg.path.string(), 2, true), data_error);
}

TEST_CASE("bootstrap frequencies are exact for a deterministic selector") {
  Rng rng(5);
  Eigen::MatrixXd x(20, 2);
  for (int i = 0; i < 20; ++i)
    for (int j = 0; j < 2; ++j) x(i, j) = rng.normal();
  Eigen::VectorXd y = x.col(0);
  Selector fixed = [](const Eigen::MatrixXd&, const Eigen::VectorXd&, Rng&) {
    return std::vector<int>{0};
  };
  const auto freq = bootstrap_selection_frequencies(x, y, fixed, 25, rng);
  CHECK(freq[0] == doctest::Approx(1.0));
  CHECK(freq[1] == doctest::Approx(0.0));
}
