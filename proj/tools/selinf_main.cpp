#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <thread>

#include "selinf/analyze.hpp"
#include "selinf/harness.hpp"
#include "selinf/report.hpp"

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

std::vector<selinf::MethodSpec> parse_methods(const std::string& csv) {
  if (csv.empty()) return selinf::all_methods();
  std::vector<selinf::MethodSpec> out;
  std::string cur;
  std::istringstream is(csv);
  while (std::getline(is, cur, ',')) out.push_back(selinf::method_from_name(cur));
  return out;
}

selinf::RunConfig config_from_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw selinf::config_error("cannot open config file: " + path);
  json j = json::parse(in);
  selinf::RunConfig cfg;
  const std::string setup = j.at("setup").get<std::string>();
  if (setup == "toy")
    cfg.setup = selinf::Setup::kToy;
  else if (setup == "realistic")
    cfg.setup = selinf::Setup::kRealistic;
  else
    throw selinf::config_error("config: setup must be 'toy' or 'realistic'");
  cfg.correlation_ids = j.at("correlations").get<std::vector<std::string>>();
  cfg.coefficient_ids = j.at("coefficients").get<std::vector<std::string>>();
  cfg.r2_values = j.at("r2").get<std::vector<double>>();
  cfg.opv_values = j.at("opv").get<std::vector<int>>();
  cfg.iterations = j.value("iterations", 900);
  cfg.master_seed = j.value("seed", 1ULL);
  if (j.contains("methods")) {
    cfg.methods.clear();
    for (const auto& name : j.at("methods"))
      cfg.methods.push_back(selinf::method_from_name(name.get<std::string>()));
  } else {
    cfg.methods = selinf::all_methods();
  }
  cfg.settings.alpha = j.value("alpha", 0.10);
  return cfg;
}

void write_config_manifest(const selinf::RunConfig& cfg, const std::string& out_dir,
                           int workers) {
  json j;
  j["setup"] = selinf::setup_name(cfg.setup);
  j["correlations"] = cfg.correlation_ids;
  j["coefficients"] = cfg.coefficient_ids;
  j["r2"] = cfg.r2_values;
  j["opv"] = cfg.opv_values;
  j["iterations"] = cfg.iterations;
  j["seed"] = cfg.master_seed;
  std::vector<std::string> names;
  for (const auto& m : cfg.methods) names.push_back(m.name());
  j["methods"] = names;
  j["alpha"] = cfg.settings.alpha;
  j["cv_folds"] = cfg.settings.cv_folds;
  j["n_lambda"] = cfg.settings.n_lambda;
  j["neg_mc"] = cfg.settings.neg_mc;
  j["posi_mc_toy"] = cfg.settings.posi_mc_toy;
  j["posi_mc_realistic"] = cfg.settings.posi_mc_realistic;
  j["si_grid_radius"] = cfg.settings.si.grid_radius;
  j["si_grid_steps"] = cfg.settings.si.grid_steps;
  j["workers"] = workers;
  std::ofstream out(fs::path(out_dir) / "run_config.json");
  out << j.dump(2) << "\n";
}

int resolve_workers(int flag_value) {
  if (const char* env = std::getenv("SELINF_WORKERS")) {
    const int v = std::atoi(env);
    if (v >= 1) return v;
  }
  if (flag_value >= 1) return flag_value;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lasso selective inference: simulation grids and case-study analysis"};
  app.require_subcommand(1);

  // simulate
  auto* sim = app.add_subcommand("simulate", "run a scenario grid");
  std::string grid_name, config_path, out_dir = "out", methods_csv;
  int iterations = -1, workers = -1;
  std::uint64_t seed = 0;
  bool have_seed = false;
  double alpha = -1.0;
  sim->add_option("--grid", grid_name, "built-in grid: toy-full or realistic-full");
  sim->add_option("--config", config_path, "JSON config file");
  sim->add_option("--iterations", iterations, "iterations per scenario");
  auto* seed_opt = sim->add_option("--seed", seed, "master seed");
  sim->add_option("--alpha", alpha, "significance level (default 0.10)");
  sim->add_option("--methods", methods_csv, "comma-separated method list (default all)");
  sim->add_option("--out", out_dir, "output directory");
  sim->add_option("--workers", workers, "worker threads (SELINF_WORKERS overrides)");

  // report
  auto* rep = app.add_subcommand("report", "project a summary file into plot data");
  std::string summary_path, kind, rep_out;
  rep->add_option("--summary", summary_path, "summary.csv from a simulate run")->required();
  rep->add_option("--kind", kind, "coverage | model-selection | freq-vs-coverage | width | prediction")
      ->required();
  rep->add_option("--out", rep_out, "output file (default stdout)");

  // analyze
  auto* ana = app.add_subcommand("analyze", "selective inference on a dataset");
  std::string data_path, outcome, ana_methods_csv, ana_out;
  bool use_bodyfat = false;
  std::string bodyfat_path = "data/bodyfat.csv";
  int n_boot = 100;
  std::uint64_t ana_seed = 1;
  double ana_alpha = 0.10;
  ana->add_option("--data", data_path, "delimiter-separated dataset with header");
  ana->add_option("--outcome", outcome, "outcome column name");
  ana->add_flag("--bodyfat", use_bodyfat, "use the bundled body-fat study data");
  ana->add_option("--bodyfat-path", bodyfat_path, "location of the body-fat fixture");
  ana->add_option("--methods", ana_methods_csv, "comma-separated method list");
  ana->add_option("--alpha", ana_alpha, "significance level");
  ana->add_option("--boot", n_boot, "bootstrap resamples for selection frequencies");
  ana->add_option("--seed", ana_seed, "random seed");
  ana->add_option("--out", ana_out, "also write a CSV report here");
  std::string cv_rule = "1se";
  ana->add_option("--cv-rule", cv_rule,
                  "CV-tuned model extraction: '1se' (default) or 'min'");

  try {
    app.parse(argc, argv);
    have_seed = seed_opt->count() > 0;

    if (sim->parsed()) {
      if (grid_name.empty() == config_path.empty())
        throw selinf::config_error("simulate: pass exactly one of --grid / --config");
      selinf::RunConfig cfg =
          grid_name.empty() ? config_from_json(config_path) : selinf::builtin_grid(grid_name);
      if (iterations > 0) cfg.iterations = iterations;
      if (have_seed) cfg.master_seed = seed;
      if (alpha > 0.0) {
        if (alpha >= 1.0) throw selinf::config_error("alpha must be in (0,1)");
        cfg.settings.alpha = alpha;
      }
      if (!methods_csv.empty()) cfg.methods = parse_methods(methods_csv);
      const int w = resolve_workers(workers);
      fs::create_directories(out_dir);
      write_config_manifest(cfg, out_dir, w);
      const auto scenarios = selinf::enumerate_scenarios(cfg);
      std::fprintf(stderr, "%zu scenarios x %d iterations, %d workers\n", scenarios.size(),
                   cfg.iterations, w);
      const auto paths = selinf::run_grid(cfg, out_dir, w);
      std::fprintf(stderr, "wrote %s\nwrote %s\n", paths.iterations_path.c_str(),
                   paths.summary_path.c_str());
    } else if (rep->parsed()) {
      const std::string text = selinf::build_report(summary_path, kind);
      if (rep_out.empty()) {
        std::cout << text;
      } else {
        std::ofstream out(rep_out);
        out << text;
      }
    } else if (ana->parsed()) {
      if (use_bodyfat == !data_path.empty())
        throw selinf::config_error("analyze: pass exactly one of --data / --bodyfat");
      selinf::Table table;
      std::string outcome_col = outcome;
      if (use_bodyfat) {
        table = selinf::load_bodyfat(bodyfat_path);
        outcome_col = "siri";
      } else {
        if (outcome.empty()) throw selinf::config_error("analyze: --outcome is required");
        table = selinf::read_table(data_path);
      }
      std::vector<selinf::MethodSpec> methods;
      if (ana_methods_csv.empty()) {
        for (const auto& m : selinf::all_methods())
          if (m.id != selinf::MethodId::kOracle) methods.push_back(m);
      } else {
        methods = parse_methods(ana_methods_csv);
      }
      selinf::AnalyzeOptions opts;
      opts.alpha = ana_alpha;
      opts.n_boot = n_boot;
      opts.seed = ana_seed;
      if (cv_rule == "min")
        opts.settings.cv_rule = selinf::CvRule::kMin;
      else if (cv_rule != "1se")
        throw selinf::config_error("analyze: --cv-rule must be 'min' or '1se'");
      const auto report = selinf::analyze_dataset(table, outcome_col, methods, opts);
      std::cout << selinf::format_analyze_report(report);
      if (!ana_out.empty()) {
        std::ofstream out(ana_out);
        out << selinf::analyze_report_csv(report);
      }
    }
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return 2;
  } catch (const selinf::config_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
