// sensmpc: run the three-mode closed-loop comparison or re-check its outputs.
//
//   sensmpc run <config.yaml>     exit 0 ok, 1 configuration error, 2 runtime failure
//   sensmpc summarize <dir>
//
// SENSMPC_OUTPUT_DIR overrides the output directory of the configuration.

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "sensmpc_cli/config.hpp"
#include "sensmpc_cli/summary.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kConfigFailure = 1;
constexpr int kRuntimeFailure = 2;

int run_command(const std::string & config_path)
{
  using namespace sensmpc;
  ExperimentConfig cfg;
  try {
    std::ifstream in(config_path);
    if (!in) { throw ConfigError("cannot open config " + config_path); }
    std::stringstream text;
    text << in.rdbuf();
    const auto base = std::filesystem::path(config_path).parent_path();
    cfg = cli::parse_config(text.str(), base.empty() ? "." : base.string());
    if (const char * env = std::getenv("SENSMPC_OUTPUT_DIR"); env && *env) { cfg.output_dir = env; }
  } catch (const Error & e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigFailure;
  }

  try {
    const ExperimentResult res = run_experiment(cfg);
    cli::write_outputs(cfg.output_dir, cfg, res);
    for (const auto & r : res.runs) {
      std::printf("%-20s cost %.10g  steps %zu  %.1f s%s\n", to_string(r.mode), r.cost, r.record.size(), r.seconds,
        r.record.truncated ? "  TRUNCATED" : "");
      if (r.record.truncated) { std::fprintf(stderr, "%s: %s\n", to_string(r.mode), r.record.diagnostic.c_str()); }
    }
    for (MpcMode m : {MpcMode::sensitivity_update, MpcMode::full_reopt}) {
      if (const auto v = res.improvement(m)) { std::printf("improvement %-20s %.6f %%\n", to_string(m), *v); }
    }
    if (res.certificate) {
      const auto & p = res.certificate->performance;
      std::printf("certificate: alpha %.6g  epsilon %.6g  lhs %.6g  rhs %.6g  bound %s  practically stable %s\n", p.alpha, p.epsilon,
        p.bound_lhs, p.bound_rhs, p.bound_satisfied ? "satisfied" : "violated",
        res.certificate->stability.practically_stable() ? "yes" : "no");
    } else if (!res.certificate_error.empty()) {
      std::fprintf(stderr, "certificate unavailable: %s\n", res.certificate_error.c_str());
    }
    std::printf("outputs in %s\n", cfg.output_dir.c_str());
    return res.any_truncated() ? kRuntimeFailure : kOk;
  } catch (const ConfigError & e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigFailure;
  } catch (const std::exception & e) {
    std::cerr << "runtime failure: " << e.what() << '\n';
    return kRuntimeFailure;
  }
}

int summarize_command(const std::string & dir)
{
  using namespace sensmpc;
  if (!std::filesystem::is_directory(dir)) {
    std::cerr << "not a directory: " << dir << '\n';
    return kConfigFailure;
  }
  try {
    const auto check = cli::summarize_directory(dir);
    for (const auto & m : check.modes) {
      std::printf("%-20s cost %.10g  steps %zu", m.mode.c_str(), m.cost, m.steps);
      if (m.recorded_cost) { std::printf("  recorded %.10g  %s", *m.recorded_cost, m.consistent ? "ok" : "MISMATCH"); }
      std::printf("\n");
    }
    for (const auto & [mode, v] : check.improvement_percent) { std::printf("improvement %-20s %.6f %%\n", mode.c_str(), v); }
    cli::write_text(std::filesystem::path(dir) / "summary_check.json", cli::summary_check_json(check).dump(2) + "\n");
    return check.consistent ? kOk : kRuntimeFailure;
  } catch (const std::exception & e) {
    std::cerr << "summarize failed: " << e.what() << '\n';
    return kRuntimeFailure;
  }
}

}  // namespace

int main(int argc, char ** argv)
{
  CLI::App app{"Sensitivity-updated MPC experiments"};
  app.require_subcommand(1);
  std::string config_path, dir;
  auto * run = app.add_subcommand("run", "run the closed-loop comparison described by a config file");
  run->add_option("config", config_path, "YAML configuration")->required();
  auto * sum = app.add_subcommand("summarize", "recompute costs from the CSVs of a run directory");
  sum->add_option("dir", dir, "output directory of a run")->required();
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError & e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigFailure;
  }
  if (*run) { return run_command(config_path); }
  return summarize_command(dir);
}
