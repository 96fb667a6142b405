#pragma once

/**
 * @file
 * @brief Output files of a run (per-mode CSV, summary.json, certificate.json) and their re-check.
 */

#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <sensmpc/errors.hpp>
#include <sensmpc/experiment.hpp>
#include <sensmpc/report.hpp>

namespace sensmpc::cli {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr int kSummaryVersion = 1;
inline constexpr double kRoundTripTolerance = 1e-9;

inline std::string csv_name(const std::string & mode) { return "closed_loop_" + mode + ".csv"; }

inline json mode_summary(const ModeRun & r)
{
  double iters = 0.0, evals = 0.0, true_cost = 0.0;
  for (const auto & s : r.record.steps) {
    iters += s.solver.iterations;
    evals += s.solver.cost_evaluations;
    true_cost += s.true_stage_cost;
  }
  const double n = std::max<double>(1.0, static_cast<double>(r.record.size()));
  const auto & rec = r.record;
  return json{
    {"mode", to_string(r.mode)},
    {"csv", csv_name(to_string(r.mode))},
    {"steps", rec.size()},
    {"cost", r.cost},
    {"true_cost", true_cost},
    {"truncated", rec.truncated},
    {"diagnostic", rec.diagnostic},
    {"seconds", r.seconds},
    {"controller_solves", rec.controller_solves},
    {"sensitivity_computations", rec.sensitivity_computations},
    {"diagnostic_solves", rec.diagnostic_solves},
    {"clipped_updates", rec.clipped_updates},
    {"regularity_failures", rec.regularity_failures},
    {"disturbance_rate_violations", rec.disturbance_rate_violations},
    {"mean_solver_iterations", iters / n},
    {"mean_cost_evaluations", evals / n},
  };
}

inline json certificate_json(const Certificate & c)
{
  const auto & p = c.performance;
  const auto & s = c.stability;
  return json{
    {"alpha", c.alpha},
    {"epsilon", p.epsilon},
    {"sigma", p.sigma},
    {"modified_cost", p.modified_cost},
    {"bound_lhs", p.bound_lhs},
    {"bound_rhs", p.bound_rhs},
    {"slack", p.slack()},
    {"bound_satisfied", p.bound_satisfied},
    {"entry_step", p.entry_step ? json(*p.entry_step) : json(nullptr)},
    {"post_entry_excursions", p.post_entry_excursions},
    {"lipschitz", {{"L_ell", c.lipschitz.L_ell}, {"L_J", c.lipschitz.L_J}, {"L_u", c.lipschitz.L_u}, {"samples", c.lipschitz.sample_count}, {"skipped", c.lipschitz.skipped}}},
    {"deviation_x", c.deviation_x},
    {"deviation_w", c.deviation_w},
    {"region_radius", c.region.region.radius},
    {"stability",
     {{"forward_invariant", s.forward_invariant()},
      {"practically_stable", s.practically_stable()},
      {"exits_after_entry", s.exits_after_entry},
      {"outside_steps", s.outside_steps},
      {"decrease_violations", s.decrease_violations},
      {"max_increase_outside", s.max_increase_outside}}},
    {"seconds", c.seconds},
  };
}

inline json summary_json(const ExperimentConfig & cfg, const ExperimentResult & res)
{
  json modes = json::array();
  for (const auto & r : res.runs) { modes.push_back(mode_summary(r)); }
  json impr = json::object();
  for (MpcMode m : {MpcMode::sensitivity_update, MpcMode::full_reopt}) {
    if (const auto v = res.improvement(m)) { impr[to_string(m)] = *v; }
  }
  json out{
    {"version", kSummaryVersion},
    {"plant", to_string(cfg.plant)},
    {"steps", cfg.mpc.steps},
    {"horizon", cfg.mpc.horizon},
    {"delta_x", cfg.mpc.delta_x},
    {"delta_w", cfg.mpc.delta_w},
    {"seed", cfg.mpc.rng_seed},
    {"modes", modes},
    {"improvement_percent", impr},
    {"certificate", res.certificate ? certificate_json(*res.certificate) : json(nullptr)},
    {"certificate_error", res.certificate_error},
  };
  return out;
}

inline void write_text(const fs::path & path, const std::string & text)
{
  std::ofstream out(path, std::ios::binary);
  if (!out) { throw Error("cannot write " + path.string()); }
  out << text;
  if (!out) { throw Error("write failed: " + path.string()); }
}

/// Writes the per-mode CSVs, summary.json and, when present, certificate.json into @p dir.
inline void write_outputs(const fs::path & dir, const ExperimentConfig & cfg, const ExperimentResult & res)
{
  fs::create_directories(dir);
  for (const auto & r : res.runs) {
    std::ostringstream csv;
    write_record_csv(csv, r.record);
    write_text(dir / csv_name(to_string(r.mode)), csv.str());
  }
  if (res.companion) {
    std::ostringstream csv;
    write_record_csv(csv, *res.companion);
    write_text(dir / "undisturbed_companion.csv", csv.str());
  }
  write_text(dir / "summary.json", summary_json(cfg, res).dump(2) + "\n");
  if (res.certificate) { write_text(dir / "certificate.json", certificate_json(*res.certificate).dump(2) + "\n"); }
}

struct ModeCheck
{
  std::string mode;
  double cost = 0.0;
  std::size_t steps = 0;
  bool truncated = false;
  /// Cost stored in summary.json, when one was found.
  std::optional<double> recorded_cost;
  bool consistent = true;
};

struct SummaryCheck
{
  std::vector<ModeCheck> modes;
  std::map<std::string, double> improvement_percent;
  bool consistent = true;
};

/**
 * @brief Recomputes per-mode costs from the CSVs in @p dir and cross-checks them against
 * summary.json when it exists. Throws ParseError for malformed CSVs and ContractError when no
 * record is found.
 */
inline SummaryCheck summarize_directory(const fs::path & dir)
{
  if (!fs::is_directory(dir)) { throw ContractError("summarize: not a directory: " + dir.string()); }
  std::map<std::string, double> recorded;
  const fs::path summary_path = dir / "summary.json";
  if (fs::exists(summary_path)) {
    std::ifstream in(summary_path);
    json j;
    try {
      in >> j;
      for (const auto & m : j.at("modes")) { recorded[m.at("mode").get<std::string>()] = m.at("cost").get<double>(); }
    } catch (const json::exception & e) {
      throw ParseError("summary.json: " + std::string(e.what()), 0);
    }
  }

  SummaryCheck out;
  for (const char * mode : {"nominal", "sensitivity_update", "full_reopt"}) {
    const fs::path p = dir / csv_name(mode);
    if (!fs::exists(p)) { continue; }
    std::ifstream in(p);
    const CsvRecord rec = read_record_csv(in, p.filename().string());
    ModeCheck mc;
    mc.mode = mode;
    mc.cost = rec.total_cost();
    mc.steps = rec.rows.size();
    mc.truncated = rec.truncated;
    if (const auto it = recorded.find(mode); it != recorded.end()) {
      mc.recorded_cost = it->second;
      mc.consistent = std::abs(mc.cost - it->second) <= kRoundTripTolerance * std::max(1.0, std::abs(it->second));
    }
    out.consistent = out.consistent && mc.consistent;
    out.modes.push_back(mc);
  }
  if (out.modes.empty()) { throw ContractError("summarize: no closed-loop CSV in " + dir.string()); }
  const ModeCheck * nom = nullptr;
  for (const auto & m : out.modes) {
    if (m.mode == "nominal") { nom = &m; }
  }
  if (nom) {
    for (const auto & m : out.modes) {
      if (m.mode == "nominal") { continue; }
      if (const auto v = relative_improvement(nom->cost, m.cost)) { out.improvement_percent[m.mode] = *v; }
    }
  }
  return out;
}

inline json summary_check_json(const SummaryCheck & s)
{
  json modes = json::array();
  for (const auto & m : s.modes) {
    modes.push_back(json{
      {"mode", m.mode},
      {"cost", m.cost},
      {"steps", m.steps},
      {"truncated", m.truncated},
      {"recorded_cost", m.recorded_cost ? json(*m.recorded_cost) : json(nullptr)},
      {"consistent", m.consistent},
    });
  }
  return json{{"version", kSummaryVersion}, {"modes", modes}, {"improvement_percent", s.improvement_percent}, {"consistent", s.consistent}};
}

}  // namespace sensmpc::cli
