#pragma once

/**
 * @file
 * @brief Three-mode closed-loop comparison and the certification pipeline on one configuration.
 */

#include <Eigen/Core>

#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "certify.hpp"
#include "errors.hpp"
#include "halfcar.hpp"
#include "mpc.hpp"
#include "ocp.hpp"
#include "road.hpp"
#include "scalar_lq.hpp"
#include "sensitivity.hpp"

namespace sensmpc {

enum class PlantKind { halfcar, scalar_lq };

inline const char * to_string(PlantKind k) { return k == PlantKind::halfcar ? "halfcar" : "scalar_lq"; }

struct CertificationOptions
{
  bool enabled = true;
  /// Use the relaxed residual level with relaxed_epsilon instead of the default formula.
  bool relaxed = false;
  double relaxed_epsilon = 0.0;
  /// Random perturbations drawn around every recorded nominal point, in addition to the recorded pair.
  int extra_pairs_per_step = 2;
  std::uint64_t pair_seed = 1;
};

struct ExperimentConfig
{
  PlantKind plant = PlantKind::halfcar;
  halfcar::HalfcarParams halfcar{};
  double sampling_period = 0.1;
  int substeps = 100;
  road::ProfileSpec road = road::FilteredRandom{};
  road::PreviewOptions preview{1.0, 10, 5.0};
  /// Initial state = equilibrium + offset; defaults to +0.01 m chassis heave (halfcar) or x = 1 (scalar).
  std::optional<Vec> initial_offset;
  std::vector<MpcMode> modes{MpcMode::nominal, MpcMode::sensitivity_update, MpcMode::full_reopt};
  /// Shared settings; mode is overwritten per run.
  MpcConfig mpc{};
  CertificationOptions certification{};
  std::string output_dir = "out";

  void validate() const
  {
    if (!(sampling_period > 0.0) || substeps < 1) { throw ConfigError("experiment: sampling period and substeps must be positive"); }
    if (modes.empty()) { throw ConfigError("experiment: no modes selected"); }
    road::generate_profile(road);
    try {
      mpc.validate();
      if (plant == PlantKind::halfcar) { halfcar.validate(); }
    } catch (const ContractError & e) {
      throw ConfigError(e.what());
    }
    if (certification.extra_pairs_per_step < 0) { throw ConfigError("experiment: extra_pairs_per_step must be nonnegative"); }
    if (certification.relaxed && !(certification.relaxed_epsilon >= 0.0)) { throw ConfigError("experiment: relaxed_epsilon must be nonnegative"); }
  }
};

inline std::shared_ptr<const ParametricSystem> make_plant(const ExperimentConfig & cfg)
{
  if (cfg.plant == PlantKind::halfcar) { return halfcar::make_system(cfg.halfcar, cfg.sampling_period, cfg.substeps); }
  return make_scalar_lq(cfg.sampling_period, cfg.substeps);
}

/// Fresh disturbance channel; channels hold measurement history, so every run needs its own.
inline std::unique_ptr<DisturbanceChannel> make_channel(const ExperimentConfig & cfg, const road::ProfileSpec & spec)
{
  road::RoadProfile profile = road::generate_profile(spec);
  if (cfg.plant == PlantKind::halfcar) {
    return std::make_unique<road::RoadPreviewChannel>(std::move(profile), cfg.halfcar.wheelbase_delay(), cfg.preview);
  }
  return std::make_unique<HeldSignalChannel>([profile](double t) { return Vec::Constant(1, profile.height(t)); });
}

inline Vec initial_state(const ExperimentConfig & cfg, const ParametricSystem & sys)
{
  Vec offset = Vec::Zero(sys.state_dim);
  if (cfg.initial_offset) {
    if (cfg.initial_offset->size() != sys.state_dim) { throw ConfigError("experiment: initial_offset has wrong dimension"); }
    offset = *cfg.initial_offset;
  } else if (cfg.plant == PlantKind::halfcar) {
    offset[2] = 0.01;
  } else {
    offset[0] = 1.0;
  }
  return sys.equilibrium.x + offset;
}

inline MpcConfig mode_config(const ExperimentConfig & cfg, MpcMode mode)
{
  MpcConfig m = cfg.mpc;
  m.mode = mode;
  if (!m.initial_state) { m.initial_state = initial_state(cfg, *make_plant(cfg)); }
  // The certificate needs V_N along the sensitivity-updated run.
  if (cfg.certification.enabled && mode == MpcMode::sensitivity_update) { m.record_values = true; }
  return m;
}

struct ModeRun
{
  MpcMode mode = MpcMode::nominal;
  ClosedLoopRecord record;
  double cost = 0.0;
  double seconds = 0.0;
};

inline ModeRun run_mode(const ExperimentConfig & cfg, MpcMode mode)
{
  const auto plant = make_plant(cfg);
  auto channel = make_channel(cfg, cfg.road);
  const auto start = std::chrono::steady_clock::now();
  ModeRun run;
  run.mode = mode;
  run.record = run_closed_loop(plant, *channel, mode_config(cfg, mode));
  run.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  run.cost = run.record.steps.empty() ? 0.0 : closed_loop_cost(run.record);
  return run;
}

/// Same initial state without noise on a flat road, nominal controller, values recorded.
inline ClosedLoopRecord undisturbed_companion(const ExperimentConfig & cfg)
{
  MpcConfig m = mode_config(cfg, MpcMode::nominal);
  m.delta_x = 0.0;
  m.delta_w = 0.0;
  m.record_values = true;
  auto channel = make_channel(cfg, road::Flat{});
  return run_closed_loop(make_plant(cfg), *channel, m);
}

/**
 * @brief Lipschitz sample pairs from a recorded run: (predicted state, nominal preview) against
 * (measured state, measured preview) for every step, plus random perturbations of the nominal
 * point within the noise amplitudes.
 */
inline std::vector<SamplePair> lipschitz_pairs(const ClosedLoopRecord & record, int extra_per_step, std::uint64_t seed)
{
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::vector<SamplePair> pairs;
  for (const auto & s : record.steps) {
    pairs.push_back({s.predicted_state, s.measured_state, s.nominal_preview, s.measured_preview, s.nominal_controls});
    for (int k = 0; k < extra_per_step; ++k) {
      SamplePair p{s.predicted_state, s.predicted_state, s.nominal_preview, s.nominal_preview, s.nominal_controls};
      for (Eigen::Index i = 0; i < p.x_bar.size(); ++i) { p.x_bar[i] += record.delta_x * unit(rng); }
      for (auto & w : p.w_bar.samples) {
        for (Eigen::Index i = 0; i < w.size(); ++i) { w[i] += record.delta_w * unit(rng); }
      }
      pairs.push_back(std::move(p));
    }
  }
  return pairs;
}

/// Largest realized deviations ‖x̄(n) - x(n)‖ and ‖w̄(n) - w(n)‖ (stacked previews) along a record.
inline std::pair<double, double> realized_deviations(const ClosedLoopRecord & record)
{
  double dx = 0.0, dw = 0.0;
  for (const auto & s : record.steps) {
    dx = std::max(dx, (s.measured_state - s.predicted_state).norm());
    dw = std::max(dw, (s.measured_preview.stacked() - s.nominal_preview.stacked()).norm());
  }
  return {dx, dw};
}

struct Certificate
{
  double alpha = 0.0;
  LipschitzEstimates lipschitz;
  double deviation_x = 0.0;
  double deviation_w = 0.0;
  RegionEstimate region;
  PerformanceReport performance;
  StabilityDiagnostics stability;
  double seconds = 0.0;
};

/**
 * @brief Performance and practical-stability certificate of a disturbed run.
 *
 * alpha comes from @p companion; the Lipschitz constants from pairs around @p record; the
 * deviations entering epsilon are the largest realized ones.
 */
inline Certificate certify_run(const ExperimentConfig & cfg, const ClosedLoopRecord & record, const ClosedLoopRecord & companion)
{
  const auto start = std::chrono::steady_clock::now();
  const auto plant = make_plant(cfg);
  Certificate c;
  c.alpha = estimate_alpha(companion);
  const int N = cfg.mpc.horizon;
  const ProblemFamily family = [&](const Vec & x, const DisturbanceSequence & w) { return OcpProblem{plant, x, w, N, plant->bounds}; };
  c.lipschitz = estimate_lipschitz(
    family, lipschitz_pairs(record, cfg.certification.extra_pairs_per_step, cfg.certification.pair_seed), {}, cfg.mpc.solver, cfg.mpc.sensitivity);
  std::tie(c.deviation_x, c.deviation_w) = realized_deviations(record);
  const double eps = cfg.certification.relaxed
                       ? compute_epsilon(c.lipschitz, c.deviation_x, c.deviation_w, c.alpha, cfg.certification.relaxed_epsilon)
                       : compute_epsilon(c.lipschitz, c.deviation_x, c.deviation_w, c.alpha);
  c.region = estimate_region_and_sigma(record);
  c.performance = check_performance_bound(record, c.alpha, eps, c.region.region, c.region.sigma);
  c.stability = check_practical_stability(record, c.region.region, c.alpha, eps);
  c.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return c;
}

struct ExperimentResult
{
  std::vector<ModeRun> runs;
  std::optional<ClosedLoopRecord> companion;
  std::optional<Certificate> certificate;
  /// Why no certificate was produced, if certification was requested.
  std::string certificate_error;

  const ModeRun * find(MpcMode m) const
  {
    for (const auto & r : runs) {
      if (r.mode == m) { return &r; }
    }
    return nullptr;
  }

  /// (cost_nominal - cost_mode) / cost_nominal in percent; nullopt without both runs or with a zero nominal cost.
  std::optional<double> improvement(MpcMode m) const
  {
    const ModeRun * nom = find(MpcMode::nominal);
    const ModeRun * run = find(m);
    if (!nom || !run || nom->cost == 0.0) { return std::nullopt; }
    return 100.0 * (nom->cost - run->cost) / nom->cost;
  }

  bool any_truncated() const
  {
    for (const auto & r : runs) {
      if (r.record.truncated) { return true; }
    }
    return false;
  }
};

inline std::optional<double> relative_improvement(double nominal_cost, double cost)
{
  if (nominal_cost == 0.0) { return std::nullopt; }
  return 100.0 * (nominal_cost - cost) / nominal_cost;
}

/// Runs every configured mode and, when enabled, certifies the sensitivity-updated run.
inline ExperimentResult run_experiment(const ExperimentConfig & cfg)
{
  cfg.validate();
  ExperimentResult out;
  for (MpcMode m : cfg.modes) { out.runs.push_back(run_mode(cfg, m)); }
  const ModeRun * sens = out.find(MpcMode::sensitivity_update);
  if (cfg.certification.enabled && sens) {
    try {
      if (sens->record.truncated) { throw RegionUndefined("sensitivity run truncated: " + sens->record.diagnostic); }
      out.companion = undisturbed_companion(cfg);
      out.certificate = certify_run(cfg, sens->record, *out.companion);
    } catch (const Error & e) {
      out.certificate_error = e.what();
    }
  }
  return out;
}

}  // namespace sensmpc
