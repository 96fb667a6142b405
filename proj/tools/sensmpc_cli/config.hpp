#pragma once

/**
 * @file
 * @brief YAML experiment configuration (schema version 1).
 *
 * Every mapping rejects keys it does not know. See configs/default.yaml for the full schema.
 */

#include <yaml-cpp/yaml.h>

#include <set>
#include <string>
#include <vector>

#include <sensmpc/errors.hpp>
#include <sensmpc/experiment.hpp>

namespace sensmpc::cli {

inline constexpr int kConfigVersion = 1;

namespace detail {

inline void check_keys(const YAML::Node & node, const std::set<std::string> & allowed, const std::string & where)
{
  if (!node.IsMap()) { throw ConfigError(where + ": expected a mapping"); }
  for (const auto & kv : node) {
    const auto key = kv.first.as<std::string>();
    if (!allowed.count(key)) { throw ConfigError(where + ": unknown key '" + key + "'"); }
  }
}

template<typename T>
void read(const YAML::Node & node, const char * key, T & out, const std::string & where)
{
  if (!node[key]) { return; }
  try {
    out = node[key].as<T>();
  } catch (const YAML::Exception &) {
    throw ConfigError(where + "." + key + ": wrong type");
  }
}

inline MpcMode parse_mode(const std::string & s, const std::string & where)
{
  if (s == "nominal") { return MpcMode::nominal; }
  if (s == "sensitivity_update") { return MpcMode::sensitivity_update; }
  if (s == "full_reopt") { return MpcMode::full_reopt; }
  throw ConfigError(where + ": unknown mode '" + s + "'");
}

inline road::Sine parse_sine(const YAML::Node & n, const std::string & where)
{
  road::Sine s;
  read(n, "amplitude", s.amplitude, where);
  read(n, "frequency", s.frequency, where);
  read(n, "phase", s.phase, where);
  return s;
}

inline road::ProfileSpec parse_road(const YAML::Node & n, const std::string & base_dir)
{
  const std::string where = "road";
  if (!n.IsMap() || !n["kind"]) { throw ConfigError("road: missing kind"); }
  const auto kind = n["kind"].as<std::string>();
  if (kind == "flat") {
    check_keys(n, {"kind"}, where);
    return road::Flat{};
  }
  if (kind == "sine") {
    check_keys(n, {"kind", "amplitude", "frequency", "phase"}, where);
    return parse_sine(n, where);
  }
  if (kind == "sum_of_sines") {
    check_keys(n, {"kind", "terms"}, where);
    road::SumOfSines s;
    if (!n["terms"] || !n["terms"].IsSequence()) { throw ConfigError("road.terms: expected a list"); }
    for (const auto & t : n["terms"]) {
      check_keys(t, {"amplitude", "frequency", "phase"}, "road.terms");
      s.terms.push_back(parse_sine(t, "road.terms"));
    }
    return s;
  }
  if (kind == "filtered_random") {
    check_keys(n, {"kind", "seed", "roughness", "cutoff", "components"}, where);
    road::FilteredRandom f;
    read(n, "seed", f.seed, where);
    read(n, "roughness", f.roughness, where);
    read(n, "cutoff", f.cutoff, where);
    read(n, "components", f.components, where);
    return f;
  }
  if (kind == "file") {
    check_keys(n, {"kind", "path"}, where);
    if (!n["path"]) { throw ConfigError("road: file kind needs a path"); }
    std::string path = n["path"].as<std::string>();
    if (!path.empty() && path[0] != '/') { path = base_dir + "/" + path; }
    try {
      return road::read_samples(path);
    } catch (const ParseError & e) {
      throw ConfigError(e.what());
    }
  }
  throw ConfigError("road: unknown kind '" + kind + "'");
}

inline void parse_halfcar(const YAML::Node & n, halfcar::HalfcarParams & p)
{
  const std::string where = "halfcar";
  check_keys(n,
    {"a", "b", "m1", "m2", "m3", "I", "k1", "k2", "d1", "d2", "k3", "k4", "g", "mu_R", "mu_A", "u_lower", "u_upper", "control_scale",
     "vehicle_speed", "units"},
    where);
  read(n, "a", p.a, where);
  read(n, "b", p.b, where);
  read(n, "m1", p.m1, where);
  read(n, "m2", p.m2, where);
  read(n, "m3", p.m3, where);
  read(n, "I", p.I, where);
  read(n, "k1", p.k1, where);
  read(n, "k2", p.k2, where);
  read(n, "d1", p.d1, where);
  read(n, "d2", p.d2, where);
  read(n, "k3", p.k3, where);
  read(n, "k4", p.k4, where);
  read(n, "g", p.g, where);
  read(n, "mu_R", p.mu_R, where);
  read(n, "mu_A", p.mu_A, where);
  read(n, "u_lower", p.u_lower, where);
  read(n, "u_upper", p.u_upper, where);
  read(n, "control_scale", p.control_scale, where);
  read(n, "vehicle_speed", p.vehicle_speed, where);
  if (n["units"]) {
    const auto u = n["units"].as<std::string>();
    if (u == "si") {
      p.units = halfcar::StiffnessUnits::si;
    } else if (u == "kilo") {
      p.units = halfcar::StiffnessUnits::kilo;
    } else {
      throw ConfigError("halfcar.units: expected si or kilo");
    }
  }
}

inline void parse_mpc(const YAML::Node & n, MpcConfig & m)
{
  const std::string where = "mpc";
  check_keys(n, {"horizon", "steps", "delta_x", "delta_w", "seed", "record_values", "solver", "sensitivity"}, where);
  read(n, "horizon", m.horizon, where);
  read(n, "steps", m.steps, where);
  read(n, "delta_x", m.delta_x, where);
  read(n, "delta_w", m.delta_w, where);
  read(n, "seed", m.rng_seed, where);
  read(n, "record_values", m.record_values, where);
  if (const auto s = n["solver"]) {
    const std::string w = "mpc.solver";
    check_keys(s, {"tolerance", "relative_tolerance", "stall_tolerance", "max_iterations", "gradient", "gradient_step"}, w);
    read(s, "tolerance", m.solver.tolerance, w);
    read(s, "relative_tolerance", m.solver.relative_tolerance, w);
    read(s, "stall_tolerance", m.solver.stall_tolerance, w);
    read(s, "max_iterations", m.solver.max_iterations, w);
    read(s, "gradient_step", m.solver.gradient.step, w);
    if (s["gradient"]) {
      const auto g = s["gradient"].as<std::string>();
      if (g == "central") {
        m.solver.gradient.mode = GradientMode::central;
      } else if (g == "forward") {
        m.solver.gradient.mode = GradientMode::forward;
      } else {
        throw ConfigError("mpc.solver.gradient: expected central or forward");
      }
    }
  }
  if (const auto s = n["sensitivity"]) {
    const std::string w = "mpc.sensitivity";
    check_keys(s, {"fd_step", "condition_limit", "ssoc_tolerance", "scc_tolerance"}, w);
    read(s, "fd_step", m.sensitivity.regularity.fd_step, w);
    read(s, "condition_limit", m.sensitivity.condition_limit, w);
    read(s, "ssoc_tolerance", m.sensitivity.regularity.ssoc_tolerance, w);
    read(s, "scc_tolerance", m.sensitivity.regularity.scc_tolerance, w);
  }
}

}  // namespace detail

/// Parses a configuration document; @p base_dir resolves relative road file paths.
inline ExperimentConfig parse_config(const std::string & text, const std::string & base_dir = ".")
{
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception & e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  if (!root.IsMap()) { throw ConfigError("config: expected a mapping at the top level"); }
  using detail::check_keys;
  using detail::read;
  check_keys(root,
    {"version", "plant", "sampling_period", "substeps", "halfcar", "road", "preview", "initial_offset", "modes", "mpc", "certification",
     "output_dir"},
    "config");
  if (!root["version"]) { throw ConfigError("config: missing version"); }

  try {
    if (root["version"].as<int>() != kConfigVersion) { throw ConfigError("config: unsupported version " + root["version"].as<std::string>()); }
    ExperimentConfig cfg;
    if (root["plant"]) {
      const auto p = root["plant"].as<std::string>();
      if (p == "halfcar") {
        cfg.plant = PlantKind::halfcar;
      } else if (p == "scalar_lq") {
        cfg.plant = PlantKind::scalar_lq;
      } else {
        throw ConfigError("config.plant: expected halfcar or scalar_lq");
      }
    }
    read(root, "sampling_period", cfg.sampling_period, "config");
    read(root, "substeps", cfg.substeps, "config");
    if (cfg.plant == PlantKind::halfcar) { cfg.preview.max_frequency = 0.5 / cfg.sampling_period; }
    if (const auto h = root["halfcar"]) { detail::parse_halfcar(h, cfg.halfcar); }
    if (const auto r = root["road"]) { cfg.road = detail::parse_road(r, base_dir); }
    if (const auto p = root["preview"]) {
      check_keys(p, {"window", "modes", "max_frequency"}, "preview");
      read(p, "window", cfg.preview.window, "preview");
      read(p, "modes", cfg.preview.modes, "preview");
      read(p, "max_frequency", cfg.preview.max_frequency, "preview");
    }
    if (const auto o = root["initial_offset"]) {
      if (!o.IsSequence()) { throw ConfigError("config.initial_offset: expected a list"); }
      Vec v(static_cast<Eigen::Index>(o.size()));
      for (std::size_t i = 0; i < o.size(); ++i) { v[static_cast<Eigen::Index>(i)] = o[i].as<double>(); }
      cfg.initial_offset = v;
    }
    if (const auto m = root["modes"]) {
      if (!m.IsSequence()) { throw ConfigError("config.modes: expected a list"); }
      cfg.modes.clear();
      for (const auto & e : m) { cfg.modes.push_back(detail::parse_mode(e.as<std::string>(), "config.modes")); }
    }
    if (const auto m = root["mpc"]) { detail::parse_mpc(m, cfg.mpc); }
    if (const auto c = root["certification"]) {
      const std::string w = "certification";
      check_keys(c, {"enabled", "relaxed", "relaxed_epsilon", "extra_pairs_per_step", "pair_seed"}, w);
      read(c, "enabled", cfg.certification.enabled, w);
      read(c, "relaxed", cfg.certification.relaxed, w);
      read(c, "relaxed_epsilon", cfg.certification.relaxed_epsilon, w);
      read(c, "extra_pairs_per_step", cfg.certification.extra_pairs_per_step, w);
      read(c, "pair_seed", cfg.certification.pair_seed, w);
    }
    read(root, "output_dir", cfg.output_dir, "config");
    cfg.validate();
    return cfg;
  } catch (const YAML::Exception & e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

}  // namespace sensmpc::cli
