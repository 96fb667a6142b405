#pragma once

/**
 * @file
 * @brief Per-step CSV records of closed-loop runs.
 *
 * Layout (version 1):
 *
 *     # sensmpc-closed-loop v1
 *     # mode=<mode> sampling_period=<T> delta_x=<dx> delta_w=<dw> truncated=<0|1>
 *     step,time,x_bar_0,...,w_bar_0,...,u_0,...,stage_cost,true_stage_cost,value,jerk,status
 *
 * Reals are written with 17 significant digits so that reading reproduces them exactly.
 */

#include <Eigen/Core>

#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "errors.hpp"
#include "mpc.hpp"

namespace sensmpc {

inline constexpr const char * kCsvMagic = "# sensmpc-closed-loop v1";

inline std::string format_real(double v)
{
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct CsvRow
{
  int step = 0;
  double time = 0.0;
  Vec state;
  Vec disturbance;
  Vec control;
  double stage_cost = 0.0;
  double true_stage_cost = 0.0;
  double value = 0.0;
  double jerk = 0.0;
  std::string status;
};

struct CsvRecord
{
  std::string mode;
  bool truncated = false;
  std::vector<CsvRow> rows;

  double total_cost() const
  {
    double c = 0.0;
    for (const auto & r : rows) { c += r.stage_cost; }
    return c;
  }
};

inline void write_record_csv(std::ostream & out, const ClosedLoopRecord & rec)
{
  out << kCsvMagic << '\n';
  out << "# mode=" << to_string(rec.mode) << " sampling_period=" << format_real(rec.sampling_period) << " delta_x=" << format_real(rec.delta_x)
      << " delta_w=" << format_real(rec.delta_w) << " truncated=" << (rec.truncated ? 1 : 0) << '\n';
  const Eigen::Index nx = rec.steps.empty() ? rec.equilibrium_state.size() : rec.steps.front().measured_state.size();
  const Eigen::Index nw = rec.steps.empty() ? 0 : rec.steps.front().measured_disturbance.size();
  const Eigen::Index nu = rec.steps.empty() ? 0 : rec.steps.front().applied_control.size();
  out << "step,time";
  for (Eigen::Index i = 0; i < nx; ++i) { out << ",x_bar_" << i; }
  for (Eigen::Index i = 0; i < nw; ++i) { out << ",w_bar_" << i; }
  for (Eigen::Index i = 0; i < nu; ++i) { out << ",u_" << i; }
  out << ",stage_cost,true_stage_cost,value,jerk,status\n";
  for (const auto & s : rec.steps) {
    out << s.step << ',' << format_real(s.time);
    for (Eigen::Index i = 0; i < nx; ++i) { out << ',' << format_real(s.measured_state[i]); }
    for (Eigen::Index i = 0; i < nw; ++i) { out << ',' << format_real(s.measured_disturbance[i]); }
    for (Eigen::Index i = 0; i < nu; ++i) { out << ',' << format_real(s.applied_control[i]); }
    out << ',' << format_real(s.stage_cost) << ',' << format_real(s.true_stage_cost) << ',' << format_real(s.value) << ','
        << format_real(s.monitor) << ',' << to_string(s.status) << '\n';
  }
}

namespace detail {

inline std::vector<std::string> split_csv(const std::string & line)
{
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) { out.push_back(cell); }
  if (!line.empty() && line.back() == ',') { out.emplace_back(); }
  return out;
}

inline double parse_real(const std::string & s, std::size_t line)
{
  if (s == "nan" || s == "-nan") { return std::numeric_limits<double>::quiet_NaN(); }
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception &) {
    throw ParseError("csv line " + std::to_string(line) + ": not a number: '" + s + "'", line);
  }
  if (used != s.size()) { throw ParseError("csv line " + std::to_string(line) + ": trailing characters in '" + s + "'", line); }
  return v;
}

}  // namespace detail

/// Parses a record written by write_record_csv; @p source names the input in error messages.
inline CsvRecord read_record_csv(std::istream & in, const std::string & source = "csv")
{
  CsvRecord rec;
  std::string line;
  std::size_t lineno = 0;
  auto fail = [&](const std::string & what) -> ParseError {
    return ParseError(source + " line " + std::to_string(lineno) + ": " + what, lineno);
  };

  if (!std::getline(in, line)) { throw ParseError(source + " line 1: empty file", 1); }
  ++lineno;
  if (line != kCsvMagic) { throw fail("missing version line"); }
  if (!std::getline(in, line)) { throw ParseError(source + " line 2: missing metadata", 2); }
  ++lineno;
  {
    std::istringstream meta(line.size() > 2 ? line.substr(2) : std::string());
    std::string kv;
    while (meta >> kv) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) { continue; }
      const std::string key = kv.substr(0, eq), val = kv.substr(eq + 1);
      if (key == "mode") { rec.mode = val; }
      if (key == "truncated") { rec.truncated = val == "1"; }
    }
  }
  if (!std::getline(in, line)) { throw ParseError(source + " line 3: missing header", 3); }
  ++lineno;
  const auto header = detail::split_csv(line);
  Eigen::Index nx = 0, nw = 0, nu = 0;
  for (const auto & h : header) {
    if (h.rfind("x_bar_", 0) == 0) { ++nx; }
    if (h.rfind("w_bar_", 0) == 0) { ++nw; }
    if (h.rfind("u_", 0) == 0) { ++nu; }
  }
  const std::size_t expected = static_cast<std::size_t>(2 + nx + nw + nu + 5);
  if (header.size() != expected || header[0] != "step" || header[1] != "time" || header.back() != "status") { throw fail("unexpected header"); }

  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) { continue; }
    const auto cells = detail::split_csv(line);
    if (cells.size() != expected) {
      throw fail("expected " + std::to_string(expected) + " fields, found " + std::to_string(cells.size()));
    }
    CsvRow r;
    std::size_t c = 0;
    r.step = static_cast<int>(detail::parse_real(cells[c++], lineno));
    r.time = detail::parse_real(cells[c++], lineno);
    r.state.resize(nx);
    r.disturbance.resize(nw);
    r.control.resize(nu);
    for (Eigen::Index i = 0; i < nx; ++i) { r.state[i] = detail::parse_real(cells[c++], lineno); }
    for (Eigen::Index i = 0; i < nw; ++i) { r.disturbance[i] = detail::parse_real(cells[c++], lineno); }
    for (Eigen::Index i = 0; i < nu; ++i) { r.control[i] = detail::parse_real(cells[c++], lineno); }
    r.stage_cost = detail::parse_real(cells[c++], lineno);
    r.true_stage_cost = detail::parse_real(cells[c++], lineno);
    r.value = detail::parse_real(cells[c++], lineno);
    r.jerk = detail::parse_real(cells[c++], lineno);
    r.status = cells[c];
    if (r.status.empty()) { throw fail("missing status"); }
    if (r.step != static_cast<int>(rec.rows.size())) { throw fail("step numbers are not consecutive"); }
    rec.rows.push_back(std::move(r));
  }
  return rec;
}

}  // namespace sensmpc
