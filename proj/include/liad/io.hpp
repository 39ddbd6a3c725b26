#pragma once

// File formats: sweep results (JSON + CSV), motion traces, per-event outcome
// tables, spectra and fit reports. Floating-point values are written with 17
// significant digits so that every file round-trips exactly.

#include <cmath>
#include <cstdio>
#include <istream>
#include <limits>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "liad/analysis.hpp"
#include "liad/config.hpp"
#include "liad/montecarlo.hpp"

namespace liad::io {

using nlohmann::json;

inline constexpr int kSweepSchemaVersion = 1;
inline constexpr const char* kTraceHeader = "t_s,x_m,y_m,z_m,vx_mps,vy_mps,vz_mps";
inline constexpr const char* kOutcomeHeader =
    "event,kind,arrival_time_s,capture_time_s,site_index,site_intensity_fraction,final_energy_J";
inline constexpr const char* kSweepHeader =
    "value,n,trapped,p,ci_lo,ci_hi,mean_capture_time_s,timeouts";

inline std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline json config_to_json(const RunConfig& rc) {
  const SimulationConfig& sc = rc.simulation;
  json launch = {{"kind", kind_name(sc.launch.speed)},
                 {"distance_m", sc.substrate_distance},
                 {"spread_rad", sc.launch.transverse_spread},
                 {"direction",
                  {sc.launch.direction.x(), sc.launch.direction.y(), sc.launch.direction.z()}}};
  if (const auto* d = std::get_if<DeltaSpeed>(&sc.launch.speed)) {
    launch["speed_mps"] = d->speed;
  } else if (const auto* l = std::get_if<LogNormalSpeed>(&sc.launch.speed)) {
    launch["median_mps"] = l->median;
    launch["geometric_sigma"] = l->geometric_sigma;
  } else if (const auto* g = std::get_if<GammaSpeed>(&sc.launch.speed)) {
    launch["shape"] = g->shape;
    launch["scale_mps"] = g->scale;
  } else if (const auto* e = std::get_if<EmpiricalSpeed>(&sc.launch.speed)) {
    launch["bin_edges_mps"] = e->bin_edges;
    launch["weights"] = e->weights;
  }
  const auto& pc = sc.propagation;
  return {
      {"schema_version", kConfigSchemaVersion},
      {"particle",
       {{"radius_m", sc.particle.radius()},
        {"density_kg_m3", sc.particle.density()},
        {"refractive_index", sc.particle.refractive_index()}}},
      {"gas",
       {{"pressure_mbar", sc.gas.pressure_mbar()},
        {"temperature_K", sc.gas.temperature()},
        {"molecular_mass_u", sc.gas.molecular_mass() / constants::kAtomicMassUnit},
        {"viscosity_Pa_s", sc.gas.viscosity_ref()}}},
      {"trap",
       {{"wavelength_m", sc.trap.wavelength()},
        {"waist_m", sc.trap.waist()},
        {"power_W", sc.trap.total_power()}}},
      {"launch", launch},
      {"sim",
       {{"dt_fine_s", pc.dt_fine},
        {"t_max_s", pc.t_max},
        {"capture_hold_s", pc.capture_hold_time},
        {"capture_radius_w0", pc.capture_radius},
        {"far_field_radius_w0", pc.far_field_radius},
        {"seed", sc.master_seed},
        {"events", rc.events},
        {"gravity", sc.gravity}}},
  };
}

inline json nullable(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline json sweep_to_json(const SweepResult& r) {
  json points = json::array();
  for (const auto& p : r.points) {
    points.push_back({{"value", p.value},
                      {"n", p.n},
                      {"trapped", p.trapped},
                      {"p", p.p},
                      {"ci_lo", p.ci_lo},
                      {"ci_hi", p.ci_hi},
                      {"mean_capture_time_s", nullable(p.mean_capture_time)},
                      {"timeouts", p.timeouts},
                      {"escaped", p.escaped},
                      {"complete", p.complete}});
  }
  return {{"schema_version", kSweepSchemaVersion},
          {"parameter", to_string(r.parameter)},
          {"unit", unit_of(r.parameter)},
          {"config", config_to_json(RunConfig{r.base, r.events_per_point})},
          {"seed", r.master_seed},
          {"points", points}};
}

inline void write_sweep_csv(std::ostream& os, const SweepResult& r) {
  os << kSweepHeader << '\n';
  for (const auto& p : r.points) {
    os << fmt(p.value) << ',' << p.n << ',' << p.trapped << ',' << fmt(p.p) << ',' << fmt(p.ci_lo)
       << ',' << fmt(p.ci_hi) << ',' << fmt(p.mean_capture_time) << ',' << p.timeouts << '\n';
  }
}

inline void write_trace_csv(std::ostream& os, std::span<const KineticState> trace) {
  os << kTraceHeader << '\n';
  for (const auto& s : trace) {
    os << fmt(s.time) << ',' << fmt(s.position.x()) << ',' << fmt(s.position.y()) << ','
       << fmt(s.position.z()) << ',' << fmt(s.velocity.x()) << ',' << fmt(s.velocity.y()) << ','
       << fmt(s.velocity.z()) << '\n';
  }
}

namespace detail {

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline double parse_double(const std::string& s, std::size_t line_no) {
  if (s == "nan" || s == "-nan") return std::numeric_limits<double>::quiet_NaN();
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw std::runtime_error("line " + std::to_string(line_no) + ": not a number: '" + s + "'");
  }
}

/// Non-comment lines after the header, which must equal `header`.
inline std::vector<std::pair<std::size_t, std::string>> data_lines(std::istream& is,
                                                                   const std::string& header) {
  std::vector<std::pair<std::size_t, std::string>> rows;
  std::string line;
  std::size_t line_no = 0;
  bool seen_header = false;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (!seen_header) {
      if (line != header) throw std::runtime_error("expected header '" + header + "'");
      seen_header = true;
      continue;
    }
    rows.emplace_back(line_no, line);
  }
  if (!seen_header) throw std::runtime_error("missing header '" + header + "'");
  return rows;
}

}  // namespace detail

inline std::vector<KineticState> read_trace_csv(std::istream& is) {
  std::vector<KineticState> out;
  for (const auto& [no, line] : detail::data_lines(is, kTraceHeader)) {
    const auto c = detail::split_csv(line);
    if (c.size() != 7) throw std::runtime_error("line " + std::to_string(no) + ": expected 7 columns");
    double v[7];
    for (int i = 0; i < 7; ++i) v[i] = detail::parse_double(c[i], no);
    KineticState s;
    s.time = v[0];
    s.position = Vec3(v[1], v[2], v[3]);
    s.velocity = Vec3(v[4], v[5], v[6]);
    out.push_back(s);
  }
  return out;
}

inline void write_outcomes_csv(std::ostream& os, std::span<const TrajectoryOutcome> outcomes) {
  os << kOutcomeHeader << '\n';
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    const auto& o = outcomes[i];
    os << i << ',' << to_string(o.kind) << ',' << fmt(o.arrival_time) << ',' << fmt(o.capture_time)
       << ',' << o.site_index << ',' << fmt(o.site_intensity_fraction) << ','
       << fmt(o.final_energy) << '\n';
  }
}

inline OutcomeKind parse_kind(const std::string& s, std::size_t line_no) {
  if (s == "trapped") return OutcomeKind::Trapped;
  if (s == "escaped") return OutcomeKind::Escaped;
  if (s == "timed_out") return OutcomeKind::TimedOut;
  throw std::runtime_error("line " + std::to_string(line_no) + ": unknown outcome '" + s + "'");
}

inline std::vector<TrajectoryOutcome> read_outcomes_csv(std::istream& is) {
  std::vector<TrajectoryOutcome> out;
  for (const auto& [no, line] : detail::data_lines(is, kOutcomeHeader)) {
    const auto c = detail::split_csv(line);
    if (c.size() != 7) throw std::runtime_error("line " + std::to_string(no) + ": expected 7 columns");
    TrajectoryOutcome o;
    o.kind = parse_kind(c[1], no);
    o.arrival_time = detail::parse_double(c[2], no);
    o.capture_time = detail::parse_double(c[3], no);
    o.site_index = std::stol(c[4]);
    o.site_intensity_fraction = detail::parse_double(c[5], no);
    o.final_energy = detail::parse_double(c[6], no);
    out.push_back(o);
  }
  return out;
}

inline void write_psd_csv(std::ostream& os, const PsdEstimate& psd) {
  os << "# window=" << psd.window << " segment_length=" << psd.segment_length
     << " overlap=" << fmt(psd.overlap_fraction) << " segments=" << psd.segments
     << " sample_rate_hz=" << fmt(psd.sample_rate) << '\n';
  os << "f_hz,psd\n";
  for (std::size_t i = 0; i < psd.frequencies.size(); ++i)
    os << fmt(psd.frequencies[i]) << ',' << fmt(psd.densities[i]) << '\n';
}

inline json fit_to_json(const LorentzianFit& f) {
  return {{"f0_hz", f.center_frequency},
          {"linewidth_hz", f.linewidth},
          {"amplitude", f.amplitude},
          {"plateau", f.plateau},
          {"residual", f.residual},
          {"converged", f.converged}};
}

}  // namespace liad::io
