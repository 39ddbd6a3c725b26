#pragma once

// Run configuration: a versioned YAML document with one section per module.
// Every key is optional; omitted keys take the defaults listed in README.md.
// Unknown keys are rejected and every error names the offending key path.

#include <yaml-cpp/yaml.h>

#include <cmath>
#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "liad/errors.hpp"
#include "liad/montecarlo.hpp"

namespace liad {

inline constexpr int kConfigSchemaVersion = 1;

struct RunConfig {
  SimulationConfig simulation;
  std::size_t events = 1000;
};

namespace detail {

inline void reject_unknown(const YAML::Node& node, const std::string& section,
                           const std::set<std::string>& allowed) {
  for (const auto& kv : node) {
    const auto key = kv.first.as<std::string>();
    if (!allowed.count(key))
      throw ConfigError("unknown key", section.empty() ? key : section + "." + key);
  }
}

template <class T>
T read_scalar(const YAML::Node& section, const std::string& section_name, const char* key,
              T fallback) {
  const auto node = section[key];
  if (!node) return fallback;
  try {
    return node.as<T>();
  } catch (const YAML::Exception&) {
    throw ConfigError("not a valid value", section_name + "." + key);
  }
}

inline std::vector<double> read_list(const YAML::Node& section, const std::string& section_name,
                                     const char* key, std::vector<double> fallback) {
  const auto node = section[key];
  if (!node) return fallback;
  if (!node.IsSequence()) throw ConfigError("expected a list", section_name + "." + key);
  return read_scalar<std::vector<double>>(section, section_name, key, {});
}

inline YAML::Node section_of(const YAML::Node& root, const char* name) {
  const auto node = root[name];
  if (!node || node.IsNull()) return YAML::Node(YAML::NodeType::Map);
  if (!node.IsMap()) throw ConfigError("expected a mapping", name);
  return node;
}

inline void require(bool ok, const std::string& key, const char* what) {
  if (!ok) throw ConfigError(what, key);
}

}  // namespace detail

inline RunConfig parse_config(const YAML::Node& root) {
  using detail::read_list;
  using detail::read_scalar;
  using detail::require;

  RunConfig rc;
  if (!root || root.IsNull()) return rc;
  if (!root.IsMap()) throw ConfigError("top level must be a mapping", "");
  detail::reject_unknown(root, "", {"schema_version", "particle", "gas", "trap", "launch", "sim"});
  const int version = read_scalar<int>(root, "", "schema_version", kConfigSchemaVersion);
  if (version != kConfigSchemaVersion) throw ConfigError("unsupported version", "schema_version");

  SimulationConfig& sc = rc.simulation;

  {
    const auto s = detail::section_of(root, "particle");
    detail::reject_unknown(s, "particle", {"radius_m", "density_kg_m3", "refractive_index"});
    const Particle d;
    const double r = read_scalar(s, "particle", "radius_m", d.radius());
    const double rho = read_scalar(s, "particle", "density_kg_m3", d.density());
    const double n = read_scalar(s, "particle", "refractive_index", d.refractive_index());
    require(r > 0.0 && std::isfinite(r), "particle.radius_m", "must be > 0");
    require(rho > 0.0 && std::isfinite(rho), "particle.density_kg_m3", "must be > 0");
    require(n > 1.0 && std::isfinite(n), "particle.refractive_index", "must be > 1");
    sc.particle = Particle(r, rho, n);
  }
  {
    const auto s = detail::section_of(root, "gas");
    detail::reject_unknown(s, "gas",
                           {"pressure_mbar", "temperature_K", "molecular_mass_u", "viscosity_Pa_s"});
    const GasEnvironment d;
    const double p = read_scalar(s, "gas", "pressure_mbar", d.pressure_mbar());
    const double t = read_scalar(s, "gas", "temperature_K", d.temperature());
    const double m = read_scalar(s, "gas", "molecular_mass_u",
                                 d.molecular_mass() / constants::kAtomicMassUnit);
    const double eta = read_scalar(s, "gas", "viscosity_Pa_s", d.viscosity_ref());
    require(p >= 0.0 && std::isfinite(p), "gas.pressure_mbar", "must be >= 0");
    require(t > 0.0 && std::isfinite(t), "gas.temperature_K", "must be > 0");
    require(m > 0.0 && std::isfinite(m), "gas.molecular_mass_u", "must be > 0");
    require(eta > 0.0 && std::isfinite(eta), "gas.viscosity_Pa_s", "must be > 0");
    sc.gas = GasEnvironment(p * constants::kPascalPerMillibar, t, m * constants::kAtomicMassUnit, eta);
  }
  {
    const auto s = detail::section_of(root, "trap");
    detail::reject_unknown(s, "trap", {"wavelength_m", "waist_m", "power_W"});
    const TrapConfig d;
    const double wl = read_scalar(s, "trap", "wavelength_m", d.wavelength());
    const double w0 = read_scalar(s, "trap", "waist_m", d.waist());
    const double pw = read_scalar(s, "trap", "power_W", d.total_power());
    require(wl > 0.0 && std::isfinite(wl), "trap.wavelength_m", "must be > 0");
    require(w0 > 0.0 && std::isfinite(w0), "trap.waist_m", "must be > 0");
    require(pw >= 0.0 && std::isfinite(pw), "trap.power_W", "must be >= 0");
    sc.trap = TrapConfig(wl, w0, pw);
  }
  {
    const auto s = detail::section_of(root, "launch");
    const std::string kind = read_scalar<std::string>(s, "launch", "kind", "lognormal");
    std::set<std::string> allowed{"kind", "distance_m", "spread_rad", "direction"};
    if (kind == "delta") {
      allowed.insert("speed_mps");
      sc.launch.speed = DeltaSpeed{read_scalar(s, "launch", "speed_mps", DeltaSpeed{}.speed)};
    } else if (kind == "lognormal") {
      allowed.insert({"median_mps", "geometric_sigma"});
      const LogNormalSpeed d;
      sc.launch.speed = LogNormalSpeed{read_scalar(s, "launch", "median_mps", d.median),
                                       read_scalar(s, "launch", "geometric_sigma", d.geometric_sigma)};
    } else if (kind == "gamma") {
      allowed.insert({"shape", "scale_mps"});
      const GammaSpeed d;
      sc.launch.speed = GammaSpeed{read_scalar(s, "launch", "shape", d.shape),
                                   read_scalar(s, "launch", "scale_mps", d.scale)};
    } else if (kind == "empirical") {
      allowed.insert({"bin_edges_mps", "weights"});
      require(s["bin_edges_mps"] && s["weights"], "launch.bin_edges_mps",
              "empirical launch needs bin_edges_mps and weights");
      sc.launch.speed = EmpiricalSpeed{read_list(s, "launch", "bin_edges_mps", {}),
                                       read_list(s, "launch", "weights", {})};
    } else {
      throw ConfigError("must be one of delta, lognormal, gamma, empirical", "launch.kind");
    }
    detail::reject_unknown(s, "launch", allowed);
    sc.substrate_distance = read_scalar(s, "launch", "distance_m", sc.substrate_distance);
    sc.launch.transverse_spread = read_scalar(s, "launch", "spread_rad", sc.launch.transverse_spread);
    const auto dir = read_list(s, "launch", "direction",
                               {sc.launch.direction.x(), sc.launch.direction.y(), sc.launch.direction.z()});
    require(dir.size() == 3, "launch.direction", "expected 3 components");
    sc.launch.direction = Vec3(dir[0], dir[1], dir[2]);
    require(sc.substrate_distance > 0.0 && std::isfinite(sc.substrate_distance), "launch.distance_m",
            "must be > 0");
  }
  {
    const auto s = detail::section_of(root, "sim");
    detail::reject_unknown(s, "sim",
                           {"dt_fine_s", "t_max_s", "capture_hold_s", "capture_radius_w0",
                            "far_field_radius_w0", "seed", "events", "gravity"});
    auto& pc = sc.propagation;
    pc.dt_fine = read_scalar(s, "sim", "dt_fine_s", pc.dt_fine);
    pc.t_max = read_scalar(s, "sim", "t_max_s", pc.t_max);
    pc.capture_hold_time = read_scalar(s, "sim", "capture_hold_s", pc.capture_hold_time);
    pc.capture_radius = read_scalar(s, "sim", "capture_radius_w0", pc.capture_radius);
    pc.far_field_radius = read_scalar(s, "sim", "far_field_radius_w0", pc.far_field_radius);
    sc.master_seed = read_scalar<std::uint64_t>(s, "sim", "seed", sc.master_seed);
    sc.gravity = read_scalar(s, "sim", "gravity", sc.gravity);
    const auto events = read_scalar<long long>(s, "sim", "events", static_cast<long long>(rc.events));
    require(events >= 1, "sim.events", "must be >= 1");
    rc.events = static_cast<std::size_t>(events);
  }
  sc.validate();
  return rc;
}

inline RunConfig parse_config_text(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("parse error: ") + e.what(), "");
  }
  return parse_config(root);
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path, "");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

inline std::string dump_config(const RunConfig& rc) {
  const SimulationConfig& sc = rc.simulation;
  YAML::Emitter out;
  out.SetDoublePrecision(std::numeric_limits<double>::max_digits10);
  out << YAML::BeginMap;
  out << YAML::Key << "schema_version" << YAML::Value << kConfigSchemaVersion;

  out << YAML::Key << "particle" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "radius_m" << YAML::Value << sc.particle.radius();
  out << YAML::Key << "density_kg_m3" << YAML::Value << sc.particle.density();
  out << YAML::Key << "refractive_index" << YAML::Value << sc.particle.refractive_index();
  out << YAML::EndMap;

  out << YAML::Key << "gas" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "pressure_mbar" << YAML::Value << sc.gas.pressure_mbar();
  out << YAML::Key << "temperature_K" << YAML::Value << sc.gas.temperature();
  out << YAML::Key << "molecular_mass_u" << YAML::Value
      << sc.gas.molecular_mass() / constants::kAtomicMassUnit;
  out << YAML::Key << "viscosity_Pa_s" << YAML::Value << sc.gas.viscosity_ref();
  out << YAML::EndMap;

  out << YAML::Key << "trap" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "wavelength_m" << YAML::Value << sc.trap.wavelength();
  out << YAML::Key << "waist_m" << YAML::Value << sc.trap.waist();
  out << YAML::Key << "power_W" << YAML::Value << sc.trap.total_power();
  out << YAML::EndMap;

  out << YAML::Key << "launch" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "kind" << YAML::Value << kind_name(sc.launch.speed);
  if (const auto* d = std::get_if<DeltaSpeed>(&sc.launch.speed)) {
    out << YAML::Key << "speed_mps" << YAML::Value << d->speed;
  } else if (const auto* l = std::get_if<LogNormalSpeed>(&sc.launch.speed)) {
    out << YAML::Key << "median_mps" << YAML::Value << l->median;
    out << YAML::Key << "geometric_sigma" << YAML::Value << l->geometric_sigma;
  } else if (const auto* g = std::get_if<GammaSpeed>(&sc.launch.speed)) {
    out << YAML::Key << "shape" << YAML::Value << g->shape;
    out << YAML::Key << "scale_mps" << YAML::Value << g->scale;
  } else if (const auto* e = std::get_if<EmpiricalSpeed>(&sc.launch.speed)) {
    out << YAML::Key << "bin_edges_mps" << YAML::Value << YAML::Flow << e->bin_edges;
    out << YAML::Key << "weights" << YAML::Value << YAML::Flow << e->weights;
  }
  out << YAML::Key << "distance_m" << YAML::Value << sc.substrate_distance;
  out << YAML::Key << "spread_rad" << YAML::Value << sc.launch.transverse_spread;
  out << YAML::Key << "direction" << YAML::Value << YAML::Flow
      << std::vector<double>{sc.launch.direction.x(), sc.launch.direction.y(), sc.launch.direction.z()};
  out << YAML::EndMap;

  const auto& pc = sc.propagation;
  out << YAML::Key << "sim" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "dt_fine_s" << YAML::Value << pc.dt_fine;
  out << YAML::Key << "t_max_s" << YAML::Value << pc.t_max;
  out << YAML::Key << "capture_hold_s" << YAML::Value << pc.capture_hold_time;
  out << YAML::Key << "capture_radius_w0" << YAML::Value << pc.capture_radius;
  out << YAML::Key << "far_field_radius_w0" << YAML::Value << pc.far_field_radius;
  out << YAML::Key << "seed" << YAML::Value << sc.master_seed;
  out << YAML::Key << "events" << YAML::Value << rc.events;
  out << YAML::Key << "gravity" << YAML::Value << sc.gravity;
  out << YAML::EndMap;

  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

}  // namespace liad
