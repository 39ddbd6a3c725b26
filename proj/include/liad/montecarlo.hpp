#pragma once

// Ensemble machinery: launch sampling, deterministic per-event simulation,
// parameter sweeps, multi-particle shot statistics and capture-site signals.

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include <Eigen/Geometry>

#include "liad/analysis.hpp"
#include "liad/dynamics.hpp"
#include "liad/errors.hpp"
#include "liad/physics.hpp"

namespace liad {

// ---------------------------------------------------------------------------
// Launch distributions

struct DeltaSpeed {
  double speed = 20.0;
};
struct LogNormalSpeed {
  double median = 20.0;
  double geometric_sigma = 1.6;
};
struct GammaSpeed {
  double shape = 4.0;
  double scale = 5.0;
};
/// Speeds are drawn as bin centers with probability proportional to the weights.
struct EmpiricalSpeed {
  std::vector<double> bin_edges;
  std::vector<double> weights;
};

using SpeedModel = std::variant<DeltaSpeed, LogNormalSpeed, GammaSpeed, EmpiricalSpeed>;

struct LaunchDistribution {
  SpeedModel speed = LogNormalSpeed{};
  Vec3 direction = Vec3(0.0, -1.0, 0.0);
  double transverse_spread = 0.0;  // cone half-angle, rad

  void validate() const;
};

inline const char* kind_name(const SpeedModel& m) {
  struct Visitor {
    const char* operator()(const DeltaSpeed&) const { return "delta"; }
    const char* operator()(const LogNormalSpeed&) const { return "lognormal"; }
    const char* operator()(const GammaSpeed&) const { return "gamma"; }
    const char* operator()(const EmpiricalSpeed&) const { return "empirical"; }
  };
  return std::visit(Visitor{}, m);
}

inline void LaunchDistribution::validate() const {
  struct Check {
    void operator()(const DeltaSpeed& d) const {
      if (!(d.speed >= 0.0) || !std::isfinite(d.speed))
        throw ConfigError("speed must be >= 0", "launch.speed_mps");
    }
    void operator()(const LogNormalSpeed& d) const {
      if (!(d.median > 0.0)) throw ConfigError("must be > 0", "launch.median_mps");
      if (!(d.geometric_sigma >= 1.0)) throw ConfigError("must be >= 1", "launch.geometric_sigma");
    }
    void operator()(const GammaSpeed& d) const {
      if (!(d.shape > 0.0)) throw ConfigError("must be > 0", "launch.shape");
      if (!(d.scale > 0.0)) throw ConfigError("must be > 0", "launch.scale_mps");
    }
    void operator()(const EmpiricalSpeed& d) const {
      if (d.bin_edges.size() < 2 || d.weights.size() + 1 != d.bin_edges.size())
        throw ConfigError("need n+1 edges for n weights", "launch.bin_edges_mps");
      if (d.bin_edges.front() < 0.0) throw ConfigError("speeds must be >= 0", "launch.bin_edges_mps");
      for (std::size_t i = 1; i < d.bin_edges.size(); ++i)
        if (!(d.bin_edges[i] > d.bin_edges[i - 1]))
          throw ConfigError("edges must be strictly increasing", "launch.bin_edges_mps");
      double total = 0.0;
      for (double w : d.weights) {
        if (!(w >= 0.0)) throw ConfigError("weights must be >= 0", "launch.weights");
        total += w;
      }
      if (!(total > 0.0)) throw ConfigError("weights must not all be zero", "launch.weights");
    }
  };
  std::visit(Check{}, speed);
  const double n = direction.norm();
  if (!(n > 0.0) || !std::isfinite(n))
    throw ConfigError("must be a nonzero vector", "launch.direction");
  if (!(transverse_spread >= 0.0 && transverse_spread < constants::kPi / 2.0))
    throw ConfigError("must be in [0, pi/2)", "launch.spread_rad");
}

inline double sample_speed(const SpeedModel& m, Rng& rng) {
  struct Sampler {
    Rng& rng;
    double operator()(const DeltaSpeed& d) const { return d.speed; }
    double operator()(const LogNormalSpeed& d) const {
      return std::lognormal_distribution<double>(std::log(d.median), std::log(d.geometric_sigma))(rng);
    }
    double operator()(const GammaSpeed& d) const {
      return std::gamma_distribution<double>(d.shape, d.scale)(rng);
    }
    double operator()(const EmpiricalSpeed& d) const {
      std::discrete_distribution<std::size_t> pick(d.weights.begin(), d.weights.end());
      const std::size_t i = pick(rng);
      return 0.5 * (d.bin_edges[i] + d.bin_edges[i + 1]);
    }
  };
  return std::visit(Sampler{rng}, m);
}

/// Launch state: at `substrate_distance` above the trap center, moving along the
/// distribution's direction, perturbed uniformly within the spread cone.
inline KineticState sample_launch(const LaunchDistribution& d, double substrate_distance, Rng& rng,
                                  const Vec3& trap_center = Vec3::Zero()) {
  KineticState s;
  s.position = trap_center + substrate_distance * Vec3::UnitY();
  const double speed = sample_speed(d.speed, rng);
  Vec3 dir = d.direction.normalized();
  if (d.transverse_spread > 0.0) {
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    const double cos_max = std::cos(d.transverse_spread);
    const double cos_t = 1.0 - uni(rng) * (1.0 - cos_max);
    const double sin_t = std::sqrt(std::max(0.0, 1.0 - cos_t * cos_t));
    const double phi = 2.0 * constants::kPi * uni(rng);
    const Vec3 helper = std::abs(dir.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
    const Vec3 e1 = dir.cross(helper).normalized();
    const Vec3 e2 = dir.cross(e1);
    dir = cos_t * dir + sin_t * (std::cos(phi) * e1 + std::sin(phi) * e2);
  }
  s.velocity = speed * dir;
  return s;
}

// ---------------------------------------------------------------------------
// Per-event simulation

struct SimulationConfig {
  Particle particle;
  GasEnvironment gas;
  TrapConfig trap;
  LaunchDistribution launch;
  double substrate_distance = 8e-3;
  PropagationConfig propagation;
  std::uint64_t master_seed = 1;
  bool gravity = true;

  void validate() const {
    launch.validate();
    liad::validate(propagation, ParticleSystem::make(particle, gas, trap, gravity));
    if (!(substrate_distance > 0.0)) throw ConfigError("must be > 0", "launch.distance_m");
  }
};

/// SplitMix64 finalizer.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Per-event generator seed; depends only on its arguments.
inline std::uint64_t event_seed(std::uint64_t master_seed, std::uint64_t event_index,
                                std::uint64_t parameter_index = 0) {
  return mix64(mix64(mix64(master_seed) ^ parameter_index) ^ event_index);
}

inline TrajectoryOutcome simulate_launch_event(const SimulationConfig& cfg, std::uint64_t event_index,
                                               std::uint64_t parameter_index = 0) {
  cfg.validate();
  Rng rng(event_seed(cfg.master_seed, event_index, parameter_index));
  const KineticState init = sample_launch(cfg.launch, cfg.substrate_distance, rng, cfg.trap.center());
  PropagationConfig prop = cfg.propagation;
  prop.rng_seed = rng();
  const auto sys = ParticleSystem::make(cfg.particle, cfg.gas, cfg.trap, cfg.gravity);
  return propagate_trajectory(init, sys, prop);
}

// ---------------------------------------------------------------------------
// Sweeps

enum class SweepParameter { Pressure, Power, LaunchSpeed, SubstrateDistance };

inline const char* to_string(SweepParameter p) {
  switch (p) {
    case SweepParameter::Pressure: return "pressure";
    case SweepParameter::Power: return "power";
    case SweepParameter::LaunchSpeed: return "launch_speed";
    case SweepParameter::SubstrateDistance: return "substrate_distance";
  }
  return "unknown";
}

/// Grid units: pressure in mbar, power in W, launch speed in m/s, distance in m.
inline const char* unit_of(SweepParameter p) {
  switch (p) {
    case SweepParameter::Pressure: return "mbar";
    case SweepParameter::Power: return "W";
    case SweepParameter::LaunchSpeed: return "m/s";
    case SweepParameter::SubstrateDistance: return "m";
  }
  return "";
}

struct SweepPoint {
  double value = 0.0;
  std::size_t n = 0;
  std::size_t trapped = 0;
  std::size_t escaped = 0;
  std::size_t timeouts = 0;
  double p = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  double mean_capture_time = std::numeric_limits<double>::quiet_NaN();
  bool complete = true;
};

struct SweepSpec {
  SweepParameter parameter = SweepParameter::Pressure;
  std::vector<double> grid;
  std::size_t events_per_point = 1000;
  SimulationConfig base;
  std::uint64_t master_seed = 1;
  unsigned workers = 1;
  double wall_clock_cap_s = 0.0;  // per point; 0 disables
  std::function<void(std::size_t, const SweepPoint&)> on_point;  // called after each point

  void validate() const {
    if (grid.empty()) throw ConfigError("grid must not be empty", "sweep.grid");
    const bool up = grid.size() < 2 || grid[1] > grid[0];
    for (std::size_t i = 1; i < grid.size(); ++i)
      if (up ? !(grid[i] > grid[i - 1]) : !(grid[i] < grid[i - 1]))
        throw ConfigError("grid must be strictly monotone", "sweep.grid");
    if (events_per_point < 1) throw ConfigError("must be >= 1", "sim.events");
    base.validate();
  }
};

/// The base configuration with the swept parameter set to `value`.
inline SimulationConfig apply_sweep_value(const SimulationConfig& base, SweepParameter p,
                                          double value) {
  if (!(value >= 0.0) || !std::isfinite(value) || (p == SweepParameter::SubstrateDistance && value == 0.0))
    throw ConfigError("value out of range for " + std::string(to_string(p)), "sweep.grid");
  SimulationConfig cfg = base;
  switch (p) {
    case SweepParameter::Pressure:
      cfg.gas = base.gas.with_pressure(value * constants::kPascalPerMillibar);
      break;
    case SweepParameter::Power:
      cfg.trap = base.trap.with_power(value);
      break;
    case SweepParameter::LaunchSpeed:
      cfg.launch.speed = DeltaSpeed{value};
      break;
    case SweepParameter::SubstrateDistance:
      cfg.substrate_distance = value;
      break;
  }
  return cfg;
}

struct SweepResult {
  SweepParameter parameter = SweepParameter::Pressure;
  std::uint64_t master_seed = 0;
  std::size_t events_per_point = 0;
  SimulationConfig base;
  std::vector<SweepPoint> points;
};

namespace detail {

struct EventRecord {
  OutcomeKind kind = OutcomeKind::TimedOut;
  double capture_time = 0.0;
  bool done = false;
};

}  // namespace detail

/// Runs every grid point. Per-event seeds depend on (master_seed, event, point),
/// and tallies are formed in event order, so the result does not depend on the
/// number of workers.
inline SweepResult run_sweep(const SweepSpec& spec) {
  spec.validate();
  SweepResult result;
  result.parameter = spec.parameter;
  result.master_seed = spec.master_seed;
  result.events_per_point = spec.events_per_point;
  result.base = spec.base;
  result.base.master_seed = spec.master_seed;

  const unsigned workers = std::max(1u, spec.workers);
  for (std::size_t pi = 0; pi < spec.grid.size(); ++pi) {
    SimulationConfig cfg = apply_sweep_value(spec.base, spec.parameter, spec.grid[pi]);
    cfg.master_seed = spec.master_seed;
    cfg.validate();

    std::vector<detail::EventRecord> records(spec.events_per_point);
    std::atomic<std::size_t> next{0};
    std::atomic<bool> out_of_time{false};
    const auto start = std::chrono::steady_clock::now();
    auto work = [&]() {
      while (!out_of_time.load(std::memory_order_relaxed)) {
        const std::size_t i = next.fetch_add(1, std::memory_order_relaxed);
        if (i >= records.size()) return;
        const auto o = simulate_launch_event(cfg, i, pi);
        records[i] = {o.kind, o.capture_time, true};
        if (spec.wall_clock_cap_s > 0.0) {
          const std::chrono::duration<double> el = std::chrono::steady_clock::now() - start;
          if (el.count() > spec.wall_clock_cap_s) out_of_time.store(true);
        }
      }
    };
    if (workers == 1) {
      work();
    } else {
      std::vector<std::jthread> pool;
      pool.reserve(workers);
      for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
    }

    SweepPoint pt;
    pt.value = spec.grid[pi];
    double capture_sum = 0.0;
    for (const auto& r : records) {
      if (!r.done) {
        pt.complete = false;
        continue;
      }
      ++pt.n;
      switch (r.kind) {
        case OutcomeKind::Trapped:
          ++pt.trapped;
          capture_sum += r.capture_time;
          break;
        case OutcomeKind::Escaped: ++pt.escaped; break;
        case OutcomeKind::TimedOut: ++pt.timeouts; break;
      }
    }
    if (pt.n > 0) {
      pt.p = static_cast<double>(pt.trapped) / static_cast<double>(pt.n);
      const auto ci = wilson_interval(pt.trapped, pt.n, 0.95);
      pt.ci_lo = ci.lo;
      pt.ci_hi = ci.hi;
    } else {
      pt.ci_hi = 1.0;
    }
    if (pt.trapped > 0) pt.mean_capture_time = capture_sum / static_cast<double>(pt.trapped);
    result.points.push_back(pt);
    if (spec.on_point) spec.on_point(pi, pt);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Shot statistics

struct ShotModel {
  double mean_particles_per_shot = 1.0;  // Poisson mean lambda
  double per_particle_capture_probability = 0.0;

  void validate() const {
    if (!(mean_particles_per_shot >= 0.0) || !std::isfinite(mean_particles_per_shot))
      throw std::invalid_argument("ShotModel: lambda must be >= 0");
    if (!(per_particle_capture_probability >= 0.0 && per_particle_capture_probability <= 1.0))
      throw std::invalid_argument("ShotModel: p must be in [0, 1]");
  }
};

struct ShotProbabilities {
  double none;
  double single;
  double multiple;
};

/// Poisson(lambda) particles per shot, each captured independently with
/// probability p, gives a Poisson(lambda p) trapped count.
inline ShotProbabilities shot_outcome_statistics(const ShotModel& m) {
  m.validate();
  const double mu = m.mean_particles_per_shot * m.per_particle_capture_probability;
  const double none = std::exp(-mu);
  const double single = mu * none;
  // 1 - (1 + mu) e^{-mu}, written to stay accurate for small mu.
  const double multiple = -std::expm1(-mu) - single;
  return {none, single, std::max(0.0, multiple)};
}

/// Normalized signal amplitude per trapped particle: the intensity of its
/// capturing antinode relative to the central one.
inline Histogram capture_site_signal(std::span<const TrajectoryOutcome> outcomes,
                                     std::size_t bins = 20) {
  std::vector<double> amplitudes;
  for (const auto& o : outcomes)
    if (o.kind == OutcomeKind::Trapped) amplitudes.push_back(o.site_intensity_fraction);
  if (amplitudes.empty()) throw std::invalid_argument("capture_site_signal: no trapped outcomes");
  return histogram_by_count(amplitudes, bins);
}

}  // namespace liad
