#pragma once

// Single-particle propagation: the analytic drag trajectory, an exact free
// Langevin transition kernel, the trap-aware splitting step and the full
// launch-to-outcome trajectory driver.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <vector>

#include "liad/constants.hpp"
#include "liad/errors.hpp"
#include "liad/physics.hpp"

namespace liad {

using Rng = std::mt19937_64;

struct KineticState {
  Vec3 position = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();
  double time = 0.0;
};

/// Everything the integrator needs about one particle in one environment.
struct ParticleSystem {
  double mass;
  double gamma;        // momentum damping rate, 1/s
  double temperature;  // bath temperature, K
  OpticalField field;
  Vec3 gravity;        // acceleration vector, m/s^2

  static ParticleSystem make(const Particle& p, const GasEnvironment& g, const TrapConfig& t,
                             bool with_gravity = true) {
    return {particle_mass(p), damping_rate(p, g), g.temperature(), OpticalField(t, p),
            with_gravity ? Vec3(0.0, -constants::kStandardGravity, 0.0) : Vec3::Zero()};
  }

  /// k_B T / M, the per-axis thermal velocity variance.
  double thermal_velocity_variance() const {
    return constants::kBoltzmann * temperature / mass;
  }
};

namespace detail {

/// (h - 1 + e^{-h}) / h^2, by its Taylor series below h = 1e-2 where the closed
/// form cancels.
inline double drag_accel_coeff(double h) {
  if (h < 1e-2) {
    return 0.5 - h / 6.0 + h * h / 24.0 - h * h * h / 120.0 + h * h * h * h / 720.0 -
           h * h * h * h * h / 5040.0;
  }
  return (h + std::expm1(-h)) / (h * h);
}

}  // namespace detail

/// Vertical position of a damped particle launched with vertical velocity `u`
/// under gravity g (pointing down), neglecting diffusion:
///   y(t) = (1 - e^{-G t}) (g / G^2 + u / G) - (g / G) t,
/// evaluated as u t (1 - e^{-h}) / h - g t^2 (h - 1 + e^{-h}) / h^2 with h = G t.
inline double analytic_drag_position(double u, double gamma, double t,
                                     double g = constants::kStandardGravity) {
  if (gamma < 0.0 || !std::isfinite(gamma))
    throw std::domain_error("analytic_drag_position: damping rate must be >= 0");
  if (t < 0.0) throw std::domain_error("analytic_drag_position: t must be >= 0");
  const double h = gamma * t;
  const double a = h < 1e-8 ? 1.0 - h / 2.0 : -std::expm1(-h) / h;
  return u * t * a - g * t * t * detail::drag_accel_coeff(h);
}

/// Long-time one-dimensional mean-square displacement 2 k_B T / (M Gamma) t.
inline double msd_free_diffusion(const Particle& p, const GasEnvironment& g, double t) {
  const double gamma = damping_rate(p, g);
  if (!(gamma > 0.0)) throw std::domain_error("msd_free_diffusion: no diffusive limit at Gamma = 0");
  if (t < 0.0) throw std::domain_error("msd_free_diffusion: t must be >= 0");
  return 2.0 * constants::kBoltzmann * g.temperature() / (particle_mass(p) * gamma) * t;
}

namespace detail {

/// Coefficients of the exact Ornstein-Uhlenbeck transition of (x, v) per axis
/// over an interval dt under a constant acceleration a:
///   v' = decay v + vel_accel a + noise_v
///   x' = x + pos_vel v + pos_accel a + noise_x
/// with noise covariances in units of the thermal velocity variance.
struct FreeTransition {
  double decay = 1.0;
  double pos_vel = 0.0;
  double pos_accel = 0.0;
  double vel_accel = 0.0;
  double var_v = 0.0;       // / (k_B T / M)
  double cov_xv = 0.0;      // / (k_B T / M)
  double var_x_cond = 0.0;  // Var(x | v) / (k_B T / M)

  static FreeTransition make(double gamma, double dt) {
    FreeTransition tr;
    if (dt <= 0.0) return tr;
    if (gamma == 0.0) {
      tr.pos_vel = dt;
      tr.pos_accel = 0.5 * dt * dt;
      tr.vel_accel = dt;
      return tr;
    }
    const double h = gamma * dt;
    const double a1 = -std::expm1(-h);      // 1 - e^{-h}
    const double a2 = -std::expm1(-2.0 * h);  // 1 - e^{-2h}
    tr.decay = 1.0 - a1;
    tr.pos_vel = a1 / gamma;
    tr.vel_accel = a1 / gamma;
    const double b = drag_accel_coeff(h);
    tr.pos_accel = b * dt * dt;
    // q(h) = 2h - 3 + 4 e^{-h} - e^{-2h}
    double q;
    if (h < 1e-2) {
      q = h * h * h * (2.0 / 3.0 - h / 2.0 + 7.0 * h * h / 30.0 - h * h * h / 12.0 +
                       31.0 * h * h * h * h / 1260.0);
    } else {
      q = 2.0 * h - 3.0 + 4.0 * std::exp(-h) - std::exp(-2.0 * h);
    }
    tr.var_v = a2;
    tr.cov_xv = a1 * a1 / gamma;
    const double var_x = q / (gamma * gamma);
    tr.var_x_cond = a2 > 0.0 ? std::max(0.0, var_x - tr.cov_xv * tr.cov_xv / a2) : 0.0;
    return tr;
  }

  /// Per-axis standard deviation of the position after the interval.
  double position_sigma(double thermal_var) const {
    const double var_x = var_x_cond + (var_v > 0.0 ? cov_xv * cov_xv / var_v : 0.0);
    return std::sqrt(thermal_var * var_x);
  }
};

/// Mean displacement over the transition for initial velocity v and constant acceleration a.
inline Vec3 mean_displacement(const FreeTransition& tr, const Vec3& v, const Vec3& a) {
  return tr.pos_vel * v + tr.pos_accel * a;
}

inline void apply_transition(const FreeTransition& tr, KineticState& s, const Vec3& accel,
                             double thermal_var, Rng& rng) {
  Vec3 dx = tr.pos_vel * s.velocity + tr.pos_accel * accel;
  Vec3 v = tr.decay * s.velocity + tr.vel_accel * accel;
  if (thermal_var > 0.0 && tr.var_v > 0.0) {
    std::normal_distribution<double> normal;
    const double sv = std::sqrt(thermal_var * tr.var_v);
    const double sx = std::sqrt(thermal_var * tr.var_x_cond);
    const double regress = tr.cov_xv / tr.var_v;
    for (int i = 0; i < 3; ++i) {
      const double nv = sv * normal(rng);
      const double nx = regress * nv + sx * normal(rng);
      v[i] += nv;
      dx[i] += nx;
    }
  }
  s.position += dx;
  s.velocity = v;
}

}  // namespace detail

/// Exact free-particle (gravity + drag + thermal noise) transition over `dt`.
/// The optical force is neglected; use only far from the beam.
inline KineticState far_field_propagate(const KineticState& s, double dt,
                                        const ParticleSystem& sys, Rng& rng) {
  if (dt < 0.0) throw std::invalid_argument("far_field_propagate: dt must be >= 0");
  if (dt == 0.0) return s;
  KineticState out = s;
  const auto tr = detail::FreeTransition::make(sys.gamma, dt);
  detail::apply_transition(tr, out, sys.gravity, sys.thermal_velocity_variance(), rng);
  out.time += dt;
  return out;
}

/// One splitting step of underdamped Langevin dynamics: half kick from the optical
/// force, exact Ornstein-Uhlenbeck transition of (x, v) including gravity, half kick.
/// The friction/noise substep is exact, so the step is stable for any Gamma dt.
inline KineticState langevin_step(const KineticState& s, const ParticleSystem& sys, double dt,
                                  Rng& rng) {
  if (!(dt > 0.0)) throw std::invalid_argument("langevin_step: dt must be > 0");
  KineticState out = s;
  const double half = 0.5 * dt / sys.mass;
  out.velocity += half * sys.field.force(out.position);
  const auto tr = detail::FreeTransition::make(sys.gamma, dt);
  detail::apply_transition(tr, out, sys.gravity, sys.thermal_velocity_variance(), rng);
  out.velocity += half * sys.field.force(out.position);
  out.time += dt;
  return out;
}

/// Fixed-step Langevin run from `init`, returning `samples` states spaced by
/// `stride` steps (the first sample is taken after `stride` steps).
inline std::vector<KineticState> sample_motion(const KineticState& init, const ParticleSystem& sys,
                                               double dt, std::size_t samples, std::size_t stride,
                                               Rng& rng) {
  if (!(dt > 0.0)) throw std::invalid_argument("sample_motion: dt must be > 0");
  if (stride < 1) throw std::invalid_argument("sample_motion: stride must be >= 1");
  std::vector<KineticState> out;
  out.reserve(samples);
  const auto tr = detail::FreeTransition::make(sys.gamma, dt);
  const double half = 0.5 * dt / sys.mass;
  const double var = sys.thermal_velocity_variance();
  KineticState s = init;
  Vec3 force = sys.field.force(s.position);
  for (std::size_t i = 0; i < samples; ++i) {
    for (std::size_t j = 0; j < stride; ++j) {
      s.velocity += half * force;
      detail::apply_transition(tr, s, sys.gravity, var, rng);
      force = sys.field.force(s.position);
      s.velocity += half * force;
      s.time += dt;
    }
    out.push_back(s);
  }
  return out;
}

struct PropagationConfig {
  double dt_fine = 2e-9;            // s; smallest near-field step
  double far_field_radius = 5.0;    // near-field tube radius in local beam radii (and z_R axially)
  double t_max = 10.0;              // s
  double capture_hold_time = 5e-3;  // s
  double capture_radius = 3.0;      // multiples of w0 around the capturing antinode
  std::uint64_t rng_seed = 0;
  std::size_t trace_decimation = 0;  // keep every n-th step in the trace; 0 disables tracing
};

enum class OutcomeKind { Trapped, Escaped, TimedOut };

inline const char* to_string(OutcomeKind k) {
  switch (k) {
    case OutcomeKind::Trapped: return "trapped";
    case OutcomeKind::Escaped: return "escaped";
    case OutcomeKind::TimedOut: return "timed_out";
  }
  return "unknown";
}

struct TrajectoryOutcome {
  OutcomeKind kind = OutcomeKind::TimedOut;
  double capture_time = std::numeric_limits<double>::quiet_NaN();
  long site_index = 0;
  double site_intensity_fraction = std::numeric_limits<double>::quiet_NaN();
  /// First downward crossing of the horizontal plane through the trap axis; NaN if never.
  double arrival_time = std::numeric_limits<double>::quiet_NaN();
  /// Optical + kinetic energy at the end of the run (J).
  double final_energy = 0.0;
  KineticState final_state;
  std::vector<KineticState> trace;
  std::size_t steps = 0;
};

inline void validate(const PropagationConfig& cfg) {
  if (!(cfg.dt_fine > 0.0)) throw ConfigError("must be > 0", "sim.dt_fine_s");
  if (!(cfg.t_max > 0.0)) throw ConfigError("must be > 0", "sim.t_max_s");
  if (!(cfg.capture_hold_time > 0.0)) throw ConfigError("must be > 0", "sim.capture_hold_s");
  if (!(cfg.capture_radius > 0.0)) throw ConfigError("must be > 0", "sim.capture_radius_w0");
  if (!(cfg.far_field_radius > cfg.capture_radius))
    throw ConfigError("must exceed capture_radius_w0", "sim.far_field_radius_w0");
}

/// Checks `cfg` alone and then against the trap it will run in.
inline void validate(const PropagationConfig& cfg, const ParticleSystem& sys) {
  validate(cfg);
  if (sys.field.depth() > 0.0) {
    const double omega = std::sqrt(2.0 * sys.field.depth() * sys.field.wavenumber() *
                                   sys.field.wavenumber() / sys.mass);
    const double period = 2.0 * constants::kPi / omega;
    if (cfg.dt_fine > period / 20.0)
      throw ConfigError("resolves fewer than 20 steps per axial trap period", "sim.dt_fine_s");
  }
}

namespace detail {

/// Adaptive stepping parameters for the near-field integrator.
inline constexpr double kStepsPerLocalPeriod = 40.0;
inline constexpr double kStepsPerFringe = 20.0;     // steps per lambda/2 when the field matters
inline constexpr double kStepsPerBeamRadius = 8.0;  // steps per w(z') otherwise
inline constexpr double kFieldRelevance = 1e-3;     // U_loc / (k_B T + KE) above which fringes matter
inline constexpr double kFarSigmas = 8.0;

class TrajectoryIntegrator {
 public:
  TrajectoryIntegrator(const ParticleSystem& sys, const PropagationConfig& cfg,
                       const KineticState& init)
      : sys_(sys), cfg_(cfg), rng_(cfg.rng_seed), state_(init) {
    const OpticalField& f = sys_.field;
    tube_radius_ = cfg_.far_field_radius * f.waist();
    tube_half_length_ = cfg_.far_field_radius * f.rayleigh_range();
    tube_slope_ = tube_radius_ / f.rayleigh_range();
    capture_radius_ = cfg_.capture_radius * f.waist();
    launch_height_ = (init.position - f.center()).dot(Vec3::UnitY());
    escape_scale_ = std::max(launch_height_, 100.0 * f.waist());
    thermal_var_ = sys_.thermal_velocity_variance();
  }

  TrajectoryOutcome run() {
    TrajectoryOutcome out;
    std::size_t step = 0;
    record(out, step);
    while (true) {
      if (state_.time >= cfg_.t_max) {
        out.kind = OutcomeKind::TimedOut;
        break;
      }
      if (escaped()) {
        out.kind = OutcomeKind::Escaped;
        break;
      }
      const OpticalField::Local l = sys_.field.local(state_.position);
      const double d = distance_to_tube(l);
      const double y_before = state_.position.y();
      const double t_before = state_.time;
      bool trapped = false;
      if (d > sys_.field.waist()) {
        far_step(d);
        have_force_ = false;
      } else {
        trapped = near_step(out);
      }
      note_arrival(out, y_before, t_before);
      ++step;
      record(out, step);
      if (trapped) {
        out.kind = OutcomeKind::Trapped;
        break;
      }
    }
    out.final_state = state_;
    out.final_energy = energy(state_);
    out.steps = step;
    return out;
  }

 private:
  double energy(const KineticState& s) const {
    return 0.5 * sys_.mass * s.velocity.squaredNorm() + sys_.field.potential(s.position);
  }

  void record(TrajectoryOutcome& out, std::size_t step) const {
    if (cfg_.trace_decimation > 0 && step % cfg_.trace_decimation == 0) out.trace.push_back(state_);
  }

  bool escaped() const {
    const Vec3 d = state_.position - sys_.field.center();
    if (d.y() < -escape_scale_) return true;
    if (std::hypot(d.x(), d.z()) > 10.0 * escape_scale_) return true;
    // Back on the substrate.
    if (launch_height_ > 0.0 && d.y() > launch_height_) return true;
    return false;
  }

  void note_arrival(TrajectoryOutcome& out, double y_before, double t_before) const {
    if (!std::isnan(out.arrival_time)) return;
    const double yc = sys_.field.center().y();
    const double y_after = state_.position.y();
    if (y_before > yc && y_after <= yc) {
      const double frac = (y_before - yc) / (y_before - y_after);
      out.arrival_time = t_before + frac * (state_.time - t_before);
    }
  }

  /// Lower bound on the distance from the point to the near-field tube
  /// { |z'| < R z_R, rho < R w(z') }.
  double distance_to_tube(const OpticalField::Local& l) const {
    const double rho = std::sqrt(l.radial_sq);
    const double az = std::abs(l.axial);
    const double zr = sys_.field.rayleigh_range();
    auto tube_r = [&](double z) { return tube_radius_ * std::sqrt(1.0 + (z / zr) * (z / zr)); };
    if (az <= tube_half_length_) {
      const double gap = rho - tube_r(az);
      return gap > 0.0 ? gap / std::sqrt(1.0 + tube_slope_ * tube_slope_) : 0.0;
    }
    return std::max(az - tube_half_length_, rho - tube_r(tube_half_length_));
  }

  void far_step(double distance) {
    double dt = cfg_.t_max - state_.time;
    FreeTransition tr;
    for (int i = 0; i < 200; ++i) {
      tr = FreeTransition::make(sys_.gamma, dt);
      const double reach = mean_displacement(tr, state_.velocity, sys_.gravity).norm() +
                           kFarSigmas * tr.position_sigma(thermal_var_);
      if (reach <= 0.5 * distance) break;
      dt *= 0.5;
    }
    apply_transition(tr, state_, sys_.gravity, thermal_var_, rng_);
    state_.time += dt;
  }

  double near_dt(const OpticalField::Evaluation& ev) const {
    const OpticalField& f = sys_.field;
    const double u_loc = f.depth() * ev.envelope;
    const double speed_sq = state_.velocity.squaredNorm();
    const double e_ref = constants::kBoltzmann * sys_.temperature + 0.5 * sys_.mass * speed_sq;
    const double k = f.wavenumber();

    double dt = std::numeric_limits<double>::infinity();
    if (u_loc > 0.0) {
      const double omega = std::sqrt(2.0 * u_loc * k * k / sys_.mass);
      dt = 2.0 * constants::kPi / (kStepsPerLocalPeriod * omega);
    }
    double delta = f.beam_radius(ev.local.axial) / kStepsPerBeamRadius;
    if (u_loc > kFieldRelevance * e_ref || e_ref == 0.0)
      delta = std::min(delta, constants::kPi / k / kStepsPerFringe);

    const double speed = std::sqrt(speed_sq);
    const double vth = std::sqrt(thermal_var_);
    const double accel = (ev.field.force / sys_.mass + sys_.gravity).norm();
    double t_disp = delta / (speed + vth + 1e-300);
    if (accel > 0.0) t_disp = std::min(t_disp, std::sqrt(2.0 * delta / accel));
    if (sys_.gamma * t_disp > 1.0) {
      // Overdamped: diffusion and drift set the displacement.
      double t_over = std::numeric_limits<double>::infinity();
      if (thermal_var_ > 0.0) t_over = delta * delta * sys_.gamma / (8.0 * thermal_var_);
      if (accel > 0.0) t_over = std::min(t_over, 0.5 * delta * sys_.gamma / accel);
      t_disp = t_over;
    }
    dt = std::min(dt, t_disp);
    return std::max(dt, cfg_.dt_fine);
  }

  bool near_step(TrajectoryOutcome& out) {
    const OpticalField& f = sys_.field;
    if (!have_force_) {
      eval_ = f.evaluate(state_.position);
      have_force_ = true;
    }
    double dt = std::min(near_dt(eval_), cfg_.t_max - state_.time);
    const double half = 0.5 * dt / sys_.mass;
    state_.velocity += half * eval_.field.force;
    const auto tr = FreeTransition::make(sys_.gamma, dt);
    apply_transition(tr, state_, sys_.gravity, thermal_var_, rng_);
    eval_ = f.evaluate(state_.position);
    state_.velocity += half * eval_.field.force;
    state_.time += dt;
    return check_capture(out);
  }

  bool check_capture(TrajectoryOutcome& out) {
    const OpticalField& f = sys_.field;
    const double e = 0.5 * sys_.mass * state_.velocity.squaredNorm() + eval_.field.potential;
    if (holding_) {
      if ((state_.position - f.antinode(hold_site_)).norm() > capture_radius_) {
        holding_ = false;
      } else if (state_.time - hold_start_ >= cfg_.capture_hold_time) {
        if (e < 0.0) {
          out.capture_time = state_.time;
          out.site_index = hold_site_;
          out.site_intensity_fraction =
              f.axial_envelope(static_cast<double>(hold_site_) * constants::kPi / f.wavenumber());
          return true;
        }
        holding_ = false;
      }
    }
    if (!holding_ && e < 0.0) {
      const long site = f.nearest_antinode(eval_.local.axial);
      if ((state_.position - f.antinode(site)).norm() <= capture_radius_) {
        holding_ = true;
        hold_site_ = site;
        hold_start_ = state_.time;
      }
    }
    return false;
  }

  const ParticleSystem& sys_;
  const PropagationConfig& cfg_;
  Rng rng_;
  KineticState state_;
  OpticalField::Evaluation eval_{};
  bool have_force_ = false;
  bool holding_ = false;
  long hold_site_ = 0;
  double hold_start_ = 0.0;
  double tube_radius_ = 0.0;
  double tube_half_length_ = 0.0;
  double tube_slope_ = 0.0;
  double capture_radius_ = 0.0;
  double launch_height_ = 0.0;
  double escape_scale_ = 0.0;
  double thermal_var_ = 0.0;
};

}  // namespace detail

/// Runs one launch event to completion: exact free transitions far from the beam,
/// adaptive splitting steps inside the near-field tube, and capture detection.
///
/// Capture: the particle's optical + kinetic energy drops below zero within
/// capture_radius w0 of an antinode, it stays within that radius of the same
/// antinode for capture_hold_time, and its energy is still negative at the end
/// of the hold. Escape: falls more than the launch height below the trap, drifts
/// more than ten launch heights sideways, or returns to the substrate plane.
inline TrajectoryOutcome propagate_trajectory(const KineticState& init, const ParticleSystem& sys,
                                              const PropagationConfig& cfg) {
  validate(cfg, sys);
  if (!init.position.allFinite() || !init.velocity.allFinite())
    throw std::invalid_argument("propagate_trajectory: initial state must be finite");
  detail::TrajectoryIntegrator integrator(sys, cfg, init);
  return integrator.run();
}

inline TrajectoryOutcome propagate_trajectory(const KineticState& init, const Particle& p,
                                              const GasEnvironment& g, const TrapConfig& t,
                                              const PropagationConfig& cfg) {
  return propagate_trajectory(init, ParticleSystem::make(p, g, t), cfg);
}

}  // namespace liad
