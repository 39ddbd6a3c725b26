#pragma once

// Closed-form physical quantities for a dielectric nanosphere in a rarefied gas
// and a dual-beam standing-wave optical dipole trap. All quantities are SI.

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

#include "liad/constants.hpp"

namespace liad {

using Vec3 = Eigen::Vector3d;

/// Dielectric sphere. Defaults describe the 300 nm silica spheres used for loading.
class Particle {
 public:
  static constexpr double kDefaultRadius = 150e-9;
  static constexpr double kDefaultDensity = 2000.0;
  static constexpr double kDefaultRefractiveIndex = 1.44;

  Particle() : Particle(kDefaultRadius, kDefaultDensity, kDefaultRefractiveIndex) {}

  Particle(double radius, double density, double refractive_index)
      : radius_(radius), density_(density), refractive_index_(refractive_index) {
    if (!(radius > 0.0) || !std::isfinite(radius))
      throw std::invalid_argument("Particle: radius must be > 0");
    if (!(density > 0.0) || !std::isfinite(density))
      throw std::invalid_argument("Particle: density must be > 0");
    if (!(refractive_index > 1.0) || !std::isfinite(refractive_index))
      throw std::invalid_argument("Particle: refractive_index must be > 1");
  }

  double radius() const { return radius_; }
  double density() const { return density_; }
  double refractive_index() const { return refractive_index_; }

 private:
  double radius_;
  double density_;
  double refractive_index_;
};

/// Background gas. The viscosity is quoted at `kReferenceTemperature` and scaled
/// as sqrt(T) (hard-sphere kinetic theory). T = 0 is accepted as the noiseless
/// limit; user configuration requires T > 0.
class GasEnvironment {
 public:
  static constexpr double kReferenceTemperature = 300.0;
  static constexpr double kDefaultTemperature = 300.0;
  static constexpr double kDefaultMolecularMassU = 28.97;
  static constexpr double kDefaultViscosity = 1.85e-5;

  GasEnvironment()
      : GasEnvironment(constants::kPascalPerMillibar, kDefaultTemperature,
                       kDefaultMolecularMassU * constants::kAtomicMassUnit, kDefaultViscosity) {}

  GasEnvironment(double pressure_pa, double temperature, double molecular_mass,
                 double dynamic_viscosity_ref)
      : pressure_(pressure_pa),
        temperature_(temperature),
        molecular_mass_(molecular_mass),
        viscosity_ref_(dynamic_viscosity_ref) {
    if (!(pressure_pa >= 0.0) || !std::isfinite(pressure_pa))
      throw std::invalid_argument("GasEnvironment: pressure must be >= 0");
    if (!(temperature >= 0.0) || !std::isfinite(temperature))
      throw std::invalid_argument("GasEnvironment: temperature must be >= 0");
    if (!(molecular_mass > 0.0))
      throw std::invalid_argument("GasEnvironment: molecular_mass must be > 0");
    if (!(dynamic_viscosity_ref > 0.0))
      throw std::invalid_argument("GasEnvironment: viscosity must be > 0");
  }

  /// Air-like gas at the given pressure in mbar and temperature in K.
  static GasEnvironment air_mbar(double pressure_mbar, double temperature = kDefaultTemperature) {
    return {pressure_mbar * constants::kPascalPerMillibar, temperature,
            kDefaultMolecularMassU * constants::kAtomicMassUnit, kDefaultViscosity};
  }

  double pressure() const { return pressure_; }
  double pressure_mbar() const { return pressure_ / constants::kPascalPerMillibar; }
  double temperature() const { return temperature_; }
  double molecular_mass() const { return molecular_mass_; }
  double viscosity_ref() const { return viscosity_ref_; }

  double viscosity() const {
    return viscosity_ref_ * std::sqrt(temperature_ / kReferenceTemperature);
  }

  GasEnvironment with_pressure(double pressure_pa) const {
    return {pressure_pa, temperature_, molecular_mass_, viscosity_ref_};
  }

 private:
  double pressure_;
  double temperature_;
  double molecular_mass_;
  double viscosity_ref_;
};

/// Counter-propagating standing-wave trap built from two identical Gaussian beams
/// sharing a focus at `center` and propagating along `axis`.
class TrapConfig {
 public:
  static constexpr double kDefaultWavelength = 1550e-9;
  static constexpr double kDefaultWaist = 6e-6;
  static constexpr double kDefaultPower = 0.2;

  TrapConfig()
      : TrapConfig(kDefaultWavelength, kDefaultWaist, kDefaultPower, Vec3::Zero(), Vec3::UnitZ()) {}

  TrapConfig(double wavelength, double waist, double total_power, Vec3 center = Vec3::Zero(),
             Vec3 axis = Vec3::UnitZ())
      : wavelength_(wavelength), waist_(waist), total_power_(total_power), center_(center) {
    if (!(wavelength > 0.0)) throw std::invalid_argument("TrapConfig: wavelength must be > 0");
    if (!(waist > 0.0)) throw std::invalid_argument("TrapConfig: waist must be > 0");
    if (!(total_power >= 0.0) || !std::isfinite(total_power))
      throw std::invalid_argument("TrapConfig: total_power must be >= 0");
    if (!center.allFinite()) throw std::invalid_argument("TrapConfig: center must be finite");
    const double n = axis.norm();
    if (!(n > 0.0) || !std::isfinite(n))
      throw std::invalid_argument("TrapConfig: axis must be a nonzero vector");
    axis_ = axis / n;
  }

  double wavelength() const { return wavelength_; }
  double waist() const { return waist_; }
  double total_power() const { return total_power_; }
  const Vec3& center() const { return center_; }
  const Vec3& axis() const { return axis_; }

  double wavenumber() const { return 2.0 * constants::kPi / wavelength_; }
  double rayleigh_range() const { return constants::kPi * waist_ * waist_ / wavelength_; }
  /// Intensity at the central antinode: 4 P / (pi w0^2).
  double peak_intensity() const {
    return 4.0 * total_power_ / (constants::kPi * waist_ * waist_);
  }

  TrapConfig with_power(double total_power) const {
    return {wavelength_, waist_, total_power, center_, axis_};
  }

 private:
  double wavelength_;
  double waist_;
  double total_power_;
  Vec3 center_;
  Vec3 axis_;
};

struct FieldSample {
  double intensity = 0.0;  // W/m^2
  double potential = 0.0;  // J
  Vec3 force = Vec3::Zero();
};

inline double particle_mass(const Particle& p) {
  const double r = p.radius();
  return 4.0 / 3.0 * constants::kPi * r * r * r * p.density();
}

/// Kinetic-theory mean free path lambda = (eta / P) sqrt(pi k_B T / (2 m)).
/// Infinite in vacuum.
inline double mean_free_path(const GasEnvironment& g) {
  if (g.pressure() == 0.0) return std::numeric_limits<double>::infinity();
  return g.viscosity() / g.pressure() *
         std::sqrt(constants::kPi * constants::kBoltzmann * g.temperature() /
                   (2.0 * g.molecular_mass()));
}

inline double knudsen_number(const Particle& p, const GasEnvironment& g) {
  return mean_free_path(g) / p.radius();
}

/// Momentum damping rate Gamma (1/s), valid from the continuum slip regime to the
/// free-molecular (Epstein) limit:
///   Gamma = 6 pi eta r / M * 0.619 / (0.619 + Kn) * (1 + c_K),
///   c_K   = 0.31 Kn / (0.785 + 1.152 Kn + Kn^2).
inline double damping_rate(const Particle& p, const GasEnvironment& g) {
  if (g.pressure() == 0.0) return 0.0;
  const double kn = knudsen_number(p, g);
  const double ck = 0.31 * kn / (0.785 + 1.152 * kn + kn * kn);
  const double stokes = 6.0 * constants::kPi * g.viscosity() * p.radius() / particle_mass(p);
  return stokes * 0.619 / (0.619 + kn) * (1.0 + ck);
}

/// Clausius-Mossotti polarizability alpha = 4 pi eps0 r^3 (n^2 - 1) / (n^2 + 2).
inline double polarizability(const Particle& p) {
  const double n2 = p.refractive_index() * p.refractive_index();
  const double r = p.radius();
  return 4.0 * constants::kPi * constants::kVacuumPermittivity * r * r * r * (n2 - 1.0) /
         (n2 + 2.0);
}

/// Precomputed standing-wave field for one (trap, particle) pair. Cheap to copy;
/// all evaluation methods are const and thread-safe.
///
/// Relative intensity at local coordinates (z' along the axis, rho off axis):
///   f = E(z') exp(-2 rho^2 E(z') / w0^2) cos^2(k z'),   E = 1 / (1 + (z'/z_R)^2)
/// and U = -U0 f with U0 = alpha I_peak / (2 eps0 c).
class OpticalField {
 public:
  OpticalField(const TrapConfig& trap, const Particle& particle)
      : center_(trap.center()),
        axis_(trap.axis()),
        k_(trap.wavenumber()),
        z_r_(trap.rayleigh_range()),
        inv_w0_sq_(1.0 / (trap.waist() * trap.waist())),
        peak_intensity_(trap.peak_intensity()),
        depth_(polarizability(particle) /
               (2.0 * constants::kVacuumPermittivity * constants::kSpeedOfLight) *
               trap.peak_intensity()) {}

  struct Local {
    double axial;      // z'
    Vec3 radial;       // component of (pos - center) perpendicular to the axis
    double radial_sq;  // rho^2
  };

  Local local(const Vec3& pos) const {
    const Vec3 d = pos - center_;
    const double z = d.dot(axis_);
    const Vec3 r = d - z * axis_;
    return {z, r, r.squaredNorm()};
  }

  /// Axial envelope E(z') = 1 / (1 + (z'/z_R)^2).
  double axial_envelope(double axial) const {
    const double zeta = axial / z_r_;
    return 1.0 / (1.0 + zeta * zeta);
  }

  /// Relative intensity without the cos^2 fringe factor (the local well depth scale).
  double envelope(const Local& l) const {
    const double e = axial_envelope(l.axial);
    return e * radial_factor(l.radial_sq, e);
  }

  double relative_intensity(const Vec3& pos) const {
    const Local l = local(pos);
    const double c = std::cos(k_ * l.axial);
    return envelope(l) * c * c;
  }

  double intensity(const Vec3& pos) const { return peak_intensity_ * relative_intensity(pos); }
  double potential(const Vec3& pos) const { return -depth_ * relative_intensity(pos); }

  Vec3 force(const Vec3& pos) const { return sample(pos).force; }

  FieldSample sample(const Vec3& pos) const { return evaluate(pos).field; }

  /// Field sample together with the local geometry and fringe-free envelope.
  struct Evaluation {
    FieldSample field;
    Local local;
    double envelope;  // relative intensity without the cos^2 factor
  };

  Evaluation evaluate(const Vec3& pos) const {
    Evaluation ev{FieldSample{}, local(pos), 0.0};
    const Local& l = ev.local;
    const double zeta = l.axial / z_r_;
    const double e = 1.0 / (1.0 + zeta * zeta);
    const double gauss = radial_factor(l.radial_sq, e);
    ev.envelope = e * gauss;
    if (depth_ == 0.0 || ev.envelope == 0.0) return ev;
    FieldSample& out = ev.field;
    const double c = std::cos(k_ * l.axial);
    const double s = std::sin(k_ * l.axial);
    const double c2 = c * c;
    const double eg = e * gauss;
    const double f = eg * c2;
    out.intensity = peak_intensity_ * f;
    out.potential = -depth_ * f;
    // grad f = f * (-4 E / w0^2) r_perp
    //        + E G [(-2 zeta E / z_R + 4 rho^2 E^2 zeta / (w0^2 z_R)) cos^2 - k sin(2kz')] axis
    const double radial_coeff = -4.0 * e * inv_w0_sq_ * f;
    const double axial_log =
        (-2.0 * zeta * e + 4.0 * l.radial_sq * e * e * zeta * inv_w0_sq_) / z_r_;
    const double axial_grad = eg * (axial_log * c2 - 2.0 * k_ * s * c);
    out.force = depth_ * (radial_coeff * l.radial + axial_grad * axis_);
    return ev;
  }

  /// Position of antinode `index` (antinodes sit at z' = n lambda / 2).
  Vec3 antinode(long index) const {
    return center_ + (static_cast<double>(index) * constants::kPi / k_) * axis_;
  }

  long nearest_antinode(double axial) const {
    return std::lround(axial * k_ / constants::kPi);
  }

  double depth() const { return depth_; }
  double wavenumber() const { return k_; }
  double rayleigh_range() const { return z_r_; }
  double waist() const { return 1.0 / std::sqrt(inv_w0_sq_); }
  /// Local 1/e^2 beam radius w(z').
  double beam_radius(double axial) const { return waist() / std::sqrt(axial_envelope(axial)); }
  const Vec3& center() const { return center_; }
  const Vec3& axis() const { return axis_; }

 private:
  // exp(-2 rho^2 E / w0^2), taken as 0 where the exponent overflows (rho or z' huge).
  double radial_factor(double radial_sq, double e) const {
    const double arg = 2.0 * radial_sq * e * inv_w0_sq_;
    return arg < 800.0 ? std::exp(-arg) : 0.0;
  }

  Vec3 center_;
  Vec3 axis_;
  double k_;
  double z_r_;
  double inv_w0_sq_;
  double peak_intensity_;
  double depth_;
};

inline double trap_intensity(const TrapConfig& t, const Vec3& pos) {
  // Intensity does not depend on the particle; any valid particle builds the field.
  return OpticalField(t, Particle{}).intensity(pos);
}

inline double trap_potential(const TrapConfig& t, const Particle& p, const Vec3& pos) {
  return OpticalField(t, p).potential(pos);
}

inline Vec3 trap_force(const TrapConfig& t, const Particle& p, const Vec3& pos) {
  return OpticalField(t, p).force(pos);
}

/// U0 = alpha / (2 eps0 c) * 4 P / (pi w0^2).
inline double trap_depth(const TrapConfig& t, const Particle& p) {
  return polarizability(p) / (2.0 * constants::kVacuumPermittivity * constants::kSpeedOfLight) *
         t.peak_intensity();
}

struct TrapFrequencies {
  double axial;   // rad/s
  double radial;  // rad/s, degenerate for both transverse directions
};

/// Harmonic frequencies about the central antinode:
///   Omega_axial = sqrt(2 U0 k^2 / M),  Omega_radial = sqrt(4 U0 / (w0^2 M)).
inline TrapFrequencies trap_frequencies(const TrapConfig& t, const Particle& p) {
  const double u0 = trap_depth(t, p);
  if (!(u0 > 0.0))
    throw std::domain_error("trap_frequencies: trap has no confinement (total_power = 0)");
  const double m = particle_mass(p);
  const double k = t.wavenumber();
  return {std::sqrt(2.0 * u0 * k * k / m), std::sqrt(4.0 * u0 / (t.waist() * t.waist() * m))};
}

}  // namespace liad
