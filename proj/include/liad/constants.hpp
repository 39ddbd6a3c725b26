#pragma once

namespace liad::constants {

inline constexpr double kPi = 3.14159265358979323846;

// CODATA 2018 exact / recommended values.
inline constexpr double kVacuumPermittivity = 8.8541878128e-12;  // F/m
inline constexpr double kSpeedOfLight = 299792458.0;             // m/s
inline constexpr double kBoltzmann = 1.380649e-23;               // J/K
inline constexpr double kAtomicMassUnit = 1.66053906660e-27;     // kg
inline constexpr double kStandardGravity = 9.81;                 // m/s^2

inline constexpr double kPascalPerMillibar = 100.0;

}  // namespace liad::constants
