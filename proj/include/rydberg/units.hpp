#pragma once

#include <numbers>

// Internal unit system: time in microseconds, Hamiltonians as H/hbar in
// rad/us. Public parameters are ordinary frequencies in MHz.
namespace rydberg::units {

inline constexpr double two_pi = 2.0 * std::numbers::pi;

/// MHz (ordinary frequency) -> rad/us.
constexpr double angular(double f_mhz) { return two_pi * f_mhz; }

/// rad/us -> MHz.
constexpr double mhz(double omega_rad_per_us) { return omega_rad_per_us / two_pi; }

/// krad/s -> rad/us.
constexpr double krad_s_to_rad_us(double w) { return w * 1e-3; }
constexpr double rad_us_to_krad_s(double w) { return w * 1e3; }

/// krad/s -> kHz (ordinary frequency).
constexpr double krad_s_to_khz(double w) { return w / two_pi; }

}  // namespace rydberg::units
