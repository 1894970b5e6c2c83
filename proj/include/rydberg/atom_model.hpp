#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "rydberg/error.hpp"
#include "rydberg/units.hpp"

namespace rydberg {

namespace constants {
inline constexpr double boltzmann = 1.380649000e-23;   // J/K (exact)
inline constexpr double rb87_mass = 1.443160648e-25;   // kg
}  // namespace constants

/// Single-atom physical parameters. Frequencies in MHz (f = omega / 2 pi),
/// rates in 1/us, times in us.
struct AtomParams {
  double omega_blue_mhz = 60.0;
  double omega_red_mhz = 40.0;
  double delta_intermediate_mhz = 600.0;
  double temperature_uk = 10.0;
  double lambda_blue_nm = 420.0;
  double lambda_red_nm = 1013.0;
  double gamma_blue_scatter = 1.0 / 40.0;  // |g><g| dephasing-type scattering, 420 nm on
  double gamma_red_scatter = 1.0 / 80.0;   // |g><r| decay via e, 1013 nm on
  double t_blackbody_us = 230.0;
  double t_radiative_us = 410.0;
  bool counter_propagating = true;

  void validate() const {
    auto positive = [](double v, const char* name) {
      if (!(v > 0.0) || !std::isfinite(v)) {
        throw ValidationError(std::string("AtomParams: ") + name + " must be > 0");
      }
    };
    auto non_negative = [](double v, const char* name) {
      if (!(v >= 0.0) || !std::isfinite(v)) {
        throw ValidationError(std::string("AtomParams: ") + name + " must be >= 0");
      }
    };
    positive(omega_blue_mhz, "omega_blue");
    positive(omega_red_mhz, "omega_red");
    positive(std::abs(delta_intermediate_mhz), "|delta_intermediate|");
    non_negative(temperature_uk, "temperature");
    positive(lambda_blue_nm, "lambda_blue");
    positive(lambda_red_nm, "lambda_red");
    non_negative(gamma_blue_scatter, "gamma_blue_scatter");
    non_negative(gamma_red_scatter, "gamma_red_scatter");
    positive(t_blackbody_us, "t_blackbody");
    positive(t_radiative_us, "t_radiative");
  }

  /// Adiabatic elimination of e needs Delta >> Omega_B, Omega_R; only warned.
  std::vector<std::string> warnings() const {
    std::vector<std::string> w;
    if (std::abs(delta_intermediate_mhz) < 5.0 * std::max(omega_blue_mhz, omega_red_mhz)) {
      w.emplace_back("intermediate detuning is not large compared to the single-photon Rabi frequencies");
    }
    return w;
  }
};

/// Omega_B Omega_R / (2 Delta), MHz.
inline double two_photon_rabi(const AtomParams& p) {
  if (p.delta_intermediate_mhz == 0.0) throw ValidationError("two_photon_rabi: zero intermediate detuning");
  return p.omega_blue_mhz * p.omega_red_mhz / (2.0 * p.delta_intermediate_mhz);
}

/// Effective two-photon wavevector, rad/m.
inline double effective_wavevector(const AtomParams& p) {
  const double kb = 1.0 / (p.lambda_blue_nm * 1e-9);
  const double kr = 1.0 / (p.lambda_red_nm * 1e-9);
  return units::two_pi * (p.counter_propagating ? std::abs(kb - kr) : kb + kr);
}

/// rad/um, for drive phase factors exp(i k x).
inline double effective_wavevector_per_um(const AtomParams& p) { return effective_wavevector(p) * 1e-6; }

/// Standard deviation of the two-photon Doppler shift, krad/s.
inline double doppler_sigma(const AtomParams& p) {
  if (p.temperature_uk < 0.0) throw ValidationError("doppler_sigma: negative temperature");
  const double sigma_v = std::sqrt(constants::boltzmann * p.temperature_uk * 1e-6 / constants::rb87_mass);
  return effective_wavevector(p) * sigma_v * 1e-3;
}

/// Natural Rydberg lifetime from blackbody and radiative channels, us.
inline double rydberg_lifetime(const AtomParams& p) {
  return 1.0 / (1.0 / p.t_blackbody_us + 1.0 / p.t_radiative_us);
}

/// Lifetime of |r> with the 1013 nm light on: (1/T_ryd + gamma_R)^-1, us.
inline double combined_t1(const AtomParams& p) {
  if (p.gamma_red_scatter < 0.0 || p.t_blackbody_us <= 0.0 || p.t_radiative_us <= 0.0) {
    throw ValidationError("combined_t1: rates must be positive");
  }
  return 1.0 / (1.0 / rydberg_lifetime(p) + p.gamma_red_scatter);
}

/// Which coherence the T2 refers to: a single-atom (|g> + |r>)/sqrt2
/// superposition carries half an excitation, the W state exactly one.
enum class DephasingReference { single_atom, w_state };

inline double excited_fraction(DephasingReference ref) {
  return ref == DephasingReference::single_atom ? 0.5 : 1.0;
}

/// (1/T2 - f/T1)^-1 with f the mean excitation of the probed state.
inline double pure_dephasing(double t2_us, double t1_us, DephasingReference ref) {
  if (!(t2_us > 0.0) || !(t1_us > 0.0)) throw ValidationError("pure_dephasing: times must be > 0");
  const double rate = 1.0 / t2_us - excited_fraction(ref) / t1_us;
  if (!(rate > 0.0)) throw ValidationError("T2 exceeds lifetime limit");
  return 1.0 / rate;
}

/// Amplitude suppression of a Lorentzian cavity (FWHM fwhm) at a noise
/// frequency offset from the carrier.
inline double cavity_suppression(double noise_offset_mhz, double fwhm_mhz) {
  if (!(fwhm_mhz > 0.0)) throw ValidationError("cavity_suppression: fwhm must be > 0");
  const double x = 2.0 * noise_offset_mhz / fwhm_mhz;
  return std::sqrt(1.0 + x * x);
}

// ---------------------------------------------------------------------------
// Level scheme

/// Per-atom levels. e is adiabatically eliminated; r_dark (r') is the
/// blackbody product state, dark to the drive.
enum class Level { g, r, r_dark };

inline std::string_view level_name(Level l) {
  switch (l) {
    case Level::g: return "g";
    case Level::r: return "r";
    case Level::r_dark: return "r'";
  }
  return "?";
}

inline Level parse_level(std::string_view s) {
  if (s == "g") return Level::g;
  if (s == "r") return Level::r;
  if (s == "r'") return Level::r_dark;
  throw ValidationError("unknown level '" + std::string(s) + "'");
}

/// Ordered product basis for 1 or 2 atoms. Atom 1 is the most significant
/// factor. blockade_projected removes |rr>.
struct LevelScheme {
  int n_atoms = 1;
  bool dark_level = true;
  bool blockade_projected = false;

  void validate() const {
    if (n_atoms != 1 && n_atoms != 2) throw ValidationError("LevelScheme: n_atoms must be 1 or 2");
    if (blockade_projected && n_atoms != 2) {
      throw ValidationError("LevelScheme: blockade projection needs two atoms");
    }
  }

  std::vector<Level> atom_levels() const {
    if (dark_level) return {Level::g, Level::r, Level::r_dark};
    return {Level::g, Level::r};
  }

  int levels_per_atom() const { return dark_level ? 3 : 2; }

  /// Full tensor-product dimension before projection.
  int product_dim() const {
    int d = 1;
    for (int i = 0; i < n_atoms; ++i) d *= levels_per_atom();
    return d;
  }

  /// Per-atom levels of every kept basis state, in order.
  std::vector<std::vector<Level>> states() const {
    validate();
    const auto lv = atom_levels();
    std::vector<std::vector<Level>> out;
    if (n_atoms == 1) {
      for (Level a : lv) out.push_back({a});
    } else {
      for (Level a : lv) {
        for (Level b : lv) {
          if (blockade_projected && a == Level::r && b == Level::r) continue;
          out.push_back({a, b});
        }
      }
    }
    return out;
  }

  /// Indices into the full product basis of the kept states.
  std::vector<int> kept_product_indices() const {
    const auto lv = atom_levels();
    const int m = levels_per_atom();
    std::vector<int> out;
    for (int i = 0; i < product_dim(); ++i) {
      if (n_atoms == 2 && blockade_projected && lv[i / m] == Level::r && lv[i % m] == Level::r) continue;
      out.push_back(i);
    }
    return out;
  }

  std::vector<std::string> labels() const {
    std::vector<std::string> out;
    for (const auto& s : states()) {
      std::string l;
      for (Level x : s) l += level_name(x);
      out.push_back(std::move(l));
    }
    return out;
  }

  int dim() const { return static_cast<int>(states().size()); }
};

// ---------------------------------------------------------------------------
// Detection

/// Per-atom binary detection channel: an atom in g is recaptured with
/// probability f_g(trap-off time); an atom in r or r' is lost with
/// probability f_r.
struct DetectionModel {
  double f_r = 0.96;
  /// (trap-off time us, f_g) pairs, times strictly increasing, linearly
  /// interpolated, no extrapolation. A single entry means f_g is constant.
  std::vector<std::pair<double, double>> f_g_table = {{0.0, 0.99}, {4.0, 0.99}, {8.0, 0.955}};

  static DetectionModel perfect() { return constant(1.0, 1.0); }
  static DetectionModel constant(double f_g, double f_r) {
    DetectionModel d;
    d.f_r = f_r;
    d.f_g_table = {{0.0, f_g}};
    return d;
  }

  void validate() const {
    auto prob = [](double p, const char* what) {
      if (!(p >= 0.0 && p <= 1.0)) throw ValidationError(std::string("DetectionModel: ") + what + " not in [0,1]");
    };
    prob(f_r, "f_r");
    if (f_g_table.empty()) throw ValidationError("DetectionModel: empty f_g table");
    for (std::size_t i = 0; i < f_g_table.size(); ++i) {
      prob(f_g_table[i].second, "f_g");
      if (i > 0 && !(f_g_table[i].first > f_g_table[i - 1].first)) {
        throw ValidationError("DetectionModel: f_g table times must be strictly increasing");
      }
    }
  }

  double f_g(double trap_off_time_us) const {
    if (f_g_table.size() == 1) return f_g_table.front().second;
    const auto& first = f_g_table.front();
    const auto& last = f_g_table.back();
    if (trap_off_time_us < first.first || trap_off_time_us > last.first) {
      throw ValidationError("trap-off time " + std::to_string(trap_off_time_us) +
                            " us outside the f_g table range [" + std::to_string(first.first) + ", " +
                            std::to_string(last.first) + "]");
    }
    for (std::size_t i = 1; i < f_g_table.size(); ++i) {
      const auto& [t1, f1] = f_g_table[i];
      if (trap_off_time_us <= t1) {
        const auto& [t0, f0] = f_g_table[i - 1];
        return f0 + (f1 - f0) * (trap_off_time_us - t0) / (t1 - t0);
      }
    }
    return last.second;
  }
};

/// Outcome labels for n atoms: per atom 'g' = recaptured, 'r' = lost.
/// Ordered like the basis (atom 1 most significant).
inline std::vector<std::string> outcome_labels(int n_atoms) {
  if (n_atoms == 1) return {"g", "r"};
  return {"gg", "gr", "rg", "rr"};
}

/// Probability of each recapture/loss pattern (see outcome_labels) for atoms
/// with definite levels.
inline std::vector<double> detection_probabilities(const DetectionModel& d, std::span<const Level> true_state,
                                                   double trap_off_time_us) {
  if (true_state.empty() || true_state.size() > 2) {
    throw ValidationError("detection_probabilities: need 1 or 2 atoms");
  }
  const double fg = d.f_g(trap_off_time_us);
  std::vector<double> out(std::size_t{1} << true_state.size(), 1.0);
  const std::size_t n = true_state.size();
  for (std::size_t pattern = 0; pattern < out.size(); ++pattern) {
    for (std::size_t a = 0; a < n; ++a) {
      const bool lost = (pattern >> (n - 1 - a)) & 1U;
      const double p_lost = true_state[a] == Level::g ? 1.0 - fg : d.f_r;
      out[pattern] *= lost ? p_lost : 1.0 - p_lost;
    }
  }
  return out;
}

inline std::vector<double> detection_probabilities(const DetectionModel& d, const std::vector<std::string>& true_state,
                                                   double trap_off_time_us) {
  std::vector<Level> levels;
  for (const auto& s : true_state) levels.push_back(parse_level(s));
  return detection_probabilities(d, std::span<const Level>(levels), trap_off_time_us);
}

}  // namespace rydberg
