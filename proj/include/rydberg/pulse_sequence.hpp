#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <numeric>
#include <string>
#include <string_view>
#include <vector>

#include "rydberg/atom_model.hpp"
#include "rydberg/dynamics.hpp"
#include "rydberg/error.hpp"
#include "rydberg/matrix.hpp"
#include "rydberg/units.hpp"

namespace rydberg {

enum class ElementKind { global_drive, wait, local_phase_gate };

inline std::string_view element_kind_name(ElementKind k) {
  switch (k) {
    case ElementKind::global_drive: return "GlobalDrive";
    case ElementKind::wait: return "Wait";
    case ElementKind::local_phase_gate: return "LocalPhaseGate";
  }
  return "?";
}

inline ElementKind parse_element_kind(std::string_view s) {
  if (s == "GlobalDrive") return ElementKind::global_drive;
  if (s == "Wait") return ElementKind::wait;
  if (s == "LocalPhaseGate") return ElementKind::local_phase_gate;
  throw ValidationError("unknown pulse element kind '" + std::string(s) + "'");
}

struct PulseElement {
  ElementKind kind = ElementKind::wait;
  double duration_us = 0.0;
  double rabi_mhz = 0.0;         // GlobalDrive
  double detuning_mhz = 0.0;     // GlobalDrive, two-photon
  double phase_rad = 0.0;        // GlobalDrive
  int target_atom = 0;           // LocalPhaseGate
  double light_shift_mhz = 0.0;  // LocalPhaseGate, shift of |g> on the target

  static PulseElement drive(double duration_us, double rabi_mhz, double phase_rad = 0.0,
                            double detuning_mhz = 0.0) {
    return {ElementKind::global_drive, duration_us, rabi_mhz, detuning_mhz, phase_rad, 0, 0.0};
  }
  static PulseElement wait(double duration_us) { return {ElementKind::wait, duration_us}; }
  static PulseElement phase_gate(int target_atom, double light_shift_mhz, double duration_us) {
    return {ElementKind::local_phase_gate, duration_us, 0.0, 0.0, 0.0, target_atom, light_shift_mhz};
  }
};

struct PulseSequence {
  std::vector<PulseElement> elements;
  int n_atoms = 1;

  double total_duration() const {
    double t = 0.0;
    for (const auto& e : elements) t += e.duration_us;
    return t;
  }

  void validate() const {
    if (n_atoms != 1 && n_atoms != 2) throw ValidationError("PulseSequence: n_atoms must be 1 or 2");
    if (elements.empty()) throw ValidationError("PulseSequence: empty sequence");
    for (const auto& e : elements) {
      if (!(e.duration_us >= 0.0) || !std::isfinite(e.duration_us)) {
        throw ValidationError("PulseSequence: negative element duration");
      }
      if (e.kind == ElementKind::local_phase_gate && (e.target_atom < 0 || e.target_atom >= n_atoms)) {
        throw ValidationError("PulseSequence: phase-gate target atom out of range");
      }
    }
    if (!(total_duration() > 0.0)) throw ValidationError("PulseSequence: total duration must be > 0");
  }
};

/// Pulse durations for a drive at Rabi frequency rabi_mhz (Omega/2pi).
inline double pulse_duration(double area_rad, double rabi_mhz) {
  return area_rad / units::angular(rabi_mhz);
}

/// One Monte Carlo draw: static per-atom Doppler detuning and position.
struct NoiseSample {
  std::vector<double> doppler_krad_s;
  std::vector<double> position_um;

  static NoiseSample none(int n_atoms) {
    return {std::vector<double>(static_cast<std::size_t>(n_atoms), 0.0),
            std::vector<double>(static_cast<std::size_t>(n_atoms), 0.0)};
  }
};

/// Which dissipative processes are modelled.
struct ChannelToggles {
  bool blue_scatter = true;  // sqrt(gamma_B)|g><g|, only while the 420 nm light is on
  bool red_scatter = true;   // sqrt(gamma_R)|g><r|, 1013 nm always on
  bool blackbody = true;     // |r'><r| at 1/t_blackbody
  bool radiative = true;     // |r'><r| at 1/t_radiative

  static ChannelToggles off() { return {false, false, false, false}; }
};

/// Everything compile() needs besides the sequence and the noise draw.
struct SystemModel {
  LevelScheme levels{};
  AtomParams atom{};
  double interaction_mhz = 30.0;  // U/h, two atoms
  /// rad/um; negative means "derive from atom wavelengths".
  double k_eff_per_um = -1.0;
  ChannelToggles channels{};
  /// Collective dephasing sqrt(gamma_laser) sum_i |r_i><r_i|, 1/us.
  double gamma_laser = 0.0;
  /// Fraction of the phase-gate light shift seen by the non-target atom.
  double crosstalk_fraction = 0.0;
  /// When false, Doppler detunings act only outside GlobalDrive elements
  /// (ideal instantaneous-pulse limit).
  bool doppler_during_drive = true;

  double k_eff() const { return k_eff_per_um >= 0.0 ? k_eff_per_um : effective_wavevector_per_um(atom); }

  static SystemModel noiseless(LevelScheme levels) {
    SystemModel s;
    s.levels = levels;
    s.channels = ChannelToggles::off();
    return s;
  }
};

struct CompiledSequence {
  std::vector<Segment> segments;
  std::vector<LindbladChannel> channels;  // active for the whole sequence
  std::vector<std::string> basis_labels;
};

namespace detail {

/// Builds operators on the (possibly projected) product basis of a level scheme.
class OperatorFactory {
 public:
  explicit OperatorFactory(const LevelScheme& ls)
      : ls_(ls), kept_(ls.kept_product_indices()), m_(ls.levels_per_atom()) {}

  Eigen::Index dim() const { return static_cast<Eigen::Index>(kept_.size()); }

  /// |a><b| acting on one atom.
  ComplexMatrix local(int atom, Level a, Level b) const {
    const ComplexMatrix single = basis_op(m_, level_index(a), level_index(b));
    ComplexMatrix full;
    if (ls_.n_atoms == 1) {
      full = single;
    } else {
      const ComplexMatrix id = ComplexMatrix::Identity(m_, m_);
      full = atom == 0 ? tensor(single, id) : tensor(id, single);
    }
    return project(full);
  }

  /// |rr><rr| (zero when projected out).
  ComplexMatrix both_rydberg() const {
    const ComplexMatrix rr = basis_op(m_, level_index(Level::r), level_index(Level::r));
    return project(tensor(rr, rr));
  }

  ComplexMatrix zero() const { return ComplexMatrix::Zero(dim(), dim()); }

 private:
  Eigen::Index level_index(Level l) const {
    switch (l) {
      case Level::g: return 0;
      case Level::r: return 1;
      case Level::r_dark:
        if (!ls_.dark_level) throw ValidationError("level scheme has no r' level");
        return 2;
    }
    return 0;
  }

  ComplexMatrix project(const ComplexMatrix& full) const {
    const Eigen::Index n = dim();
    ComplexMatrix out(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) out(i, j) = full(kept_[i], kept_[j]);
    }
    return out;
  }

  LevelScheme ls_;
  std::vector<int> kept_;
  int m_;
};

}  // namespace detail

/// Compiles a pulse sequence into piecewise-constant segments plus the
/// always-on Lindblad channels.
///
/// GlobalDrive: sum_i (Omega/2)(e^{i(k x_i + phase)}|r_i><g_i| + h.c.)
///              - sum_i (delta + delta_i^D)|r_i><r_i| + U|rr><rr|
/// Wait:        - sum_i delta_i^D |r_i><r_i| + U|rr><rr|
/// PhaseGate:   Wait terms - delta_LS |g_t><g_t| (- crosstalk on the other atom)
///
/// The 1013 nm light is on throughout, so red scattering, blackbody and
/// radiative decay are global channels; blue scattering is attached only to
/// GlobalDrive segments.
inline CompiledSequence compile(const PulseSequence& seq, const SystemModel& sys, const NoiseSample& noise) {
  seq.validate();
  sys.levels.validate();
  sys.atom.validate();
  if (seq.n_atoms != sys.levels.n_atoms) {
    throw ValidationError("compile: sequence is for " + std::to_string(seq.n_atoms) + " atom(s), system has " +
                          std::to_string(sys.levels.n_atoms));
  }
  const int n = seq.n_atoms;
  if (static_cast<int>(noise.doppler_krad_s.size()) != n || static_cast<int>(noise.position_um.size()) != n) {
    throw ValidationError("compile: noise sample atom count mismatch");
  }

  const detail::OperatorFactory ops(sys.levels);
  CompiledSequence out;
  out.basis_labels = sys.levels.labels();

  // Free-evolution part shared by every element.
  ComplexMatrix h_free = ops.zero();
  ComplexMatrix h_doppler = ops.zero();
  for (int i = 0; i < n; ++i) {
    h_doppler -= units::krad_s_to_rad_us(noise.doppler_krad_s[i]) * ops.local(i, Level::r, Level::r);
  }
  if (n == 2) h_free += units::angular(sys.interaction_mhz) * ops.both_rydberg();

  const AtomParams& a = sys.atom;
  for (int i = 0; i < n; ++i) {
    const std::string tag = "atom" + std::to_string(i + 1);
    if (sys.channels.red_scatter && a.gamma_red_scatter > 0.0) {
      out.channels.push_back({std::sqrt(a.gamma_red_scatter) * ops.local(i, Level::g, Level::r), "red_scatter_" + tag});
    }
    if (sys.levels.dark_level) {
      if (sys.channels.blackbody) {
        out.channels.push_back(
            {std::sqrt(1.0 / a.t_blackbody_us) * ops.local(i, Level::r_dark, Level::r), "blackbody_" + tag});
      }
      if (sys.channels.radiative) {
        out.channels.push_back(
            {std::sqrt(1.0 / a.t_radiative_us) * ops.local(i, Level::r_dark, Level::r), "radiative_" + tag});
      }
    }
  }
  if (sys.gamma_laser > 0.0) {
    ComplexMatrix c = ops.zero();
    for (int i = 0; i < n; ++i) c += ops.local(i, Level::r, Level::r);
    out.channels.push_back({std::sqrt(sys.gamma_laser) * c, "laser_dephasing"});
  }
  std::vector<LindbladChannel> blue;
  if (sys.channels.blue_scatter && a.gamma_blue_scatter > 0.0) {
    for (int i = 0; i < n; ++i) {
      blue.push_back({std::sqrt(a.gamma_blue_scatter) * ops.local(i, Level::g, Level::g),
                      "blue_scatter_atom" + std::to_string(i + 1)});
    }
  }

  const double k = sys.k_eff();
  for (const auto& e : seq.elements) {
    Segment s;
    s.duration_us = e.duration_us;
    s.tag = std::string(element_kind_name(e.kind));
    switch (e.kind) {
      case ElementKind::global_drive: {
        ComplexMatrix h = h_free;
        if (sys.doppler_during_drive) h += h_doppler;
        const double half_rabi = 0.5 * units::angular(e.rabi_mhz);
        for (int i = 0; i < n; ++i) {
          const cplx phase = std::polar(1.0, k * noise.position_um[i] + e.phase_rad);
          const ComplexMatrix up = ops.local(i, Level::r, Level::g);
          h += half_rabi * (phase * up + std::conj(phase) * up.adjoint());
          h -= units::angular(e.detuning_mhz) * ops.local(i, Level::r, Level::r);
        }
        s.hamiltonian = std::move(h);
        s.extra_channels = blue;
        break;
      }
      case ElementKind::wait:
        s.hamiltonian = h_free + h_doppler;
        break;
      case ElementKind::local_phase_gate: {
        ComplexMatrix h = h_free + h_doppler;
        const double shift = units::angular(e.light_shift_mhz);
        h -= shift * ops.local(e.target_atom, Level::g, Level::g);
        if (n == 2 && sys.crosstalk_fraction != 0.0) {
          h -= sys.crosstalk_fraction * shift * ops.local(1 - e.target_atom, Level::g, Level::g);
        }
        s.hamiltonian = std::move(h);
        break;
      }
    }
    out.segments.push_back(std::move(s));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Presets

/// Parameters shared by the named sequences.
struct PresetParams {
  double rabi_mhz = 2.0;         // single-atom two-photon Omega/2pi
  double light_shift_mhz = 5.0;  // phase-gate delta/2pi
  double echo_arm_us = 0.5;      // fixed echo arm that hosts the phase gate
};

struct PresetInfo {
  std::string name;
  std::string figure;
  int n_atoms;
  std::string scan_variable;  // CSV column name
  std::string description;
  std::vector<std::string> elements;  // schematic
};

inline const std::vector<PresetInfo>& preset_catalog() {
  static const std::vector<PresetInfo> catalog = {
      {"rabi", "Fig. 1(c)", 1, "t_us", "resonant drive for variable time", {"Drive(t)"}},
      {"t1", "Fig. 2(a)", 1, "delay_us", "pi-pulse, variable delay, pi-pulse", {"pi", "Wait(t)", "pi"}},
      {"ramsey", "Fig. 2(b)", 1, "gap_us", "Ramsey: two pi/2 pulses around a free gap", {"pi/2", "Wait(t)", "pi/2"}},
      {"spin_echo", "Fig. 2(b)", 1, "gap_us", "Ramsey with a refocusing pi-pulse in the middle of the gap",
       {"pi/2", "Wait(t/2)", "pi", "Wait(t/2)", "pi/2"}},
      {"phase_gate_echo", "Fig. 2(c)", 1, "gate_us", "light-shift phase gate of variable length inside a spin echo",
       {"pi/2", "Gate(t)", "Wait(arm-t)", "pi", "Wait(arm)", "pi/2"}},
      {"blockade_rabi", "Fig. 3(b)", 2, "t_us", "both atoms driven on resonance in the blockade regime",
       {"Drive(t)"}},
      {"parity_scan", "Fig. 3(c)", 2, "gate_us",
       "W-state preparation, local phase gate inside a 2pi echo, mapping pi-pulse",
       {"pi_W", "Gate(t)", "Wait(arm-t)", "2pi_W", "Wait(arm)", "pi_W"}},
      {"w_lifetime", "Fig. 4", 2, "T_us", "W-state preparation and de-excitation after a delay",
       {"pi_W", "Wait(T)", "pi_W"}},
      {"w_echo", "Fig. 4", 2, "T_us", "W-state delay with a blockaded 2pi swap pulse at its centre",
       {"pi_W", "Wait(T/2)", "2pi_W", "Wait(T/2)", "pi_W"}},
  };
  return catalog;
}

inline std::size_t edit_distance(std::string_view a, std::string_view b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  std::iota(prev.begin(), prev.end(), std::size_t{0});
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

/// Looks up a preset; unknown names raise with the nearest known name.
inline const PresetInfo& find_preset(std::string_view name) {
  const auto& cat = preset_catalog();
  for (const auto& p : cat) {
    if (p.name == name) return p;
  }
  const PresetInfo* best = &cat.front();
  for (const auto& p : cat) {
    if (edit_distance(name, p.name) < edit_distance(name, best->name)) best = &p;
  }
  throw ValidationError("unknown preset '" + std::string(name) + "' (did you mean '" + best->name + "'?)");
}

/// Element list of a named sequence at one value of its scanned variable.
inline PulseSequence preset(std::string_view name, double x, const PresetParams& p = {}) {
  const PresetInfo& info = find_preset(name);
  if (!(x >= 0.0) || !std::isfinite(x)) throw ValidationError("preset: scan value must be >= 0");
  const double om = p.rabi_mhz;
  const double om_w = std::sqrt(2.0) * om;  // blockade-enhanced
  const double pi = std::numbers::pi;
  using E = PulseElement;
  auto single = [&](double area) { return E::drive(pulse_duration(area, om), om); };
  auto collective = [&](double area) { return E::drive(pulse_duration(area, om_w), om); };
  auto gate_in_arm = [&] {
    if (x > p.echo_arm_us) throw ValidationError("preset: gate time exceeds the echo arm");
    return std::vector<E>{E::phase_gate(0, p.light_shift_mhz, x), E::wait(p.echo_arm_us - x)};
  };

  PulseSequence s;
  s.n_atoms = info.n_atoms;
  auto& el = s.elements;
  if (name == "rabi" || name == "blockade_rabi") {
    el = {E::drive(x, om)};
  } else if (name == "t1") {
    el = {single(pi), E::wait(x), single(pi)};
  } else if (name == "ramsey") {
    el = {single(pi / 2), E::wait(x), single(pi / 2)};
  } else if (name == "spin_echo") {
    el = {single(pi / 2), E::wait(x / 2), single(pi), E::wait(x / 2), single(pi / 2)};
  } else if (name == "phase_gate_echo") {
    el = {single(pi / 2)};
    for (auto& e : gate_in_arm()) el.push_back(e);
    el.insert(el.end(), {single(pi), E::wait(p.echo_arm_us), single(pi / 2)});
  } else if (name == "parity_scan") {
    el = {collective(pi)};
    for (auto& e : gate_in_arm()) el.push_back(e);
    el.insert(el.end(), {collective(2 * pi), E::wait(p.echo_arm_us), collective(pi)});
  } else if (name == "w_lifetime") {
    el = {collective(pi), E::wait(x), collective(pi)};
  } else if (name == "w_echo") {
    el = {collective(pi), E::wait(x / 2), collective(2 * pi), E::wait(x / 2), collective(pi)};
  }
  return s;
}

}  // namespace rydberg
