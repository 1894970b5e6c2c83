#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rydberg/atom_model.hpp"
#include "rydberg/blockade.hpp"
#include "rydberg/error.hpp"
#include "rydberg/estimators.hpp"
#include "rydberg/noise_mc.hpp"
#include "rydberg/pulse_sequence.hpp"
#include "rydberg/units.hpp"

#ifndef RYDBERG_VERSION
#define RYDBERG_VERSION "1.0.0"
#endif

namespace rydberg {

using Json = nlohmann::ordered_json;

inline constexpr const char* kArtifactName = "rydberg_sim";

struct ScanGrid {
  double start = 0.0;
  double stop = 1.0;
  int points = 2;

  void validate() const {
    if (points < 1) throw ValidationError("scan: points must be >= 1");
    if (!std::isfinite(start) || !std::isfinite(stop) || start < 0.0 || stop < start) {
      throw ValidationError("scan: need 0 <= start <= stop");
    }
    if (points > 1 && !(stop > start)) throw ValidationError("scan: stop must exceed start for several points");
  }

  std::vector<double> values() const {
    validate();
    std::vector<double> v;
    for (int i = 0; i < points; ++i) {
      v.push_back(points == 1 ? start : start + (stop - start) * static_cast<double>(i) / (points - 1));
    }
    return v;
  }
};

enum class FitWeighting { uniform, confidence_interval };

/// Fully resolved run configuration: every field is concrete, so the echo
/// in the manifest parses back to the same configuration.
struct ExperimentConfig {
  std::string preset = "rabi";
  ScanGrid scan{};
  int n_shots = 100;
  EnsembleMode mode = EnsembleMode::expectation;
  std::uint64_t master_seed = 1;
  std::string output_dir = "results";
  double dt_max_us = kDefaultDtMax;
  FitWeighting fit_weighting = FitWeighting::uniform;

  AtomParams atom{};
  double interaction_mhz = 30.0;
  double separation_um = 5.7;
  DetectionModel detection{};
  double trap_off_time_us = 4.0;

  double sigma_doppler_khz = 0.0;
  double sigma_position_um = 0.2;
  double gamma_laser_per_us = 0.0;
  bool doppler_during_drive = true;
  ChannelToggles channels{};

  PresetParams sequence{};
  double crosstalk_fraction = 0.0;

  bool dark_level = true;
  bool blockade_projected = false;

  const PresetInfo& info() const { return find_preset(preset); }

  void validate() const {
    const PresetInfo& p = info();
    scan.validate();
    if (n_shots < 1) throw ValidationError("n_shots must be >= 1");
    if (!(dt_max_us > 0.0)) throw ValidationError("dt_max_us must be > 0");
    atom.validate();
    detection.validate();
    detection.f_g(trap_off_time_us);
    if (!(sigma_doppler_khz >= 0.0) || !(sigma_position_um >= 0.0)) {
      throw ValidationError("noise widths must be >= 0");
    }
    if (!(gamma_laser_per_us >= 0.0)) throw ValidationError("gamma_laser_per_us must be >= 0");
    if (!(sequence.rabi_mhz > 0.0)) throw ValidationError("sequence.rabi_mhz must be > 0");
    if (!(sequence.echo_arm_us > 0.0)) throw ValidationError("sequence.echo_arm_us must be > 0");
    if (!(separation_um > 0.0)) throw ValidationError("two_atom.separation_um must be > 0");
    if (!(interaction_mhz >= 0.0)) throw ValidationError("two_atom.interaction_mhz must be >= 0");
    if (p.n_atoms == 1 && blockade_projected) {
      throw ValidationError("model.blockade_projected needs a two-atom preset");
    }
    if ((preset == "phase_gate_echo" || preset == "parity_scan") && scan.stop > sequence.echo_arm_us) {
      throw ValidationError("scan.stop exceeds sequence.echo_arm_us");
    }
    if (scan.start == 0.0 && (preset == "rabi" || preset == "blockade_rabi")) {
      throw ValidationError("scan.start must be > 0 for a drive-only preset");
    }
  }

  LevelScheme levels() const { return {info().n_atoms, dark_level, blockade_projected}; }

  EnsembleSpec ensemble() const {
    EnsembleSpec s;
    s.preset = preset;
    s.preset_params = sequence;
    s.system.levels = levels();
    s.system.atom = atom;
    s.system.interaction_mhz = interaction_mhz;
    s.system.channels = channels;
    s.system.gamma_laser = gamma_laser_per_us;
    s.system.crosstalk_fraction = crosstalk_fraction;
    s.system.doppler_during_drive = doppler_during_drive;
    s.scan_values = scan.values();
    s.n_shots = n_shots;
    s.mode = mode;
    s.master_seed = master_seed;
    s.sigma_doppler_krad_s = units::two_pi * sigma_doppler_khz;
    s.sigma_position_um = sigma_position_um;
    s.detection = detection;
    s.trap_off_time_us = trap_off_time_us;
    s.dt_max_us = dt_max_us;
    return s;
  }
};

/// Default grid and shot count of each preset.
inline ExperimentConfig default_config(std::string_view preset_name) {
  ExperimentConfig c;
  c.preset = find_preset(preset_name).name;
  c.sigma_doppler_khz = doppler_sigma(c.atom) / units::two_pi;
  c.sequence.rabi_mhz = two_photon_rabi(c.atom);
  const std::string& n = c.preset;
  if (n == "rabi") {
    c.scan = {0.1, 8.0, 80};
    c.n_shots = 100;
  } else if (n == "t1") {
    c.scan = {0.0, 150.0, 20};
    c.n_shots = 200;
  } else if (n == "ramsey") {
    c.scan = {0.0, 12.0, 49};
    c.n_shots = 1000;
  } else if (n == "spin_echo") {
    c.scan = {0.0, 80.0, 17};
    c.n_shots = 100;
  } else if (n == "phase_gate_echo") {
    c.scan = {0.0, 0.5, 26};
    c.n_shots = 100;
  } else if (n == "blockade_rabi") {
    c.scan = {0.05, 3.0, 60};
    c.n_shots = 20;
  } else if (n == "parity_scan") {
    c.scan = {0.0, 0.5, 26};
    c.n_shots = 50;
  } else if (n == "w_lifetime") {
    c.scan = {0.0, 10.0, 21};
    c.n_shots = 50;
  } else if (n == "w_echo") {
    c.scan = {0.0, 80.0, 17};
    c.n_shots = 40;
  }
  return c;
}

// ---------------------------------------------------------------------------
// JSON

namespace detail {

/// Reads an object, rejecting keys that are never consumed.
class StrictObject {
 public:
  StrictObject(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ValidationError(where() + " must be an object");
  }

  template <class T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key) || j_.at(key).is_null()) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ValidationError(where() + "." + key + " has the wrong type");
    }
  }

  std::optional<StrictObject> child(const char* key) {
    seen_.insert(key);
    if (!j_.contains(key) || j_.at(key).is_null()) return std::nullopt;
    return StrictObject(j_.at(key), path_ + "." + key);
  }

  const Json* raw(const char* key) {
    seen_.insert(key);
    if (!j_.contains(key) || j_.at(key).is_null()) return nullptr;
    return &j_.at(key);
  }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) {
        std::string best;
        std::size_t best_d = std::numeric_limits<std::size_t>::max();
        for (const auto& s : seen_) {
          const auto d = edit_distance(k, s);
          if (d < best_d) {
            best_d = d;
            best = s;
          }
        }
        throw ValidationError("unknown key " + where() + "." + k +
                              (best.empty() ? "" : " (did you mean '" + best + "'?)"));
      }
    }
  }

 private:
  std::string where() const { return path_; }
  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

}  // namespace detail

inline Json to_json(const ExperimentConfig& c) {
  Json table = Json::array();
  for (const auto& [t, f] : c.detection.f_g_table) table.push_back({t, f});
  return Json{
      {"preset", c.preset},
      {"scan", {{"start", c.scan.start}, {"stop", c.scan.stop}, {"points", c.scan.points}}},
      {"n_shots", c.n_shots},
      {"mode", mode_name(c.mode)},
      {"master_seed", c.master_seed},
      {"output_dir", c.output_dir},
      {"dt_max_us", c.dt_max_us},
      {"fit_weighting", c.fit_weighting == FitWeighting::uniform ? "uniform" : "confidence_interval"},
      {"atom",
       {{"omega_blue_mhz", c.atom.omega_blue_mhz},
        {"omega_red_mhz", c.atom.omega_red_mhz},
        {"delta_intermediate_mhz", c.atom.delta_intermediate_mhz},
        {"temperature_uk", c.atom.temperature_uk},
        {"lambda_blue_nm", c.atom.lambda_blue_nm},
        {"lambda_red_nm", c.atom.lambda_red_nm},
        {"gamma_blue_scatter_per_us", c.atom.gamma_blue_scatter},
        {"gamma_red_scatter_per_us", c.atom.gamma_red_scatter},
        {"t_blackbody_us", c.atom.t_blackbody_us},
        {"t_radiative_us", c.atom.t_radiative_us},
        {"counter_propagating", c.atom.counter_propagating}}},
      {"two_atom", {{"interaction_mhz", c.interaction_mhz}, {"separation_um", c.separation_um}}},
      {"detection", {{"f_r", c.detection.f_r}, {"f_g_table", table}, {"trap_off_time_us", c.trap_off_time_us}}},
      {"noise",
       {{"sigma_doppler_khz", c.sigma_doppler_khz},
        {"sigma_position_um", c.sigma_position_um},
        {"gamma_laser_per_us", c.gamma_laser_per_us},
        {"doppler_during_drive", c.doppler_during_drive},
        {"channels",
         {{"blue_scatter", c.channels.blue_scatter},
          {"red_scatter", c.channels.red_scatter},
          {"blackbody", c.channels.blackbody},
          {"radiative", c.channels.radiative}}}}},
      {"sequence",
       {{"rabi_mhz", c.sequence.rabi_mhz},
        {"light_shift_mhz", c.sequence.light_shift_mhz},
        {"echo_arm_us", c.sequence.echo_arm_us},
        {"crosstalk_fraction", c.crosstalk_fraction}}},
      {"model", {{"dark_level", c.dark_level}, {"blockade_projected", c.blockade_projected}}},
  };
}

/// Parses and validates a configuration. Missing fields take the preset's
/// defaults; sigma_doppler_khz and rabi_mhz default to values derived from
/// the atom block.
inline ExperimentConfig config_from_json(const Json& j) {
  detail::StrictObject root(j, "config");
  std::string preset_name;
  root.read("preset", preset_name);
  if (preset_name.empty()) throw ValidationError("config.preset is required");
  ExperimentConfig c = default_config(preset_name);

  if (auto s = root.child("scan")) {
    s->read("start", c.scan.start);
    s->read("stop", c.scan.stop);
    s->read("points", c.scan.points);
    s->finish();
  }
  root.read("n_shots", c.n_shots);
  std::string mode = std::string(mode_name(c.mode));
  root.read("mode", mode);
  c.mode = parse_mode(mode);
  if (const Json* seed = root.raw("master_seed")) {
    if (!seed->is_number_unsigned()) throw ValidationError("config.master_seed must be a non-negative integer");
    c.master_seed = seed->get<std::uint64_t>();
  }
  root.read("output_dir", c.output_dir);
  root.read("dt_max_us", c.dt_max_us);
  std::string weighting = c.fit_weighting == FitWeighting::uniform ? "uniform" : "confidence_interval";
  root.read("fit_weighting", weighting);
  if (weighting == "uniform") {
    c.fit_weighting = FitWeighting::uniform;
  } else if (weighting == "confidence_interval") {
    c.fit_weighting = FitWeighting::confidence_interval;
  } else {
    throw ValidationError("config.fit_weighting must be 'uniform' or 'confidence_interval'");
  }

  if (auto a = root.child("atom")) {
    a->read("omega_blue_mhz", c.atom.omega_blue_mhz);
    a->read("omega_red_mhz", c.atom.omega_red_mhz);
    a->read("delta_intermediate_mhz", c.atom.delta_intermediate_mhz);
    a->read("temperature_uk", c.atom.temperature_uk);
    a->read("lambda_blue_nm", c.atom.lambda_blue_nm);
    a->read("lambda_red_nm", c.atom.lambda_red_nm);
    a->read("gamma_blue_scatter_per_us", c.atom.gamma_blue_scatter);
    a->read("gamma_red_scatter_per_us", c.atom.gamma_red_scatter);
    a->read("t_blackbody_us", c.atom.t_blackbody_us);
    a->read("t_radiative_us", c.atom.t_radiative_us);
    a->read("counter_propagating", c.atom.counter_propagating);
    a->finish();
  }
  c.atom.validate();
  c.sigma_doppler_khz = doppler_sigma(c.atom) / units::two_pi;
  c.sequence.rabi_mhz = two_photon_rabi(c.atom);

  if (auto t = root.child("two_atom")) {
    t->read("interaction_mhz", c.interaction_mhz);
    t->read("separation_um", c.separation_um);
    t->finish();
  }
  if (auto d = root.child("detection")) {
    d->read("f_r", c.detection.f_r);
    if (const Json* table = d->raw("f_g_table")) {
      c.detection.f_g_table.clear();
      if (!table->is_array()) throw ValidationError("detection.f_g_table must be an array of [time, f_g]");
      for (const auto& row : *table) {
        if (!row.is_array() || row.size() != 2 || !row[0].is_number() || !row[1].is_number()) {
          throw ValidationError("detection.f_g_table rows must be [time_us, f_g]");
        }
        c.detection.f_g_table.emplace_back(row[0].get<double>(), row[1].get<double>());
      }
    }
    d->read("trap_off_time_us", c.trap_off_time_us);
    d->finish();
  }
  if (auto n = root.child("noise")) {
    n->read("sigma_doppler_khz", c.sigma_doppler_khz);
    n->read("sigma_position_um", c.sigma_position_um);
    n->read("gamma_laser_per_us", c.gamma_laser_per_us);
    n->read("doppler_during_drive", c.doppler_during_drive);
    if (auto ch = n->child("channels")) {
      ch->read("blue_scatter", c.channels.blue_scatter);
      ch->read("red_scatter", c.channels.red_scatter);
      ch->read("blackbody", c.channels.blackbody);
      ch->read("radiative", c.channels.radiative);
      ch->finish();
    }
    n->finish();
  }
  if (auto s = root.child("sequence")) {
    s->read("rabi_mhz", c.sequence.rabi_mhz);
    s->read("light_shift_mhz", c.sequence.light_shift_mhz);
    s->read("echo_arm_us", c.sequence.echo_arm_us);
    s->read("crosstalk_fraction", c.crosstalk_fraction);
    s->finish();
  }
  if (auto m = root.child("model")) {
    m->read("dark_level", c.dark_level);
    m->read("blockade_projected", c.blockade_projected);
    m->finish();
  }
  root.finish();
  c.validate();
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config file '" + path.string() + "'");
  Json j;
  try {
    j = Json::parse(in, nullptr, true, true);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError("config '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

// ---------------------------------------------------------------------------
// Derived quantities

struct DerivedScalar {
  std::string name;
  std::optional<double> value;  // empty when undefined (e.g. no decay)
  std::string unit;
  std::string rule;
  std::string reference;  // human-readable target
  std::optional<bool> pass;
  std::string note{};
};

struct RunManifest {
  Json config_echo;
  std::string version = RYDBERG_VERSION;
  double wall_clock_s = 0.0;
  std::vector<DerivedScalar> derived;
  std::filesystem::path data_file;
  std::filesystem::path manifest_file;

  Json to_json() const {
    Json d = Json::array();
    for (const auto& s : derived) {
      d.push_back({{"name", s.name},
                   {"value", s.value ? Json(*s.value) : Json(nullptr)},
                   {"unit", s.unit},
                   {"rule", s.rule},
                   {"reference", s.reference},
                   {"pass", s.pass ? Json(*s.pass) : Json(nullptr)},
                   {"note", s.note}});
    }
    return Json{{"artifact", kArtifactName},
                {"version", version},
                {"wall_clock_s", wall_clock_s},
                {"data_file", data_file.filename().string()},
                {"config", config_echo},
                {"derived", d}};
  }

  const DerivedScalar& scalar(std::string_view name) const {
    for (const auto& s : derived) {
      if (s.name == name) return s;
    }
    throw ValidationError("manifest has no derived scalar '" + std::string(name) + "'");
  }
};

struct RunOutput {
  EnsembleResult ensemble;
  RunManifest manifest;
};

namespace detail {

inline FitOptions fit_options(const ExperimentConfig& c, const EnsembleResult& r, std::string_view outcome) {
  FitOptions o;
  if (c.fit_weighting == FitWeighting::confidence_interval) {
    const auto i = static_cast<std::size_t>(DensityMatrix::index_in(r.outcome_labels, outcome));
    for (const auto& p : r.points) {
      const double sigma = std::max(1e-6, 0.5 * (p.ci[i].hi - p.ci[i].lo));
      o.weights.push_back(1.0 / (sigma * sigma));
    }
  }
  return o;
}

inline DerivedScalar within_fraction(std::string name, std::optional<double> v, std::string unit, std::string rule,
                                     double target, double fraction) {
  DerivedScalar s{std::move(name), v, std::move(unit), std::move(rule), "", std::nullopt};
  std::ostringstream ref;
  ref << target << " +/- " << fraction * 100.0 << "%";
  s.reference = ref.str();
  s.pass = v.has_value() && std::abs(*v - target) <= fraction * std::abs(target);
  return s;
}

inline DerivedScalar within_range(std::string name, std::optional<double> v, std::string unit, std::string rule,
                                  double lo, double hi) {
  DerivedScalar s{std::move(name), v, std::move(unit), std::move(rule), "", std::nullopt};
  std::ostringstream ref;
  ref << "[" << lo << ", " << hi << "]";
  s.reference = ref.str();
  s.pass = v.has_value() && *v >= lo && *v <= hi;
  return s;
}

inline std::optional<double> tau_of(const FitResult& f) {
  if (!f.decay_detected) return std::nullopt;
  return f.tau_us;
}

inline void flag_no_decay(DerivedScalar& s, const FitResult& f) {
  if (!f.decay_detected) s.note = "no decay detected";
}

/// Fit-based scalars of each preset. A failed fit becomes a scalar with no
/// value and the error text as note.
inline std::vector<DerivedScalar> analyse(const ExperimentConfig& c, const EnsembleResult& r,
                                          const std::optional<EnsembleResult>& prep) {
  std::vector<DerivedScalar> out;
  const auto x = r.scan();
  const std::string& n = c.preset;
  auto guarded = [&](const std::string& name, auto&& body) {
    try {
      body();
    } catch (const Error& e) {
      out.push_back({name, std::nullopt, "", "fit", "", false, e.what()});
    }
  };

  if (n == "rabi") {
    guarded("rabi_tau_us", [&] {
      const auto f = fit_damped_cosine(x, r.outcome("r"), Envelope::exponential, fit_options(c, r, "r"));
      auto tau = within_range("rabi_tau_us", tau_of(f), "us", "rabi_damping_time_in_20_35us", 20.0, 35.0);
      flag_no_decay(tau, f);
      out.push_back(tau);
      out.push_back(within_fraction("rabi_frequency_mhz", f.value("frequency_mhz"), "MHz",
                                    "rabi_frequency_within_1pct_of_drive", c.sequence.rabi_mhz, 0.01));
    });
  } else if (n == "t1") {
    guarded("t1_us", [&] {
      const auto f = fit_decay(x, r.outcome("g"), Envelope::exponential, std::nullopt, fit_options(c, r, "g"));
      auto s = within_fraction("t1_us", tau_of(f), "us", "t1_within_10pct_of_combined_t1", combined_t1(c.atom), 0.10);
      flag_no_decay(s, f);
      out.push_back(s);
    });
  } else if (n == "ramsey") {
    guarded("t2_star_us", [&] {
      const auto f = fit_decay(x, r.outcome("r"), Envelope::gaussian, std::nullopt, fit_options(c, r, "r"));
      const double sigma = units::angular(c.sigma_doppler_khz * 1e-3);
      auto s = within_fraction("t2_star_us", tau_of(f), "us", "t2_star_within_10pct_of_sqrt2_over_sigma",
                               sigma > 0.0 ? std::numbers::sqrt2 / sigma : std::numeric_limits<double>::infinity(),
                               0.10);
      flag_no_decay(s, f);
      out.push_back(s);
    });
  } else if (n == "spin_echo") {
    guarded("t2_echo_us", [&] {
      // Fully dephased state (half g, half r) seen through detection.
      const std::vector<double> half = {0.5, 0.5};
      const std::vector<std::vector<Level>> st = {{Level::g}, {Level::r}};
      const double floor = apply_detection(half, st, c.detection, c.trap_off_time_us)[0];
      const auto f = fit_decay(x, r.outcome("g"), Envelope::exponential, floor, fit_options(c, r, "g"));
      DerivedScalar s = c.gamma_laser_per_us > 0.0
                            ? within_fraction("t2_echo_us", tau_of(f), "us", "echo_t2_within_20pct_of_32us", 32.0, 0.20)
                            : within_range("t2_echo_us", tau_of(f), "us", "echo_t2_at_least_40us", 40.0,
                                           std::numeric_limits<double>::infinity());
      flag_no_decay(s, f);
      out.push_back(s);
      if (f.decay_detected) {
        DerivedScalar tphi{"t_phi_us", std::nullopt, "us", "pure_dephasing_single_atom", "reported only", std::nullopt};
        try {
          tphi.value = pure_dephasing(f.tau_us, combined_t1(c.atom), DephasingReference::single_atom);
        } catch (const Error& e) {
          tphi.note = e.what();
        }
        out.push_back(tphi);
      }
    });
  } else if (n == "phase_gate_echo") {
    guarded("phase_gate_frequency_mhz", [&] {
      const auto f = fit_damped_cosine(x, r.outcome("g"), Envelope::none, fit_options(c, r, "g"));
      out.push_back(within_fraction("phase_gate_frequency_mhz", f.value("frequency_mhz"), "MHz",
                                    "phase_gate_frequency_within_1pct_of_light_shift", c.sequence.light_shift_mhz,
                                    0.01));
      out.push_back({"phase_gate_contrast", 2.0 * f.value("amplitude"), "", "reported only", "", std::nullopt});
    });
  } else if (n == "blockade_rabi") {
    guarded("collective_frequency_mhz", [&] {
      const auto f = fit_damped_cosine(x, r.outcome("gg"), Envelope::exponential, fit_options(c, r, "gg"));
      out.push_back(within_fraction("collective_frequency_mhz", f.value("frequency_mhz"), "MHz",
                                    "collective_frequency_within_1pct_of_sqrt2_rabi",
                                    std::numbers::sqrt2 * c.sequence.rabi_mhz, 0.01));
    });
    if (c.levels().blockade_projected) {
      out.push_back({"max_p_rr", 0.0, "", "max_p_rr_below_5e-3", "< 0.005", true, "rr projected out"});
    } else {
      double m = 0.0;
      for (double v : r.population("rr")) m = std::max(m, v);
      out.push_back({"max_p_rr", m, "", "max_p_rr_below_5e-3", "< 0.005", m < 5e-3});
    }
  } else if (n == "parity_scan") {
    guarded("parity_contrast", [&] {
      const ParityFit pf = fit_parity(x, r.outcome("gg"), c.sequence.light_shift_mhz);
      const double contrast = 2.0 * pf.alpha;
      double diag = 0.0;
      for (const char* l : {"gr", "rg"}) diag += prep->outcome(l).front();
      const BellRecord b = BellRecord::from_measurements(diag, contrast);
      out.push_back(within_range("parity_contrast", contrast, "", "parity_contrast_near_0.88", 0.84, 0.92));
      out.push_back(within_range("w_diag_sum", diag, "", "w_diag_sum_near_0.94", 0.90, 0.98));
      out.push_back(within_range("bell_fidelity", b.fidelity, "", "bell_fidelity_near_0.91", 0.87, 0.95));
      const double corrected = detection_corrected_fidelity(b.fidelity, c.detection, c.trap_off_time_us);
      out.push_back(within_range("bell_fidelity_detection_corrected", corrected, "",
                                 "corrected_fidelity_near_0.97", 0.91, 1.0));
    });
  } else if (n == "w_lifetime") {
    guarded("w_lifetime_us", [&] {
      const auto f = fit_decay(x, r.outcome("gg"), Envelope::gaussian, std::nullopt, fit_options(c, r, "gg"));
      auto s = within_range("w_lifetime_us", tau_of(f), "us", "w_lifetime_doppler_limited_1_to_10us", 1.0, 10.0);
      flag_no_decay(s, f);
      out.push_back(s);
    });
  } else if (n == "w_echo") {
    guarded("w_echo_tau_us", [&] {
      const auto f = fit_decay(x, r.outcome("gg"), Envelope::exponential, std::nullopt, fit_options(c, r, "gg"));
      auto s = within_range("w_echo_tau_us", tau_of(f), "us", "w_echo_lifetime_in_40_60us", 40.0, 60.0);
      flag_no_decay(s, f);
      out.push_back(s);
      if (f.decay_detected) {
        DerivedScalar tphi{"t_phi_w_us", std::nullopt, "us", "pure_dephasing_w_state", "reported only", std::nullopt};
        try {
          tphi.value = pure_dephasing(f.tau_us, combined_t1(c.atom), DephasingReference::w_state);
        } catch (const Error& e) {
          tphi.note = e.what();
        }
        out.push_back(tphi);
      }
    });
  }
  return out;
}

inline std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

}  // namespace detail

/// CSV: header comments, then one row per scan point with detected outcome
/// probabilities, their Wilson 68% bounds and the mean true populations.
inline void write_csv(std::ostream& os, const ExperimentConfig& c, const EnsembleResult& r) {
  const PresetInfo& info = c.info();
  os << "# preset: " << info.name << " (" << info.figure << ")\n";
  os << "# " << info.scan_variable << ": scanned variable [us]\n";
  os << "# P_<o>: detected outcome probability per atom pattern; g = recaptured, r = lost\n";
  os << "# P_<o>_lo, P_<o>_hi: Wilson 68% interval for " << r.n_shots << " shots\n";
  os << "# pop_<state>: mean true population of the basis state before detection\n";
  os << "# mode: " << mode_name(r.mode) << ", master_seed: " << r.master_seed << "\n";
  os << info.scan_variable;
  for (const auto& o : r.outcome_labels) os << ",P_" << o;
  for (const auto& o : r.outcome_labels) os << ",P_" << o << "_lo,P_" << o << "_hi";
  for (const auto& b : r.basis_labels) os << ",pop_" << b;
  os << "\n";
  for (const auto& p : r.points) {
    os << detail::format_number(p.x);
    for (double v : p.outcome_prob) os << "," << detail::format_number(v);
    for (const auto& ci : p.ci) os << "," << detail::format_number(ci.lo) << "," << detail::format_number(ci.hi);
    for (double v : p.basis_prob) os << "," << detail::format_number(v);
    os << "\n";
  }
}

/// Runs the preset ensemble, fits, and (when write_files) writes
/// <output_dir>/<preset>.csv and <output_dir>/<preset>.manifest.json.
inline RunOutput run(const ExperimentConfig& config, bool write_files = true, std::optional<int> workers = {}) {
  config.validate();
  const auto t0 = std::chrono::steady_clock::now();
  RunOutput out;
  const EnsembleSpec spec = config.ensemble();
  out.ensemble = run_ensemble(spec, workers);

  std::optional<EnsembleResult> prep;
  if (config.preset == "parity_scan") {
    EnsembleSpec s = spec;
    const PresetParams pp = config.sequence;
    s.sequence = [pp](double) {
      PulseSequence q;
      q.n_atoms = 2;
      q.elements = {PulseElement::drive(pulse_duration(std::numbers::pi, std::numbers::sqrt2 * pp.rabi_mhz), pp.rabi_mhz)};
      return q;
    };
    s.scan_values = {0.0};
    prep = run_ensemble(s, workers);
  }
  out.manifest.derived = detail::analyse(config, out.ensemble, prep);
  out.manifest.config_echo = to_json(config);
  out.manifest.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  if (write_files) {
    namespace fs = std::filesystem;
    const fs::path dir(config.output_dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw ValidationError("cannot create output directory '" + dir.string() + "': " + ec.message());
    out.manifest.data_file = dir / (config.preset + ".csv");
    out.manifest.manifest_file = dir / (config.preset + ".manifest.json");
    std::ofstream csv(out.manifest.data_file, std::ios::binary);
    if (!csv) throw ValidationError("cannot write '" + out.manifest.data_file.string() + "'");
    write_csv(csv, config, out.ensemble);
    std::ofstream man(out.manifest.manifest_file, std::ios::binary);
    if (!man) throw ValidationError("cannot write '" + out.manifest.manifest_file.string() + "'");
    man << out.manifest.to_json().dump(2) << "\n";
    if (!csv || !man) throw ValidationError("write failure in '" + dir.string() + "'");
  }
  return out;
}

/// Catalog with each preset's figure, scan column and default grid.
inline Json list_presets() {
  Json arr = Json::array();
  for (const auto& p : preset_catalog()) {
    const ExperimentConfig d = default_config(p.name);
    arr.push_back({{"name", p.name},
                   {"figure", p.figure},
                   {"atoms", p.n_atoms},
                   {"scan_variable", p.scan_variable},
                   {"description", p.description},
                   {"elements", p.elements},
                   {"default_scan", {{"start", d.scan.start}, {"stop", d.scan.stop}, {"points", d.scan.points}}},
                   {"default_shots", d.n_shots}});
  }
  return arr;
}

}  // namespace rydberg
