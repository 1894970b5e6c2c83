#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "rydberg/atom_model.hpp"
#include "rydberg/dynamics.hpp"
#include "rydberg/error.hpp"
#include "rydberg/pulse_sequence.hpp"

namespace rydberg {

using Rng = std::mt19937_64;

inline constexpr const char* kWorkersEnv = "RYDBERG_WORKERS";
/// z for a two-sided 68.27% (one sigma) interval.
inline constexpr double kWilsonZ68 = 0.9944578832097535;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Per-shot seed, independent of scheduling.
inline std::uint64_t stable_hash(std::uint64_t master_seed, std::uint64_t scan_index, std::uint64_t shot_index) {
  std::uint64_t h = splitmix64(master_seed);
  h = splitmix64(h ^ scan_index);
  h = splitmix64(h ^ (shot_index * 0xd1b54a32d192ed03ULL));
  return h;
}

/// Independent Gaussian Doppler detuning and position per atom.
inline NoiseSample sample_noise(double sigma_doppler_krad_s, double sigma_position_um, int n_atoms, Rng& rng) {
  if (!(sigma_doppler_krad_s >= 0.0) || !(sigma_position_um >= 0.0)) {
    throw ValidationError("sample_noise: sigmas must be >= 0");
  }
  if (n_atoms < 1) throw ValidationError("sample_noise: n_atoms must be >= 1");
  NoiseSample s = NoiseSample::none(n_atoms);
  std::normal_distribution<double> unit(0.0, 1.0);
  for (int i = 0; i < n_atoms; ++i) {
    s.doppler_krad_s[static_cast<std::size_t>(i)] = sigma_doppler_krad_s * unit(rng);
    s.position_um[static_cast<std::size_t>(i)] = sigma_position_um * unit(rng);
  }
  return s;
}

struct Interval {
  double lo = 0.0;
  double hi = 1.0;
};

/// Wilson score interval for k successes in n trials (p_hat = k/n).
inline Interval wilson_interval(double p_hat, int n, double z = kWilsonZ68) {
  if (n < 1) throw ValidationError("wilson_interval: n must be >= 1");
  if (!(p_hat >= 0.0 && p_hat <= 1.0)) throw ValidationError("wilson_interval: p not in [0,1]");
  const double nn = static_cast<double>(n);
  const double z2 = z * z;
  const double denom = 1.0 + z2 / nn;
  const double centre = (p_hat + z2 / (2.0 * nn)) / denom;
  const double half = z / denom * std::sqrt(p_hat * (1.0 - p_hat) / nn + z2 / (4.0 * nn * nn));
  return {std::max(0.0, centre - half), std::min(1.0, centre + half)};
}

/// Pushes a distribution over basis states (per-atom levels in `states`)
/// through the per-atom detection channel. Output is over outcome_labels(n).
inline std::vector<double> apply_detection(std::span<const double> basis_probs,
                                           const std::vector<std::vector<Level>>& states, const DetectionModel& d,
                                           double trap_off_time_us) {
  if (basis_probs.size() != states.size() || states.empty()) {
    throw ValidationError("apply_detection: distribution does not match the basis");
  }
  double total = 0.0;
  for (double p : basis_probs) {
    if (!(p >= -1e-12) || !std::isfinite(p)) throw ValidationError("apply_detection: negative probability");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ValidationError("apply_detection: distribution does not sum to 1");
  const std::size_t n = states.front().size();
  std::vector<double> out(std::size_t{1} << n, 0.0);
  for (std::size_t b = 0; b < states.size(); ++b) {
    if (states[b].size() != n) throw ValidationError("apply_detection: inconsistent atom count");
    const auto conf = detection_probabilities(d, std::span<const Level>(states[b]), trap_off_time_us);
    for (std::size_t o = 0; o < out.size(); ++o) out[o] += basis_probs[b] * conf[o];
  }
  // Renormalise the input rounding so the output sums to 1 to machine precision.
  double s = 0.0;
  for (double p : out) s += p;
  for (double& p : out) p /= s;
  return out;
}

enum class EnsembleMode { expectation, sampled };

inline std::string_view mode_name(EnsembleMode m) { return m == EnsembleMode::expectation ? "expectation" : "sampled"; }

inline EnsembleMode parse_mode(std::string_view s) {
  if (s == "expectation") return EnsembleMode::expectation;
  if (s == "sampled") return EnsembleMode::sampled;
  throw ValidationError("unknown ensemble mode '" + std::string(s) + "'");
}

struct EnsembleSpec {
  std::string preset = "rabi";
  PresetParams preset_params{};
  /// Replaces the named preset when set.
  std::function<PulseSequence(double)> sequence{};
  SystemModel system{};
  std::vector<double> scan_values{};
  int n_shots = 100;
  EnsembleMode mode = EnsembleMode::expectation;
  std::uint64_t master_seed = 1;
  /// Defaults to doppler_sigma(system.atom).
  std::optional<double> sigma_doppler_krad_s{};
  double sigma_position_um = 0.2;
  DetectionModel detection{};
  double trap_off_time_us = 4.0;
  double dt_max_us = kDefaultDtMax;

  double doppler_width() const { return sigma_doppler_krad_s.value_or(doppler_sigma(system.atom)); }

  PulseSequence build(double x) const { return sequence ? sequence(x) : rydberg::preset(preset, x, preset_params); }

  void validate() const {
    if (n_shots < 1) throw ValidationError("ensemble: n_shots must be >= 1");
    if (scan_values.empty()) throw ValidationError("ensemble: empty scan");
    if (!(dt_max_us > 0.0)) throw ValidationError("ensemble: dt_max must be > 0");
    if (!(doppler_width() >= 0.0) || !(sigma_position_um >= 0.0)) {
      throw ValidationError("ensemble: noise widths must be >= 0");
    }
    detection.validate();
    detection.f_g(trap_off_time_us);
    system.levels.validate();
    system.atom.validate();
  }
};

/// Ground state of the spec's level scheme.
inline DensityMatrix ground_state(const LevelScheme& ls) {
  return DensityMatrix::basis_state(ls.labels(), ls.n_atoms == 1 ? "g" : "gg");
}

/// Noise draw for one shot.
inline NoiseSample shot_noise(const EnsembleSpec& spec, std::size_t scan_index, std::size_t shot_index, Rng& rng) {
  rng.seed(stable_hash(spec.master_seed, scan_index, shot_index));
  return sample_noise(spec.doppler_width(), spec.sigma_position_um, spec.system.levels.n_atoms, rng);
}

/// Final density matrix of one shot.
inline DensityMatrix simulate_shot(const EnsembleSpec& spec, std::size_t scan_index, std::size_t shot_index) {
  Rng rng;
  const NoiseSample noise = shot_noise(spec, scan_index, shot_index, rng);
  const CompiledSequence c = compile(spec.build(spec.scan_values.at(scan_index)), spec.system, noise);
  return evolve_final(ground_state(spec.system.levels), c.segments, c.channels, spec.dt_max_us);
}

struct ScanPoint {
  double x = 0.0;
  std::vector<double> basis_prob;    // mean true population per basis label
  std::vector<double> outcome_prob;  // detected recapture/loss pattern
  std::vector<Interval> ci;          // Wilson 68% per outcome
  ComplexMatrix mean_rho;            // shot-averaged final state
};

struct EnsembleResult {
  std::vector<std::string> basis_labels;
  std::vector<std::string> outcome_labels;
  std::vector<ScanPoint> points;
  int n_shots = 0;
  std::uint64_t master_seed = 0;
  EnsembleMode mode = EnsembleMode::expectation;

  std::vector<double> scan() const {
    std::vector<double> v;
    for (const auto& p : points) v.push_back(p.x);
    return v;
  }
  std::vector<double> outcome(std::string_view label) const {
    const auto i = static_cast<std::size_t>(DensityMatrix::index_in(outcome_labels, label));
    std::vector<double> v;
    for (const auto& p : points) v.push_back(p.outcome_prob[i]);
    return v;
  }
  std::vector<double> population(std::string_view label) const {
    const auto i = static_cast<std::size_t>(DensityMatrix::index_in(basis_labels, label));
    std::vector<double> v;
    for (const auto& p : points) v.push_back(p.basis_prob[i]);
    return v;
  }
};

/// Worker count from RYDBERG_WORKERS, else the hardware concurrency.
inline int worker_count() {
  if (const char* env = std::getenv(kWorkersEnv)) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || v < 1) {
      throw ValidationError(std::string(kWorkersEnv) + " must be a positive integer");
    }
    return static_cast<int>(v);
  }
  return static_cast<int>(std::max(1U, std::thread::hardware_concurrency()));
}

namespace detail {

struct ShotOutput {
  std::vector<double> basis_prob;
  std::vector<double> outcome_prob;
  int sampled_outcome = -1;
  ComplexMatrix rho;
};

/// Runs fn(i) for i in [0, n) on `workers` threads. The exception of the
/// lowest failing index is rethrown.
template <class Fn>
void parallel_for(std::size_t n, int workers, Fn&& fn) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto body = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const auto nw = static_cast<std::size_t>(std::max(1, workers));
  if (nw == 1 || n < 2) {
    body();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < std::min(nw, n); ++w) pool.emplace_back(body);
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace detail

/// Runs every (scan value, shot) pair, applies detection, and aggregates in
/// index order. Expectation mode averages detected probabilities; sampled
/// mode draws one outcome per shot. Results do not depend on the worker count.
inline EnsembleResult run_ensemble(const EnsembleSpec& spec, std::optional<int> workers = std::nullopt) {
  spec.validate();
  const auto states = spec.system.levels.states();
  const auto n_scan = spec.scan_values.size();
  const auto n_shots = static_cast<std::size_t>(spec.n_shots);
  std::vector<detail::ShotOutput> shots(n_scan * n_shots);

  detail::parallel_for(shots.size(), workers.value_or(worker_count()), [&](std::size_t k) {
    const std::size_t si = k / n_shots;
    const std::size_t sh = k % n_shots;
    Rng rng;
    const NoiseSample noise = shot_noise(spec, si, sh, rng);
    const CompiledSequence c = compile(spec.build(spec.scan_values[si]), spec.system, noise);
    const DensityMatrix rho =
        evolve_final(ground_state(spec.system.levels), c.segments, c.channels, spec.dt_max_us);
    detail::ShotOutput& out = shots[k];
    for (Eigen::Index i = 0; i < rho.dim(); ++i) out.basis_prob.push_back(population(rho, rho.labels()[i]));
    double total = 0.0;
    for (double p : out.basis_prob) total += p;
    if (std::abs(total - 1.0) > 1e-6) {
      throw NumericalError("ensemble: trace drifted to " + std::to_string(total));
    }
    std::vector<double> normalised = out.basis_prob;
    for (double& p : normalised) p /= total;
    out.outcome_prob = apply_detection(normalised, states, spec.detection, spec.trap_off_time_us);
    if (spec.mode == EnsembleMode::sampled) {
      std::discrete_distribution<int> pick(out.outcome_prob.begin(), out.outcome_prob.end());
      out.sampled_outcome = pick(rng);
    }
    out.rho = rho.matrix();
  });

  EnsembleResult res;
  res.basis_labels = spec.system.levels.labels();
  res.outcome_labels = outcome_labels(spec.system.levels.n_atoms);
  res.n_shots = spec.n_shots;
  res.master_seed = spec.master_seed;
  res.mode = spec.mode;
  const std::size_t n_out = res.outcome_labels.size();
  const double inv = 1.0 / static_cast<double>(n_shots);
  for (std::size_t si = 0; si < n_scan; ++si) {
    ScanPoint pt;
    pt.x = spec.scan_values[si];
    pt.basis_prob.assign(res.basis_labels.size(), 0.0);
    pt.outcome_prob.assign(n_out, 0.0);
    pt.mean_rho = ComplexMatrix::Zero(static_cast<Eigen::Index>(res.basis_labels.size()),
                                      static_cast<Eigen::Index>(res.basis_labels.size()));
    for (std::size_t sh = 0; sh < n_shots; ++sh) {
      const auto& s = shots[si * n_shots + sh];
      for (std::size_t b = 0; b < pt.basis_prob.size(); ++b) pt.basis_prob[b] += s.basis_prob[b] * inv;
      if (spec.mode == EnsembleMode::sampled) {
        pt.outcome_prob[static_cast<std::size_t>(s.sampled_outcome)] += inv;
      } else {
        for (std::size_t o = 0; o < n_out; ++o) pt.outcome_prob[o] += s.outcome_prob[o] * inv;
      }
      pt.mean_rho += s.rho * inv;
    }
    for (double& p : pt.outcome_prob) p = std::clamp(p, 0.0, 1.0);
    for (double p : pt.outcome_prob) pt.ci.push_back(wilson_interval(p, spec.n_shots));
    res.points.push_back(std::move(pt));
  }
  return res;
}

}  // namespace rydberg
