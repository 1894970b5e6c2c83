#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "rydberg/atom_model.hpp"
#include "rydberg/dynamics.hpp"
#include "rydberg/error.hpp"
#include "rydberg/estimators.hpp"
#include "rydberg/matrix.hpp"
#include "rydberg/units.hpp"

namespace rydberg {

/// Two-atom qubit basis used by the analytic layer.
inline const std::vector<std::string>& qubit_pair_labels() {
  static const std::vector<std::string> labels = {"gg", "gr", "rg", "rr"};
  return labels;
}

struct TwoAtomParams {
  double interaction_mhz = 30.0;  // U/h
  double separation_um = 5.7;
  double k_eff_per_um = 8.757;    // rad/um
  double x1_um = 0.0;
  double x2_um = 0.0;

  void validate() const {
    if (!(separation_um > 0.0)) throw ValidationError("TwoAtomParams: separation must be > 0");
    if (!(interaction_mhz >= 0.0)) throw ValidationError("TwoAtomParams: interaction must be >= 0");
    if (!std::isfinite(k_eff_per_um) || !std::isfinite(x1_um) || !std::isfinite(x2_um)) {
      throw ValidationError("TwoAtomParams: non-finite value");
    }
  }
};

/// (e^{ik x1}|rg> + e^{ik x2}|gr>)/sqrt2 in basis gg, gr, rg, rr.
inline ComplexVector w_state(const TwoAtomParams& p = {}) {
  ComplexVector v = ComplexVector::Zero(4);
  v(1) = std::polar(1.0, p.k_eff_per_um * p.x2_um) / std::sqrt(2.0);
  v(2) = std::polar(1.0, p.k_eff_per_um * p.x1_um) / std::sqrt(2.0);
  return v;
}

/// (|gr> - |rg>)/sqrt2
inline ComplexVector dark_state() {
  ComplexVector v = ComplexVector::Zero(4);
  v(1) = 1.0 / std::sqrt(2.0);
  v(2) = -1.0 / std::sqrt(2.0);
  return v;
}

/// Ideal blockaded pi-pulse on the {gg, W, D, rr} structure.
inline ComplexMatrix x_pi_w() {
  const double s = 1.0 / std::sqrt(2.0);
  ComplexMatrix x = ComplexMatrix::Zero(4, 4);
  x(0, 1) = I_unit * s;
  x(0, 2) = I_unit * s;
  x(1, 0) = I_unit * s;
  x(2, 0) = I_unit * s;
  x(1, 1) = 0.5;
  x(2, 2) = 0.5;
  x(1, 2) = -0.5;
  x(2, 1) = -0.5;
  x(3, 3) = 1.0;
  return x;
}

/// Phase e^{i 2 pi delta t} on the atom-1 ground components.
inline ComplexMatrix z_phi_local(double delta_mhz, double t_us) {
  const cplx ph = std::polar(1.0, units::angular(delta_mhz) * t_us);
  ComplexMatrix z = ComplexMatrix::Identity(4, 4);
  z(0, 0) = ph;
  z(1, 1) = ph;
  return z;
}

/// (Omega/2) sum_i (e^{ik x_i}|r_i><g_i| + h.c.) + U|rr><rr| in rad/us on
/// gg, gr, rg, rr, or on gg, gr, rg when projected.
inline ComplexMatrix blockade_hamiltonian(const TwoAtomParams& p, double rabi_mhz, bool projected = false) {
  p.validate();
  const double half = 0.5 * units::angular(rabi_mhz);
  const cplx e1 = std::polar(1.0, p.k_eff_per_um * p.x1_um);
  const cplx e2 = std::polar(1.0, p.k_eff_per_um * p.x2_um);
  ComplexMatrix h = ComplexMatrix::Zero(4, 4);
  // atom 1 raises gg->rg and gr->rr; atom 2 raises gg->gr and rg->rr
  h(2, 0) = half * e1;
  h(3, 1) = half * e1;
  h(1, 0) = half * e2;
  h(3, 2) = half * e2;
  h(0, 2) = std::conj(h(2, 0));
  h(1, 3) = std::conj(h(3, 1));
  h(0, 1) = std::conj(h(1, 0));
  h(2, 3) = std::conj(h(3, 2));
  h(3, 3) = units::angular(p.interaction_mhz);
  if (projected) return h.topLeftCorner(3, 3);
  return h;
}

/// 4x4 block over gg, gr, rg, rr of a two-atom state on any level scheme.
/// Missing basis states (rr in the projected model) give zero rows.
inline ComplexMatrix reduce_to_qubit_block(const DensityMatrix& rho) {
  const auto& want = qubit_pair_labels();
  std::vector<Eigen::Index> idx;
  for (const auto& l : want) {
    const auto it = std::find(rho.labels().begin(), rho.labels().end(), l);
    idx.push_back(it == rho.labels().end() ? -1 : static_cast<Eigen::Index>(it - rho.labels().begin()));
  }
  if (idx[1] < 0 || idx[2] < 0) throw ValidationError("reduce_to_qubit_block: not a two-atom state");
  ComplexMatrix out = ComplexMatrix::Zero(4, 4);
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) {
      if (idx[i] >= 0 && idx[j] >= 0) out(i, j) = rho.matrix()(idx[i], idx[j]);
    }
  }
  return out;
}

struct BellRecord {
  double diag_sum = 0.0;     // rho_gr,gr + rho_rg,rg
  double offdiag_amp = 0.0;  // 2 |rho_gr,rg|
  double fidelity = 0.0;     // overlap with the zero-phase W state

  /// From measured diagonal sum and parity contrast.
  static BellRecord from_measurements(double diag_sum, double contrast) {
    return {diag_sum, contrast, 0.5 * diag_sum + 0.5 * contrast};
  }
};

/// F = 1/2 (rho_gr,gr + rho_rg,rg) + 1/2 (rho_gr,rg + rho_rg,gr).
inline BellRecord bell_fidelity(const DensityMatrix& rho) {
  const double pgr = rho.matrix()(rho.index_of("gr"), rho.index_of("gr")).real();
  const double prg = rho.matrix()(rho.index_of("rg"), rho.index_of("rg")).real();
  const cplx c = coherence(rho, "gr", "rg");
  BellRecord b;
  b.diag_sum = pgr + prg;
  b.offdiag_amp = 2.0 * std::abs(c);
  b.fidelity = 0.5 * b.diag_sum + c.real();
  return b;
}

/// P_gg(t) = <gg| X Z(t) rho Z(t)^dag X^dag |gg> for each t.
inline std::vector<double> parity_signal(const ComplexMatrix& rho4, double delta_mhz, std::span<const double> times) {
  if (rho4.rows() != 4 || rho4.cols() != 4) throw ValidationError("parity_signal: need a 4x4 two-atom state");
  const ComplexMatrix x = x_pi_w();
  std::vector<double> out;
  out.reserve(times.size());
  for (double t : times) {
    const ComplexMatrix u = x * z_phi_local(delta_mhz, t);
    out.push_back((u * rho4 * u.adjoint())(0, 0).real());
  }
  return out;
}

struct ParityFit {
  double alpha = 0.0;  // |rho_gr,rg|
  double theta = 0.0;  // arg rho_gr,rg
  double offset = 0.0;
  FitResult fit;
};

inline void check_parity_grid(std::span<const double> times, double delta_mhz) {
  if (times.size() < 4) throw ValidationError("parity scan: need at least 4 time points");
  const auto [lo, hi] = std::minmax_element(times.begin(), times.end());
  if (!(std::abs(delta_mhz) * (*hi - *lo) >= 0.5)) {
    throw ValidationError("parity scan: time span shorter than half an oscillation period");
  }
}

/// Fits P_gg(t) = alpha cos(2 pi delta t + theta) + C with the frequency held
/// at delta.
inline ParityFit fit_parity(std::span<const double> times, std::span<const double> p_gg, double delta_mhz) {
  check_parity_grid(times, delta_mhz);
  ParityFit out;
  out.fit = fit_cosine_known_frequency(times, p_gg, delta_mhz);
  out.alpha = out.fit.value("amplitude");
  out.theta = out.fit.value("phase");
  out.offset = out.fit.value("offset");
  return out;
}

/// Simulated parity scan of rho0 followed by the cosine fit.
inline ParityFit parity_amplitude(const DensityMatrix& rho0, double delta_mhz, std::span<const double> times) {
  const ComplexMatrix r4 = reduce_to_qubit_block(rho0);
  check_parity_grid(times, delta_mhz);
  const auto p = parity_signal(r4, delta_mhz, times);
  return fit_parity(times, p, delta_mhz);
}

/// Bell fidelity measurable from a perfect |W> when only detection errors act:
/// diagonal terms through the per-atom confusion channel, off-diagonal
/// contrast from a detection-only parity scan.
inline double detection_limited_fidelity(const DetectionModel& d, double trap_off_time_us = 4.0) {
  d.validate();
  const double fg = d.f_g(trap_off_time_us);
  const double fr = d.f_r;
  // P(outcome gr) + P(outcome rg) for a state with one g and one r atom.
  const double diag = fg * fr + (1.0 - fg) * (1.0 - fr);

  const ComplexMatrix w = outer(w_state(), w_state());
  constexpr double delta = 1.0;
  std::vector<double> t(41);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = 2.0 * static_cast<double>(i) / 40.0;
  std::vector<double> measured;
  const ComplexMatrix x = x_pi_w();
  const std::vector<Level> basis[4] = {{Level::g, Level::g}, {Level::g, Level::r}, {Level::r, Level::g},
                                       {Level::r, Level::r}};
  for (double ti : t) {
    const ComplexMatrix u = x * z_phi_local(delta, ti);
    const ComplexMatrix rho = u * w * u.adjoint();
    double p_gg = 0.0;
    for (int b = 0; b < 4; ++b) {
      p_gg += rho(b, b).real() * detection_probabilities(d, std::span<const Level>(basis[b]), trap_off_time_us)[0];
    }
    measured.push_back(p_gg);
  }
  const FitResult fit = fit_cosine_known_frequency(t, measured, delta);
  return 0.5 * diag + fit.value("amplitude");
}

/// f_meas / F_max.
inline double detection_corrected_fidelity(double f_meas, const DetectionModel& d, double trap_off_time_us = 4.0) {
  if (!(f_meas >= 0.0 && f_meas <= 1.0)) throw ValidationError("detection_corrected_fidelity: f_meas not in [0,1]");
  const double f_max = detection_limited_fidelity(d, trap_off_time_us);
  if (!(f_max > 0.0)) throw NumericalError("detection_corrected_fidelity: maximum measurable fidelity is zero");
  return f_meas / f_max;
}

}  // namespace rydberg
