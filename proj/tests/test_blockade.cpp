#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "rydberg/blockade.hpp"
#include "rydberg/dynamics.hpp"
#include "rydberg/testing/oracles.hpp"

using namespace rydberg;

namespace {

constexpr double kPi = std::numbers::pi;
const double kS = 1.0 / std::sqrt(2.0);

ComplexVector ket(cplx gg, cplx gr, cplx rg, cplx rr) {
  ComplexVector v(4);
  v << gg, gr, rg, rr;
  return v;
}

/// |<a|b>|^2 for normalised vectors.
double overlap(const ComplexVector& a, const ComplexVector& b) { return std::norm(a.dot(b)); }

std::vector<double> grid(double stop, int n) {
  std::vector<double> t(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) t[static_cast<std::size_t>(i)] = stop * i / (n - 1);
  return t;
}

bool is_unitary(const ComplexMatrix& u) {
  return max_abs_diff(u.adjoint() * u, ComplexMatrix::Identity(u.rows(), u.cols())) < 1e-12;
}

}  // namespace

TEST(WState, ZeroPhase) {
  EXPECT_LT((w_state() - ket(0, kS, kS, 0)).norm(), 1e-15);
}

TEST(WState, OppositePhaseGivesDarkState) {
  TwoAtomParams p;
  p.k_eff_per_um = 1.0;
  p.x1_um = 0.3;
  p.x2_um = 0.3 + kPi;
  EXPECT_NEAR(overlap(w_state(p), dark_state()), 1.0, 1e-12);
}

TEST(WState, NormalisedForRandomPositions) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> x(0.0, 0.2);
  for (int i = 0; i < 50; ++i) {
    TwoAtomParams p;
    p.x1_um = x(rng);
    p.x2_um = x(rng);
    EXPECT_NEAR(w_state(p).norm(), 1.0, 1e-14);
  }
}

TEST(XPiW, MatrixElements) {
  const ComplexMatrix x = x_pi_w();
  EXPECT_EQ(x(0, 1), cplx(0.0, kS));
  EXPECT_EQ(x(0, 2), cplx(0.0, kS));
  EXPECT_EQ(x(1, 1), cplx(0.5));
  EXPECT_EQ(x(2, 2), cplx(0.5));
  EXPECT_EQ(x(1, 2), cplx(-0.5));
  EXPECT_EQ(x(3, 3), cplx(1.0));
  EXPECT_TRUE(is_unitary(x));
}

TEST(XPiW, ActionOnStates) {
  const ComplexMatrix x = x_pi_w();
  const ComplexVector gg = ket(1, 0, 0, 0);
  EXPECT_LT((x * gg - cplx(0, 1) * w_state()).norm(), 1e-15);
  EXPECT_LT((x * x * gg + gg).norm(), 1e-15);
  EXPECT_LT((x * dark_state() - dark_state()).norm(), 1e-15);
}

TEST(ZPhiLocal, Examples) {
  EXPECT_LT(max_abs_diff(z_phi_local(5.0, 0.0), ComplexMatrix::Identity(4, 4)), 1e-15);
  const ComplexMatrix z = z_phi_local(5.0, 0.1);
  EXPECT_NEAR(std::abs(z(0, 0) + 1.0), 0.0, 1e-12);
  EXPECT_NEAR(std::abs(z(1, 1) + 1.0), 0.0, 1e-12);
  EXPECT_EQ(z(2, 2), cplx(1.0));
  EXPECT_EQ(z(3, 3), cplx(1.0));
  EXPECT_TRUE(is_unitary(z_phi_local(1.234, 0.77)));
  EXPECT_NEAR(overlap(z * w_state(), dark_state()), 1.0, 1e-12);
}

TEST(ZPhiLocal, IntermediatePhaseMatchesSuperposition) {
  // cos(dt/2)|W> + i sin(dt/2)|D> up to a global phase.
  const double phi = 0.9;
  const ComplexVector out = z_phi_local(phi / (2 * kPi), 1.0) * w_state();
  const ComplexVector expect = std::cos(phi / 2) * w_state() + cplx(0, 1) * std::sin(phi / 2) * dark_state();
  EXPECT_NEAR(overlap(out, expect), 1.0, 1e-12);
}

TEST(BellFidelity, Examples) {
  const auto labels = qubit_pair_labels();
  EXPECT_NEAR(bell_fidelity(DensityMatrix::pure(w_state(), labels)).fidelity, 1.0, 1e-15);
  ComplexMatrix mix = ComplexMatrix::Zero(4, 4);
  mix(1, 1) = 0.5;
  mix(2, 2) = 0.5;
  const BellRecord m = bell_fidelity(DensityMatrix(mix, labels));
  EXPECT_NEAR(m.fidelity, 0.5, 1e-15);
  EXPECT_NEAR(m.offdiag_amp, 0.0, 1e-15);
  EXPECT_NEAR(BellRecord::from_measurements(0.94, 0.88).fidelity, 0.91, 1e-12);
}

TEST(BellFidelity, OffDiagonalBoundedByDiagonal) {
  std::mt19937_64 rng(8);
  for (int i = 0; i < 50; ++i) {
    const BellRecord b = bell_fidelity(DensityMatrix(rydberg::testing::random_density(4, rng), qubit_pair_labels()));
    EXPECT_LE(b.offdiag_amp, b.diag_sum + 1e-9);
    EXPECT_GE(b.fidelity, -1e-12);
    EXPECT_LE(b.fidelity, 1.0 + 1e-12);
  }
}

TEST(BellFidelity, ReducesLargerBasis) {
  const LevelScheme ls{2, true, false};
  ComplexVector psi = ComplexVector::Zero(9);
  const auto labels = ls.labels();
  psi(DensityMatrix::index_in(labels, "gr")) = kS;
  psi(DensityMatrix::index_in(labels, "rg")) = kS;
  const DensityMatrix rho = DensityMatrix::pure(psi, labels);
  EXPECT_NEAR(bell_fidelity(rho).fidelity, 1.0, 1e-15);
  const ComplexMatrix r4 = reduce_to_qubit_block(rho);
  EXPECT_LT(max_abs_diff(r4, outer(w_state(), w_state())), 1e-15);
}

TEST(ParityAmplitude, WState) {
  const ParityFit f = parity_amplitude(DensityMatrix::pure(w_state(), qubit_pair_labels()), 1.0, grid(2.0, 41));
  EXPECT_NEAR(f.alpha, 0.5, 1e-9);
  EXPECT_NEAR(f.theta, 0.0, 1e-9);
}

TEST(ParityAmplitude, IncoherentMixture) {
  ComplexMatrix mix = ComplexMatrix::Zero(4, 4);
  mix(1, 1) = 0.5;
  mix(2, 2) = 0.5;
  const ParityFit f = parity_amplitude(DensityMatrix(mix, qubit_pair_labels()), 1.0, grid(2.0, 41));
  EXPECT_LT(std::abs(f.alpha), 1e-9);
}

TEST(ParityAmplitude, PartialCoherence) {
  ComplexMatrix rho = ComplexMatrix::Zero(4, 4);
  rho(0, 0) = 0.03;
  rho(1, 1) = 0.47;
  rho(2, 2) = 0.47;
  rho(3, 3) = 0.03;
  rho(1, 2) = 0.44;
  rho(2, 1) = 0.44;
  const ParityFit f = parity_amplitude(DensityMatrix(rho, qubit_pair_labels()), 1.0, grid(2.0, 41));
  EXPECT_NEAR(2.0 * f.alpha, 0.88, 1e-9);
}

TEST(ParityAmplitude, MatchesCoherenceForRandomStates) {
  std::mt19937_64 rng(20190101);
  for (int i = 0; i < 100; ++i) {
    const DensityMatrix rho(rydberg::testing::random_density(4, rng), qubit_pair_labels());
    const cplx c = coherence(rho, "gr", "rg");
    const ParityFit f = parity_amplitude(rho, 1.0, grid(2.0, 41));
    EXPECT_NEAR(std::abs(f.alpha), std::abs(c), 1e-9);
  }
}

TEST(ParityAmplitude, DegenerateGrid) {
  const DensityMatrix rho = DensityMatrix::pure(w_state(), qubit_pair_labels());
  EXPECT_THROW(parity_amplitude(rho, 1.0, grid(2.0, 3)), ValidationError);
  EXPECT_THROW(parity_amplitude(rho, 1.0, grid(0.2, 10)), ValidationError);
}

TEST(DetectionCorrection, Examples) {
  EXPECT_NEAR(detection_corrected_fidelity(0.91, DetectionModel::perfect()), 0.91, 1e-9);
  const DetectionModel d = DetectionModel::constant(0.99, 0.96);
  const double f_max = detection_limited_fidelity(d);
  EXPECT_NEAR(detection_corrected_fidelity(f_max, d), 1.0, 1e-12);
  EXPECT_LT(f_max, 1.0);
  EXPECT_GT(f_max, 0.9);
  EXPECT_THROW(detection_corrected_fidelity(1.5, d), ValidationError);
}

TEST(BlockadeHamiltonian, Shapes) {
  const TwoAtomParams p;
  const ComplexMatrix h = blockade_hamiltonian(p, 2.0);
  EXPECT_EQ(h.rows(), 4);
  EXPECT_LT(hermiticity_error(h), 1e-15);
  EXPECT_NEAR(h(3, 3).real(), 2 * kPi * 30.0, 1e-12);
  EXPECT_EQ(blockade_hamiltonian(p, 2.0, true).rows(), 3);
}

TEST(BlockadeHamiltonian, ProjectedSwapIsExact) {
  const ComplexMatrix h = blockade_hamiltonian(TwoAtomParams{}, 2.0, true);
  const double t = 1.0 / (std::numbers::sqrt2 * 2.0);  // 2pi at sqrt2 Omega
  const ComplexMatrix u = rydberg::testing::exact_unitary(h, t);
  const cplx a(0.6, 0.1);
  const cplx b(0.2, -0.3);
  const double n = std::sqrt(std::norm(a) + std::norm(b));
  ComplexVector in(3);
  in << 0, a / n, b / n;
  ComplexVector want(3);
  want << 0, -b / n, -a / n;
  EXPECT_LT((u * in - want).norm(), 1e-10);
}

TEST(BlockadeHamiltonian, FullModelSwapAndLeakage) {
  const ComplexMatrix h = blockade_hamiltonian(TwoAtomParams{}, 2.0);
  const double t2pi = 1.0 / (std::numbers::sqrt2 * 2.0);
  const ComplexVector in = ket(0, 0.8, 0.6, 0);
  const ComplexVector want = ket(0, -0.6, -0.8, 0);
  EXPECT_LT(1.0 - overlap(rydberg::testing::exact_unitary(h, t2pi) * in, want), 5e-3);
  const ComplexVector after_pi = rydberg::testing::exact_unitary(h, t2pi / 2) * ket(1, 0, 0, 0);
  EXPECT_LT(std::norm(after_pi(3)), 5e-3);
}

TEST(BlockadeHamiltonian, RejectsNegativeInteraction) {
  TwoAtomParams p;
  p.interaction_mhz = -1.0;
  EXPECT_THROW(blockade_hamiltonian(p, 2.0), ValidationError);
}
