#pragma once

#include <cmath>
#include <complex>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>

#include "rydberg/dynamics.hpp"
#include "rydberg/matrix.hpp"

namespace rydberg::testing {

/// e^{-iHt} from the eigendecomposition of H.
inline ComplexMatrix exact_unitary(const ComplexMatrix& h, double t) {
  const Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(0.5 * (h + h.adjoint()));
  const Eigen::VectorXd& ev = es.eigenvalues();
  ComplexVector phase(ev.size());
  for (Eigen::Index i = 0; i < ev.size(); ++i) phase(i) = std::polar(1.0, -ev(i) * t);
  return es.eigenvectors() * phase.asDiagonal() * es.eigenvectors().adjoint();
}

/// U rho U^dag with U = e^{-iHt}.
inline ComplexMatrix exact_evolution(const ComplexMatrix& rho, const ComplexMatrix& h, double t) {
  const ComplexMatrix u = exact_unitary(h, t);
  return u * rho * u.adjoint();
}

inline ComplexMatrix random_complex(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  ComplexMatrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = cplx{n(rng), n(rng)};
  }
  return m;
}

/// Random Hermitian matrix rescaled to the given spectral norm.
inline ComplexMatrix random_hermitian(Eigen::Index dim, double spectral_norm, std::mt19937_64& rng) {
  const ComplexMatrix a = random_complex(dim, dim, rng);
  ComplexMatrix h = 0.5 * (a + a.adjoint());
  const Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(h);
  const double norm = es.eigenvalues().cwiseAbs().maxCoeff();
  h *= spectral_norm / norm;
  return 0.5 * (h + h.adjoint());
}

/// Full-rank random density matrix A A^dag / Tr(A A^dag).
inline ComplexMatrix random_density(Eigen::Index dim, std::mt19937_64& rng) {
  const ComplexMatrix a = random_complex(dim, dim, rng);
  ComplexMatrix rho = a * a.adjoint();
  rho /= rho.trace().real();
  return 0.5 * (rho + rho.adjoint());
}

inline std::vector<std::string> numbered_labels(Eigen::Index dim) {
  std::vector<std::string> l;
  for (Eigen::Index i = 0; i < dim; ++i) l.push_back("s" + std::to_string(i));
  return l;
}

}  // namespace rydberg::testing
