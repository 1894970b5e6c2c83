#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>

#include <Eigen/Dense>

#include "rydberg/error.hpp"

namespace rydberg {

using cplx = std::complex<double>;
using ComplexMatrix = Eigen::MatrixXcd;
using ComplexVector = Eigen::VectorXcd;

inline constexpr cplx I_unit{0.0, 1.0};

/// Kronecker product a (x) b. Atom 1 is the left factor, so for two qubits
/// the basis order is gg, gr, rg, rr.
inline ComplexMatrix tensor(const ComplexMatrix& a, const ComplexMatrix& b) {
  if (a.rows() != a.cols() || b.rows() != b.cols()) {
    throw ValidationError("tensor: operands must be square");
  }
  const Eigen::Index na = a.rows();
  const Eigen::Index nb = b.rows();
  ComplexMatrix out(na * nb, na * nb);
  for (Eigen::Index i = 0; i < na; ++i) {
    for (Eigen::Index j = 0; j < na; ++j) {
      out.block(i * nb, j * nb, nb, nb) = a(i, j) * b;
    }
  }
  return out;
}

/// Largest elementwise |a - b|; dimension mismatch counts as infinitely far.
inline double max_abs_diff(const ComplexMatrix& a, const ComplexMatrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return INFINITY;
  if (a.size() == 0) return 0.0;
  return (a - b).cwiseAbs().maxCoeff();
}

inline bool approx_equal(const ComplexMatrix& a, const ComplexMatrix& b, double tol) {
  return max_abs_diff(a, b) <= tol;
}

/// max |A - A^dagger| elementwise.
inline double hermiticity_error(const ComplexMatrix& a) {
  if (a.rows() != a.cols()) return INFINITY;
  return max_abs_diff(a, a.adjoint());
}

/// |i><j| in a dim-dimensional space.
inline ComplexMatrix basis_op(Eigen::Index dim, Eigen::Index i, Eigen::Index j) {
  ComplexMatrix m = ComplexMatrix::Zero(dim, dim);
  m(i, j) = 1.0;
  return m;
}

inline ComplexVector basis_ket(Eigen::Index dim, Eigen::Index i) {
  ComplexVector v = ComplexVector::Zero(dim);
  v(i) = 1.0;
  return v;
}

/// |a><b|
inline ComplexMatrix outer(const ComplexVector& a, const ComplexVector& b) {
  return a * b.adjoint();
}

/// Smallest eigenvalue of the Hermitian part of m.
inline double min_eigenvalue(const ComplexMatrix& m) {
  const ComplexMatrix h = 0.5 * (m + m.adjoint());
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> solver(h, Eigen::EigenvaluesOnly);
  return solver.eigenvalues().minCoeff();
}

}  // namespace rydberg
