#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "rydberg/error.hpp"
#include "rydberg/matrix.hpp"

namespace rydberg {

inline constexpr double kDefaultDtMax = 1e-3;  // us
inline constexpr double kHermitianTol = 1e-10;
inline constexpr double kPositivityTol = 1e-8;

/// Density matrix over an ordered, labelled basis.
class DensityMatrix {
 public:
  DensityMatrix(ComplexMatrix m, std::vector<std::string> labels)
      : m_(std::move(m)), labels_(std::move(labels)) {
    if (m_.rows() == 0 || m_.rows() != m_.cols()) {
      throw ValidationError("DensityMatrix: matrix must be square with dim >= 1");
    }
    if (static_cast<Eigen::Index>(labels_.size()) != m_.rows()) {
      throw ValidationError("DensityMatrix: " + std::to_string(labels_.size()) +
                            " labels for dim " + std::to_string(m_.rows()));
    }
    if (rydberg::hermiticity_error(m_) > kHermitianTol) {
      throw ValidationError("DensityMatrix: matrix is not Hermitian");
    }
  }

  static DensityMatrix pure(const ComplexVector& psi, std::vector<std::string> labels) {
    return DensityMatrix(outer(psi, psi), std::move(labels));
  }

  static DensityMatrix basis_state(std::vector<std::string> labels, std::string_view label) {
    const auto n = static_cast<Eigen::Index>(labels.size());
    const Eigen::Index i = index_in(labels, label);
    return DensityMatrix(basis_op(n, i, i), std::move(labels));
  }

  static DensityMatrix maximally_mixed(std::vector<std::string> labels) {
    const auto n = static_cast<Eigen::Index>(labels.size());
    return DensityMatrix(ComplexMatrix::Identity(n, n) / static_cast<double>(n), std::move(labels));
  }

  const ComplexMatrix& matrix() const { return m_; }
  const std::vector<std::string>& labels() const { return labels_; }
  Eigen::Index dim() const { return m_.rows(); }

  Eigen::Index index_of(std::string_view label) const { return index_in(labels_, label); }

  cplx trace() const { return m_.trace(); }
  double trace_error() const { return std::abs(m_.trace() - cplx{1.0, 0.0}); }
  double hermiticity_error() const { return rydberg::hermiticity_error(m_); }
  double min_eigenvalue() const { return rydberg::min_eigenvalue(m_); }

  static Eigen::Index index_in(const std::vector<std::string>& labels, std::string_view label) {
    const auto it = std::find(labels.begin(), labels.end(), label);
    if (it == labels.end()) {
      throw ValidationError("unknown basis label '" + std::string(label) + "'");
    }
    return static_cast<Eigen::Index>(it - labels.begin());
  }

 private:
  ComplexMatrix m_;
  std::vector<std::string> labels_;
};

/// Jump operator, already scaled by sqrt(rate) (units us^-1/2).
struct LindbladChannel {
  ComplexMatrix op;
  std::string name;
};

/// Piecewise-constant generator: H/hbar in rad/us held for duration_us.
/// extra_channels are active only during this segment, on top of the
/// channels passed to evolve().
struct Segment {
  ComplexMatrix hamiltonian;
  double duration_us = 0.0;
  std::vector<LindbladChannel> extra_channels{};
  std::string tag{};
};

struct TrajectoryPoint {
  double time_us;
  DensityMatrix rho;
};

struct EvolveOptions {
  /// Additional samples inside segments every sample_interval_us (rounded
  /// to whole steps). 0 records segment boundaries only.
  double sample_interval_us = 0.0;
};

/// Liouville-space generator acting on column-stacked vec(rho):
///   -i (I(x)H - H^T(x)I) + sum_k [ conj(L)(x)L - 1/2 I(x)K - 1/2 K^T(x)I ],  K = L^dag L
inline ComplexMatrix liouvillian(const ComplexMatrix& h,
                                 std::span<const LindbladChannel> global,
                                 std::span<const LindbladChannel> local = {}) {
  const Eigen::Index d = h.rows();
  const ComplexMatrix id = ComplexMatrix::Identity(d, d);
  ComplexMatrix gen = -I_unit * (tensor(id, h) - tensor(h.transpose(), id));
  auto add = [&](const LindbladChannel& c) {
    const ComplexMatrix k = c.op.adjoint() * c.op;
    gen += tensor(c.op.conjugate(), c.op) - 0.5 * tensor(id, k) - 0.5 * tensor(k.transpose(), id);
  };
  for (const auto& c : global) add(c);
  for (const auto& c : local) add(c);
  return gen;
}

namespace detail {

/// Applies n classical RK4 steps of size h for dv/dt = G v. For constant G
/// one step is exactly the Taylor polynomial P(hG) = sum_{k<=4} (hG)^k/k!,
/// so n steps are P^n. The space is split into blocks that G leaves
/// invariant; per block, P^n is applied by repeated stepping or by binary
/// powering, whichever costs fewer flops.
class RungeKuttaPropagator {
 public:
  RungeKuttaPropagator(const ComplexMatrix& generator, double h) {
    const Eigen::Index n = generator.rows();
    std::vector<Eigen::Index> parent(static_cast<std::size_t>(n));
    std::iota(parent.begin(), parent.end(), Eigen::Index{0});
    auto find = [&](Eigen::Index x) {
      while (parent[x] != x) x = parent[x] = parent[parent[x]];
      return x;
    };
    for (Eigen::Index j = 0; j < n; ++j) {
      for (Eigen::Index i = 0; i < n; ++i) {
        if (i != j && generator(i, j) != cplx{}) parent[find(i)] = find(j);
      }
    }
    std::vector<Eigen::Index> block_of(static_cast<std::size_t>(n), -1);
    for (Eigen::Index i = 0; i < n; ++i) {
      const Eigen::Index root = find(i);
      if (block_of[root] < 0) {
        block_of[root] = static_cast<Eigen::Index>(blocks_.size());
        blocks_.emplace_back();
      }
      blocks_[block_of[root]].index.push_back(i);
    }
    for (auto& b : blocks_) {
      const auto m = static_cast<Eigen::Index>(b.index.size());
      ComplexMatrix a(m, m);
      for (Eigen::Index i = 0; i < m; ++i) {
        for (Eigen::Index j = 0; j < m; ++j) a(i, j) = h * generator(b.index[i], b.index[j]);
      }
      const ComplexMatrix id = ComplexMatrix::Identity(m, m);
      ComplexMatrix p = id + a / 4.0;
      p = id + (a / 3.0) * p;
      p = id + (a / 2.0) * p;
      p = id + a * p;
      b.powers.push_back(std::move(p));
    }
  }

  void advance(ComplexVector& v, std::size_t n_steps) {
    if (n_steps == 0) return;
    for (auto& b : blocks_) {
      const auto m = static_cast<Eigen::Index>(b.index.size());
      ComplexVector x(m);
      for (Eigen::Index i = 0; i < m; ++i) x(i) = v(b.index[i]);

      const auto needed = static_cast<std::size_t>(std::bit_width(n_steps));
      const std::size_t missing = needed > b.powers.size() ? needed - b.powers.size() : 0;
      const double mm = static_cast<double>(m);
      const double step_cost = static_cast<double>(n_steps) * mm * mm;
      const double power_cost = static_cast<double>(missing) * mm * mm * mm +
                                static_cast<double>(std::popcount(n_steps)) * mm * mm;
      if (step_cost <= power_cost) {
        ComplexVector tmp(m);
        for (std::size_t s = 0; s < n_steps; ++s) {
          tmp.noalias() = b.powers[0] * x;
          x.swap(tmp);
        }
      } else {
        while (b.powers.size() < needed) {
          b.powers.push_back(b.powers.back() * b.powers.back());
        }
        ComplexVector tmp(m);
        for (std::size_t k = 0; k < needed; ++k) {
          if ((n_steps >> k) & 1U) {
            tmp.noalias() = b.powers[k] * x;
            x.swap(tmp);
          }
        }
      }
      for (Eigen::Index i = 0; i < m; ++i) v(b.index[i]) = x(i);
    }
  }

  std::size_t n_blocks() const { return blocks_.size(); }

 private:
  struct Block {
    std::vector<Eigen::Index> index;
    std::vector<ComplexMatrix> powers;  // powers[k] = P^(2^k)
  };
  std::vector<Block> blocks_;
};

inline void validate_evolve_inputs(const DensityMatrix& rho0, std::span<const Segment> segments,
                                   std::span<const LindbladChannel> channels, double dt_max) {
  if (!(dt_max > 0.0) || !std::isfinite(dt_max)) {
    throw ValidationError("evolve: dt_max must be positive and finite");
  }
  const Eigen::Index d = rho0.dim();
  auto check_channel = [d](const LindbladChannel& c) {
    if (c.op.rows() != d || c.op.cols() != d) {
      throw ValidationError("evolve: channel '" + c.name + "' has wrong dimension");
    }
  };
  for (const auto& c : channels) check_channel(c);
  for (const auto& s : segments) {
    if (s.hamiltonian.rows() != d || s.hamiltonian.cols() != d) {
      throw ValidationError("evolve: segment Hamiltonian dimension mismatch");
    }
    if (!(s.duration_us >= 0.0) || !std::isfinite(s.duration_us)) {
      throw ValidationError("evolve: segment duration must be >= 0");
    }
    if (hermiticity_error(s.hamiltonian) > kHermitianTol) {
      throw ValidationError("evolve: non-Hermitian Hamiltonian in segment '" + s.tag + "'");
    }
    for (const auto& c : s.extra_channels) check_channel(c);
  }
}

template <class OnSample>
void integrate(const DensityMatrix& rho0, std::span<const Segment> segments,
               std::span<const LindbladChannel> channels, double dt_max, double sample_interval,
               OnSample&& on_sample) {
  validate_evolve_inputs(rho0, segments, channels, dt_max);
  const Eigen::Index d = rho0.dim();
  ComplexVector v = Eigen::Map<const ComplexVector>(rho0.matrix().data(), d * d);
  double t = 0.0;
  auto emit = [&](double time) {
    if (!v.allFinite()) throw NumericalError("evolve: non-finite value during integration");
    on_sample(time, v);
  };
  for (const auto& seg : segments) {
    const auto n_steps =
        static_cast<std::size_t>(std::max(1.0, std::ceil(seg.duration_us / dt_max - 1e-9)));
    if (seg.duration_us == 0.0) {
      emit(t);
      continue;
    }
    const double h = seg.duration_us / static_cast<double>(n_steps);
    RungeKuttaPropagator prop(liouvillian(seg.hamiltonian, channels, seg.extra_channels), h);
    std::size_t chunk = n_steps;
    if (sample_interval > 0.0) {
      chunk = static_cast<std::size_t>(std::max(1.0, std::round(sample_interval / h)));
    }
    std::size_t done = 0;
    while (done < n_steps) {
      const std::size_t k = std::min(chunk, n_steps - done);
      prop.advance(v, k);
      done += k;
      emit(done == n_steps ? t + seg.duration_us : t + h * static_cast<double>(done));
    }
    t += seg.duration_us;
  }
}

inline DensityMatrix unvec(const ComplexVector& v, Eigen::Index d,
                           const std::vector<std::string>& labels) {
  return DensityMatrix(Eigen::Map<const ComplexMatrix>(v.data(), d, d), labels);
}

}  // namespace detail

/// Integrates d rho/dt = -i[H, rho] + sum_k (L rho L^dag - 1/2 {L^dag L, rho})
/// over piecewise-constant segments with fixed-step RK4 (steps <= dt_max).
/// Returns the trajectory at t = 0 and every segment boundary. The trace is
/// never renormalized.
inline std::vector<TrajectoryPoint> evolve(const DensityMatrix& rho0, std::span<const Segment> segments,
                                           std::span<const LindbladChannel> channels,
                                           double dt_max = kDefaultDtMax, EvolveOptions options = {}) {
  std::vector<TrajectoryPoint> out;
  out.push_back({0.0, rho0});
  const Eigen::Index d = rho0.dim();
  detail::integrate(rho0, segments, channels, dt_max, options.sample_interval_us,
                    [&](double t, const ComplexVector& v) {
                      out.push_back({t, detail::unvec(v, d, rho0.labels())});
                    });
  return out;
}

/// Same integration as evolve(), keeping only the final state.
inline DensityMatrix evolve_final(const DensityMatrix& rho0, std::span<const Segment> segments,
                                  std::span<const LindbladChannel> channels,
                                  double dt_max = kDefaultDtMax) {
  const Eigen::Index d = rho0.dim();
  ComplexVector last = Eigen::Map<const ComplexVector>(rho0.matrix().data(), d * d);
  detail::integrate(rho0, segments, channels, dt_max, 0.0,
                    [&](double, const ComplexVector& v) { last = v; });
  return detail::unvec(last, d, rho0.labels());
}

/// Diagonal entry for label. Values within kPositivityTol outside [0, 1]
/// are clamped; anything further out is a positivity failure.
inline double population(const DensityMatrix& rho, std::string_view label) {
  const Eigen::Index i = rho.index_of(label);
  const double p = rho.matrix()(i, i).real();
  if (p < -kPositivityTol || p > 1.0 + kPositivityTol || !std::isfinite(p)) {
    throw NumericalError("population of '" + std::string(label) + "' out of range: " +
                         std::to_string(p));
  }
  return std::clamp(p, 0.0, 1.0);
}

/// <a|rho|b>
inline cplx coherence(const DensityMatrix& rho, std::string_view label_a, std::string_view label_b) {
  if (label_a == label_b) throw ValidationError("coherence: labels must be distinct");
  return rho.matrix()(rho.index_of(label_a), rho.index_of(label_b));
}

}  // namespace rydberg
