#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "rydberg/error.hpp"

namespace rydberg {

enum class Envelope { none, exponential, gaussian };

inline std::string_view envelope_name(Envelope e) {
  switch (e) {
    case Envelope::none: return "none";
    case Envelope::exponential: return "exponential";
    case Envelope::gaussian: return "gaussian";
  }
  return "?";
}

struct FitOptions {
  int max_iterations = 200;
  double rel_step_tol = 1e-10;
  double grad_tol = 1e-12;
  /// Per-point weights (e.g. 1/sigma^2); empty means uniform.
  std::vector<double> weights{};
};

struct FitResult {
  std::vector<std::string> names;
  std::vector<double> params;
  std::vector<double> covariance_diag;
  double residual_norm = 0.0;
  bool converged = false;
  int n_iterations = 0;
  Envelope envelope = Envelope::none;
  /// 1/e time of the envelope; infinity when no decay was detected.
  double tau_us = std::numeric_limits<double>::infinity();
  bool decay_detected = false;

  double value(std::string_view name) const { return params[index(name)]; }
  double stddev(std::string_view name) const { return std::sqrt(std::max(0.0, covariance_diag[index(name)])); }

  std::size_t index(std::string_view name) const {
    for (std::size_t i = 0; i < names.size(); ++i) {
      if (names[i] == name) return i;
    }
    throw ValidationError("FitResult: no parameter '" + std::string(name) + "'");
  }
};

namespace detail {

/// f(t, p, grad) returns the model value and writes df/dp into grad.
using ModelFn = std::function<double(double, const Eigen::VectorXd&, Eigen::Ref<Eigen::VectorXd>)>;

struct LeastSquaresProblem {
  ModelFn model;
  std::vector<std::string> names;
  std::span<const double> t;
  std::span<const double> y;
  std::vector<bool> fixed;
};

/// Damped Gauss-Newton (Levenberg-style diagonal damping) with a
/// step-halving line search. Converges on relative step < rel_step_tol or
/// gradient norm < grad_tol.
inline FitResult levenberg_marquardt(const LeastSquaresProblem& prob, Eigen::VectorXd p, const FitOptions& opt) {
  const auto m = static_cast<Eigen::Index>(prob.t.size());
  const auto np = p.size();
  std::vector<Eigen::Index> free;
  for (Eigen::Index i = 0; i < np; ++i) {
    if (prob.fixed.empty() || !prob.fixed[static_cast<std::size_t>(i)]) free.push_back(i);
  }
  const auto nf = static_cast<Eigen::Index>(free.size());
  if (m < nf) throw FitError("fit: fewer points than free parameters");
  Eigen::VectorXd w = Eigen::VectorXd::Ones(m);
  if (!opt.weights.empty()) {
    if (static_cast<Eigen::Index>(opt.weights.size()) != m) throw ValidationError("fit: weights size mismatch");
    for (Eigen::Index i = 0; i < m; ++i) w(i) = opt.weights[static_cast<std::size_t>(i)];
  }

  Eigen::VectorXd grad(np);
  auto residuals = [&](const Eigen::VectorXd& q, Eigen::VectorXd& r, Eigen::MatrixXd* jac) {
    r.resize(m);
    if (jac) jac->resize(m, nf);
    for (Eigen::Index i = 0; i < m; ++i) {
      const double f = prob.model(prob.t[i], q, grad);
      r(i) = prob.y[i] - f;
      if (jac) {
        for (Eigen::Index k = 0; k < nf; ++k) (*jac)(i, k) = grad(free[k]);
      }
    }
  };
  auto cost_of = [&](const Eigen::VectorXd& r) { return 0.5 * (w.array() * r.array().square()).sum(); };

  Eigen::VectorXd r;
  Eigen::MatrixXd jac;
  residuals(p, r, &jac);
  double cost = cost_of(r);
  if (!std::isfinite(cost)) throw FitError("fit: non-finite residual at the initial guess");

  FitResult res;
  res.names = prob.names;
  double lambda = 1e-3;
  int it = 0;
  for (; it < opt.max_iterations && !res.converged; ++it) {
    const Eigen::MatrixXd jw = w.asDiagonal() * jac;
    const Eigen::VectorXd g = jw.transpose() * r;
    if (g.norm() < opt.grad_tol) {
      res.converged = true;
      break;
    }
    const Eigen::MatrixXd a = jac.transpose() * jw;
    Eigen::VectorXd d = a.diagonal().cwiseMax(1e-12 * std::max(1.0, a.diagonal().maxCoeff()));
    bool accepted = false;
    for (int tries = 0; tries < 40 && !accepted; ++tries) {
      const Eigen::MatrixXd damped = a + lambda * Eigen::MatrixXd(d.asDiagonal());
      Eigen::VectorXd step = damped.ldlt().solve(g);
      if (!step.allFinite()) {
        lambda *= 10.0;
        continue;
      }
      Eigen::VectorXd full_step = Eigen::VectorXd::Zero(np);
      for (Eigen::Index k = 0; k < nf; ++k) full_step(free[k]) = step(k);
      const bool tiny = full_step.norm() <= opt.rel_step_tol * (p.norm() + opt.rel_step_tol);
      for (int half = 0; half < 8; ++half) {
        const Eigen::VectorXd trial = p + full_step;
        Eigen::VectorXd rt;
        residuals(trial, rt, nullptr);
        const double ct = cost_of(rt);
        if (std::isfinite(ct) && ct < cost) {
          p = trial;
          cost = ct;
          accepted = true;
          break;
        }
        full_step *= 0.5;
      }
      if (accepted) {
        lambda = std::max(lambda / 3.0, 1e-15);
        if (full_step.norm() <= opt.rel_step_tol * (p.norm() + opt.rel_step_tol)) res.converged = true;
      } else {
        if (tiny) {
          // No representable improvement left.
          res.converged = true;
          break;
        }
        lambda *= 10.0;
      }
    }
    if (!accepted && !res.converged) break;
    residuals(p, r, &jac);
  }
  res.n_iterations = it;
  if (!res.converged) {
    throw FitError("fit did not converge after " + std::to_string(it) + " iterations");
  }

  residuals(p, r, &jac);
  const Eigen::MatrixXd jw = w.cwiseSqrt().asDiagonal() * jac;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(jw);
  qr.setThreshold(1e-12);
  if (qr.rank() < nf) throw FitError("fit: rank-deficient Jacobian");
  const Eigen::MatrixXd cov = (jw.transpose() * jw).inverse();
  const double s2 = m > nf ? 2.0 * cost / static_cast<double>(m - nf) : 0.0;
  res.params.assign(p.data(), p.data() + np);
  res.covariance_diag.assign(static_cast<std::size_t>(np), 0.0);
  for (Eigen::Index k = 0; k < nf; ++k) res.covariance_diag[static_cast<std::size_t>(free[k])] = s2 * cov(k, k);
  res.residual_norm = std::sqrt(2.0 * cost);
  return res;
}

inline double envelope_value(Envelope e, double decay, double t) {
  switch (e) {
    case Envelope::none: return 1.0;
    case Envelope::exponential: return std::exp(-decay * t);
    case Envelope::gaussian: return std::exp(-decay * t * t);
  }
  return 1.0;
}

/// d env / d decay = -t^k env
inline double envelope_power(Envelope e, double t) {
  return e == Envelope::gaussian ? t * t : t;
}

inline void check_series(std::span<const double> t, std::span<const double> y, std::size_t min_points) {
  if (t.size() != y.size()) throw ValidationError("fit: t and y differ in length");
  if (t.size() < min_points) {
    throw ValidationError("fit: need at least " + std::to_string(min_points) + " points");
  }
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (!std::isfinite(t[i]) || !std::isfinite(y[i])) throw ValidationError("fit: non-finite data");
  }
}

inline void finish_decay(FitResult& r, Envelope e, double decay, double span) {
  r.envelope = e;
  const double scale = e == Envelope::gaussian ? span * span : span;
  r.decay_detected = e != Envelope::none && decay * scale > 1e-8;
  if (r.decay_detected) {
    r.tau_us = e == Envelope::gaussian ? 1.0 / std::sqrt(decay) : 1.0 / decay;
  }
}

inline double span_of(std::span<const double> t) {
  const auto [lo, hi] = std::minmax_element(t.begin(), t.end());
  return *hi - *lo;
}

/// Least-squares c + a cos(2 pi f t) + b sin(2 pi f t) at fixed f.
inline Eigen::Vector3d linear_cosine(std::span<const double> t, std::span<const double> y, double f) {
  const auto m = static_cast<Eigen::Index>(t.size());
  Eigen::MatrixXd x(m, 3);
  Eigen::VectorXd yy(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const double ph = 2.0 * std::numbers::pi * f * t[i];
    x(i, 0) = 1.0;
    x(i, 1) = std::cos(ph);
    x(i, 2) = std::sin(ph);
    yy(i) = y[i];
  }
  return x.colPivHouseholderQr().solve(yy);
}

}  // namespace detail

/// Frequency (MHz for t in us) of the largest nonzero-frequency bin of the
/// DFT of y - mean(y). oversample > 1 zero-pads the transform. A constant
/// signal is an error.
inline double spectral_peak(std::span<const double> t, std::span<const double> y, int oversample = 1) {
  detail::check_series(t, y, 4);
  const std::size_t n = t.size();
  const double dt = (t.back() - t.front()) / static_cast<double>(n - 1);
  if (!(dt > 0.0)) throw ValidationError("spectral_peak: time axis must increase");
  for (std::size_t i = 1; i < n; ++i) {
    if (std::abs((t[i] - t[i - 1]) - dt) > 1e-6 * dt) throw ValidationError("spectral_peak: non-uniform sampling");
  }
  double mean = 0.0;
  for (double v : y) mean += v;
  mean /= static_cast<double>(n);
  double spread = 0.0;
  for (double v : y) spread = std::max(spread, std::abs(v - mean));
  if (spread <= 1e-14 * (1.0 + std::abs(mean))) throw ValidationError("spectral_peak: constant signal");

  const std::size_t bins = n * static_cast<std::size_t>(std::max(1, oversample));
  double best_f = 0.0;
  double best_mag = -1.0;
  for (std::size_t k = 1; k <= bins / 2; ++k) {
    const double f = static_cast<double>(k) / (static_cast<double>(bins) * dt);
    double re = 0.0;
    double im = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double ph = 2.0 * std::numbers::pi * f * (t[i] - t[0]);
      re += (y[i] - mean) * std::cos(ph);
      im -= (y[i] - mean) * std::sin(ph);
    }
    const double mag = re * re + im * im;
    if (mag > best_mag) {
      best_mag = mag;
      best_f = f;
    }
  }
  return best_f;
}

/// Fits y = offset + A cos(2 pi f t + phi) env(t) with env = 1, e^{-gamma t}
/// or e^{-beta t^2}. Parameters: offset, amplitude, frequency_mhz, phase,
/// decay (gamma in 1/us or beta in 1/us^2). The amplitude is reported
/// non-negative.
inline FitResult fit_damped_cosine(std::span<const double> t, std::span<const double> y, Envelope env,
                                   const FitOptions& opt = {}) {
  detail::check_series(t, y, 6);
  const double span = detail::span_of(t);
  const double f_peak = spectral_peak(t, y, 16);
  if (f_peak * span < 1.0) {
    throw ValidationError("fit_damped_cosine: data span covers less than one oscillation period");
  }

  detail::LeastSquaresProblem prob;
  prob.names = {"offset", "amplitude", "frequency_mhz", "phase", "decay"};
  prob.t = t;
  prob.y = y;
  prob.fixed = {false, false, false, false, env == Envelope::none};
  prob.model = [env](double tt, const Eigen::VectorXd& p, Eigen::Ref<Eigen::VectorXd> g) {
    const double w = 2.0 * std::numbers::pi * p(2);
    const double e = detail::envelope_value(env, p(4), tt);
    const double c = std::cos(w * tt + p(3));
    const double s = std::sin(w * tt + p(3));
    g(0) = 1.0;
    g(1) = c * e;
    g(2) = -p(1) * s * e * 2.0 * std::numbers::pi * tt;
    g(3) = -p(1) * s * e;
    g(4) = -detail::envelope_power(env, tt) * p(1) * c * e;
    return p(0) + p(1) * c * e;
  };

  const double bin = 1.0 / (span * 16.0);
  std::optional<FitResult> best;
  std::string last_error = "no start point";
  for (double df : {0.0, -bin, bin}) {
    const double f0 = f_peak + df;
    const Eigen::Vector3d lin = detail::linear_cosine(t, y, f0);
    const double amp = std::hypot(lin(1), lin(2));
    const double phase = std::atan2(-lin(2), lin(1));
    for (double k : {0.0, 0.5, 2.0}) {
      if (env == Envelope::none && k != 0.0) continue;
      const double decay = env == Envelope::gaussian ? k / (span * span) : k / span;
      Eigen::VectorXd p0(5);
      p0 << lin(0), amp, f0, phase, decay;
      try {
        FitResult r = detail::levenberg_marquardt(prob, p0, opt);
        if (!best || r.residual_norm < best->residual_norm) best = std::move(r);
      } catch (const FitError& e) {
        last_error = e.what();
      }
    }
  }
  if (!best) throw FitError("fit_damped_cosine: " + last_error);
  FitResult r = std::move(*best);
  if (r.params[1] < 0.0) {
    r.params[1] = -r.params[1];
    r.params[3] += std::numbers::pi;
  }
  r.params[3] = std::remainder(r.params[3], 2.0 * std::numbers::pi);
  detail::finish_decay(r, env, r.params[4], span);
  return r;
}

/// Fits offset + A cos(2 pi f t + phi) with f held at a known value (linear
/// least squares). Parameters: offset, amplitude (>= 0), frequency_mhz, phase.
inline FitResult fit_cosine_known_frequency(std::span<const double> t, std::span<const double> y, double f_mhz,
                                            const FitOptions& opt = {}) {
  detail::check_series(t, y, 4);
  detail::LeastSquaresProblem prob;
  prob.names = {"offset", "a_cos", "b_sin"};
  prob.t = t;
  prob.y = y;
  prob.model = [f_mhz](double tt, const Eigen::VectorXd& p, Eigen::Ref<Eigen::VectorXd> g) {
    const double ph = 2.0 * std::numbers::pi * f_mhz * tt;
    g(0) = 1.0;
    g(1) = std::cos(ph);
    g(2) = std::sin(ph);
    return p(0) + p(1) * g(1) + p(2) * g(2);
  };
  const Eigen::Vector3d p0 = detail::linear_cosine(t, y, f_mhz);
  const FitResult lin = detail::levenberg_marquardt(prob, Eigen::VectorXd(p0), opt);
  const double a = lin.params[1];
  const double b = lin.params[2];
  FitResult r = lin;
  r.names = {"offset", "amplitude", "frequency_mhz", "phase"};
  const double amp = std::hypot(a, b);
  r.params = {lin.params[0], amp, f_mhz, std::atan2(-b, a)};
  const double var_amp =
      amp > 0.0 ? (a * a * lin.covariance_diag[1] + b * b * lin.covariance_diag[2]) / (amp * amp) : 0.0;
  r.covariance_diag = {lin.covariance_diag[0], var_amp, 0.0, 0.0};
  return r;
}

/// Fits y = floor + A env(t) with env = e^{-gamma t} or e^{-beta t^2}.
/// Parameters: floor, amplitude, decay. A given floor is held fixed.
inline FitResult fit_decay(std::span<const double> t, std::span<const double> y, Envelope env,
                           std::optional<double> floor = std::nullopt, const FitOptions& opt = {}) {
  if (env == Envelope::none) throw ValidationError("fit_decay: envelope must be exponential or gaussian");
  detail::check_series(t, y, 4);
  const double span = detail::span_of(t);
  if (!(span > 0.0)) throw ValidationError("fit_decay: zero time span");

  detail::LeastSquaresProblem prob;
  prob.names = {"floor", "amplitude", "decay"};
  prob.t = t;
  prob.y = y;
  prob.fixed = {floor.has_value(), false, false};
  prob.model = [env](double tt, const Eigen::VectorXd& p, Eigen::Ref<Eigen::VectorXd> g) {
    const double e = detail::envelope_value(env, p(2), tt);
    g(0) = 1.0;
    g(1) = e;
    g(2) = -detail::envelope_power(env, tt) * p(1) * e;
    return p(0) + p(1) * e;
  };

  const auto first = std::min_element(t.begin(), t.end()) - t.begin();
  const auto last = std::max_element(t.begin(), t.end()) - t.begin();
  const double floor0 = floor.value_or(y[static_cast<std::size_t>(last)]);
  const double t0 = t[static_cast<std::size_t>(first)];
  std::optional<FitResult> best;
  std::string last_error = "no start point";
  for (double k : {0.3, 1.0, 3.0}) {
    const double decay = env == Envelope::gaussian ? k * k / (span * span) : k / span;
    Eigen::VectorXd p0(3);
    p0 << floor0, (y[static_cast<std::size_t>(first)] - floor0) / detail::envelope_value(env, decay, t0), decay;
    try {
      FitResult r = detail::levenberg_marquardt(prob, p0, opt);
      if (!best || r.residual_norm < best->residual_norm) best = std::move(r);
    } catch (const FitError& e) {
      last_error = e.what();
    }
  }
  if (!best) throw FitError("fit_decay: " + last_error);
  FitResult r = std::move(*best);
  detail::finish_decay(r, env, r.params[2], span);
  return r;
}

}  // namespace rydberg
