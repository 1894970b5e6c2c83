#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "rydberg/estimators.hpp"

using namespace rydberg;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::vector<double> linspace(double a, double b, int n) {
  std::vector<double> v(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = a + (b - a) * i / (n - 1);
  return v;
}

std::vector<double> damped_cosine(const std::vector<double>& t, double c, double a, double f, double phi, Envelope env,
                                  double decay) {
  std::vector<double> y;
  for (double x : t) y.push_back(c + a * std::cos(kTwoPi * f * x + phi) * detail::envelope_value(env, decay, x));
  return y;
}

std::vector<double> decay_curve(const std::vector<double>& t, double floor, double a, Envelope env, double decay) {
  std::vector<double> y;
  for (double x : t) y.push_back(floor + a * detail::envelope_value(env, decay, x));
  return y;
}

void expect_rel(double got, double want, double tol) { EXPECT_NEAR(got, want, tol * std::abs(want)); }

}  // namespace

TEST(SpectralPeak, FindsDominantFrequency) {
  const auto t = linspace(0.0, 8.0, 161);
  const auto y = damped_cosine(t, 0.5, 0.5, 2.0, 0.3, Envelope::none, 0.0);
  EXPECT_NEAR(spectral_peak(t, y), 2.0, 1.0 / 8.0);
  EXPECT_NEAR(spectral_peak(t, y, 16), 2.0, 1.0 / (8.0 * 16.0));
}

TEST(SpectralPeak, Errors) {
  const auto t = linspace(0.0, 1.0, 10);
  EXPECT_THROW(spectral_peak(t, std::vector<double>(10, 0.3)), ValidationError);
  auto uneven = t;
  uneven[3] += 0.01;
  EXPECT_THROW(spectral_peak(uneven, damped_cosine(uneven, 0, 1, 2, 0, Envelope::none, 0)), ValidationError);
  EXPECT_THROW(spectral_peak(linspace(0, 1, 3), std::vector<double>{0, 1, 0}), ValidationError);
}

TEST(DampedCosine, ExponentialRoundTrip) {
  const auto t = linspace(0.0, 8.0, 80);
  const auto y = damped_cosine(t, 0.48, 0.47, 2.0, 0.4, Envelope::exponential, 1.0 / 27.0);
  const FitResult r = fit_damped_cosine(t, y, Envelope::exponential);
  EXPECT_TRUE(r.converged);
  expect_rel(r.value("offset"), 0.48, 1e-6);
  expect_rel(r.value("amplitude"), 0.47, 1e-6);
  expect_rel(r.value("frequency_mhz"), 2.0, 1e-6);
  expect_rel(r.value("phase"), 0.4, 1e-6);
  expect_rel(r.tau_us, 27.0, 1e-6);
  EXPECT_TRUE(r.decay_detected);
  EXPECT_LT(r.residual_norm, 1e-8);
}

TEST(DampedCosine, GaussianRoundTrip) {
  const auto t = linspace(0.0, 12.0, 97);
  const double tau = 4.5;
  const auto y = damped_cosine(t, 0.5, 0.45, 1.3, -1.1, Envelope::gaussian, 1.0 / (tau * tau));
  const FitResult r = fit_damped_cosine(t, y, Envelope::gaussian);
  expect_rel(r.value("frequency_mhz"), 1.3, 1e-6);
  expect_rel(r.value("phase"), -1.1, 1e-6);
  expect_rel(r.tau_us, tau, 1e-6);
}

TEST(DampedCosine, NegativeAmplitudeIsCanonicalised) {
  const auto t = linspace(0.0, 3.0, 60);
  const auto y = damped_cosine(t, 0.5, -0.5, 2.83, 0.0, Envelope::none, 0.0);
  const FitResult r = fit_damped_cosine(t, y, Envelope::none);
  EXPECT_NEAR(r.value("amplitude"), 0.5, 1e-8);
  EXPECT_NEAR(std::abs(r.value("phase")), std::numbers::pi, 1e-8);
  EXPECT_FALSE(r.decay_detected);
  EXPECT_TRUE(std::isinf(r.tau_us));
}

TEST(DampedCosine, UndampedDataFlagsNoDecay) {
  const auto t = linspace(0.1, 8.0, 80);
  const auto y = damped_cosine(t, 0.5, 0.5, 2.0, std::numbers::pi, Envelope::none, 0.0);
  const FitResult r = fit_damped_cosine(t, y, Envelope::exponential);
  EXPECT_FALSE(r.decay_detected);
  EXPECT_TRUE(std::isinf(r.tau_us));
  EXPECT_NEAR(r.value("frequency_mhz"), 2.0, 1e-8);
}

TEST(DampedCosine, NoisyDataWithinUncertainty) {
  const auto t = linspace(0.0, 8.0, 80);
  auto y = damped_cosine(t, 0.5, 0.45, 2.0, 0.0, Envelope::exponential, 1.0 / 27.0);
  std::mt19937_64 rng(11);
  std::normal_distribution<double> noise(0.0, 0.01);
  for (double& v : y) v += noise(rng);
  const FitResult r = fit_damped_cosine(t, y, Envelope::exponential);
  EXPECT_NEAR(r.value("frequency_mhz"), 2.0, 4 * r.stddev("frequency_mhz"));
  EXPECT_GT(r.stddev("decay"), 0.0);
}

TEST(DampedCosine, Errors) {
  const auto t5 = linspace(0.0, 5.0, 5);
  EXPECT_THROW(fit_damped_cosine(t5, damped_cosine(t5, 0, 1, 1, 0, Envelope::none, 0), Envelope::none),
               ValidationError);
  const auto short_span = linspace(0.0, 0.3, 20);
  EXPECT_THROW(fit_damped_cosine(short_span, damped_cosine(short_span, 0, 1, 1.0, 0, Envelope::none, 0),
                                 Envelope::none),
               ValidationError);
  const auto t = linspace(0.0, 4.0, 40);
  auto y = damped_cosine(t, 0, 1, 2, 0, Envelope::none, 0);
  y[4] = std::nan("");
  EXPECT_THROW(fit_damped_cosine(t, y, Envelope::none), ValidationError);
  const std::vector<double> shorter(t.begin(), t.end() - 1);
  EXPECT_THROW(fit_damped_cosine(shorter, damped_cosine(t, 0, 1, 2, 0, Envelope::none, 0), Envelope::none),
               ValidationError);
}

TEST(DampedCosine, NonConvergenceIsReported) {
  const auto t = linspace(0.0, 8.0, 80);
  const auto y = damped_cosine(t, 0.5, 0.45, 2.0, 0.3, Envelope::exponential, 0.05);
  FitOptions opt;
  opt.max_iterations = 1;
  opt.grad_tol = 0.0;
  opt.rel_step_tol = 0.0;
  EXPECT_THROW(fit_damped_cosine(t, y, Envelope::exponential, opt), FitError);
}

TEST(KnownFrequency, LinearFit) {
  const auto t = linspace(0.0, 2.0, 41);
  const auto y = damped_cosine(t, 0.25, 0.44, 1.0, 0.7, Envelope::none, 0.0);
  const FitResult r = fit_cosine_known_frequency(t, y, 1.0);
  EXPECT_NEAR(r.value("offset"), 0.25, 1e-12);
  EXPECT_NEAR(r.value("amplitude"), 0.44, 1e-12);
  EXPECT_NEAR(r.value("phase"), 0.7, 1e-12);
  EXPECT_EQ(r.value("frequency_mhz"), 1.0);
}

TEST(KnownFrequency, RankDeficient) {
  const std::vector<double> t = {0.0, 1.0, 2.0, 3.0, 4.0};  // integer periods: sin column vanishes
  const std::vector<double> y = {1.0, 1.0, 1.0, 1.0, 1.0};
  EXPECT_THROW(fit_cosine_known_frequency(t, y, 1.0), FitError);
}

TEST(Decay, ExponentialFixedFloor) {
  const auto t = linspace(0.0, 150.0, 20);
  const auto y = decay_curve(t, 0.5, 0.49, Envelope::exponential, 1.0 / 51.7);
  const FitResult r = fit_decay(t, y, Envelope::exponential, 0.5);
  EXPECT_EQ(r.value("floor"), 0.5);
  EXPECT_EQ(r.stddev("floor"), 0.0);
  expect_rel(r.tau_us, 51.7, 1e-8);
  expect_rel(r.value("amplitude"), 0.49, 1e-8);
}

TEST(Decay, ExponentialFreeFloor) {
  const auto t = linspace(0.0, 150.0, 20);
  const auto y = decay_curve(t, 0.03, 0.93, Envelope::exponential, 1.0 / 51.7);
  const FitResult r = fit_decay(t, y, Envelope::exponential);
  expect_rel(r.tau_us, 51.7, 1e-8);
  EXPECT_NEAR(r.value("floor"), 0.03, 1e-9);
}

TEST(Decay, GaussianFreeFloor) {
  const auto t = linspace(0.0, 10.0, 21);
  const auto y = decay_curve(t, 0.52, 0.4, Envelope::gaussian, 1.0 / (3.6 * 3.6));
  const FitResult r = fit_decay(t, y, Envelope::gaussian);
  expect_rel(r.tau_us, 3.6, 1e-8);
}

TEST(Decay, Errors) {
  const auto t = linspace(0.0, 1.0, 3);
  EXPECT_THROW(fit_decay(t, decay_curve(t, 0, 1, Envelope::exponential, 1), Envelope::exponential), ValidationError);
  const auto t4 = linspace(0.0, 1.0, 4);
  EXPECT_THROW(fit_decay(t4, decay_curve(t4, 0, 1, Envelope::exponential, 1), Envelope::none), ValidationError);
  const std::vector<double> same(4, 2.0);
  EXPECT_THROW(fit_decay(same, std::vector<double>{1, 0.5, 0.3, 0.2}, Envelope::exponential), ValidationError);
}

TEST(Decay, FlatDataHasNoDecay) {
  const auto t = linspace(0.0, 10.0, 11);
  const std::vector<double> y(11, 0.7);
  const FitResult r = fit_decay(t, y, Envelope::exponential, 0.5);
  EXPECT_FALSE(r.decay_detected);
  EXPECT_NEAR(r.value("amplitude"), 0.2, 1e-9);
}

TEST(Weights, DownweightOutlier) {
  const auto t = linspace(0.0, 50.0, 11);
  auto y = decay_curve(t, 0.0, 1.0, Envelope::exponential, 0.05);
  y[5] += 0.3;
  FitOptions opt;
  opt.weights.assign(11, 1.0);
  opt.weights[5] = 1e-12;
  const FitResult r = fit_decay(t, y, Envelope::exponential, 0.0, opt);
  expect_rel(r.tau_us, 20.0, 1e-5);
  opt.weights.resize(5);
  EXPECT_THROW(fit_decay(t, y, Envelope::exponential, 0.0, opt), ValidationError);
}
