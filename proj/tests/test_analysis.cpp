#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "liad/analysis.hpp"

using namespace liad;

namespace {

// Wilson (8, 10, 0.95) from tests/oracles/reference_values.py.
constexpr double kRefWilsonLo = 0.4901624715366417;
constexpr double kRefWilsonHi = 0.94331784854562475;

std::vector<double> tone(std::size_t n, double fs, double f0, double amplitude) {
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i)
    x[i] = amplitude * std::sin(2.0 * constants::kPi * f0 * static_cast<double>(i) / fs);
  return x;
}

PsdEstimate synthetic_line(double a, double f0, double gamma, double b) {
  PsdEstimate psd;
  psd.sample_rate = 2000.0;
  psd.segment_length = 2000;
  for (int i = 0; i <= 1000; ++i) {
    const double f = static_cast<double>(i);
    psd.frequencies.push_back(f);
    psd.densities.push_back(damped_oscillator_psd(f, a, f0, gamma, b));
  }
  return psd;
}

}  // namespace

TEST(Wilson, ReferenceInterval) {
  const auto ci = wilson_interval(8, 10, 0.95);
  EXPECT_NEAR(ci.lo, kRefWilsonLo, 1e-12);
  EXPECT_NEAR(ci.hi, kRefWilsonHi, 1e-12);
}

TEST(Wilson, Extremes) {
  for (std::size_t n : {1u, 7u, 10000u}) {
    EXPECT_EQ(wilson_interval(0, n).lo, 0.0);
    EXPECT_EQ(wilson_interval(n, n).hi, 1.0);
  }
}

TEST(Wilson, DomainErrors) {
  EXPECT_THROW(wilson_interval(0, 0), std::invalid_argument);
  EXPECT_THROW(wilson_interval(3, 2), std::invalid_argument);
  EXPECT_THROW(wilson_interval(1, 2, 1.0), std::invalid_argument);
  EXPECT_THROW(wilson_interval(1, 2, 0.0), std::invalid_argument);
}

TEST(Wilson, BracketsEstimate) {
  for (std::size_t n = 1; n <= 60; ++n) {
    for (std::size_t s = 0; s <= n; ++s) {
      const auto ci = wilson_interval(s, n, 0.95);
      const double p = static_cast<double>(s) / static_cast<double>(n);
      EXPECT_LE(0.0, ci.lo);
      EXPECT_LE(ci.lo, p);
      EXPECT_LE(p, ci.hi);
      EXPECT_LE(ci.hi, 1.0);
    }
  }
}

TEST(Wilson, CoverageCalibration) {
  std::mt19937_64 rng(12345);
  for (double p : {0.05, 0.3, 0.5}) {
    std::bernoulli_distribution coin(p);
    int covered = 0;
    for (int rep = 0; rep < 1000; ++rep) {
      std::size_t s = 0;
      for (int i = 0; i < 200; ++i) s += coin(rng);
      const auto ci = wilson_interval(s, 200, 0.95);
      covered += (ci.lo <= p && p <= ci.hi);
    }
    EXPECT_GE(covered, 930) << p;
  }
}

TEST(Histogram, IdenticalValuesGiveZeroWidthBin) {
  const std::vector<double> v(5, 1.0);
  const auto h = histogram_by_count(v, 10);
  ASSERT_EQ(h.counts.size(), 1u);
  EXPECT_EQ(h.counts[0], 5u);
  EXPECT_EQ(h.edges[0], 1.0);
  EXPECT_EQ(h.edges[1], 1.0);
  EXPECT_EQ(h.mean, 1.0);
  EXPECT_EQ(h.stddev, 0.0);
}

TEST(Histogram, CountsEveryValue) {
  const std::vector<double> v{0.0, 0.1, 0.25, 0.5, 0.99, 1.0};
  const auto h = histogram_by_count(v, 4);
  EXPECT_EQ(h.counts, (std::vector<std::size_t>{2, 1, 1, 2}));
  const auto w = histogram_by_width(v, 0.5);
  EXPECT_EQ(w.edges, (std::vector<double>{0.0, 0.5, 1.0, 1.5}));
  EXPECT_EQ(w.counts, (std::vector<std::size_t>{3, 2, 1}));
  EXPECT_THROW(histogram_by_count(std::vector<double>{}, 3), std::invalid_argument);
}

TEST(KolmogorovSmirnov, HandComputedStatistic) {
  const double d = ks_statistic({0.7, 0.1, 0.4}, [](double x) { return x; });
  EXPECT_NEAR(d, 0.3, 1e-15);
}

TEST(Welch, ToneOnBinCenterIntegratesToHalfSquaredAmplitude) {
  const double fs = 1024.0;
  const std::size_t seg = 1024;
  const auto x = tone(64 * seg, fs, 100.0, 2.0);
  const auto psd = welch_psd(TimeSeries(fs, x), seg, 0.5);
  EXPECT_NEAR(psd.integrated_power(), 2.0, 0.005 * 2.0);
  const auto peak = std::max_element(psd.densities.begin(), psd.densities.end()) - psd.densities.begin();
  EXPECT_EQ(psd.frequencies[static_cast<std::size_t>(peak)], 100.0);
  EXPECT_EQ(psd.window, "hann");
}

TEST(Welch, WhiteNoiseIntegratesToVariance) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n(0.0, 3.0);
  std::vector<double> x(1000000);
  for (auto& v : x) v = n(rng);
  const auto psd = welch_psd(TimeSeries(1e4, x), 4096, 0.5);
  EXPECT_NEAR(psd.integrated_power(), 9.0, 0.03 * 9.0);
}

TEST(Welch, ConstantSignalStaysInZeroFrequencyLobe) {
  const std::vector<double> x(8192, 1.5);
  const auto psd = welch_psd(TimeSeries(100.0, x), 1024, 0.5);
  // The Hann window spreads a constant over bins 0 and 1 only.
  for (std::size_t k = 2; k < psd.densities.size(); ++k) EXPECT_LT(psd.densities[k], 1e-25);
  EXPECT_NEAR(psd.integrated_power(), 1.5 * 1.5, 1e-12);
}

TEST(Welch, ParsevalForCorrelatedNoise) {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> n01;
  std::vector<double> x(1 << 19);
  double ar = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    ar = 0.95 * ar + n01(rng);
    x[i] = ar + 0.5 * std::sin(0.3 * static_cast<double>(i));
  }
  double ms = 0.0;
  for (double v : x) ms += v * v;
  ms /= static_cast<double>(x.size());
  const auto psd = welch_psd(TimeSeries(1.0, x), 2048, 0.5);
  EXPECT_NEAR(psd.integrated_power(), ms, 0.01 * ms);
}

TEST(Welch, PropertiesOfEstimate) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n01;
  std::vector<double> x(5000);
  for (auto& v : x) v = n01(rng);
  const auto psd = welch_psd(TimeSeries(10.0, x), 1000, 0.25);
  EXPECT_EQ(psd.frequencies.size(), 501u);
  for (std::size_t k = 1; k < psd.frequencies.size(); ++k)
    EXPECT_GT(psd.frequencies[k], psd.frequencies[k - 1]);
  for (double d : psd.densities) EXPECT_GE(d, 0.0);
  EXPECT_EQ(psd.segments, 6u);  // hop 750 over 5000 samples
}

TEST(Welch, RejectsBadArguments) {
  const TimeSeries ts(1.0, std::vector<double>(100, 0.0));
  EXPECT_THROW(welch_psd(ts, 200), std::invalid_argument);
  EXPECT_THROW(welch_psd(ts, 50, 1.0), std::invalid_argument);
  EXPECT_THROW(TimeSeries(1.0, {1.0}), std::invalid_argument);
  EXPECT_THROW(TimeSeries(0.0, {1.0, 2.0}), std::invalid_argument);
}

TEST(LineFit, RecoversExactModel) {
  const double a = 3e9, f0 = 312.5, gamma = 17.0, b = 0.02;
  const auto psd = synthetic_line(a, f0, gamma, b);
  const auto fit = lorentzian_fit(psd, 150.0, 500.0);
  ASSERT_TRUE(fit.converged);
  EXPECT_NEAR(fit.center_frequency, f0, 1e-6 * f0);
  EXPECT_NEAR(fit.linewidth, gamma, 1e-6 * gamma);
  EXPECT_NEAR(fit.amplitude, a, 1e-6 * a);
  EXPECT_NEAR(fit.plateau, b, 1e-6 * b);
  EXPECT_LT(fit.residual, 1e-8);
}

TEST(LineFit, RoundTripsFittedParameters) {
  const auto first = lorentzian_fit(synthetic_line(1e10, 250.0, 40.0, 0.5), 100.0, 450.0);
  const auto again = lorentzian_fit(
      synthetic_line(first.amplitude, first.center_frequency, first.linewidth, first.plateau), 100.0,
      450.0);
  EXPECT_NEAR(again.center_frequency, first.center_frequency, 1e-6 * first.center_frequency);
  EXPECT_NEAR(again.linewidth, first.linewidth, 1e-6 * first.linewidth);
}

TEST(LineFit, NoConfidentPeakInFlatNoise) {
  std::mt19937_64 rng(3);
  int false_peaks = 0;
  for (int rep = 0; rep < 20; ++rep) {
    std::normal_distribution<double> n01;
    std::vector<double> x(1 << 16);
    for (auto& v : x) v = n01(rng);
    const auto psd = welch_psd(TimeSeries(1000.0, x), 1024, 0.5);
    const auto fit = lorentzian_fit(psd, 50.0, 450.0);
    false_peaks += fit.converged;
  }
  EXPECT_EQ(false_peaks, 0);
}

TEST(LineFit, RejectsNarrowBand) {
  const auto psd = synthetic_line(1e9, 300.0, 20.0, 0.1);
  EXPECT_THROW(lorentzian_fit(psd, 300.0, 305.0), std::invalid_argument);
  EXPECT_THROW(lorentzian_fit(psd, 10.0, 2000.0), std::invalid_argument);
}

TEST(Arrival, VelocityInversion) {
  EXPECT_DOUBLE_EQ(velocity_from_arrival(8e-3, 8e-3), 1.0);
  EXPECT_DOUBLE_EQ(velocity_from_arrival(1e-3, 8e-3), 8.0);
  EXPECT_THROW(velocity_from_arrival(0.0, 8e-3), std::domain_error);
  EXPECT_THROW(velocity_from_arrival(-1.0, 8e-3), std::domain_error);
}

TEST(Arrival, SingleEventHistogram) {
  TrajectoryOutcome o;
  o.kind = OutcomeKind::Escaped;
  o.arrival_time = 3.3e-3;
  const auto s = arrival_histogram(std::span<const TrajectoryOutcome>(&o, 1), 8e-3, 1e-4);
  ASSERT_EQ(s.histogram.counts.size(), 1u);
  EXPECT_EQ(s.histogram.counts[0], 1u);
  EXPECT_LE(s.histogram.edges[0], 3.3e-3);
  EXPECT_GT(s.histogram.edges[1], 3.3e-3);
  EXPECT_DOUBLE_EQ(s.implied_velocities[0], 8e-3 / 3.3e-3);
}

TEST(Arrival, EmptyInputIsAnError) {
  std::vector<TrajectoryOutcome> none;
  EXPECT_THROW(arrival_histogram(none, 8e-3, 1e-4), std::invalid_argument);
  std::vector<TrajectoryOutcome> unrecorded(3);
  EXPECT_THROW(arrival_histogram(unrecorded, 8e-3, 1e-4), std::invalid_argument);
}

TEST(Arrival, BallisticRoundTrip) {
  // Collisionless, noiseless, no gravity, unpowered trap: every arrival is at d/u.
  const auto g = GasEnvironment::air_mbar(0.0, 300.0);
  const auto sys = ParticleSystem::make(Particle{}, g, TrapConfig{}, false);
  std::vector<TrajectoryOutcome> outs;
  for (double u : {0.5, 1.0, 3.0, 30.0}) {
    PropagationConfig cfg;
    cfg.rng_seed = 1;
    const KineticState init{Vec3(0.0, 8e-3, 0.0), Vec3(0.0, -u, 0.0), 0.0};
    outs.push_back(propagate_trajectory(init, sys, cfg));
  }
  const auto s = arrival_histogram(outs, 8e-3, 1e-3);
  const double speeds[] = {0.5, 1.0, 3.0, 30.0};
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(s.implied_velocities[i], speeds[i], 1e-3 * speeds[i]);
}
