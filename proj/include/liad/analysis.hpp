#pragma once

// Post-processing of simulated or measured data: binomial intervals, histograms,
// Welch spectra, damped-oscillator line fits and arrival-time inversion.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <mutex>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <fftw3.h>

#include <Eigen/Core>
#include <boost/math/distributions/normal.hpp>
#include <unsupported/Eigen/LevenbergMarquardt>

#include "liad/constants.hpp"
#include "liad/dynamics.hpp"

namespace liad {

struct ConfidenceInterval {
  double lo;
  double hi;
};

/// Wilson score interval for `successes` out of `trials`.
inline ConfidenceInterval wilson_interval(std::size_t successes, std::size_t trials,
                                          double confidence = 0.95) {
  if (trials == 0) throw std::invalid_argument("wilson_interval: trials must be >= 1");
  if (successes > trials) throw std::invalid_argument("wilson_interval: successes > trials");
  if (!(confidence > 0.0 && confidence < 1.0))
    throw std::invalid_argument("wilson_interval: confidence must be in (0, 1)");
  const double z = boost::math::quantile(boost::math::normal(), 0.5 * (1.0 + confidence));
  const double n = static_cast<double>(trials);
  const double p = static_cast<double>(successes) / n;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / n;
  const double centre = (p + z2 / (2.0 * n)) / denom;
  const double half = z / denom * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n));
  // Clamp the exact endpoints so that lo <= p <= hi survives rounding.
  double lo = successes == 0 ? 0.0 : std::min(p, std::max(0.0, centre - half));
  double hi = successes == trials ? 1.0 : std::max(p, std::min(1.0, centre + half));
  return {lo, hi};
}

struct Histogram {
  std::vector<double> edges;  // size = counts.size() + 1
  std::vector<std::size_t> counts;
  std::size_t total = 0;
  double mean = 0.0;
  double stddev = 0.0;
};

namespace detail {

inline void fill_moments(Histogram& h, std::span<const double> values) {
  const double n = static_cast<double>(values.size());
  h.total = values.size();
  h.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - h.mean) * (v - h.mean);
  h.stddev = values.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
}

}  // namespace detail

/// Histogram with `bins` equal bins spanning [min, max] of the data. Identical
/// values give a single zero-width bin.
inline Histogram histogram_by_count(std::span<const double> values, std::size_t bins) {
  if (values.empty()) throw std::invalid_argument("histogram: no values");
  if (bins == 0) throw std::invalid_argument("histogram: bins must be >= 1");
  Histogram h;
  detail::fill_moments(h, values);
  const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
  if (*mn == *mx) {
    h.edges = {*mn, *mx};
    h.counts = {values.size()};
    return h;
  }
  const double width = (*mx - *mn) / static_cast<double>(bins);
  h.edges.resize(bins + 1);
  for (std::size_t i = 0; i <= bins; ++i) h.edges[i] = *mn + width * static_cast<double>(i);
  h.edges.back() = *mx;
  h.counts.assign(bins, 0);
  for (double v : values) {
    auto i = static_cast<std::size_t>((v - *mn) / width);
    ++h.counts[std::min(i, bins - 1)];
  }
  return h;
}

/// Histogram with fixed bin width, bins aligned to multiples of `bin_width`.
inline Histogram histogram_by_width(std::span<const double> values, double bin_width) {
  if (values.empty()) throw std::invalid_argument("histogram: no values");
  if (!(bin_width > 0.0)) throw std::invalid_argument("histogram: bin_width must be > 0");
  Histogram h;
  detail::fill_moments(h, values);
  const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
  const double first = std::floor(*mn / bin_width);
  const auto bins = static_cast<std::size_t>(std::floor(*mx / bin_width) - first) + 1;
  h.edges.resize(bins + 1);
  for (std::size_t i = 0; i <= bins; ++i)
    h.edges[i] = (first + static_cast<double>(i)) * bin_width;
  h.counts.assign(bins, 0);
  for (double v : values) {
    auto i = static_cast<std::size_t>(std::floor(v / bin_width) - first);
    ++h.counts[std::min(i, bins - 1)];
  }
  return h;
}

/// One-sample Kolmogorov-Smirnov statistic sup |F_n - F|.
inline double ks_statistic(std::vector<double> samples, const std::function<double(double)>& cdf) {
  if (samples.empty()) throw std::invalid_argument("ks_statistic: no samples");
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  double d = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double f = cdf(samples[i]);
    d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
  }
  return d;
}

// ---------------------------------------------------------------------------
// Spectra

namespace detail {

// FFTW planner calls are not thread-safe; plan execution is.
inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

}  // namespace detail

class TimeSeries {
 public:
  TimeSeries(double sample_rate, std::vector<double> samples)
      : sample_rate_(sample_rate), samples_(std::move(samples)) {
    if (!(sample_rate > 0.0)) throw std::invalid_argument("TimeSeries: sample_rate must be > 0");
    if (samples_.size() < 2) throw std::invalid_argument("TimeSeries: need at least 2 samples");
  }
  double sample_rate() const { return sample_rate_; }
  const std::vector<double>& samples() const { return samples_; }
  std::size_t size() const { return samples_.size(); }

 private:
  double sample_rate_;
  std::vector<double> samples_;
};

struct PsdEstimate {
  std::vector<double> frequencies;  // Hz
  std::vector<double> densities;    // units^2 / Hz, one-sided
  std::size_t segment_length = 0;
  double overlap_fraction = 0.0;
  std::string window = "hann";
  std::size_t segments = 0;
  double sample_rate = 0.0;

  double resolution() const { return sample_rate / static_cast<double>(segment_length); }
  /// Sum of density times bin width: the mean-square of the series.
  double integrated_power() const {
    return std::accumulate(densities.begin(), densities.end(), 0.0) * resolution();
  }
};

/// Welch estimate: Hann-windowed, averaged, one-sided periodogram normalized by
/// the window power so that the integrated density equals the mean-square signal.
/// No detrending; a constant offset appears in the zero-frequency bin.
inline PsdEstimate welch_psd(const TimeSeries& ts, std::size_t segment_length,
                             double overlap_fraction = 0.5) {
  if (segment_length < 2) throw std::invalid_argument("welch_psd: segment_length must be >= 2");
  if (segment_length > ts.size())
    throw std::invalid_argument("welch_psd: series shorter than one segment");
  if (!(overlap_fraction >= 0.0 && overlap_fraction < 1.0))
    throw std::invalid_argument("welch_psd: overlap_fraction must be in [0, 1)");

  const std::size_t n = segment_length;
  const auto overlap = static_cast<std::size_t>(std::llround(overlap_fraction * static_cast<double>(n)));
  const std::size_t hop = std::max<std::size_t>(1, n - std::min(overlap, n - 1));
  const std::size_t bins = n / 2 + 1;

  std::vector<double> window(n);
  double window_power = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    window[i] = 0.5 - 0.5 * std::cos(2.0 * constants::kPi * static_cast<double>(i) / static_cast<double>(n));
    window_power += window[i] * window[i];
  }

  double* in = fftw_alloc_real(n);
  fftw_complex* out = fftw_alloc_complex(bins);
  fftw_plan plan;
  {
    std::lock_guard lock(detail::fftw_planner_mutex());
    plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), in, out, FFTW_ESTIMATE);
  }

  PsdEstimate psd;
  psd.segment_length = n;
  psd.overlap_fraction = overlap_fraction;
  psd.sample_rate = ts.sample_rate();
  psd.densities.assign(bins, 0.0);
  const auto& x = ts.samples();
  for (std::size_t start = 0; start + n <= x.size(); start += hop) {
    for (std::size_t i = 0; i < n; ++i) in[i] = x[start + i] * window[i];
    fftw_execute_dft_r2c(plan, in, out);
    for (std::size_t k = 0; k < bins; ++k)
      psd.densities[k] += out[k][0] * out[k][0] + out[k][1] * out[k][1];
    ++psd.segments;
  }
  {
    std::lock_guard lock(detail::fftw_planner_mutex());
    fftw_destroy_plan(plan);
  }
  fftw_free(in);
  fftw_free(out);

  const double fs = ts.sample_rate();
  const double norm = 1.0 / (fs * window_power * static_cast<double>(psd.segments));
  psd.frequencies.resize(bins);
  for (std::size_t k = 0; k < bins; ++k) {
    psd.frequencies[k] = static_cast<double>(k) * fs / static_cast<double>(n);
    const bool edge = k == 0 || (n % 2 == 0 && k == bins - 1);
    psd.densities[k] *= (edge ? 1.0 : 2.0) * norm;
  }
  return psd;
}

// ---------------------------------------------------------------------------
// Damped-oscillator line fit

struct LorentzianFit {
  double center_frequency = 0.0;  // f0, Hz
  double linewidth = 0.0;         // gamma, Hz (full width; Gamma / 2 pi)
  double amplitude = 0.0;         // A in S = A / ((f0^2 - f^2)^2 + gamma^2 f^2) + B
  double plateau = 0.0;           // B
  double residual = 0.0;          // RMS relative residual over the band
  double flat_residual = 0.0;     // RMS relative residual of a constant-only model
  bool converged = false;
};

/// Displacement PSD of a thermally driven damped oscillator.
inline double damped_oscillator_psd(double f, double amplitude, double f0, double linewidth,
                                    double plateau) {
  const double d = f0 * f0 - f * f;
  return amplitude / (d * d + linewidth * linewidth * f * f) + plateau;
}

namespace detail {

struct OscillatorResidual : Eigen::DenseFunctor<double> {
  OscillatorResidual(const std::vector<double>& u, const std::vector<double>& y)
      : Eigen::DenseFunctor<double>(4, static_cast<int>(u.size())), u_(u), y_(y) {}

  // x = (a, x0, g, b), model a / ((x0^2 - u^2)^2 + g^2 u^2) + b, residual relative to data.
  int operator()(const InputType& x, ValueType& fvec) const {
    for (std::size_t i = 0; i < u_.size(); ++i) {
      const double m = damped_oscillator_psd(u_[i], x[0], x[1], x[2], x[3]);
      fvec[static_cast<Eigen::Index>(i)] = (m - y_[i]) / y_[i];
    }
    return 0;
  }

  int df(const InputType& x, JacobianType& fjac) const {
    for (std::size_t i = 0; i < u_.size(); ++i) {
      const double u2 = u_[i] * u_[i];
      const double diff = x[1] * x[1] - u2;
      const double den = diff * diff + x[2] * x[2] * u2;
      const double inv_y = 1.0 / y_[i];
      const auto r = static_cast<Eigen::Index>(i);
      fjac(r, 0) = inv_y / den;
      fjac(r, 1) = -inv_y * x[0] / (den * den) * 4.0 * diff * x[1];
      fjac(r, 2) = -inv_y * x[0] / (den * den) * 2.0 * x[2] * u2;
      fjac(r, 3) = inv_y;
    }
    return 0;
  }

  const std::vector<double>& u_;
  const std::vector<double>& y_;
};

}  // namespace detail

/// Least-squares fit of the damped-oscillator line shape over [f_lo, f_hi] with
/// per-bin relative weighting. `converged` is false when the optimizer fails, the
/// parameters are unphysical or leave the band, or the line does not explain the
/// data markedly better than a flat spectrum.
inline LorentzianFit lorentzian_fit(const PsdEstimate& psd, double f_lo, double f_hi) {
  if (!(f_hi > f_lo)) throw std::invalid_argument("lorentzian_fit: empty band");
  if (psd.frequencies.empty() || f_lo < psd.frequencies.front() || f_hi > psd.frequencies.back())
    throw std::invalid_argument("lorentzian_fit: band outside the spectrum");
  std::vector<double> f, y;
  for (std::size_t i = 0; i < psd.frequencies.size(); ++i) {
    if (psd.frequencies[i] >= f_lo && psd.frequencies[i] <= f_hi && psd.densities[i] > 0.0) {
      f.push_back(psd.frequencies[i]);
      y.push_back(psd.densities[i]);
    }
  }
  if (f.size() < 10) throw std::invalid_argument("lorentzian_fit: band holds fewer than 10 bins");

  const auto peak = static_cast<std::size_t>(std::max_element(y.begin(), y.end()) - y.begin());
  const double f_scale = f[peak];
  const double y_scale = y[peak];
  if (!(f_scale > 0.0)) throw std::invalid_argument("lorentzian_fit: peak at zero frequency");
  std::vector<double> u(f.size()), d(f.size());
  for (std::size_t i = 0; i < f.size(); ++i) {
    u[i] = f[i] / f_scale;
    d[i] = y[i] / y_scale;
  }

  // Flat reference: the constant minimizing the relative residual.
  double s1 = 0.0, s2 = 0.0;
  for (double v : d) {
    s1 += 1.0 / v;
    s2 += 1.0 / (v * v);
  }
  const double flat = s1 / s2;
  double flat_ss = 0.0;
  for (double v : d) flat_ss += (flat - v) * (flat - v) / (v * v);

  // Initial guess from the peak bin and its half-maximum crossings.
  const double base = *std::min_element(d.begin(), d.end());
  const double half = 0.5 * (1.0 + base);
  std::size_t lo = peak, hi = peak;
  while (lo > 0 && d[lo] > half) --lo;
  while (hi + 1 < d.size() && d[hi] > half) ++hi;
  const double du = (u.back() - u.front()) / static_cast<double>(u.size() - 1);
  const double g0 = std::max(u[hi] - u[lo], 2.0 * du);

  Eigen::VectorXd x(4);
  x << (1.0 - base) * g0 * g0, 1.0, g0, base;
  detail::OscillatorResidual functor(u, d);
  Eigen::LevenbergMarquardt<detail::OscillatorResidual> lm(functor);
  lm.setXtol(1e-15);
  lm.setFtol(1e-15);
  lm.setMaxfev(4000);
  const auto status = lm.minimize(x);

  Eigen::VectorXd r(u.size());
  functor(x, r);

  LorentzianFit fit;
  fit.center_frequency = std::abs(x[1]) * f_scale;
  fit.linewidth = std::abs(x[2]) * f_scale;
  fit.amplitude = x[0] * y_scale * std::pow(f_scale, 4);
  fit.plateau = x[3] * y_scale;
  const double n = static_cast<double>(u.size());
  fit.residual = std::sqrt(r.squaredNorm() / n);
  fit.flat_residual = std::sqrt(flat_ss / n);

  using Status = Eigen::LevenbergMarquardtSpace::Status;
  const bool optimizer_ok = status != Status::ImproperInputParameters &&
                            status != Status::TooManyFunctionEvaluation && x.allFinite();
  fit.converged = optimizer_ok && fit.amplitude > 0.0 && fit.linewidth > 0.0 &&
                  fit.center_frequency >= f_lo && fit.center_frequency <= f_hi &&
                  fit.linewidth < (f_hi - f_lo) && r.squaredNorm() < 0.5 * flat_ss;
  return fit;
}

// ---------------------------------------------------------------------------
// Arrival times

/// Launch speed implied by a ballistic transit over `substrate_distance`.
/// Meaningful only when the mean free path far exceeds the transit path.
inline double velocity_from_arrival(double arrival_time, double substrate_distance) {
  if (!(arrival_time > 0.0)) throw std::domain_error("velocity_from_arrival: arrival_time must be > 0");
  return substrate_distance / arrival_time;
}

struct ArrivalSummary {
  Histogram histogram;                    // arrival times, s
  std::vector<double> arrival_times;      // in outcome order
  std::vector<double> implied_velocities;  // substrate_distance / t
};

/// Histogram of arrival times (first crossing of the trap plane, or the capture
/// time for outcomes without a recorded crossing).
inline ArrivalSummary arrival_histogram(std::span<const TrajectoryOutcome> outcomes,
                                        double substrate_distance, double bin_width) {
  if (!(substrate_distance > 0.0))
    throw std::invalid_argument("arrival_histogram: substrate_distance must be > 0");
  ArrivalSummary s;
  for (const auto& o : outcomes) {
    double t = o.arrival_time;
    if (std::isnan(t) && o.kind == OutcomeKind::Trapped) t = o.capture_time;
    if (std::isnan(t) || !(t > 0.0)) continue;
    s.arrival_times.push_back(t);
    s.implied_velocities.push_back(velocity_from_arrival(t, substrate_distance));
  }
  if (s.arrival_times.empty()) throw std::invalid_argument("arrival_histogram: no recorded arrivals");
  s.histogram = histogram_by_width(s.arrival_times, bin_width);
  return s;
}

}  // namespace liad
