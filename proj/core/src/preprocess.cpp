#include "convexecg/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <string>

#include "convexecg/error.hpp"

namespace convexecg {

void FilterSpec::validate(double sample_rate_hz) const {
  if (order < 1 || order > 8) throw Error("filter order must be in [1, 8]");
  const double nyquist = sample_rate_hz / 2.0;
  if (!(low_cut_hz > 0.0 && low_cut_hz < high_cut_hz && high_cut_hz < nyquist)) {
    throw Error("cutoffs infeasible for sample rate: need 0 < " + std::to_string(low_cut_hz) +
                " < " + std::to_string(high_cut_hz) + " < " + std::to_string(nyquist));
  }
}

namespace {

enum class Kind { kLow, kHigh };

SosCascade butter(Kind kind, int order, double cutoff_fraction) {
  if (order < 1) throw Error("filter order must be positive");
  if (!(cutoff_fraction > 0.0 && cutoff_fraction < 0.5)) {
    throw Error("cutoff must lie strictly between 0 and Nyquist");
  }
  // Prewarped bilinear transform: s / wc = c (1 - z^-1) / (1 + z^-1).
  const double c = 1.0 / std::tan(std::numbers::pi * cutoff_fraction);
  const double c2 = c * c;
  SosCascade sos;
  for (int k = 0; k < order / 2; ++k) {
    const double a1 = 2.0 * std::sin(std::numbers::pi * (2.0 * k + 1.0) / (2.0 * order));
    const double a0 = c2 + a1 * c + 1.0;
    Biquad q;
    if (kind == Kind::kLow) {
      q.b = {1.0 / a0, 2.0 / a0, 1.0 / a0};
    } else {
      q.b = {c2 / a0, -2.0 * c2 / a0, c2 / a0};
    }
    q.a = {(2.0 - 2.0 * c2) / a0, (c2 - a1 * c + 1.0) / a0};
    sos.push_back(q);
  }
  if (order % 2 == 1) {
    const double a0 = c + 1.0;
    Biquad q;
    if (kind == Kind::kLow) {
      q.b = {1.0 / a0, 1.0 / a0, 0.0};
    } else {
      q.b = {c / a0, -c / a0, 0.0};
    }
    q.a = {(1.0 - c) / a0, 0.0};
    sos.push_back(q);
  }
  return sos;
}

// Transposed direct form II state that holds the cascade at rest for a unit
// constant input.
std::vector<std::array<double, 2>> steady_state(const SosCascade& sos) {
  std::vector<std::array<double, 2>> zi(sos.size());
  double level = 1.0;
  for (std::size_t s = 0; s < sos.size(); ++s) {
    const auto& q = sos[s];
    const double gain = (q.b[0] + q.b[1] + q.b[2]) / (1.0 + q.a[0] + q.a[1]);
    const double y = gain * level;
    const double z2 = q.b[2] * level - q.a[1] * y;
    const double z1 = q.b[1] * level - q.a[0] * y + z2;
    zi[s] = {z1, z2};
    level = y;
  }
  return zi;
}

void run_cascade(const SosCascade& sos, std::vector<std::array<double, 2>> state,
                 std::vector<double>& data) {
  for (std::size_t s = 0; s < sos.size(); ++s) {
    const auto& q = sos[s];
    double z1 = state[s][0];
    double z2 = state[s][1];
    for (double& v : data) {
      const double x = v;
      const double y = q.b[0] * x + z1;
      z1 = q.b[1] * x - q.a[0] * y + z2;
      z2 = q.b[2] * x - q.a[1] * y;
      v = y;
    }
  }
}

}  // namespace

SosCascade butter_lowpass(int order, double cutoff_fraction) {
  return butter(Kind::kLow, order, cutoff_fraction);
}

SosCascade butter_highpass(int order, double cutoff_fraction) {
  return butter(Kind::kHigh, order, cutoff_fraction);
}

SosCascade butter_bandpass(const FilterSpec& spec, double sample_rate_hz) {
  spec.validate(sample_rate_hz);
  SosCascade sos = butter_highpass(spec.order, spec.low_cut_hz / sample_rate_hz);
  const SosCascade low = butter_lowpass(spec.order, spec.high_cut_hz / sample_rate_hz);
  sos.insert(sos.end(), low.begin(), low.end());
  return sos;
}

double magnitude_response(const SosCascade& sos, double frequency_fraction) {
  const std::complex<double> z1 = std::polar(1.0, -2.0 * std::numbers::pi * frequency_fraction);
  const std::complex<double> z2 = z1 * z1;
  std::complex<double> h = 1.0;
  for (const auto& q : sos) {
    h *= (q.b[0] + q.b[1] * z1 + q.b[2] * z2) / (1.0 + q.a[0] * z1 + q.a[1] * z2);
  }
  return std::abs(h);
}

std::vector<double> sos_filter(const SosCascade& sos, std::span<const double> x) {
  std::vector<double> out(x.begin(), x.end());
  run_cascade(sos, std::vector<std::array<double, 2>>(sos.size(), {0.0, 0.0}), out);
  return out;
}

std::size_t settle_length(const SosCascade& sos, std::size_t cap) {
  std::vector<std::array<double, 2>> state(sos.size(), {0.0, 0.0});
  double peak = 0.0;
  std::size_t last_above = 0;
  for (std::size_t n = 0; n < cap; ++n) {
    double v = n == 0 ? 1.0 : 0.0;
    double state_mag = 0.0;
    for (std::size_t s = 0; s < sos.size(); ++s) {
      const auto& q = sos[s];
      auto& z = state[s];
      const double y = q.b[0] * v + z[0];
      z[0] = q.b[1] * v - q.a[0] * y + z[1];
      z[1] = q.b[2] * v - q.a[1] * y;
      state_mag += std::abs(z[0]) + std::abs(z[1]);
      v = y;
    }
    peak = std::max(peak, std::abs(v));
    if (std::abs(v) > 1e-4 * peak) last_above = n;
    if (peak > 0.0 && state_mag < 1e-12 * peak) break;
  }
  return last_above + 1;
}

std::size_t min_filtfilt_length(const SosCascade& sos) { return 3 * (2 * sos.size() + 1); }

std::vector<double> filtfilt(const SosCascade& sos, std::span<const double> x) {
  const std::size_t n = x.size();
  if (n <= min_filtfilt_length(sos)) {
    throw Error("signal too short for edge padding: length " + std::to_string(n) + " <= " +
                std::to_string(min_filtfilt_length(sos)));
  }
  const std::size_t pad = std::min(3 * settle_length(sos), n - 1);

  std::vector<double> ext;
  ext.reserve(n + 2 * pad);
  for (std::size_t k = pad; k >= 1; --k) ext.push_back(2.0 * x[0] - x[k]);
  ext.insert(ext.end(), x.begin(), x.end());
  for (std::size_t k = 1; k <= pad; ++k) ext.push_back(2.0 * x[n - 1] - x[n - 1 - k]);

  const auto zi = steady_state(sos);
  const auto scaled = [&](double level) {
    auto s = zi;
    for (auto& z : s) {
      z[0] *= level;
      z[1] *= level;
    }
    return s;
  };

  run_cascade(sos, scaled(ext.front()), ext);
  std::reverse(ext.begin(), ext.end());
  run_cascade(sos, scaled(ext.front()), ext);
  std::reverse(ext.begin(), ext.end());

  return std::vector<double>(ext.begin() + static_cast<std::ptrdiff_t>(pad),
                             ext.begin() + static_cast<std::ptrdiff_t>(pad + n));
}

std::vector<double> bandpass(std::span<const double> signal, double sample_rate_hz,
                             const FilterSpec& spec) {
  return filtfilt(butter_bandpass(spec, sample_rate_hz), signal);
}

ZScoreStats fit_stats(std::span<const double> segment) {
  if (segment.size() < 2) throw Error("need at least 2 samples to fit statistics");
  const bool constant = std::all_of(segment.begin(), segment.end(),
                                    [&](double v) { return v == segment.front(); });
  if (constant) throw Error("zero variance");
  double mean = 0.0;
  for (double v : segment) mean += v;
  mean /= static_cast<double>(segment.size());
  double ss = 0.0;
  for (double v : segment) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(segment.size()));
  if (!(sd > 0.0)) throw Error("zero variance");
  return {mean, sd};
}

std::vector<double> apply_zscore(std::span<const double> signal, const ZScoreStats& stats) {
  if (!(stats.std > 0.0)) throw Error("standard deviation must be positive");
  std::vector<double> out(signal.size());
  std::transform(signal.begin(), signal.end(), out.begin(),
                 [&](double v) { return (v - stats.mean) / stats.std; });
  return out;
}

std::vector<double> invert_zscore(std::span<const double> signal, const ZScoreStats& stats) {
  if (!(stats.std > 0.0)) throw Error("standard deviation must be positive");
  std::vector<double> out(signal.size());
  std::transform(signal.begin(), signal.end(), out.begin(),
                 [&](double v) { return v * stats.std + stats.mean; });
  return out;
}

std::vector<double> decimate(std::span<const double> signal, std::size_t factor,
                             double guard_fraction) {
  if (factor == 0) throw Error("decimation factor must be at least 1");
  if (signal.size() < factor) throw Error("signal shorter than decimation factor");
  if (factor == 1) return std::vector<double>(signal.begin(), signal.end());
  if (!(guard_fraction > 0.0 && guard_fraction < 1.0)) {
    throw Error("guard fraction must lie in (0, 1)");
  }
  const double cutoff = guard_fraction * 0.5 / static_cast<double>(factor);
  const auto filtered = filtfilt(butter_lowpass(kAntiAliasOrder, cutoff), signal);
  std::vector<double> out;
  out.reserve((signal.size() + factor - 1) / factor);
  for (std::size_t i = 0; i < filtered.size(); i += factor) out.push_back(filtered[i]);
  return out;
}

SplitResult split(std::span<const double> signal, const SplitSpec& spec) {
  if (spec.train_len == 0 || spec.test_len == 0) throw Error("split lengths must be positive");
  const std::size_t need = spec.offset + spec.train_len + spec.test_len;
  if (need > signal.size()) {
    throw Error("split exceeds signal length: need " + std::to_string(need) + ", have " +
                std::to_string(signal.size()));
  }
  const auto train = signal.subspan(spec.offset, spec.train_len);
  const auto test = signal.subspan(spec.offset + spec.train_len, spec.test_len);
  return {{train.begin(), train.end()}, {test.begin(), test.end()}};
}

}  // namespace convexecg
