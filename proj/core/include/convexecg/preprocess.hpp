#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

namespace convexecg {

// Butterworth band-pass parameters. `order` is the per-direction order of
// both the high-pass and the low-pass half; zero-phase application squares
// the magnitude response.
struct FilterSpec {
  double low_cut_hz = 0.5;
  double high_cut_hz = 150.0;
  int order = 2;

  // Throws Error unless 0 < low < high < sample_rate / 2 and 1 <= order <= 8.
  void validate(double sample_rate_hz) const;
};

struct ZScoreStats {
  double mean = 0.0;
  double std = 1.0;

  friend bool operator==(const ZScoreStats&, const ZScoreStats&) = default;
};

struct SplitSpec {
  std::size_t train_len = 125;
  std::size_t test_len = 1125;
  // Number of samples skipped before the training window.
  std::size_t offset = 0;
};

// One biquad in transposed direct form II, a0 normalised to 1.
struct Biquad {
  std::array<double, 3> b{};
  std::array<double, 2> a{};  // a1, a2
};

using SosCascade = std::vector<Biquad>;

// Digital Butterworth designs by bilinear transform with prewarping.
// cutoff_fraction is cutoff / sample_rate, in (0, 0.5).
SosCascade butter_lowpass(int order, double cutoff_fraction);
SosCascade butter_highpass(int order, double cutoff_fraction);
SosCascade butter_bandpass(const FilterSpec& spec, double sample_rate_hz);

// |H(e^{jw})| of the cascade at frequency_fraction = f / fs.
double magnitude_response(const SosCascade& sos, double frequency_fraction);

// Causal single pass with zero initial state.
std::vector<double> sos_filter(const SosCascade& sos, std::span<const double> x);

// Number of samples after which the cascade's impulse response stays below
// 1e-4 of its peak. Capped at `cap`.
std::size_t settle_length(const SosCascade& sos, std::size_t cap = 200000);

// Minimum signal length accepted by filtfilt: 3 * (2 * sections + 1).
std::size_t min_filtfilt_length(const SosCascade& sos);

// Zero-phase forward-backward filtering. Odd reflective padding of
// 3 * settle_length (capped at len - 1) on both ends, steady-state initial
// conditions scaled by the first padded sample.
std::vector<double> filtfilt(const SosCascade& sos, std::span<const double> x);

std::vector<double> bandpass(std::span<const double> signal, double sample_rate_hz,
                             const FilterSpec& spec);

// Population mean / standard deviation. Throws Error("zero variance") on a
// constant segment.
ZScoreStats fit_stats(std::span<const double> segment);
std::vector<double> apply_zscore(std::span<const double> signal, const ZScoreStats& stats);
std::vector<double> invert_zscore(std::span<const double> signal, const ZScoreStats& stats);

inline constexpr double kDefaultGuardFraction = 0.9;
inline constexpr int kAntiAliasOrder = 4;

// Keeps every factor-th sample starting at index 0. For factor > 1 a
// zero-phase Butterworth low-pass at guard_fraction * (new Nyquist) runs
// first.
std::vector<double> decimate(std::span<const double> signal, std::size_t factor,
                             double guard_fraction = kDefaultGuardFraction);

struct SplitResult {
  std::vector<double> train;
  std::vector<double> test;
};

SplitResult split(std::span<const double> signal, const SplitSpec& spec);

}  // namespace convexecg
