#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "convexecg/signal_io.hpp"

namespace convexecg {

// SplitMix64 (Steele, Lea, Flood 2014): state advances by 0x9e3779b97f4a7c15
// and is mixed with the constants 0xbf58476d1ce4e5b9 / 0x94d049bb133111eb.
// Normals use Box-Muller on two 53-bit uniforms. Bit-reproducible on every
// platform, unlike std::normal_distribution.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

  std::uint64_t next() noexcept;
  double uniform() noexcept;  // [0, 1)
  double normal() noexcept;   // standard normal

 private:
  std::uint64_t state_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

struct GaussianWave {
  double amplitude_mv;
  double center;  // beat phase in [0, 1)
  double width;   // phase units, > 0
};

struct SynthConfig {
  double heart_rate_bpm = 72.0;
  double duration_s = 5.0;
  double sample_rate_hz = 500.0;
  std::vector<GaussianWave> beat_i;
  std::vector<GaussianWave> beat_ii;
  double hr_jitter = 0.0;
  double noise_std_mv = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
  std::size_t sample_count() const;
};

// P, Q, R, S, T components for leads I and II.
std::vector<GaussianWave> default_beat_i();
std::vector<GaussianWave> default_beat_ii();
SynthConfig default_synth_config();

enum class IcmMapKind { kIdentity, kPiecewiseLinearMonotone, kCubicSquash, kSaturating, kSquare };

const char* to_string(IcmMapKind kind) noexcept;
IcmMapKind icm_map_kind_from_string(const std::string& text);

// icm = g(alpha * I + beta * II) + noise.
//   identity:                  g(v) = v
//   piecewise_linear_monotone: linear interpolation through (knots_in,
//                              knots_out), linear tails using the end slopes
//   cubic_squash:              g(v) = v^3
//   saturating:                g(v) = scale * tanh(v / scale)
//   square:                    g(v) = v^2 (non-injective, negative testing)
struct IcmMapSpec {
  IcmMapKind kind = IcmMapKind::kIdentity;
  std::vector<double> knots_in;
  std::vector<double> knots_out;
  double scale = 1.0;
  double alpha = 1.0;
  double beta = 0.0;
  double noise_std_mv = 0.0;
  std::uint64_t seed = 1;

  void validate() const;
  double apply(double v) const;
};

// Named presets for the monotone piecewise-linear map: "mild" or "strong".
IcmMapSpec piecewise_preset(const std::string& strength);

EcgRecord generate_leads(const SynthConfig& config);
std::vector<double> synth_icm(const EcgRecord& leads, const IcmMapSpec& map);

// Convenience: leads plus ICM as channels ICM, I, II.
EcgRecord generate_record(const SynthConfig& config, const IcmMapSpec& map);

// Every parameter, one "key value" per line.
std::string describe(const SynthConfig& config, const IcmMapSpec& map);

}  // namespace convexecg
