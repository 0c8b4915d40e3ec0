#include "convexecg/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "convexecg/error.hpp"
#include "convexecg/format.hpp"

namespace convexecg {

std::uint64_t SplitMix64::next() noexcept {
  state_ += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = state_;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double SplitMix64::uniform() noexcept {
  return static_cast<double>(next() >> 11) * 0x1.0p-53;
}

double SplitMix64::normal() noexcept {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  const double u1 = 1.0 - uniform();  // (0, 1]
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

std::vector<GaussianWave> default_beat_i() {
  return {
      {0.12, 0.15, 0.030},   // P
      {-0.06, 0.27, 0.012},  // Q
      {0.70, 0.30, 0.014},   // R
      {-0.12, 0.33, 0.012},  // S
      {0.22, 0.60, 0.050},   // T
  };
}

std::vector<GaussianWave> default_beat_ii() {
  return {
      {0.18, 0.15, 0.030},
      {-0.10, 0.27, 0.012},
      {1.10, 0.30, 0.014},
      {-0.22, 0.33, 0.012},
      {0.32, 0.60, 0.050},
  };
}

SynthConfig default_synth_config() {
  SynthConfig c;
  c.beat_i = default_beat_i();
  c.beat_ii = default_beat_ii();
  return c;
}

void SynthConfig::validate() const {
  if (!(heart_rate_bpm > 0.0) || !std::isfinite(heart_rate_bpm)) throw Error("heart rate must be positive");
  if (!(duration_s > 0.0) || !std::isfinite(duration_s)) throw Error("duration must be positive");
  if (!(sample_rate_hz > 0.0) || !std::isfinite(sample_rate_hz)) throw Error("sample rate must be positive");
  if (!(hr_jitter >= 0.0)) throw Error("hr_jitter must be non-negative");
  if (!(noise_std_mv >= 0.0)) throw Error("noise_std_mv must be non-negative");
  if (beat_i.empty() || beat_ii.empty()) throw Error("beat shapes for leads I and II are required");
  for (const auto* beat : {&beat_i, &beat_ii}) {
    for (const auto& w : *beat) {
      if (!(w.width > 0.0)) throw Error("Gaussian widths must be positive");
      if (!(w.center >= 0.0 && w.center < 1.0)) throw Error("Gaussian centers must lie in [0, 1)");
      if (!std::isfinite(w.amplitude_mv)) throw Error("Gaussian amplitudes must be finite");
    }
  }
  if (sample_count() < 2) throw Error("duration x rate must yield at least 2 samples");
}

std::size_t SynthConfig::sample_count() const {
  return static_cast<std::size_t>(std::llround(duration_s * sample_rate_hz));
}

namespace {

double beat_value(const std::vector<GaussianWave>& beat, double phase) {
  double v = 0.0;
  for (const auto& w : beat) {
    const double d = phase - w.center;
    v += w.amplitude_mv * std::exp(-d * d / (2.0 * w.width * w.width));
  }
  return v;
}

}  // namespace

EcgRecord generate_leads(const SynthConfig& config) {
  config.validate();
  const std::size_t n = config.sample_count();
  SplitMix64 seeder(config.seed);
  SplitMix64 rr_rng(seeder.next());
  SplitMix64 noise_rng(seeder.next());

  // Beat boundaries are tracked in sample units so a noiseless config with an
  // integral period repeats bit-for-bit.
  const double nominal = 60.0 / config.heart_rate_bpm * config.sample_rate_hz;
  const auto next_length = [&] {
    if (config.hr_jitter == 0.0) return nominal;
    return nominal * std::max(0.3, 1.0 + config.hr_jitter * rr_rng.normal());
  };

  std::vector<double> lead_i(n), lead_ii(n);
  double start = 0.0;
  double length = next_length();
  for (std::size_t k = 0; k < n; ++k) {
    const double pos = static_cast<double>(k);
    while (pos >= start + length) {
      start += length;
      length = next_length();
    }
    const double phase = (pos - start) / length;
    lead_i[k] = beat_value(config.beat_i, phase);
    lead_ii[k] = beat_value(config.beat_ii, phase);
  }
  if (config.noise_std_mv > 0.0) {
    for (std::size_t k = 0; k < n; ++k) {
      lead_i[k] += config.noise_std_mv * noise_rng.normal();
      lead_ii[k] += config.noise_std_mv * noise_rng.normal();
    }
  }
  return EcgRecord(config.sample_rate_hz, {{"I", std::move(lead_i)}, {"II", std::move(lead_ii)}});
}

const char* to_string(IcmMapKind kind) noexcept {
  switch (kind) {
    case IcmMapKind::kIdentity: return "identity";
    case IcmMapKind::kPiecewiseLinearMonotone: return "piecewise_linear_monotone";
    case IcmMapKind::kCubicSquash: return "cubic_squash";
    case IcmMapKind::kSaturating: return "saturating";
    case IcmMapKind::kSquare: return "square";
  }
  return "unknown";
}

IcmMapKind icm_map_kind_from_string(const std::string& text) {
  for (auto k : {IcmMapKind::kIdentity, IcmMapKind::kPiecewiseLinearMonotone, IcmMapKind::kCubicSquash,
                 IcmMapKind::kSaturating, IcmMapKind::kSquare}) {
    if (text == to_string(k)) return k;
  }
  throw Error("unknown ICM map kind '" + text + "'");
}

void IcmMapSpec::validate() const {
  if (!(noise_std_mv >= 0.0)) throw Error("ICM noise must be non-negative");
  if (!std::isfinite(alpha) || !std::isfinite(beta)) throw Error("mix coefficients must be finite");
  if (kind == IcmMapKind::kPiecewiseLinearMonotone) {
    if (knots_in.size() < 2 || knots_in.size() != knots_out.size()) {
      throw Error("piecewise map needs at least two (in, out) knots of equal count");
    }
    for (std::size_t k = 1; k < knots_in.size(); ++k) {
      if (!(knots_in[k] > knots_in[k - 1])) throw Error("knot inputs must be strictly increasing");
      if (!(knots_out[k] > knots_out[k - 1])) throw Error("knot outputs must be strictly increasing");
    }
  }
  if (kind == IcmMapKind::kSaturating && !(scale > 0.0)) throw Error("saturating scale must be positive");
}

double IcmMapSpec::apply(double v) const {
  switch (kind) {
    case IcmMapKind::kIdentity: return v;
    case IcmMapKind::kCubicSquash: return v * v * v;
    case IcmMapKind::kSquare: return v * v;
    case IcmMapKind::kSaturating: return scale * std::tanh(v / scale);
    case IcmMapKind::kPiecewiseLinearMonotone: {
      const auto it = std::upper_bound(knots_in.begin(), knots_in.end(), v);
      std::size_t seg = static_cast<std::size_t>(it - knots_in.begin());
      seg = std::clamp<std::size_t>(seg, 1, knots_in.size() - 1);
      const double x0 = knots_in[seg - 1], x1 = knots_in[seg];
      const double y0 = knots_out[seg - 1], y1 = knots_out[seg];
      return y0 + (v - x0) * (y1 - y0) / (x1 - x0);
    }
  }
  return v;
}

IcmMapSpec piecewise_preset(const std::string& strength) {
  IcmMapSpec m;
  m.kind = IcmMapKind::kPiecewiseLinearMonotone;
  m.alpha = 0.5;
  m.beta = 0.5;
  if (strength == "mild") {
    m.knots_in = {-1.0, 0.0, 0.3, 2.0};
    m.knots_out = {-0.8, 0.0, 0.3, 1.4};
  } else if (strength == "strong") {
    m.knots_in = {-1.0, -0.05, 0.05, 0.3, 2.0};
    m.knots_out = {-0.35, -0.03, 0.20, 0.32, 0.45};
  } else {
    throw Error("unknown piecewise preset '" + strength + "' (expected mild or strong)");
  }
  return m;
}

std::vector<double> synth_icm(const EcgRecord& leads, const IcmMapSpec& map) {
  map.validate();
  const auto lead_i = leads.channel("I");
  const auto lead_ii = leads.channel("II");
  SplitMix64 rng(map.seed);
  std::vector<double> out(leads.length());
  for (std::size_t k = 0; k < out.size(); ++k) {
    out[k] = map.apply(map.alpha * lead_i[k] + map.beta * lead_ii[k]);
  }
  if (map.noise_std_mv > 0.0) {
    for (double& v : out) v += map.noise_std_mv * rng.normal();
  }
  return out;
}

EcgRecord generate_record(const SynthConfig& config, const IcmMapSpec& map) {
  const EcgRecord leads = generate_leads(config);
  auto icm = synth_icm(leads, map);
  const auto i = leads.channel("I");
  const auto ii = leads.channel("II");
  return EcgRecord(config.sample_rate_hz, {{"ICM", std::move(icm)},
                                           {"I", {i.begin(), i.end()}},
                                           {"II", {ii.begin(), ii.end()}}});
}

std::string describe(const SynthConfig& config, const IcmMapSpec& map) {
  std::ostringstream s;
  const auto join = [](const std::vector<double>& v) {
    std::string out;
    for (std::size_t k = 0; k < v.size(); ++k) out += (k ? "," : "") + format_double(v[k]);
    return out;
  };
  const auto waves = [&](const std::vector<GaussianWave>& beat) {
    std::string out;
    for (std::size_t k = 0; k < beat.size(); ++k) {
      out += (k ? ";" : "") + format_double(beat[k].amplitude_mv) + "," + format_double(beat[k].center) +
             "," + format_double(beat[k].width);
    }
    return out;
  };
  s << "heart_rate_bpm " << format_double(config.heart_rate_bpm) << '\n'
    << "duration_s " << format_double(config.duration_s) << '\n'
    << "sample_rate_hz " << format_double(config.sample_rate_hz) << '\n'
    << "samples " << config.sample_count() << '\n'
    << "hr_jitter " << format_double(config.hr_jitter) << '\n'
    << "noise_std_mv " << format_double(config.noise_std_mv) << '\n'
    << "seed " << config.seed << '\n'
    << "beat_I " << waves(config.beat_i) << '\n'
    << "beat_II " << waves(config.beat_ii) << '\n'
    << "map_kind " << to_string(map.kind) << '\n'
    << "map_alpha " << format_double(map.alpha) << '\n'
    << "map_beta " << format_double(map.beta) << '\n'
    << "map_knots_in " << join(map.knots_in) << '\n'
    << "map_knots_out " << join(map.knots_out) << '\n'
    << "map_scale " << format_double(map.scale) << '\n'
    << "map_noise_std_mv " << format_double(map.noise_std_mv) << '\n'
    << "map_seed " << map.seed << '\n';
  return s.str();
}

}  // namespace convexecg
