#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace convexecg {

inline constexpr std::array<const char*, 6> kSixLeadNames = {"I", "II", "III", "aVR", "aVL", "aVF"};

// Frontal-plane leads derived from I and II.
struct SixLeadFrame {
  std::vector<double> i, ii, iii, avr, avl, avf;
  double sample_rate_hz = 0.0;

  std::size_t length() const noexcept { return i.size(); }
  // Lead by index in kSixLeadNames order.
  const std::vector<double>& lead(std::size_t index) const;
};

// III = II - I, aVR = -(I + II)/2, aVL = (I - III)/2, aVF = (II + III)/2.
SixLeadFrame derive_six(std::span<const double> lead_i, std::span<const double> lead_ii,
                        double sample_rate_hz = 0.0);

// Max componentwise violation of the three frame identities:
// |III - (II - I)|, |I + III - II|, |aVR + aVL + aVF|.
struct FrameIdentityError {
  double iii_minus = 0.0;
  double i_plus_iii = 0.0;
  double augmented_sum = 0.0;
};
FrameIdentityError frame_identity_error(const SixLeadFrame& frame);

// Sample Pearson correlation. Throws Error("undefined correlation") when
// either input is constant.
double pearson(std::span<const double> a, std::span<const double> b);
double mse(std::span<const double> a, std::span<const double> b);

struct LinearModel {
  double slope = 0.0;
  double intercept = 0.0;
};

// Closed-form ordinary least squares. Throws Error on constant x.
LinearModel linreg_fit(std::span<const double> x, std::span<const double> y);
std::vector<double> linreg_predict(const LinearModel& model, std::span<const double> x);

struct LeadMetrics {
  std::string lead;
  std::optional<double> pearson;  // empty when undefined (constant signal)
  double mse = 0.0;
};

struct LeadReport {
  std::vector<LeadMetrics> leads;  // kSixLeadNames order
  double mean_pearson = 0.0;       // over leads with a defined correlation
  std::vector<std::string> warnings;
};

LeadReport evaluate(const SixLeadFrame& predicted, const SixLeadFrame& truth);

}  // namespace convexecg
