#include "convexecg/leads.hpp"

#include <algorithm>
#include <cmath>

#include "convexecg/error.hpp"

namespace convexecg {

const std::vector<double>& SixLeadFrame::lead(std::size_t index) const {
  switch (index) {
    case 0: return i;
    case 1: return ii;
    case 2: return iii;
    case 3: return avr;
    case 4: return avl;
    case 5: return avf;
    default: throw Error("lead index out of range");
  }
}

SixLeadFrame derive_six(std::span<const double> lead_i, std::span<const double> lead_ii,
                        double sample_rate_hz) {
  if (lead_i.size() != lead_ii.size()) throw Error("length mismatch between leads I and II");
  SixLeadFrame f;
  f.sample_rate_hz = sample_rate_hz;
  f.i.assign(lead_i.begin(), lead_i.end());
  f.ii.assign(lead_ii.begin(), lead_ii.end());
  const std::size_t n = f.i.size();
  f.iii.resize(n);
  f.avr.resize(n);
  f.avl.resize(n);
  f.avf.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    f.iii[k] = f.ii[k] - f.i[k];
    f.avr[k] = -0.5 * (f.i[k] + f.ii[k]);
    f.avl[k] = 0.5 * (f.i[k] - f.iii[k]);
    f.avf[k] = 0.5 * (f.ii[k] + f.iii[k]);
  }
  return f;
}

FrameIdentityError frame_identity_error(const SixLeadFrame& f) {
  FrameIdentityError e;
  for (std::size_t k = 0; k < f.length(); ++k) {
    e.iii_minus = std::max(e.iii_minus, std::abs(f.iii[k] - (f.ii[k] - f.i[k])));
    e.i_plus_iii = std::max(e.i_plus_iii, std::abs(f.i[k] + f.iii[k] - f.ii[k]));
    e.augmented_sum = std::max(e.augmented_sum, std::abs(f.avr[k] + f.avl[k] + f.avf[k]));
  }
  return e;
}

namespace {

bool is_constant(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
}

double mean_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error("length mismatch");
  if (a.size() < 2) throw Error("pearson needs at least 2 samples");
  if (is_constant(a) || is_constant(b)) throw Error("undefined correlation: constant input");
  const double ma = mean_of(a);
  const double mb = mean_of(b);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double da = a[k] - ma;
    const double db = b[k] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (!(saa > 0.0) || !(sbb > 0.0)) throw Error("undefined correlation: zero variance");
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

double mse(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error("length mismatch");
  if (a.empty()) throw Error("mse needs at least one sample");
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - b[k]) * (a[k] - b[k]);
  return s / static_cast<double>(a.size());
}

LinearModel linreg_fit(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw Error("length mismatch");
  if (x.size() < 2) throw Error("linear regression needs at least 2 samples");
  if (is_constant(x)) throw Error("constant x: slope undefined");
  const double mx = mean_of(x);
  const double my = mean_of(y);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    sxy += (x[k] - mx) * (y[k] - my);
    sxx += (x[k] - mx) * (x[k] - mx);
  }
  const double slope = sxy / sxx;
  return {slope, my - slope * mx};
}

std::vector<double> linreg_predict(const LinearModel& model, std::span<const double> x) {
  std::vector<double> out(x.size());
  std::transform(x.begin(), x.end(), out.begin(),
                 [&](double v) { return model.slope * v + model.intercept; });
  return out;
}

LeadReport evaluate(const SixLeadFrame& predicted, const SixLeadFrame& truth) {
  if (predicted.length() != truth.length()) throw Error("frame length mismatch");
  LeadReport report;
  double sum = 0.0;
  std::size_t defined = 0;
  for (std::size_t k = 0; k < kSixLeadNames.size(); ++k) {
    LeadMetrics m;
    m.lead = kSixLeadNames[k];
    m.mse = mse(predicted.lead(k), truth.lead(k));
    try {
      m.pearson = pearson(predicted.lead(k), truth.lead(k));
      sum += *m.pearson;
      ++defined;
    } catch (const Error& e) {
      report.warnings.push_back("lead " + m.lead + ": " + e.what() + "; excluded from mean");
    }
    report.leads.push_back(std::move(m));
  }
  if (defined > 0) {
    report.mean_pearson = sum / static_cast<double>(defined);
  } else {
    report.warnings.push_back("no lead has a defined correlation; mean reported as 0");
  }
  return report;
}

}  // namespace convexecg
