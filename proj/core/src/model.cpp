#include "convexecg/model.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <utility>

#include "convexecg/error.hpp"
#include "convexecg/format.hpp"
#include "convexecg/signal_io.hpp"

namespace convexecg {

std::vector<std::size_t> PredictionTrace::active_neurons() const {
  std::vector<std::size_t> out;
  for (const auto& t : terms) {
    if (t.active) out.push_back(t.neuron);
  }
  return out;
}

ReluNetwork extract_network(const LassoSolution& solution, const KernelMatrix& kernel,
                            const ZScoreStats& input_stats, const ZScoreStats& output_stats) {
  if (static_cast<std::size_t>(solution.z.size()) != kernel.columns.size()) {
    throw Error("support/kernel mismatch: solution has " + std::to_string(solution.z.size()) +
                " weights, kernel has " + std::to_string(kernel.columns.size()) + " columns");
  }
  ReluNetwork net;
  net.intercept = solution.t;
  net.input_stats = input_stats;
  net.output_stats = output_stats;
  for (std::size_t j = 0; j < kernel.columns.size(); ++j) {
    const double w = solution.z[static_cast<Eigen::Index>(j)];
    if (w == 0.0) continue;
    const auto& meta = kernel.columns[j];
    net.neurons.push_back({kernel.breakpoints[meta.breakpoint_index], meta.orientation, w});
  }
  return net;
}

double predict_one(const ReluNetwork& net, double x) {
  double out = 0.0;
  for (const auto& n : net.neurons) out += n.weight * n.activation(x);
  return out + net.intercept;
}

std::vector<double> predict(const ReluNetwork& net, std::span<const double> x) {
  std::vector<double> out(x.size());
  std::transform(x.begin(), x.end(), out.begin(), [&](double v) { return predict_one(net, v); });
  return out;
}

std::vector<double> predict_mv(const ReluNetwork& net, std::span<const double> x_mv) {
  const auto standardized = apply_zscore(x_mv, net.input_stats);
  return invert_zscore(predict(net, standardized), net.output_stats);
}

TwoLayerWeights export_weights(const ReluNetwork& net) {
  TwoLayerWeights w;
  for (const auto& n : net.neurons) {
    if (n.orientation == Orientation::kRising) {
      w.w1.push_back(1.0);
      w.b1.push_back(-n.breakpoint);
    } else {
      w.w1.push_back(-1.0);
      w.b1.push_back(n.breakpoint);
    }
    w.w2.push_back(n.weight);
  }
  w.b2 = net.intercept;
  return w;
}

double forward(const TwoLayerWeights& w, double x) {
  double out = 0.0;
  for (std::size_t j = 0; j < w.w1.size(); ++j) {
    const double pre = w.w1[j] * x + w.b1[j];
    out += w.w2[j] * (pre > 0.0 ? pre : 0.0);
  }
  return out + w.b2;
}

PredictionTrace trace(const ReluNetwork& net, double x) {
  PredictionTrace tr;
  tr.input = x;
  tr.intercept = net.intercept;
  double out = 0.0;
  for (std::size_t j = 0; j < net.neurons.size(); ++j) {
    const auto& n = net.neurons[j];
    const double act = n.activation(x);
    const double contribution = n.weight * act;
    tr.terms.push_back({j, act > 0.0, act, contribution});
    out += contribution;
    if (n.breakpoint <= x && (!tr.lower_breakpoint || n.breakpoint > *tr.lower_breakpoint)) {
      tr.lower_breakpoint = n.breakpoint;
    }
    if (n.breakpoint > x && (!tr.upper_breakpoint || n.breakpoint < *tr.upper_breakpoint)) {
      tr.upper_breakpoint = n.breakpoint;
    }
  }
  tr.output = out + net.intercept;
  return tr;
}

std::vector<BreakpointEntry> breakpoint_report(const ReluNetwork& net,
                                               std::span<const double> train_inputs) {
  std::vector<BreakpointEntry> report;
  report.reserve(net.neurons.size());
  for (const auto& n : net.neurons) {
    BreakpointEntry e{n.breakpoint, n.orientation, n.weight, {}};
    for (std::size_t i = 0; i < train_inputs.size(); ++i) {
      if (train_inputs[i] == n.breakpoint) e.time_indices.push_back(i);
    }
    report.push_back(std::move(e));
  }
  return report;
}

namespace {

constexpr const char* kModelHeader = "convexecg-model 1";

double need_double(std::string_view text, std::size_t line) {
  const auto v = parse_double(text);
  if (!v) throw ParseError(line, "expected a finite number, got '" + std::string(text) + "'");
  return *v;
}

}  // namespace

void write_model(const ReluNetwork& net, const std::map<std::string, std::string>& metadata,
                 std::ostream& out) {
  std::ostringstream s;
  s << kModelHeader << '\n';
  for (const auto& [key, value] : metadata) {
    if (!is_valid_label(key)) throw Error("invalid metadata key '" + key + "'");
    if (value.find('\n') != std::string::npos) throw Error("metadata value contains a newline");
    s << "meta " << key << ' ' << value << '\n';
  }
  s << "input_mean " << format_double(net.input_stats.mean) << '\n';
  s << "input_std " << format_double(net.input_stats.std) << '\n';
  s << "output_mean " << format_double(net.output_stats.mean) << '\n';
  s << "output_std " << format_double(net.output_stats.std) << '\n';
  s << "intercept " << format_double(net.intercept) << '\n';
  s << "neurons " << net.neurons.size() << '\n';
  for (const auto& n : net.neurons) {
    s << "neuron " << to_string(n.orientation) << ' ' << format_double(n.breakpoint) << ' '
      << format_double(n.weight) << '\n';
  }
  const std::string text = s.str();
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw Error("model write failure");
}

ModelFile read_model(std::istream& in) {
  ModelFile file;
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw ParseError(1, "empty model file");
  ++line_no;
  if (trim(line) != kModelHeader) throw ParseError(line_no, "unsupported model header '" + line + "'");

  std::set<std::string> seen;
  std::size_t declared = 0;
  bool have_count = false;
  while (std::getline(in, line)) {
    ++line_no;
    const auto body = trim(line);
    if (body.empty()) continue;
    const auto space = body.find(' ');
    const std::string key(body.substr(0, space));
    const std::string_view rest = space == std::string_view::npos ? "" : trim(body.substr(space + 1));

    if (key == "meta") {
      const auto sp = rest.find(' ');
      const std::string mkey(rest.substr(0, sp));
      const std::string mval(sp == std::string_view::npos ? "" : rest.substr(sp + 1));
      file.metadata[mkey] = mval;
    } else if (key == "neuron") {
      const auto parts = split_view(rest, ' ');
      if (parts.size() != 3) throw ParseError(line_no, "neuron line needs orientation, breakpoint, weight");
      Neuron n{need_double(parts[1], line_no), orientation_from_string(std::string(parts[0])),
               need_double(parts[2], line_no)};
      if (n.weight == 0.0) throw ParseError(line_no, "neuron weight must be nonzero");
      file.network.neurons.push_back(n);
    } else {
      if (!seen.insert(key).second) throw ParseError(line_no, "duplicate key '" + key + "'");
      if (key == "neurons") {
        const double v = need_double(rest, line_no);
        if (v < 0 || v != std::floor(v)) throw ParseError(line_no, "neuron count must be a non-negative integer");
        declared = static_cast<std::size_t>(v);
        have_count = true;
      } else if (key == "intercept") {
        file.network.intercept = need_double(rest, line_no);
      } else if (key == "input_mean") {
        file.network.input_stats.mean = need_double(rest, line_no);
      } else if (key == "input_std") {
        file.network.input_stats.std = need_double(rest, line_no);
      } else if (key == "output_mean") {
        file.network.output_stats.mean = need_double(rest, line_no);
      } else if (key == "output_std") {
        file.network.output_stats.std = need_double(rest, line_no);
      } else {
        throw ParseError(line_no, "unknown key '" + key + "'");
      }
    }
  }
  for (const char* required : {"intercept", "input_mean", "input_std", "output_mean", "output_std"}) {
    if (!seen.count(required)) throw ParseError(0, std::string("model file lacks '") + required + "'");
  }
  if (!have_count || declared != file.network.neurons.size()) {
    throw ParseError(0, "neuron count does not match the neuron lines");
  }
  if (!(file.network.input_stats.std > 0.0) || !(file.network.output_stats.std > 0.0)) {
    throw ParseError(0, "model standard deviations must be positive");
  }
  std::set<std::pair<double, int>> keys;
  for (const auto& n : file.network.neurons) {
    if (!keys.insert({n.breakpoint, static_cast<int>(n.orientation)}).second) {
      throw ParseError(0, "duplicate (breakpoint, orientation) neuron");
    }
  }
  return file;
}

}  // namespace convexecg
