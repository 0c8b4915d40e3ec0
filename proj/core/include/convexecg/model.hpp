#pragma once

#include <cstddef>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "convexecg/kernel.hpp"
#include "convexecg/preprocess.hpp"
#include "convexecg/solver.hpp"

namespace convexecg {

struct Neuron {
  double breakpoint;  // standardized input units
  Orientation orientation;
  double weight;

  double activation(double x) const noexcept {
    const double pre = orientation == Orientation::kRising ? x - breakpoint : breakpoint - x;
    return pre > 0.0 ? pre : 0.0;
  }

  friend bool operator==(const Neuron&, const Neuron&) = default;
};

// f(x) = sum_j w_j * relu(+-(x - b_j)) + intercept, in standardized units.
// The stats map raw millivolts to and from those units.
struct ReluNetwork {
  std::vector<Neuron> neurons;
  double intercept = 0.0;
  ZScoreStats input_stats;
  ZScoreStats output_stats;

  friend bool operator==(const ReluNetwork&, const ReluNetwork&) = default;
};

// Conventional two-layer weights: f(x) = sum_j relu(W1_j x + b1_j) W2_j + b2.
struct TwoLayerWeights {
  std::vector<double> w1;  // +-1
  std::vector<double> b1;
  std::vector<double> w2;
  double b2 = 0.0;
};

struct PredictionTrace {
  struct Term {
    std::size_t neuron;
    bool active;
    double activation;
    double contribution;
  };

  double input = 0.0;
  std::vector<Term> terms;  // one per neuron, in network order
  double intercept = 0.0;
  double output = 0.0;
  // Neighbouring breakpoints of the network around the input, if any.
  std::optional<double> lower_breakpoint;
  std::optional<double> upper_breakpoint;

  std::vector<std::size_t> active_neurons() const;
};

struct BreakpointEntry {
  double breakpoint;
  Orientation orientation;
  double weight;
  std::vector<std::size_t> time_indices;  // where train_inputs == breakpoint
};

// One neuron per nonzero z_j. Throws Error when z does not match the kernel.
ReluNetwork extract_network(const LassoSolution& solution, const KernelMatrix& kernel,
                            const ZScoreStats& input_stats = {},
                            const ZScoreStats& output_stats = {});

double predict_one(const ReluNetwork& net, double x);
std::vector<double> predict(const ReluNetwork& net, std::span<const double> x);

// Raw millivolt in -> raw millivolt out through the stored stats.
std::vector<double> predict_mv(const ReluNetwork& net, std::span<const double> x_mv);

TwoLayerWeights export_weights(const ReluNetwork& net);
double forward(const TwoLayerWeights& w, double x);

PredictionTrace trace(const ReluNetwork& net, double x);

std::vector<BreakpointEntry> breakpoint_report(const ReluNetwork& net,
                                               std::span<const double> train_inputs);

// Plain-text model document. Header line "convexecg-model 1", then
// "key value" lines and one "neuron <orientation> <breakpoint> <weight>" per
// neuron. `metadata` entries are written as "meta <key> <value>".
void write_model(const ReluNetwork& net, const std::map<std::string, std::string>& metadata,
                 std::ostream& out);

struct ModelFile {
  ReluNetwork network;
  std::map<std::string, std::string> metadata;
};

ModelFile read_model(std::istream& in);

}  // namespace convexecg
