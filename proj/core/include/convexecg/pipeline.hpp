#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "convexecg/error.hpp"
#include "convexecg/leads.hpp"
#include "convexecg/model.hpp"
#include "convexecg/preprocess.hpp"
#include "convexecg/signal_io.hpp"
#include "convexecg/solver.hpp"

namespace convexecg {

inline constexpr const char* kToolVersion = "convexecg 0.1.0";

// Process exit codes, one per failing stage.
enum class Stage : int {
  kConfig = 2,
  kIo = 3,
  kPreprocess = 4,
  kSolver = 5,
  kModel = 6,
  kEvaluate = 7,
};

const char* to_string(Stage stage) noexcept;

class StageError : public Error {
 public:
  StageError(Stage stage, const std::string& what);
  Stage stage() const noexcept { return stage_; }

 private:
  Stage stage_;
};

struct PreprocessConfig {
  FilterSpec filter;
  std::size_t decimate = 2;
  double guard_fraction = kDefaultGuardFraction;
  SplitSpec split;

  friend bool operator==(const PreprocessConfig& a, const PreprocessConfig& b);
};

struct RunConfig {
  std::string input_path;
  double sample_rate_hz = 500.0;
  std::string input_channel = "ICM";
  PreprocessConfig preprocess;
  SolverConfig solver_i;
  SolverConfig solver_ii;
  std::string out_dir = "out";
  std::uint64_t seed = 0;
  std::vector<std::size_t> shift_offsets;
  bool trace = false;

  // Flat "key = value" assignment; throws StageError(kConfig) on unknown
  // keys or unparsable values.
  void set(const std::string& key, const std::string& value);
  // Every key understood by set(), with its current value.
  std::map<std::string, std::string> to_map() const;
  void validate() const;
};

// Parses a flat key-value document: one "key = value" per line, '#' starts a
// comment, blank lines ignored.
RunConfig parse_config(const std::string& text, RunConfig base = {});
RunConfig load_config_file(const std::string& path, RunConfig base = {});

// One channel after band-pass and decimation.
struct PreparedChannel {
  std::vector<double> mv;            // filtered + decimated, millivolts
  ZScoreStats stats;                 // fitted on the training window
  std::vector<double> standardized;  // whole signal, training-window stats
};

struct PreparedRecord {
  double input_rate_hz = 0.0;
  std::size_t input_length = 0;
  double rate_hz = 0.0;  // after decimation
  std::size_t length = 0;
  std::map<std::string, PreparedChannel> channels;

  const PreparedChannel& channel(const std::string& label) const;
};

PreparedRecord prepare(const EcgRecord& record, const PreprocessConfig& config);

struct Segment {
  std::size_t begin = 0;
  std::size_t end = 0;
};

Segment train_segment(const SplitSpec& split, std::size_t length);
// Starts right after the training window; throws when it does not fit.
Segment test_segment(const SplitSpec& split, std::size_t length);

struct LeadModelResult {
  std::string lead;
  KernelMatrix kernel;
  LassoSolution solution;
  double lambda_max = 0.0;
  ReluNetwork network;
};

struct TrainResult {
  PreparedRecord prepared;
  LeadModelResult model_i;
  LeadModelResult model_ii;
  SixLeadFrame predicted_test;
  SixLeadFrame truth_test;
  LeadReport report;
  LeadReport baseline_report;
  std::string record_digest;
};

// Fits f_I and f_II on the training window and scores the test window, in
// raw millivolts, against the linear-regression baseline.
TrainResult train(const EcgRecord& record, const RunConfig& config,
                  const std::string& record_digest = "");

std::map<std::string, std::string> model_metadata(const RunConfig& config,
                                                  const LeadModelResult& model,
                                                  const std::string& record_digest);

// Reads preprocessing parameters back from model metadata.
PreprocessConfig preprocess_from_metadata(const std::map<std::string, std::string>& metadata);

// Predicts I and II over the whole record and derives the six leads (mV).
// Throws StageError(kModel) when the two models disagree on input stats or
// preprocessing, or when `expected` is given and differs from the models'.
SixLeadFrame reconstruct(const ModelFile& model_i, const ModelFile& model_ii,
                         const EcgRecord& record, const std::string& input_channel = "ICM",
                         const std::optional<PreprocessConfig>& expected = std::nullopt);

// Scores the test window of a reconstruction against the record's true
// leads after the same band-pass and decimation.
LeadReport evaluate_reconstruction(const SixLeadFrame& predicted, const EcgRecord& truth,
                                   const PreprocessConfig& config);

struct SweepRow {
  double lambda = 0.0;
  std::size_t support_i = 0;
  std::size_t support_ii = 0;
  double objective_i = 0.0;
  double objective_ii = 0.0;
  double kkt_i = 0.0;
  double kkt_ii = 0.0;
  std::size_t iterations_i = 0;
  std::size_t iterations_ii = 0;
  double mean_pearson = 0.0;
};

struct SweepResult {
  double lambda_max_i = 0.0;
  double lambda_max_ii = 0.0;
  std::vector<SweepRow> rows;  // grid order
};

// Per-lambda fits may run on `jobs` threads; rows come back in grid order.
SweepResult sweep_lambda(const EcgRecord& record, const RunConfig& config,
                         const std::vector<double>& grid, unsigned jobs = 1);

struct ShiftRow {
  std::size_t offset = 0;
  std::size_t test_len = 0;
  std::size_t support_i = 0;
  std::size_t support_ii = 0;
  double mean_pearson = 0.0;
  double mean_mse = 0.0;
};

// Retrains with the training window moved by each offset. The test window
// follows the shifted training window and is truncated to fit the record.
std::vector<ShiftRow> shift_study(const EcgRecord& record, const RunConfig& config);

struct ExplainResult {
  std::string lead;
  std::vector<double> train_inputs;  // standardized training-window inputs
  std::vector<double> train_targets;
  std::vector<BreakpointEntry> entries;
  std::size_t highlighted = 0;  // total matched time indices
};

// Throws StageError(kModel) when the record digest differs from the one the
// model was trained on.
ExplainResult explain(const ModelFile& model, const EcgRecord& record,
                      const std::string& record_digest);

// ---- file emitters used by the CLI -------------------------------------

std::string record_digest(const std::string& path);
std::string manifest_json(const RunConfig& config, const TrainResult& result,
                          const std::vector<ShiftRow>& shifts = {});
std::string report_csv(const LeadReport& report);
std::string breakpoint_csv(const std::vector<BreakpointEntry>& entries);
std::string sweep_csv(const SweepResult& result);
std::string shift_csv(const std::vector<ShiftRow>& rows);
std::string trace_csv(const std::vector<double>& trace);

std::string reconstruction_svg(const SixLeadFrame& frame, std::optional<std::size_t> train_end);
std::string overlay_svg(const SixLeadFrame& predicted, const SixLeadFrame& truth);
std::string function_svg(const ReluNetwork& net, const ExplainResult& explained);
std::string timeseries_svg(const ExplainResult& explained);
std::string sweep_svg(const SweepResult& result);

EcgRecord frame_to_record(const SixLeadFrame& frame);
SixLeadFrame record_to_frame(const EcgRecord& record);

}  // namespace convexecg
