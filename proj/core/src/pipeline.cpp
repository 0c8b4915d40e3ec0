#include "convexecg/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>
#include <thread>

#include "json.hpp"

#include "convexecg/format.hpp"
#include "convexecg/kernel.hpp"
#include "convexecg/svg.hpp"

namespace convexecg {

const char* to_string(Stage stage) noexcept {
  switch (stage) {
    case Stage::kConfig: return "config";
    case Stage::kIo: return "io";
    case Stage::kPreprocess: return "preprocess";
    case Stage::kSolver: return "solver";
    case Stage::kModel: return "model";
    case Stage::kEvaluate: return "evaluate";
  }
  return "unknown";
}

StageError::StageError(Stage stage, const std::string& what)
    : Error(std::string(to_string(stage)) + ": " + what), stage_(stage) {}

bool operator==(const PreprocessConfig& a, const PreprocessConfig& b) {
  return a.filter.low_cut_hz == b.filter.low_cut_hz && a.filter.high_cut_hz == b.filter.high_cut_hz &&
         a.filter.order == b.filter.order && a.decimate == b.decimate &&
         a.guard_fraction == b.guard_fraction && a.split.train_len == b.split.train_len &&
         a.split.test_len == b.split.test_len && a.split.offset == b.split.offset;
}

namespace {

// Runs fn, relabelling plain library errors with the given stage.
template <typename Fn>
auto in_stage(Stage stage, const std::string& context, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const Error& e) {
    throw StageError(stage, context.empty() ? e.what() : context + ": " + e.what());
  }
}

double to_number(const std::string& key, const std::string& value) {
  const auto v = parse_double(value);
  if (!v) throw StageError(Stage::kConfig, "key '" + key + "': expected a number, got '" + value + "'");
  return *v;
}

std::size_t to_count(const std::string& key, const std::string& value) {
  const double v = to_number(key, value);
  if (v < 0 || v != std::floor(v) || v > 1e15) {
    throw StageError(Stage::kConfig, "key '" + key + "': expected a non-negative integer, got '" + value + "'");
  }
  return static_cast<std::size_t>(v);
}

bool to_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw StageError(Stage::kConfig, "key '" + key + "': expected a boolean, got '" + value + "'");
}

std::string join_counts(const std::vector<std::size_t>& v, char sep = ',') {
  std::string out;
  for (std::size_t k = 0; k < v.size(); ++k) {
    if (k) out += sep;
    out += std::to_string(v[k]);
  }
  return out;
}

std::vector<double> slice(std::span<const double> v, Segment s) {
  return {v.begin() + static_cast<std::ptrdiff_t>(s.begin), v.begin() + static_cast<std::ptrdiff_t>(s.end)};
}

std::vector<double> condition(std::span<const double> samples, double rate, const PreprocessConfig& cfg) {
  const auto filtered = bandpass(samples, rate, cfg.filter);
  return decimate(filtered, cfg.decimate, cfg.guard_fraction);
}

}  // namespace

// ---- configuration -----------------------------------------------------

void RunConfig::set(const std::string& key, const std::string& value) {
  if (key == "input") {
    input_path = value;
  } else if (key == "sample_rate") {
    sample_rate_hz = to_number(key, value);
  } else if (key == "input_channel") {
    input_channel = value;
  } else if (key == "low_cut") {
    preprocess.filter.low_cut_hz = to_number(key, value);
  } else if (key == "high_cut") {
    preprocess.filter.high_cut_hz = to_number(key, value);
  } else if (key == "order") {
    preprocess.filter.order = static_cast<int>(to_count(key, value));
  } else if (key == "decimate") {
    preprocess.decimate = to_count(key, value);
  } else if (key == "guard") {
    preprocess.guard_fraction = to_number(key, value);
  } else if (key == "train_len") {
    preprocess.split.train_len = to_count(key, value);
  } else if (key == "test_len") {
    preprocess.split.test_len = to_count(key, value);
  } else if (key == "offset") {
    preprocess.split.offset = to_count(key, value);
  } else if (key == "lambda") {
    solver_i.lambda = solver_ii.lambda = to_number(key, value);
  } else if (key == "lambda_I") {
    solver_i.lambda = to_number(key, value);
  } else if (key == "lambda_II") {
    solver_ii.lambda = to_number(key, value);
  } else if (key == "kkt_tol") {
    solver_i.kkt_tol = solver_ii.kkt_tol = to_number(key, value);
  } else if (key == "max_iters") {
    solver_i.max_iters = solver_ii.max_iters = to_count(key, value);
  } else if (key == "algorithm") {
    try {
      solver_i.algorithm = solver_ii.algorithm = algorithm_from_string(value);
    } catch (const Error& e) {
      throw StageError(Stage::kConfig, e.what());
    }
  } else if (key == "out_dir") {
    out_dir = value;
  } else if (key == "seed") {
    seed = to_count(key, value);
  } else if (key == "shift_offsets") {
    shift_offsets.clear();
    for (auto part : split_view(value, ',')) {
      const auto t = trim(part);
      if (!t.empty()) shift_offsets.push_back(to_count(key, std::string(t)));
    }
  } else if (key == "trace") {
    trace = to_bool(key, value);
  } else {
    throw StageError(Stage::kConfig, "unknown config key '" + key + "'");
  }
}

std::map<std::string, std::string> RunConfig::to_map() const {
  return {
      {"input", input_path},
      {"sample_rate", format_double(sample_rate_hz)},
      {"input_channel", input_channel},
      {"low_cut", format_double(preprocess.filter.low_cut_hz)},
      {"high_cut", format_double(preprocess.filter.high_cut_hz)},
      {"order", std::to_string(preprocess.filter.order)},
      {"decimate", std::to_string(preprocess.decimate)},
      {"guard", format_double(preprocess.guard_fraction)},
      {"train_len", std::to_string(preprocess.split.train_len)},
      {"test_len", std::to_string(preprocess.split.test_len)},
      {"offset", std::to_string(preprocess.split.offset)},
      {"lambda_I", format_double(solver_i.lambda)},
      {"lambda_II", format_double(solver_ii.lambda)},
      {"kkt_tol", format_double(solver_i.kkt_tol)},
      {"max_iters", std::to_string(solver_i.max_iters)},
      {"algorithm", to_string(solver_i.algorithm)},
      {"out_dir", out_dir},
      {"seed", std::to_string(seed)},
      {"shift_offsets", join_counts(shift_offsets)},
      {"trace", trace ? "true" : "false"},
  };
}

void RunConfig::validate() const {
  in_stage(Stage::kConfig, "", [&] {
    if (!(sample_rate_hz > 0.0)) throw Error("sample_rate must be positive");
    preprocess.filter.validate(sample_rate_hz);
    if (preprocess.decimate < 1) throw Error("decimate must be at least 1");
    if (!(preprocess.guard_fraction > 0.0 && preprocess.guard_fraction < 1.0)) {
      throw Error("guard must lie in (0, 1)");
    }
    if (preprocess.split.train_len == 0 || preprocess.split.test_len == 0) {
      throw Error("train_len and test_len must be positive");
    }
    if (!is_valid_label(input_channel)) throw Error("invalid input channel label");
    solver_i.validate();
    solver_ii.validate();
  });
}

RunConfig parse_config(const std::string& text, RunConfig base) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string_view::npos) {
      throw StageError(Stage::kConfig, "line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    base.set(std::string(trim(body.substr(0, eq))), std::string(trim(body.substr(eq + 1))));
  }
  return base;
}

RunConfig load_config_file(const std::string& path, RunConfig base) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StageError(Stage::kConfig, "cannot open config '" + path + "'");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_config(text, std::move(base));
}

// ---- preprocessing ------------------------------------------------------

const PreparedChannel& PreparedRecord::channel(const std::string& label) const {
  const auto it = channels.find(label);
  if (it == channels.end()) throw StageError(Stage::kIo, "missing channel '" + label + "'");
  return it->second;
}

Segment train_segment(const SplitSpec& split, std::size_t length) {
  if (split.train_len == 0 || split.offset + split.train_len > length) {
    throw StageError(Stage::kPreprocess, "training window [" + std::to_string(split.offset) + ", " +
                                             std::to_string(split.offset + split.train_len) +
                                             ") exceeds signal length " + std::to_string(length));
  }
  return {split.offset, split.offset + split.train_len};
}

Segment test_segment(const SplitSpec& split, std::size_t length) {
  const std::size_t begin = split.offset + split.train_len;
  if (split.test_len == 0 || begin + split.test_len > length) {
    throw StageError(Stage::kPreprocess, "test window [" + std::to_string(begin) + ", " +
                                             std::to_string(begin + split.test_len) +
                                             ") exceeds signal length " + std::to_string(length));
  }
  return {begin, begin + split.test_len};
}

PreparedRecord prepare(const EcgRecord& record, const PreprocessConfig& config) {
  PreparedRecord out;
  out.input_rate_hz = record.sample_rate_hz();
  out.input_length = record.length();
  out.rate_hz = record.sample_rate_hz() / static_cast<double>(config.decimate);
  for (const auto& ch : record.channels()) {
    in_stage(Stage::kPreprocess, "channel " + ch.label, [&] {
      PreparedChannel pc;
      pc.mv = condition(ch.samples, record.sample_rate_hz(), config);
      const Segment train = train_segment(config.split, pc.mv.size());
      pc.stats = fit_stats(std::span<const double>(pc.mv).subspan(train.begin, train.end - train.begin));
      pc.standardized = apply_zscore(pc.mv, pc.stats);
      out.length = pc.mv.size();
      out.channels.emplace(ch.label, std::move(pc));
    });
  }
  return out;
}

// ---- training -----------------------------------------------------------

namespace {

void require_channels(const EcgRecord& record, const std::string& input_channel) {
  for (const std::string& label : {input_channel, std::string("I"), std::string("II")}) {
    if (!record.has_channel(label)) throw StageError(Stage::kIo, "record lacks channel '" + label + "'");
  }
}

LeadModelResult fit_lead(const std::string& lead, const KernelMatrix& kernel,
                         std::span<const double> target, const SolverConfig& solver,
                         const ZScoreStats& input_stats, const ZScoreStats& output_stats) {
  LeadModelResult r;
  r.lead = lead;
  r.kernel = kernel;
  r.lambda_max = lambda_max(kernel.entries, target);
  try {
    r.solution = fit(kernel, target, solver);
  } catch (const ConvergenceError& e) {
    throw StageError(Stage::kSolver, "lead " + lead + ": " + e.what());
  } catch (const Error& e) {
    throw StageError(Stage::kSolver, "lead " + lead + ": " + e.what());
  }
  r.network = in_stage(Stage::kModel, "lead " + lead,
                       [&] { return extract_network(r.solution, kernel, input_stats, output_stats); });
  return r;
}

struct Scored {
  SixLeadFrame predicted;
  SixLeadFrame truth;
  LeadReport report;
  LeadReport baseline;
};

Scored score(const PreparedRecord& prepared, const std::string& input_channel, const SplitSpec& split,
             const ReluNetwork& net_i, const ReluNetwork& net_ii) {
  return in_stage(Stage::kEvaluate, "", [&] {
    const Segment train = train_segment(split, prepared.length);
    const Segment test = test_segment(split, prepared.length);
    const auto& icm = prepared.channel(input_channel);
    const auto& lead_i = prepared.channel("I");
    const auto& lead_ii = prepared.channel("II");
    const auto x_test = slice(icm.standardized, test);

    Scored s;
    s.predicted = derive_six(predict_mv(net_i, slice(icm.mv, test)),
                             predict_mv(net_ii, slice(icm.mv, test)), prepared.rate_hz);
    s.truth = derive_six(slice(lead_i.mv, test), slice(lead_ii.mv, test), prepared.rate_hz);
    s.report = evaluate(s.predicted, s.truth);

    const auto x_train = slice(icm.standardized, train);
    const auto base_i = linreg_fit(x_train, slice(lead_i.standardized, train));
    const auto base_ii = linreg_fit(x_train, slice(lead_ii.standardized, train));
    const auto baseline = derive_six(invert_zscore(linreg_predict(base_i, x_test), lead_i.stats),
                                     invert_zscore(linreg_predict(base_ii, x_test), lead_ii.stats),
                                     prepared.rate_hz);
    s.baseline = evaluate(baseline, s.truth);
    return s;
  });
}

}  // namespace

TrainResult train(const EcgRecord& record, const RunConfig& config, const std::string& record_digest) {
  config.validate();
  require_channels(record, config.input_channel);
  if (record.sample_rate_hz() != config.sample_rate_hz) {
    throw StageError(Stage::kConfig, "record sample rate differs from configured sample_rate");
  }

  TrainResult r;
  r.record_digest = record_digest;
  r.prepared = prepare(record, config.preprocess);
  const Segment train_seg = train_segment(config.preprocess.split, r.prepared.length);
  test_segment(config.preprocess.split, r.prepared.length);

  const auto& icm = r.prepared.channel(config.input_channel);
  const auto& lead_i = r.prepared.channel("I");
  const auto& lead_ii = r.prepared.channel("II");
  const auto x_train = slice(icm.standardized, train_seg);
  const KernelMatrix kernel = in_stage(Stage::kModel, "kernel", [&] { return build_k(x_train); });

  SolverConfig solver_i = config.solver_i;
  SolverConfig solver_ii = config.solver_ii;
  solver_i.record_trace = solver_ii.record_trace = config.trace;
  r.model_i = fit_lead("I", kernel, slice(lead_i.standardized, train_seg), solver_i, icm.stats, lead_i.stats);
  r.model_ii =
      fit_lead("II", kernel, slice(lead_ii.standardized, train_seg), solver_ii, icm.stats, lead_ii.stats);

  Scored s = score(r.prepared, config.input_channel, config.preprocess.split, r.model_i.network,
                   r.model_ii.network);
  r.predicted_test = std::move(s.predicted);
  r.truth_test = std::move(s.truth);
  r.report = std::move(s.report);
  r.baseline_report = std::move(s.baseline);
  return r;
}

std::map<std::string, std::string> model_metadata(const RunConfig& config, const LeadModelResult& model,
                                                  const std::string& record_digest) {
  const SolverConfig& solver = model.lead == "I" ? config.solver_i : config.solver_ii;
  const auto& p = config.preprocess;
  return {
      {"lead", model.lead},
      {"input_channel", config.input_channel},
      {"record_digest", record_digest.empty() ? "none" : record_digest},
      {"sample_rate", format_double(config.sample_rate_hz)},
      {"low_cut", format_double(p.filter.low_cut_hz)},
      {"high_cut", format_double(p.filter.high_cut_hz)},
      {"order", std::to_string(p.filter.order)},
      {"decimate", std::to_string(p.decimate)},
      {"guard", format_double(p.guard_fraction)},
      {"train_len", std::to_string(p.split.train_len)},
      {"test_len", std::to_string(p.split.test_len)},
      {"offset", std::to_string(p.split.offset)},
      {"lambda", format_double(solver.lambda)},
      {"lambda_max", format_double(model.lambda_max)},
      {"kkt_tol", format_double(solver.kkt_tol)},
      {"algorithm", to_string(solver.algorithm)},
      {"objective", format_double(model.solution.objective)},
      {"kkt_residual", format_double(model.solution.kkt_residual)},
      {"iterations", std::to_string(model.solution.iterations)},
      {"support_size", std::to_string(model.solution.support.size())},
      {"breakpoint_count", std::to_string(model.kernel.unique_count())},
  };
}

PreprocessConfig preprocess_from_metadata(const std::map<std::string, std::string>& metadata) {
  RunConfig c;
  for (const char* key : {"low_cut", "high_cut", "order", "decimate", "guard", "train_len", "test_len", "offset"}) {
    const auto it = metadata.find(key);
    if (it == metadata.end()) throw StageError(Stage::kModel, std::string("model metadata lacks '") + key + "'");
    c.set(key, it->second);
  }
  return c.preprocess;
}

// ---- reconstruction and evaluation --------------------------------------

namespace {

std::string meta_or(const ModelFile& m, const std::string& key, const std::string& fallback) {
  const auto it = m.metadata.find(key);
  return it == m.metadata.end() ? fallback : it->second;
}

}  // namespace

SixLeadFrame reconstruct(const ModelFile& model_i, const ModelFile& model_ii, const EcgRecord& record,
                         const std::string& input_channel, const std::optional<PreprocessConfig>& expected) {
  if (meta_or(model_i, "lead", "I") != "I" || meta_or(model_ii, "lead", "II") != "II") {
    throw StageError(Stage::kModel, "models must be given in lead order I, II");
  }
  if (!(model_i.network.input_stats == model_ii.network.input_stats)) {
    throw StageError(Stage::kModel, "stats mismatch: the two models were standardized differently");
  }
  const PreprocessConfig cfg_i = preprocess_from_metadata(model_i.metadata);
  const PreprocessConfig cfg_ii = preprocess_from_metadata(model_ii.metadata);
  if (!(cfg_i == cfg_ii)) throw StageError(Stage::kModel, "stats mismatch: models disagree on preprocessing");
  if (expected && !(*expected == cfg_i)) {
    throw StageError(Stage::kModel, "stats mismatch: preprocessing config differs from the models'");
  }
  const auto rate = meta_or(model_i, "sample_rate", "");
  if (!rate.empty() && parse_double(rate) != record.sample_rate_hz()) {
    throw StageError(Stage::kModel, "stats mismatch: record sample rate differs from the models'");
  }
  if (!record.has_channel(input_channel)) {
    throw StageError(Stage::kIo, "record lacks channel '" + input_channel + "'");
  }
  const auto icm = in_stage(Stage::kPreprocess, "channel " + input_channel,
                            [&] { return condition(record.channel(input_channel), record.sample_rate_hz(), cfg_i); });
  const double rate_out = record.sample_rate_hz() / static_cast<double>(cfg_i.decimate);
  return derive_six(predict_mv(model_i.network, icm), predict_mv(model_ii.network, icm), rate_out);
}

LeadReport evaluate_reconstruction(const SixLeadFrame& predicted, const EcgRecord& truth,
                                   const PreprocessConfig& config) {
  for (const char* label : {"I", "II"}) {
    if (!truth.has_channel(label)) throw StageError(Stage::kIo, std::string("truth record lacks channel '") + label + "'");
  }
  return in_stage(Stage::kEvaluate, "", [&] {
    const auto lead_i = condition(truth.channel("I"), truth.sample_rate_hz(), config);
    const auto lead_ii = condition(truth.channel("II"), truth.sample_rate_hz(), config);
    if (lead_i.size() != predicted.length()) {
      throw Error("reconstruction has " + std::to_string(predicted.length()) + " samples, truth has " +
                  std::to_string(lead_i.size()) + " after preprocessing");
    }
    const Segment test = test_segment(config.split, lead_i.size());
    const auto cut = [&](const SixLeadFrame& f) {
      return derive_six(slice(f.i, test), slice(f.ii, test), f.sample_rate_hz);
    };
    const SixLeadFrame truth_frame = derive_six(lead_i, lead_ii, predicted.sample_rate_hz);
    // Slice the stored derived leads too, so the report scores exactly what
    // the reconstruction file holds.
    SixLeadFrame pred_cut;
    pred_cut.sample_rate_hz = predicted.sample_rate_hz;
    pred_cut.i = slice(predicted.i, test);
    pred_cut.ii = slice(predicted.ii, test);
    pred_cut.iii = slice(predicted.iii, test);
    pred_cut.avr = slice(predicted.avr, test);
    pred_cut.avl = slice(predicted.avl, test);
    pred_cut.avf = slice(predicted.avf, test);
    return evaluate(pred_cut, cut(truth_frame));
  });
}

// ---- lambda sweep and shift study ---------------------------------------

SweepResult sweep_lambda(const EcgRecord& record, const RunConfig& config, const std::vector<double>& grid,
                         unsigned jobs) {
  if (grid.empty()) throw StageError(Stage::kConfig, "lambda grid is empty");
  for (double l : grid) {
    if (!(l >= 0.0) || !std::isfinite(l)) throw StageError(Stage::kConfig, "lambda values must be finite and >= 0");
  }
  config.validate();
  require_channels(record, config.input_channel);

  const PreparedRecord prepared = prepare(record, config.preprocess);
  const Segment train_seg = train_segment(config.preprocess.split, prepared.length);
  test_segment(config.preprocess.split, prepared.length);
  const auto& icm = prepared.channel(config.input_channel);
  const auto& lead_i = prepared.channel("I");
  const auto& lead_ii = prepared.channel("II");
  const auto x_train = slice(icm.standardized, train_seg);
  const auto y_i = slice(lead_i.standardized, train_seg);
  const auto y_ii = slice(lead_ii.standardized, train_seg);
  const KernelMatrix kernel = in_stage(Stage::kModel, "kernel", [&] { return build_k(x_train); });

  SweepResult result;
  result.lambda_max_i = lambda_max(kernel.entries, y_i);
  result.lambda_max_ii = lambda_max(kernel.entries, y_ii);
  result.rows.resize(grid.size());
  std::vector<std::exception_ptr> errors(grid.size());

  const auto run_one = [&](std::size_t idx) {
    try {
      SolverConfig si = config.solver_i, sii = config.solver_ii;
      si.lambda = sii.lambda = grid[idx];
      si.record_trace = sii.record_trace = false;
      const auto mi = fit_lead("I", kernel, y_i, si, icm.stats, lead_i.stats);
      const auto mii = fit_lead("II", kernel, y_ii, sii, icm.stats, lead_ii.stats);
      const Scored s = score(prepared, config.input_channel, config.preprocess.split, mi.network, mii.network);
      SweepRow& row = result.rows[idx];
      row.lambda = grid[idx];
      row.support_i = mi.solution.support.size();
      row.support_ii = mii.solution.support.size();
      row.objective_i = mi.solution.objective;
      row.objective_ii = mii.solution.objective;
      row.kkt_i = mi.solution.kkt_residual;
      row.kkt_ii = mii.solution.kkt_residual;
      row.iterations_i = mi.solution.iterations;
      row.iterations_ii = mii.solution.iterations;
      row.mean_pearson = s.report.mean_pearson;
    } catch (...) {
      errors[idx] = std::current_exception();
    }
  };

  const unsigned workers = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(grid.size())));
  if (workers == 1) {
    for (std::size_t k = 0; k < grid.size(); ++k) run_one(k);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t k = next++; k < grid.size(); k = next++) run_one(k);
      });
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return result;
}

std::vector<ShiftRow> shift_study(const EcgRecord& record, const RunConfig& config) {
  std::vector<ShiftRow> rows;
  for (std::size_t shift : config.shift_offsets) {
    RunConfig shifted = config;
    shifted.trace = false;
    auto& split = shifted.preprocess.split;
    split.offset = config.preprocess.split.offset + shift;
    const std::size_t length = (record.length() + config.preprocess.decimate - 1) / config.preprocess.decimate;
    if (split.offset + split.train_len >= length) {
      throw StageError(Stage::kConfig, "shift offset " + std::to_string(shift) + " leaves no test samples");
    }
    split.test_len = std::min(split.test_len, length - split.offset - split.train_len);
    const TrainResult r = train(record, shifted);
    ShiftRow row;
    row.offset = split.offset;
    row.test_len = split.test_len;
    row.support_i = r.model_i.solution.support.size();
    row.support_ii = r.model_ii.solution.support.size();
    row.mean_pearson = r.report.mean_pearson;
    double mse_sum = 0.0;
    for (const auto& m : r.report.leads) mse_sum += m.mse;
    row.mean_mse = mse_sum / static_cast<double>(r.report.leads.size());
    rows.push_back(row);
  }
  return rows;
}

// ---- explainability -----------------------------------------------------

ExplainResult explain(const ModelFile& model, const EcgRecord& record, const std::string& record_digest) {
  const std::string stored = meta_or(model, "record_digest", "none");
  if (stored != "none" && !record_digest.empty() && stored != record_digest) {
    throw StageError(Stage::kModel, "mismatched model/record digests (model " + stored + ", record " +
                                        record_digest + ")");
  }
  const std::string lead = meta_or(model, "lead", "I");
  const std::string input_channel = meta_or(model, "input_channel", "ICM");
  for (const std::string& label : {input_channel, lead}) {
    if (!record.has_channel(label)) throw StageError(Stage::kIo, "record lacks channel '" + label + "'");
  }
  const PreprocessConfig cfg = preprocess_from_metadata(model.metadata);
  const PreparedRecord prepared = prepare(record, cfg);
  const Segment seg = train_segment(cfg.split, prepared.length);
  const auto& icm = prepared.channel(input_channel);
  if (!(icm.stats == model.network.input_stats)) {
    throw StageError(Stage::kModel, "mismatched model/record: input statistics differ");
  }

  ExplainResult r;
  r.lead = lead;
  r.train_inputs = slice(icm.standardized, seg);
  r.train_targets = slice(prepared.channel(lead).standardized, seg);
  r.entries = breakpoint_report(model.network, r.train_inputs);
  for (const auto& e : r.entries) r.highlighted += e.time_indices.size();
  return r;
}

// ---- emitters -------------------------------------------------------------

std::string record_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StageError(Stage::kIo, "cannot open '" + path + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return fnv1a64_hex(bytes);
}

namespace {

nlohmann::json report_json(const LeadReport& report) {
  nlohmann::json j;
  for (const auto& m : report.leads) {
    j["leads"][m.lead] = {{"pearson", m.pearson ? nlohmann::json(*m.pearson) : nlohmann::json(nullptr)},
                          {"mse", m.mse}};
  }
  j["mean_pearson"] = report.mean_pearson;
  j["warnings"] = report.warnings;
  return j;
}

nlohmann::json model_json(const LeadModelResult& m, const SolverConfig& solver) {
  return {
      {"lambda", solver.lambda},
      {"lambda_max", m.lambda_max},
      {"objective", m.solution.objective},
      {"kkt_residual", m.solution.kkt_residual},
      {"kkt_tol", solver.kkt_tol},
      {"iterations", m.solution.iterations},
      {"support_size", m.solution.support.size()},
      {"breakpoint_count", m.kernel.unique_count()},
      {"intercept", m.solution.t},
  };
}

}  // namespace

std::string manifest_json(const RunConfig& config, const TrainResult& result, const std::vector<ShiftRow>& shifts) {
  nlohmann::json j;
  j["tool_version"] = kToolVersion;
  j["config"] = config.to_map();
  const auto& p = config.preprocess;
  std::vector<std::string> labels;
  for (const auto& [label, ch] : result.prepared.channels) labels.push_back(label);
  j["inputs"]["record"] = {{"digest", result.record_digest.empty() ? "none" : result.record_digest},
                           {"channels", labels},
                           {"samples", result.prepared.input_length}};
  j["protocol"] = {
      {"input_rate_hz", result.prepared.input_rate_hz},
      {"window_samples", result.prepared.input_length},
      {"decimate", p.decimate},
      {"decimated_samples", result.prepared.length},
      {"decimated_rate_hz", result.prepared.rate_hz},
      {"train_len", p.split.train_len},
      {"test_len", p.split.test_len},
      {"offset", p.split.offset},
      {"low_cut_hz", p.filter.low_cut_hz},
      {"high_cut_hz", p.filter.high_cut_hz},
      {"filter_order", p.filter.order},
      {"guard_fraction", p.guard_fraction},
      {"lambda_I", config.solver_i.lambda},
      {"lambda_II", config.solver_ii.lambda},
      {"loss", "mean_squared_error_half"},
  };
  j["models"]["I"] = model_json(result.model_i, config.solver_i);
  j["models"]["II"] = model_json(result.model_ii, config.solver_ii);
  j["metrics"]["convex"] = report_json(result.report);
  j["metrics"]["baseline_linear"] = report_json(result.baseline_report);
  if (!shifts.empty()) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& s : shifts) {
      arr.push_back({{"offset", s.offset},
                     {"test_len", s.test_len},
                     {"support_I", s.support_i},
                     {"support_II", s.support_ii},
                     {"mean_pearson", s.mean_pearson},
                     {"mean_mse", s.mean_mse}});
    }
    j["shift_study"] = arr;
  }
  return j.dump(2) + "\n";
}

std::string report_csv(const LeadReport& report) {
  std::string out = "lead,pearson,mse\n";
  for (const auto& m : report.leads) {
    out += m.lead + "," + (m.pearson ? format_double(*m.pearson) : std::string("undefined")) + "," +
           format_double(m.mse) + "\n";
  }
  out += "mean," + format_double(report.mean_pearson) + ",\n";
  return out;
}

std::string breakpoint_csv(const std::vector<BreakpointEntry>& entries) {
  std::string out = "breakpoint,orientation,weight,time_indices\n";
  for (const auto& e : entries) {
    out += format_double(e.breakpoint) + "," + to_string(e.orientation) + "," + format_double(e.weight) + "," +
           join_counts(e.time_indices, ';') + "\n";
  }
  return out;
}

std::string sweep_csv(const SweepResult& result) {
  std::string out =
      "lambda,support_I,support_II,objective_I,objective_II,kkt_I,kkt_II,iterations_I,iterations_II,"
      "test_mean_pearson\n";
  for (const auto& r : result.rows) {
    out += format_double(r.lambda) + "," + std::to_string(r.support_i) + "," + std::to_string(r.support_ii) + "," +
           format_double(r.objective_i) + "," + format_double(r.objective_ii) + "," + format_double(r.kkt_i) + "," +
           format_double(r.kkt_ii) + "," + std::to_string(r.iterations_i) + "," + std::to_string(r.iterations_ii) +
           "," + format_double(r.mean_pearson) + "\n";
  }
  return out;
}

std::string shift_csv(const std::vector<ShiftRow>& rows) {
  std::string out = "offset,test_len,support_I,support_II,mean_pearson,mean_mse\n";
  double sum = 0.0, sq = 0.0;
  for (const auto& r : rows) {
    out += std::to_string(r.offset) + "," + std::to_string(r.test_len) + "," + std::to_string(r.support_i) + "," +
           std::to_string(r.support_ii) + "," + format_double(r.mean_pearson) + "," + format_double(r.mean_mse) +
           "\n";
    sum += r.mean_pearson;
  }
  if (!rows.empty()) {
    const double mean = sum / static_cast<double>(rows.size());
    for (const auto& r : rows) sq += (r.mean_pearson - mean) * (r.mean_pearson - mean);
    out += "# spread mean_pearson mean=" + format_double(mean) +
           " std=" + format_double(std::sqrt(sq / static_cast<double>(rows.size()))) + "\n";
  }
  return out;
}

std::string trace_csv(const std::vector<double>& trace) {
  std::string out = "iteration,objective\n";
  for (std::size_t k = 0; k < trace.size(); ++k) out += std::to_string(k) + "," + format_double(trace[k]) + "\n";
  return out;
}

namespace {

std::vector<double> time_axis(std::size_t n, double rate, std::size_t start = 0) {
  std::vector<double> t(n);
  for (std::size_t k = 0; k < n; ++k) t[k] = static_cast<double>(start + k) / (rate > 0.0 ? rate : 1.0);
  return t;
}

}  // namespace

std::string reconstruction_svg(const SixLeadFrame& frame, std::optional<std::size_t> train_end) {
  std::vector<svg::Panel> panels;
  const auto t = time_axis(frame.length(), frame.sample_rate_hz);
  for (std::size_t k = 0; k < kSixLeadNames.size(); ++k) {
    svg::Panel p;
    p.title = std::string("Lead ") + kSixLeadNames[k] + " (mV)";
    p.series.push_back({"reconstructed", t, frame.lead(k), "", false});
    if (train_end && frame.sample_rate_hz > 0.0) p.vlines.push_back(static_cast<double>(*train_end) / frame.sample_rate_hz);
    panels.push_back(std::move(p));
  }
  return svg::render("Six-lead reconstruction", panels);
}

std::string overlay_svg(const SixLeadFrame& predicted, const SixLeadFrame& truth) {
  std::vector<svg::Panel> panels;
  const auto t = time_axis(predicted.length(), predicted.sample_rate_hz);
  for (std::size_t k = 0; k < kSixLeadNames.size(); ++k) {
    svg::Panel p;
    p.title = std::string("Lead ") + kSixLeadNames[k] + " (mV)";
    p.series.push_back({"true", t, truth.lead(k), "#555555", false});
    p.series.push_back({"predicted", t, predicted.lead(k), "#d62728", false});
    panels.push_back(std::move(p));
  }
  return svg::render("Predicted vs. true leads (test window)", panels);
}

std::string function_svg(const ReluNetwork& net, const ExplainResult& explained) {
  double lo = 0.0, hi = 1.0;
  if (!explained.train_inputs.empty()) {
    const auto [mn, mx] = std::minmax_element(explained.train_inputs.begin(), explained.train_inputs.end());
    const double margin = 0.1 * (*mx - *mn + 1e-9);
    lo = *mn - margin;
    hi = *mx + margin;
  }
  std::vector<double> xs, ys;
  constexpr int kGrid = 400;
  for (int k = 0; k <= kGrid; ++k) {
    const double x = lo + (hi - lo) * k / kGrid;
    xs.push_back(x);
    ys.push_back(predict_one(net, x));
  }
  std::vector<double> bx, by;
  for (const auto& e : explained.entries) {
    bx.push_back(e.breakpoint);
    by.push_back(predict_one(net, e.breakpoint));
  }
  svg::Panel p;
  p.title = "f_" + explained.lead + "(x), standardized units";
  p.series.push_back({"training data", explained.train_inputs, explained.train_targets, "#9e9e9e", true});
  p.series.push_back({"learned f", xs, ys, "#1f77b4", false});
  p.series.push_back({"breakpoints", bx, by, "#d62728", true});
  return svg::render("Learned mapping for lead " + explained.lead, {p}, 700, 420);
}

std::string timeseries_svg(const ExplainResult& explained) {
  const auto t = time_axis(explained.train_inputs.size(), 1.0);
  std::vector<double> hx, hy;
  for (const auto& e : explained.entries) {
    for (std::size_t idx : e.time_indices) {
      hx.push_back(static_cast<double>(idx));
      hy.push_back(explained.train_inputs[idx]);
    }
  }
  svg::Panel p;
  p.title = "Training input (standardized) by sample index";
  p.series.push_back({"input", t, explained.train_inputs, "#1f77b4", false});
  p.series.push_back({"breakpoint samples", hx, hy, "#d62728", true});
  return svg::render("Training samples that define the breakpoints of lead " + explained.lead, {p}, 900, 320);
}

std::string sweep_svg(const SweepResult& result) {
  std::vector<double> lx, si, sii, pr;
  for (const auto& r : result.rows) {
    lx.push_back(r.lambda > 0.0 ? std::log10(r.lambda) : -12.0);
    si.push_back(static_cast<double>(r.support_i));
    sii.push_back(static_cast<double>(r.support_ii));
    pr.push_back(r.mean_pearson);
  }
  svg::Panel a{"Support size vs log10(lambda)", {{"I", lx, si, "", false}, {"II", lx, sii, "", false}}, {}};
  svg::Panel b{"Test mean Pearson vs log10(lambda)", {{"mean pearson", lx, pr, "", false}}, {}};
  return svg::render("Lambda sweep", {a, b});
}

EcgRecord frame_to_record(const SixLeadFrame& frame) {
  std::vector<Channel> channels;
  for (std::size_t k = 0; k < kSixLeadNames.size(); ++k) channels.push_back({kSixLeadNames[k], frame.lead(k)});
  return EcgRecord(frame.sample_rate_hz > 0.0 ? frame.sample_rate_hz : 1.0, std::move(channels));
}

SixLeadFrame record_to_frame(const EcgRecord& record) {
  SixLeadFrame f;
  f.sample_rate_hz = record.sample_rate_hz();
  const auto get = [&](const char* label) {
    const auto s = record.channel(label);
    return std::vector<double>(s.begin(), s.end());
  };
  f.i = get("I");
  f.ii = get("II");
  f.iii = get("III");
  f.avr = get("aVR");
  f.avl = get("aVL");
  f.avf = get("aVF");
  return f;
}

}  // namespace convexecg
