// One PASS/FAIL line per acceptance criterion; exit status 1 if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "convexecg/format.hpp"
#include "convexecg/kernel.hpp"
#include "convexecg/pipeline.hpp"
#include "convexecg/synth.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace convexecg;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
  std::vector<std::string> failures;

  void require(bool ok, const std::string& what) {
    if (ok) return;
    pass = false;
    if (failures.size() < 5) failures.push_back(what);
  }
};

int g_failed = 0;

void report(int id, const std::string& title, const Outcome& o) {
  std::printf("%s %d %s: %s\n", o.pass ? "PASS" : "FAIL", id, title.c_str(), o.detail.c_str());
  for (const auto& f : o.failures) std::printf("    %s\n", f.c_str());
  if (!o.pass) ++g_failed;
}

std::string fmt(const char* pattern, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, pattern, v);
  return buf;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
  if (!out) throw Error("cannot write " + p.string());
}

std::vector<double> parse_trace(const std::string& csv) {
  std::vector<double> values;
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    const auto cells = split_view(line, ',');
    if (cells.size() != 2) throw Error("bad trace line '" + line + "'");
    values.push_back(parse_double(cells[1]).value());
  }
  return values;
}

bool nonincreasing(const std::vector<double>& v) {
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[i - 1]) return false;
  }
  return true;
}

// ---- random solver instances (criteria 1-3, 8) ----------------------------

struct RandomFits {
  std::size_t instances = 0;
  double fit_seconds = 0.0;
  double worst_gap = 0.0;
  double worst_kkt = 0.0;
  double worst_equiv = 0.0;  // relative to 1 + max|y|
  double worst_null_t = 0.0;
  std::size_t null_nonempty = 0;
  std::size_t traces = 0;
  std::size_t increasing_traces = 0;
  Outcome c1, c2, c3;
};

RandomFits random_fits() {
  RandomFits r;
  SplitMix64 rng(42);
  const double lambdas[] = {0.001, 0.01, 0.1};
  for (int inst = 0; inst < 200; ++inst) {
    const std::size_t n = 5 + rng.next() % 46;
    std::vector<double> x(n), y(n);
    for (auto& v : x) v = rng.normal();
    for (auto& v : y) v = rng.normal();
    const double lambda = lambdas[inst % 3];
    const KernelMatrix k = build_k(x);
    const std::string tag = "instance " + std::to_string(inst) + " (n=" + std::to_string(n) + ", lambda=" +
                            format_double(lambda) + ")";
    ++r.instances;

    std::map<Algorithm, LassoSolution> fits;
    for (Algorithm a : {Algorithm::kAcceleratedProximal, Algorithm::kCoordinateDescent}) {
      SolverConfig cfg;
      cfg.lambda = lambda;
      cfg.algorithm = a;
      cfg.record_trace = true;
      const auto t0 = Clock::now();
      try {
        fits.emplace(a, fit(k, y, cfg));
      } catch (const ConvergenceError& e) {
        r.c1.require(false, tag + ": " + e.what());
      }
      r.fit_seconds += seconds_since(t0);
    }
    for (const auto& [a, s] : fits) {
      r.worst_kkt = std::max(r.worst_kkt, s.kkt_residual);
      r.c1.require(s.kkt_residual <= 1e-8, tag + " " + to_string(a) + ": kkt " + fmt("%.3g", s.kkt_residual));

      ++r.traces;
      if (!nonincreasing(s.trace)) ++r.increasing_traces;

      const ReluNetwork net = extract_network(s, k);
      const auto pred = predict(net, x);
      const Eigen::VectorXd kz = (k.entries * s.z).array() + s.t;
      double ymax = 0.0;
      for (double v : y) ymax = std::max(ymax, std::abs(v));
      double worst = 0.0;
      for (std::size_t i = 0; i < n; ++i) worst = std::max(worst, std::abs(pred[i] - kz[static_cast<Eigen::Index>(i)]));
      const double rel = worst / (1.0 + ymax);
      r.worst_equiv = std::max(r.worst_equiv, rel);
      r.c2.require(rel <= 1e-10, tag + " " + to_string(a) + ": prediction gap " + fmt("%.3g", worst));
    }
    if (fits.size() == 2) {
      const double p = fits.at(Algorithm::kAcceleratedProximal).objective;
      const double c = fits.at(Algorithm::kCoordinateDescent).objective;
      const double gap = std::abs(p - c) / std::max(std::abs(c), 1e-300);
      r.worst_gap = std::max(r.worst_gap, gap);
      r.c1.require(gap <= 1e-6, tag + ": objective gap " + fmt("%.3g", gap));
    }

    const double lmax = lambda_max(k.entries, y);
    const double ybar = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
    for (Algorithm a : {Algorithm::kAcceleratedProximal, Algorithm::kCoordinateDescent}) {
      SolverConfig cfg;
      cfg.lambda = 1.01 * lmax;
      cfg.algorithm = a;
      const LassoSolution s = fit(k, y, cfg);
      if (!s.support.empty()) ++r.null_nonempty;
      r.worst_null_t = std::max(r.worst_null_t, std::abs(s.t - ybar));
      r.c3.require(s.support.empty(), tag + " " + to_string(a) + ": support size " + std::to_string(s.support.size()));
      r.c3.require(std::abs(s.t - ybar) <= 1e-10, tag + " " + to_string(a) + ": |t - mean(y)| " +
                                                       fmt("%.3g", std::abs(s.t - ybar)));
    }
  }
  r.c1.require(r.fit_seconds < 30.0, "runtime " + fmt("%.2f", r.fit_seconds) + " s exceeds 30 s");
  r.c1.detail = std::to_string(r.instances) + " instances x 2 solvers, worst relative objective gap " +
                fmt("%.2e", r.worst_gap) + ", worst kkt " + fmt("%.2e", r.worst_kkt) + ", fits took " +
                fmt("%.2f", r.fit_seconds) + " s";
  r.c2.detail = "worst |f(x_i) - (Kz + t)_i| / (1 + max|y|) = " + fmt("%.2e", r.worst_equiv) + " over " +
                std::to_string(r.traces) + " fits";
  r.c3.detail = std::to_string(2 * r.instances) + " fits at 1.01 x lambda_max, " + std::to_string(r.null_nonempty) +
                " with nonempty support, worst |t - mean(y)| " + fmt("%.2e", r.worst_null_t);
  return r;
}

// ---- full pipeline runs (criteria 4-8, 10) --------------------------------

struct PipelineRun {
  std::string preset;
  fs::path dir;
  RunConfig config;
  std::string digest;
  EcgRecord record{1.0, {{"x", {0.0, 0.0}}}};
  TrainResult trained;
  SixLeadFrame reconstruction;
  SixLeadFrame reread;
  LeadReport evaluation;
  std::vector<ShiftRow> shifts;
  double seconds = 0.0;  // synth through evaluation
  std::map<std::string, std::string> files;
};

std::string model_file_text(const RunConfig& cfg, const LeadModelResult& m, const std::string& digest) {
  std::ostringstream out;
  write_model(m.network, model_metadata(cfg, m, digest), out);
  return out.str();
}

ModelFile load_model_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return read_model(in);
}

PipelineRun run_pipeline(const fs::path& dir, const std::string& preset, std::uint64_t seed,
                         std::vector<std::size_t> shift_offsets) {
  PipelineRun run;
  run.preset = preset;
  run.dir = dir;
  fs::create_directories(dir);
  const auto t0 = Clock::now();

  SynthConfig sc = default_synth_config();
  sc.seed = seed;
  IcmMapSpec map = piecewise_preset(preset);
  map.noise_std_mv = 0.02;
  map.seed = SplitMix64(seed).next();
  const fs::path record_path = dir / "record.csv";
  write_record_file(generate_record(sc, map), record_path.string());

  run.config.input_path = record_path.string();
  run.config.trace = true;
  run.config.validate();
  run.record = read_record_file(run.config.input_path, run.config.sample_rate_hz);
  run.digest = record_digest(run.config.input_path);

  run.trained = train(run.record, run.config, run.digest);
  spit(dir / "model_I.txt", model_file_text(run.config, run.trained.model_i, run.digest));
  spit(dir / "model_II.txt", model_file_text(run.config, run.trained.model_ii, run.digest));
  spit(dir / "report.csv", report_csv(run.trained.report));
  spit(dir / "trace_I.csv", trace_csv(run.trained.model_i.solution.trace));
  spit(dir / "trace_II.csv", trace_csv(run.trained.model_ii.solution.trace));

  const ModelFile mi = load_model_file(dir / "model_I.txt");
  const ModelFile mii = load_model_file(dir / "model_II.txt");
  run.reconstruction = reconstruct(mi, mii, run.record, run.config.input_channel);
  write_record_file(frame_to_record(run.reconstruction), (dir / "reconstruction.csv").string());
  run.reread = record_to_frame(read_record_file((dir / "reconstruction.csv").string(), run.reconstruction.sample_rate_hz));
  run.evaluation = evaluate_reconstruction(run.reread, run.record, run.config.preprocess);
  spit(dir / "evaluation.csv", report_csv(run.evaluation));
  run.seconds = seconds_since(t0);

  if (!shift_offsets.empty()) {
    run.config.shift_offsets = std::move(shift_offsets);
    run.shifts = shift_study(run.record, run.config);
    spit(dir / "shift_offsets.csv", shift_csv(run.shifts));
  }
  spit(dir / "manifest.json", manifest_json(run.config, run.trained, run.shifts));

  for (const auto& entry : fs::directory_iterator(dir)) run.files[entry.path().filename().string()] = slurp(entry.path());
  return run;
}

Outcome protocol_constants(const PipelineRun& run) {
  Outcome o;
  const auto j = nlohmann::json::parse(run.files.at("manifest.json"));
  const auto& p = j.at("protocol");
  const std::vector<std::pair<const char*, double>> expected = {
      {"input_rate_hz", 500.0}, {"window_samples", 2500.0}, {"decimated_samples", 1250.0},
      {"train_len", 125.0},     {"test_len", 1125.0},       {"low_cut_hz", 0.5},
      {"high_cut_hz", 150.0},   {"lambda_I", 0.01},         {"lambda_II", 0.01}};
  std::string seen;
  for (const auto& [key, value] : expected) {
    const double got = p.at(key).get<double>();
    o.require(got == value, std::string(key) + " is " + format_double(got) + ", expected " + format_double(value));
    seen += (seen.empty() ? "" : ", ") + std::string(key) + "=" + format_double(got);
  }
  const auto& cfg = j.at("config");
  o.require(cfg.at("decimate").get<std::string>() == "2", "config decimate is not 2");
  o.require(cfg.at("lambda_I").get<std::string>() == "0.01", "config lambda_I is not 0.01");
  o.require(cfg.at("lambda_II").get<std::string>() == "0.01", "config lambda_II is not 0.01");
  o.detail = "manifest protocol: " + seen;
  return o;
}

Outcome end_to_end(const PipelineRun& mild, const PipelineRun& strong) {
  Outcome o;
  const double mild_p = mild.evaluation.mean_pearson;
  const double strong_p = strong.evaluation.mean_pearson;
  const double strong_base = strong.trained.baseline_report.mean_pearson;
  o.require(mild_p >= 0.95, "mild preset mean pearson " + fmt("%.4f", mild_p) + " < 0.95");
  o.require(strong_p >= 0.95, "strong preset mean pearson " + fmt("%.4f", strong_p) + " < 0.95");
  o.require(strong_p - strong_base >= 0.05,
            "strong preset margin over linear baseline " + fmt("%.4f", strong_p - strong_base) + " < 0.05");
  o.require(mild.evaluation.leads.size() == 6 && strong.evaluation.leads.size() == 6, "report lacks six leads");
  for (const auto* run : {&mild, &strong}) {
    o.require(std::abs(run->evaluation.mean_pearson - run->trained.report.mean_pearson) <= 1e-9,
              run->preset + ": reconstruct/evaluate disagrees with the training-run score");
    o.require(run->seconds < 10.0, run->preset + " pipeline took " + fmt("%.2f", run->seconds) + " s");
  }
  o.detail = "mild mean pearson " + fmt("%.4f", mild_p) + "; strong mean pearson " + fmt("%.4f", strong_p) +
             " vs linear " + fmt("%.4f", strong_base) + " (margin " + fmt("%.4f", strong_p - strong_base) +
             "); strong pipeline " + fmt("%.2f", strong.seconds) + " s";
  return o;
}

Outcome six_lead_identities(const std::vector<const PipelineRun*>& runs) {
  Outcome o;
  double w1 = 0.0, w2 = 0.0, w3 = 0.0;
  std::size_t frames = 0;
  for (const auto* run : runs) {
    for (const SixLeadFrame* f : {&run->trained.predicted_test, &run->trained.truth_test, &run->reconstruction, &run->reread}) {
      const FrameIdentityError e = frame_identity_error(*f);
      w1 = std::max(w1, e.iii_minus);
      w2 = std::max(w2, e.i_plus_iii);
      w3 = std::max(w3, e.augmented_sum);
      ++frames;
    }
  }
  o.require(w1 <= 1e-12, "III - (II - I) reaches " + fmt("%.3g", w1));
  o.require(w2 <= 1e-12, "I + III - II reaches " + fmt("%.3g", w2));
  o.require(w3 <= 1e-10, "aVR + aVL + aVF reaches " + fmt("%.3g", w3));
  o.detail = std::to_string(frames) + " frames, max errors " + fmt("%.2e", w1) + " / " + fmt("%.2e", w2) + " / " +
             fmt("%.2e", w3);
  return o;
}

Outcome determinism(const PipelineRun& a, const PipelineRun& b) {
  Outcome o;
  std::size_t compared = 0;
  for (const char* name : {"record.csv", "model_I.txt", "model_II.txt", "report.csv", "evaluation.csv",
                           "reconstruction.csv", "trace_I.csv", "trace_II.csv", "shift_offsets.csv", "manifest.json"}) {
    const bool present = a.files.count(name) && b.files.count(name);
    o.require(present, std::string(name) + " missing from a run");
    if (!present) continue;
    o.require(a.files.at(name) == b.files.at(name), std::string(name) + " differs between runs");
    ++compared;
  }
  o.require(!a.shifts.empty(), "shift-offsets report is empty");
  // Each offset on its own reproduces its row of the spread report.
  std::size_t rows = 0;
  for (const ShiftRow& row : a.shifts) {
    RunConfig single = a.config;
    single.shift_offsets = {row.offset - a.config.preprocess.split.offset};
    const auto again = shift_study(a.record, single);
    const bool same = again.size() == 1 && again[0].offset == row.offset && again[0].test_len == row.test_len &&
                      again[0].support_i == row.support_i && again[0].support_ii == row.support_ii &&
                      again[0].mean_pearson == row.mean_pearson && again[0].mean_mse == row.mean_mse;
    o.require(same, "offset " + std::to_string(row.offset) + " does not reproduce on its own");
    ++rows;
  }
  o.detail = std::to_string(compared) + " artifacts byte-identical across two runs; " + std::to_string(rows) +
             " shift offsets individually reproduced";
  return o;
}

Outcome trace_monotone(const RandomFits& fits, const std::vector<const PipelineRun*>& runs) {
  Outcome o;
  std::size_t count = fits.traces;
  o.require(fits.increasing_traces == 0, std::to_string(fits.increasing_traces) + " random-instance traces increase");
  for (const auto* run : runs) {
    for (const char* name : {"trace_I.csv", "trace_II.csv"}) {
      const auto values = parse_trace(run->files.at(name));
      o.require(!values.empty(), run->preset + " " + name + " is empty");
      o.require(nonincreasing(values), run->preset + " " + name + " increases");
      ++count;
    }
  }
  o.detail = std::to_string(count) + " converged-fit traces checked (random instances plus --trace CSVs)";
  return o;
}

Outcome kernel_properties() {
  Outcome o;
  SplitMix64 rng(9);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.next() % 60;
    std::vector<double> x(n);
    for (auto& v : x) v = rng.next() % 5 == 0 ? std::round(2.0 * rng.normal()) : rng.normal();
    const KernelMatrix k = build_k(x);
    const auto m = static_cast<Eigen::Index>(k.unique_count());
    bool ok = k.entries.cols() == 2 * m && k.entries.rows() == static_cast<Eigen::Index>(n);
    for (Eigen::Index i = 0; ok && i < k.entries.rows(); ++i) {
      for (Eigen::Index j = 0; j < m; ++j) {
        const double r = k.entries(i, j), f = k.entries(i, j + m);
        ok = ok && r >= 0.0 && f >= 0.0 && r * f == 0.0 &&
             r - f == x[static_cast<std::size_t>(i)] - k.breakpoints[static_cast<std::size_t>(j)];
      }
    }
    o.require(ok, "kernel invariant violated on case " + std::to_string(trial));
  }
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t d = 2 + trial % 3;
    std::vector<double> x(d);
    for (auto& v : x) v = rng.normal();
    std::vector<std::vector<double>> u(d - 1, std::vector<double>(d));
    for (auto& row : u) {
      for (auto& v : row) v = rng.normal();
    }
    const double base = kappa(x, u);
    const double alpha = 0.05 + 10.0 * rng.uniform();
    std::vector<double> scaled(d), in_span(d, 0.0);
    for (std::size_t i = 0; i < d; ++i) scaled[i] = alpha * x[i];
    for (const auto& row : u) {
      const double c = rng.normal();
      for (std::size_t i = 0; i < d; ++i) in_span[i] += c * row[i];
    }
    o.require(std::abs(kappa(scaled, u) - alpha * base) <= 1e-10 * (1.0 + alpha * base),
              "homogeneity fails on case " + std::to_string(trial));
    o.require(std::abs(kappa(in_span, u)) <= 1e-10, "zero-volume nullity fails on case " + std::to_string(trial));

    std::vector<double> xs(2 + rng.next() % 20);
    for (auto& v : xs) v = rng.normal();
    const KernelMatrix k = build_k(xs);
    const std::size_t i = rng.next() % xs.size(), j = rng.next() % k.unique_count();
    const double diff = xs[i] - k.breakpoints[j];
    const auto ri = static_cast<Eigen::Index>(i), cj = static_cast<Eigen::Index>(j);
    o.require(kappa(std::vector<double>{diff}, {}) == k.entries(ri, cj) &&
                  kappa(std::vector<double>{-diff}, {}) == k.entries(ri, cj + static_cast<Eigen::Index>(k.unique_count())),
              "d=1 kappa disagrees with the kernel on case " + std::to_string(trial));
  }
  o.detail = "1000 random kernels (three invariants), 1000 kappa cases (homogeneity, nullity, d=1 agreement)";
  return o;
}

Outcome explainability(const std::vector<const PipelineRun*>& runs) {
  Outcome o;
  SplitMix64 rng(10);
  double worst_trace = 0.0, worst_export = 0.0;
  std::size_t models = 0, breakpoints = 0;
  for (const auto* run : runs) {
    for (const char* lead : {"I", "II"}) {
      const ModelFile m = load_model_file(run->dir / (std::string("model_") + lead + ".txt"));
      const ExplainResult e = explain(m, run->record, run->digest);
      ++models;
      const std::string tag = run->preset + " lead " + lead;
      o.require(e.entries.size() == m.network.neurons.size(), tag + ": report size differs from neuron count");
      for (const auto& entry : e.entries) {
        ++breakpoints;
        const bool occurs = std::find(e.train_inputs.begin(), e.train_inputs.end(), entry.breakpoint) != e.train_inputs.end();
        o.require(occurs && !entry.time_indices.empty(), tag + ": breakpoint " + format_double(entry.breakpoint) +
                                                            " not among the training inputs");
        for (std::size_t idx : entry.time_indices) {
          o.require(e.train_inputs.at(idx) == entry.breakpoint, tag + ": highlighted index " + std::to_string(idx));
        }
      }
      std::vector<double> inputs = e.train_inputs;
      for (int i = 0; i < 1000; ++i) inputs.push_back(3.0 * rng.normal());
      const TwoLayerWeights w = export_weights(m.network);
      for (double x : inputs) {
        const PredictionTrace tr = trace(m.network, x);
        double sum = tr.intercept;
        for (const auto& term : tr.terms) sum += term.contribution;
        const double p = predict_one(m.network, x);
        worst_trace = std::max(worst_trace, std::abs(sum - p));
        worst_export = std::max(worst_export, std::abs(forward(w, x) - p));
      }
    }
  }
  o.require(worst_trace <= 1e-12, "trace sum differs from predict by " + fmt("%.3g", worst_trace));
  o.require(worst_export <= 1e-12, "exported weights differ from predict by " + fmt("%.3g", worst_export));
  o.detail = std::to_string(models) + " models, " + std::to_string(breakpoints) +
             " breakpoints all in training inputs, worst trace gap " + fmt("%.2e", worst_trace) +
             ", worst export gap " + fmt("%.2e", worst_export);
  return o;
}

template <typename Fn>
Outcome guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const std::exception& e) {
    Outcome o;
    o.require(false, std::string("exception: ") + e.what());
    o.detail = "aborted";
    return o;
  }
}

}  // namespace

int main() {
  const fs::path root = fs::temp_directory_path() / "convexecg_acceptance";
  fs::remove_all(root);

  const RandomFits fits = random_fits();
  report(1, "solver global optimality", fits.c1);
  report(2, "network/matrix equivalence", fits.c2);
  report(3, "null-solution threshold", fits.c3);

  std::vector<PipelineRun> runs;
  Outcome setup;
  try {
    runs.push_back(run_pipeline(root / "mild", "mild", 7, {}));
    // Both strong runs use the same directory, as a repeated invocation would;
    // the manifest records the input path.
    runs.push_back(run_pipeline(root / "strong", "strong", 7, {0, 25, 50}));
    fs::remove_all(root / "strong");
    runs.push_back(run_pipeline(root / "strong", "strong", 7, {0, 25, 50}));
  } catch (const std::exception& e) {
    setup.require(false, std::string("pipeline run failed: ") + e.what());
  }
  if (runs.size() != 3) {
    setup.detail = "pipeline runs did not complete";
    for (int id : {4, 5, 6, 7, 8, 10}) report(id, "pipeline criterion", setup);
    report(9, "kernel correctness", guarded(kernel_properties));
    return 1;
  }
  const std::vector<const PipelineRun*> all{&runs[0], &runs[1], &runs[2]};
  const std::vector<const PipelineRun*> distinct{&runs[0], &runs[1]};

  report(4, "protocol constants", guarded([&] { return protocol_constants(runs[1]); }));
  report(5, "synthetic end-to-end recovery", guarded([&] { return end_to_end(runs[0], runs[1]); }));
  report(6, "six-lead identities", guarded([&] { return six_lead_identities(all); }));
  report(7, "determinism", guarded([&] { return determinism(runs[1], runs[2]); }));
  report(8, "objective-trace monotonicity", guarded([&] { return trace_monotone(fits, all); }));
  report(9, "kernel correctness", guarded(kernel_properties));
  report(10, "explainability integrity", guarded([&] { return explainability(distinct); }));

  std::printf("%s: %d of 10 criteria failed\n", g_failed ? "FAIL" : "PASS", g_failed);
  return g_failed ? 1 : 0;
}
