#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <list>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "convexecg/format.hpp"
#include "convexecg/kernel.hpp"
#include "convexecg/pipeline.hpp"
#include "convexecg/synth.hpp"

namespace fs = std::filesystem;
using namespace convexecg;

namespace {

struct Globals {
  std::string config_path;
  std::optional<std::string> out_dir;
  std::optional<std::string> seed;
};

// Flags that map one-to-one onto config keys.
struct Overrides {
  // A list keeps the bound addresses stable as flags are added.
  std::list<std::pair<std::string, std::optional<std::string>>> slots;

  void bind(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
    slots.emplace_back(key, std::nullopt);
    app->add_option(flag, slots.back().second, help);
  }
};

template <typename Fn>
auto stage(Stage s, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(s, e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw StageError(Stage::kIo, "cannot write '" + path.string() + "'");
}

ModelFile load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StageError(Stage::kIo, "cannot open '" + path + "'");
  return stage(Stage::kModel, [&] { return read_model(in); });
}

std::string model_text(const LeadModelResult& m, const RunConfig& cfg, const std::string& digest) {
  std::ostringstream out;
  write_model(m.network, model_metadata(cfg, m, digest), out);
  return out.str();
}

EcgRecord load_record(const std::string& path, double rate) {
  return stage(Stage::kIo, [&] { return read_record_file(path, rate); });
}

std::string record_text(const EcgRecord& record) {
  std::ostringstream out;
  write_record(record, out);
  return out.str();
}

std::string kernel_csv(const KernelMatrix& k) {
  std::string out;
  for (std::size_t j = 0; j < k.columns.size(); ++j) {
    out += (j ? "," : "");
    out += std::string(to_string(k.columns[j].orientation)) + "@" + format_double(k.breakpoints[k.columns[j].breakpoint_index]);
  }
  out += '\n';
  for (Eigen::Index r = 0; r < k.entries.rows(); ++r) {
    for (Eigen::Index c = 0; c < k.entries.cols(); ++c) {
      out += (c ? "," : "");
      out += format_double(k.entries(r, c));
    }
    out += '\n';
  }
  return out;
}

std::vector<double> parse_grid(const std::string& text) {
  std::vector<double> grid;
  for (auto part : split_view(text, ',')) {
    const auto v = parse_double(trim(part));
    if (!v) throw StageError(Stage::kConfig, "bad lambda grid entry '" + std::string(part) + "'");
    grid.push_back(*v);
  }
  return grid;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Convex two-layer ReLU reconstruction of frontal-plane ECG leads from a single channel"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  Globals g;
  app.add_option("--config", g.config_path, "Flat key = value config file")->check(CLI::ExistingFile);
  app.add_option("--out-dir", g.out_dir, "Output directory");
  app.add_option("--seed", g.seed, "Seed for synthetic generation");

  Overrides ov;
  const auto add_common = [&](CLI::App* cmd) {
    ov.bind(cmd, "--input,-i", "input", "Input CSV record");
    ov.bind(cmd, "--sample-rate", "sample_rate", "Input sample rate in Hz");
    ov.bind(cmd, "--input-channel", "input_channel", "Model input channel label");
    ov.bind(cmd, "--low-cut", "low_cut", "Band-pass low edge (Hz)");
    ov.bind(cmd, "--high-cut", "high_cut", "Band-pass high edge (Hz)");
    ov.bind(cmd, "--order", "order", "Butterworth order per edge");
    ov.bind(cmd, "--decimate", "decimate", "Decimation factor");
    ov.bind(cmd, "--train-len", "train_len", "Training window length (decimated samples)");
    ov.bind(cmd, "--test-len", "test_len", "Test window length (decimated samples)");
    ov.bind(cmd, "--offset", "offset", "Training window start (decimated samples)");
  };
  const auto add_solver = [&](CLI::App* cmd) {
    ov.bind(cmd, "--lambda", "lambda", "L1 weight for both leads");
    ov.bind(cmd, "--lambda-i", "lambda_I", "L1 weight for lead I");
    ov.bind(cmd, "--lambda-ii", "lambda_II", "L1 weight for lead II");
    ov.bind(cmd, "--kkt-tol", "kkt_tol", "KKT residual tolerance");
    ov.bind(cmd, "--max-iters", "max_iters", "Iteration cap");
    ov.bind(cmd, "--algorithm", "algorithm", "accelerated_proximal or coordinate_descent");
  };

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic ICM, I, II record");
  std::string synth_map = "strong";
  double map_noise = 0.02, lead_noise = 0.0, duration = 5.0, heart_rate = 72.0, hr_jitter = 0.0;
  double synth_rate = 500.0;
  synth->add_option("--map", synth_map, "identity, mild, strong, cubic_squash, saturating or square")
      ->capture_default_str();
  synth->add_option("--map-noise", map_noise, "ICM noise std (mV)")->capture_default_str();
  synth->add_option("--lead-noise", lead_noise, "Lead noise std (mV)")->capture_default_str();
  synth->add_option("--duration", duration, "Seconds")->capture_default_str();
  synth->add_option("--heart-rate", heart_rate, "Beats per minute")->capture_default_str();
  synth->add_option("--hr-jitter", hr_jitter, "Relative RR jitter")->capture_default_str();
  synth->add_option("--sample-rate", synth_rate, "Hz")->capture_default_str();

  auto* pre = app.add_subcommand("preprocess", "Band-pass, decimate and standardize a record");
  add_common(pre);

  auto* train_cmd = app.add_subcommand("train", "Fit the lead I and lead II networks");
  add_common(train_cmd);
  add_solver(train_cmd);
  ov.bind(train_cmd, "--shift-offsets", "shift_offsets", "Comma-separated training window shifts");
  bool trace_flag = false, dump_k = false;
  train_cmd->add_flag("--trace", trace_flag, "Write per-iteration objective values");
  train_cmd->add_flag("--dump-k", dump_k, "Write the kernel matrix as CSV");

  auto* recon = app.add_subcommand("reconstruct", "Predict I and II and derive the six leads");
  add_common(recon);
  std::string model_i_path, model_ii_path;
  recon->add_option("--model-i", model_i_path, "Lead I model file")->required();
  recon->add_option("--model-ii", model_ii_path, "Lead II model file")->required();

  auto* eval_cmd = app.add_subcommand("evaluate", "Score a reconstruction against a truth record");
  add_common(eval_cmd);
  std::string recon_path, eval_model;
  eval_cmd->add_option("--reconstruction", recon_path, "Six-lead reconstruction CSV")->required();
  eval_cmd->add_option("--model", eval_model, "Take preprocessing parameters from this model file");

  auto* explain_cmd = app.add_subcommand("explain", "Breakpoint report and plots for one model");
  add_common(explain_cmd);
  std::string explain_model;
  explain_cmd->add_option("--model", explain_model, "Model file")->required();

  auto* sweep = app.add_subcommand("sweep-lambda", "Fit both leads over a grid of L1 weights");
  add_common(sweep);
  add_solver(sweep);
  std::string grid_text = "0.0001,0.001,0.003,0.01,0.03,0.1,0.3,1";
  unsigned jobs = 1;
  sweep->add_option("--grid", grid_text, "Comma-separated lambda values")->capture_default_str();
  sweep->add_option("--jobs", jobs, "Worker threads")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(Stage::kConfig);
  }

  try {
    RunConfig cfg;
    if (!g.config_path.empty()) cfg = load_config_file(g.config_path, cfg);
    if (g.out_dir) cfg.set("out_dir", *g.out_dir);
    if (g.seed) cfg.set("seed", *g.seed);
    for (const auto& [key, value] : ov.slots) {
      if (value) cfg.set(key, *value);
    }
    if (trace_flag) cfg.trace = true;

    const fs::path out = cfg.out_dir;
    stage(Stage::kIo, [&] { fs::create_directories(out); });

    if (synth->parsed()) {
      SynthConfig sc = default_synth_config();
      sc.duration_s = duration;
      sc.heart_rate_bpm = heart_rate;
      sc.hr_jitter = hr_jitter;
      sc.sample_rate_hz = synth_rate;
      sc.noise_std_mv = lead_noise;
      sc.seed = cfg.seed;
      IcmMapSpec map;
      if (synth_map == "mild" || synth_map == "strong") {
        map = piecewise_preset(synth_map);
      } else {
        map.kind = stage(Stage::kConfig, [&] { return icm_map_kind_from_string(synth_map); });
      }
      map.noise_std_mv = map_noise;
      map.seed = SplitMix64(cfg.seed).next();
      const EcgRecord record = stage(Stage::kConfig, [&] { return generate_record(sc, map); });
      write_text(out / "record.csv", record_text(record));
      write_text(out / "synth_config.txt", describe(sc, map));
      return 0;
    }

    stage(Stage::kConfig, [&] { cfg.validate(); });
    const EcgRecord record = load_record(cfg.input_path, cfg.sample_rate_hz);
    const std::string digest = record_digest(cfg.input_path);

    if (pre->parsed()) {
      const PreparedRecord p = prepare(record, cfg.preprocess);
      std::vector<Channel> mv, z;
      std::string stats = "channel,mean,std\n";
      for (const auto& [label, ch] : p.channels) {
        mv.push_back({label, ch.mv});
        z.push_back({label, ch.standardized});
        stats += label + "," + format_double(ch.stats.mean) + "," + format_double(ch.stats.std) + "\n";
      }
      write_text(out / "preprocessed_mv.csv", record_text(EcgRecord(p.rate_hz, mv)));
      write_text(out / "preprocessed_z.csv", record_text(EcgRecord(p.rate_hz, z)));
      write_text(out / "stats.csv", stats);
      return 0;
    }

    if (train_cmd->parsed()) {
      const TrainResult r = train(record, cfg, digest);
      const std::vector<ShiftRow> shifts = shift_study(record, cfg);
      write_text(out / "model_I.txt", model_text(r.model_i, cfg, digest));
      write_text(out / "model_II.txt", model_text(r.model_ii, cfg, digest));
      write_text(out / "manifest.json", manifest_json(cfg, r, shifts));
      write_text(out / "report.csv", report_csv(r.report));
      write_text(out / "baseline_report.csv", report_csv(r.baseline_report));
      write_text(out / "test_prediction.csv", record_text(frame_to_record(r.predicted_test)));
      write_text(out / "test_overlay.svg", overlay_svg(r.predicted_test, r.truth_test));
      if (!shifts.empty()) write_text(out / "shift_offsets.csv", shift_csv(shifts));
      if (cfg.trace) {
        write_text(out / "trace_I.csv", trace_csv(r.model_i.solution.trace));
        write_text(out / "trace_II.csv", trace_csv(r.model_ii.solution.trace));
      }
      if (dump_k) write_text(out / "kernel.csv", kernel_csv(r.model_i.kernel));
      std::printf("lead I: support %zu, kkt %.3g\nlead II: support %zu, kkt %.3g\nmean pearson %.4f (linear %.4f)\n",
                  r.model_i.solution.support.size(), r.model_i.solution.kkt_residual,
                  r.model_ii.solution.support.size(), r.model_ii.solution.kkt_residual, r.report.mean_pearson,
                  r.baseline_report.mean_pearson);
      return 0;
    }

    if (recon->parsed()) {
      const ModelFile mi = load_model(model_i_path);
      const ModelFile mii = load_model(model_ii_path);
      const SixLeadFrame frame = reconstruct(mi, mii, record, cfg.input_channel);
      write_text(out / "reconstruction.csv", record_text(frame_to_record(frame)));
      const auto train_end = cfg.preprocess.split.offset + cfg.preprocess.split.train_len;
      write_text(out / "reconstruction.svg", reconstruction_svg(frame, train_end));
      return 0;
    }

    if (eval_cmd->parsed()) {
      PreprocessConfig pc = cfg.preprocess;
      if (!eval_model.empty()) pc = preprocess_from_metadata(load_model(eval_model).metadata);
      const double rate = cfg.sample_rate_hz / static_cast<double>(pc.decimate);
      const EcgRecord recon_rec = load_record(recon_path, rate);
      const SixLeadFrame predicted = stage(Stage::kIo, [&] { return record_to_frame(recon_rec); });
      const LeadReport report = evaluate_reconstruction(predicted, record, pc);
      write_text(out / "evaluation.csv", report_csv(report));
      const PreparedRecord p = stage(Stage::kPreprocess, [&] { return prepare(record, pc); });
      const SixLeadFrame truth = derive_six(p.channel("I").mv, p.channel("II").mv, rate);
      write_text(out / "evaluation_overlay.svg", overlay_svg(predicted, truth));
      for (const auto& w : report.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
      std::printf("mean pearson %.4f\n", report.mean_pearson);
      return 0;
    }

    if (explain_cmd->parsed()) {
      const ModelFile m = load_model(explain_model);
      const ExplainResult e = explain(m, record, digest);
      write_text(out / ("breakpoints_" + e.lead + ".csv"), breakpoint_csv(e.entries));
      write_text(out / ("function_" + e.lead + ".svg"), function_svg(m.network, e));
      write_text(out / ("timeseries_" + e.lead + ".svg"), timeseries_svg(e));
      return 0;
    }

    if (sweep->parsed()) {
      const SweepResult s = sweep_lambda(record, cfg, parse_grid(grid_text), jobs);
      write_text(out / "sweep.csv", sweep_csv(s));
      write_text(out / "sweep.svg", sweep_svg(s));
      return 0;
    }
  } catch (const StageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return static_cast<int>(e.stage());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
