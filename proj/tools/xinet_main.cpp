#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "xinet/data.hpp"
#include "xinet/errors.hpp"
#include "xinet/metrics.hpp"
#include "xinet/model.hpp"
#include "xinet/plot.hpp"
#include "xinet/train.hpp"

namespace fs = std::filesystem;
using namespace xinet;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError(path + ": cannot open");
  return std::string(std::istreambuf_iterator<char>(in), {});
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw DataError(path + ": cannot open for writing");
  out << text;
  if (!out) throw DataError(path + ": write failed");
}

struct GenOptions {
  int64_t count = 0;
  int64_t length = 1024;
  double sample_rate = 64.0;
  uint64_t seed = 0;
  std::string out_dir;
};

void run_gen(const GenOptions& opt) {
  if (opt.count < 1) throw UsageError("gen: --count must be >= 1");
  const XiNetConfig defaults;
  const int64_t unit = defaults.patch * (defaults.window << defaults.stages());
  if (opt.length % unit != 0)
    std::fprintf(stderr,
                 "warning: length %lld does not fit the default model: with patch %lld, "
                 "window %lld and %d stages the length must be a multiple of %lld\n",
                 static_cast<long long>(opt.length), static_cast<long long>(defaults.patch),
                 static_cast<long long>(defaults.window), defaults.stages(),
                 static_cast<long long>(unit));

  fs::create_directories(opt.out_dir);
  DatasetManifest manifest;
  manifest.sample_rate_hz = opt.sample_rate;
  manifest.length = opt.length;
  manifest.seed = opt.seed;
  Rng gap_rng(opt.seed ^ 0x9e3779b97f4a7c15ULL);
  const int64_t train_count = opt.count - opt.count / 5;  // 80/20
  for (int64_t i = 0; i < opt.count; ++i) {
    Waveform w = generate_waveform(opt.seed * 1000003 + i, opt.length, opt.sample_rate);
    Sample s = cut_gap(w, gap_rng);
    const std::string name = strformat("w%05lld.txt", static_cast<long long>(i));
    save_waveform(w, (fs::path(opt.out_dir) / name).string());
    manifest.files.push_back(name);
    manifest.gaps.push_back(s.gap);
    manifest.split.push_back(i < train_count ? "train" : "val");
  }
  save_manifest(manifest, (fs::path(opt.out_dir) / "manifest.json").string());
  std::printf("wrote %lld records (%lld train, %lld val) to %s\n",
              static_cast<long long>(opt.count), static_cast<long long>(train_count),
              static_cast<long long>(opt.count - train_count), opt.out_dir.c_str());
}

struct TrainOptions {
  std::string data;
  std::string config_path;
  std::string model_config_path;
  std::string variant;
  std::string out_ckpt;
  std::string loss_csv;
  bool quiet = false;
};

void run_train(const TrainOptions& opt) {
  Dataset ds = load_dataset(opt.data);
  std::vector<Sample> train_set, val_set;
  for (int64_t i : split_indices(ds.manifest, "train")) train_set.push_back(ds.samples[i]);
  for (int64_t i : split_indices(ds.manifest, "val")) val_set.push_back(ds.samples[i]);
  if (train_set.empty()) throw DataError(opt.data + ": no training samples in the manifest");

  XiNetConfig model_cfg;
  if (!opt.model_config_path.empty())
    model_cfg = config_from_json(read_file(opt.model_config_path));
  else
    model_cfg.input_length = ds.manifest.length;
  if (!opt.variant.empty()) model_cfg.variant = opt.variant;
  if (model_cfg.input_length != ds.manifest.length)
    throw DataError(strformat("model expects length %lld but the dataset has %lld",
                              static_cast<long long>(model_cfg.input_length),
                              static_cast<long long>(ds.manifest.length)));

  TrainConfig train_cfg;
  if (!opt.config_path.empty()) train_cfg = train_config_from_json(read_file(opt.config_path));

  XiNet model(model_cfg);
  const std::string csv_path =
      opt.loss_csv.empty() ? opt.out_ckpt + ".loss.csv" : opt.loss_csv;
  auto progress = [&](const EpochStats& s) {
    if (!opt.quiet)
      std::printf("epoch %3d  lr %.3e  train %.6e  val_gap_mae %.6e\n", s.epoch, s.lr,
                  s.train_loss, s.val_gap_mae);
  };
  TrainResult result = train(model, train_set, val_set, train_cfg, csv_path, progress);

  CheckpointExtra extra;
  extra.epoch = train_cfg.epochs;
  extra.opt_state = opt_state_to_tensors(result.opt_state, model.parameters());
  save_checkpoint(model, opt.out_ckpt, extra);
  std::printf("saved %s (%lld parameters), loss history in %s\n", opt.out_ckpt.c_str(),
              static_cast<long long>(model.parameter_count()), csv_path.c_str());
}

struct EvalOptions {
  std::string data;
  std::string ckpt;
  std::string baseline;
  std::string split = "val";
  int64_t margin = 0;
  std::string report_path;
};

void run_eval(const EvalOptions& opt) {
  if (opt.ckpt.empty() == opt.baseline.empty())
    throw UsageError("eval: pass exactly one of --ckpt and --baseline");
  Dataset ds = load_dataset(opt.data);
  std::vector<Sample> samples;
  for (int64_t i : split_indices(ds.manifest, opt.split)) samples.push_back(ds.samples[i]);
  if (samples.empty())
    throw DataError(strformat("%s: split '%s' is empty", opt.data.c_str(), opt.split.c_str()));

  std::string label;
  EvalReport report;
  if (!opt.baseline.empty()) {
    if (opt.baseline == "zero_fill")
      report = evaluate(samples, zero_fill_baseline, opt.margin);
    else if (opt.baseline == "linear_interp")
      report = evaluate(samples, linear_interp_baseline, opt.margin);
    else
      throw UsageError("eval: --baseline must be zero_fill or linear_interp");
    label = opt.baseline;
  } else {
    XiNet model = load_checkpoint(opt.ckpt);
    if (model.config().input_length != ds.manifest.length)
      throw DataError(strformat("checkpoint expects length %lld but the dataset has %lld",
                                static_cast<long long>(model.config().input_length),
                                static_cast<long long>(ds.manifest.length)));
    report = evaluate(
        samples, [&](const Sample& s) { return reconstruct(model, s); }, opt.margin);
    label = "model:" + model.config().variant;
  }
  std::fputs(format_table({{label, report}}).c_str(), stdout);
  if (!opt.report_path.empty()) write_file(opt.report_path, report_to_json(report));
}

struct ReconstructOptions {
  std::string ckpt;
  std::string in_path;
  std::string out_path;
  double sample_rate = 64.0;
  int64_t gap_start = -1;
  int64_t gap_len = -1;
};

void run_reconstruct(const ReconstructOptions& opt) {
  XiNet model = load_checkpoint(opt.ckpt);
  Waveform input = load_waveform(opt.in_path, opt.sample_rate);
  Sample sample;
  sample.input = input;
  sample.target = input;
  if ((opt.gap_start < 0) != (opt.gap_len < 0))
    throw UsageError("reconstruct: pass --gap-start and --gap-len together");
  if (opt.gap_start >= 0) {
    if (opt.gap_len < 1 || opt.gap_start + opt.gap_len > input.length())
      throw UsageError("reconstruct: gap lies outside the record");
    sample.gap = GapSpec{opt.gap_start, opt.gap_len};
  } else {
    sample.gap = detect_gap(input);
  }
  Waveform filled = reconstruct(model, sample);
  save_waveform(filled, opt.out_path);
  std::printf("filled gap [%lld, %lld) of %s into %s\n",
              static_cast<long long>(sample.gap.start_index),
              static_cast<long long>(sample.gap.end_index()), opt.in_path.c_str(),
              opt.out_path.c_str());
}

struct PlotOptions {
  std::string target, gapped, recon, out;
  double sample_rate = 64.0;
};

void run_plot(const PlotOptions& opt) {
  Waveform target = load_waveform(opt.target, opt.sample_rate);
  Waveform gapped = load_waveform(opt.gapped, opt.sample_rate);
  Waveform recon = load_waveform(opt.recon, opt.sample_rate);
  write_file(opt.out, render_three_panel_svg(target, gapped, recon));
  const std::string csv_path = fs::path(opt.out).replace_extension(".csv").string();
  write_file(csv_path, traces_csv(target, gapped, recon));
  std::printf("wrote %s and %s\n", opt.out.c_str(), csv_path.c_str());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Xi-Net waveform gap reconstruction"};
  app.require_subcommand(1);

  GenOptions gen;
  CLI::App* cmd_gen = app.add_subcommand("gen", "generate a synthetic dataset");
  cmd_gen->add_option("--count", gen.count, "number of records")->required();
  cmd_gen->add_option("--length", gen.length, "samples per record");
  cmd_gen->add_option("--sample-rate", gen.sample_rate, "sample rate in Hz");
  cmd_gen->add_option("--seed", gen.seed, "master seed");
  cmd_gen->add_option("--out", gen.out_dir, "output directory")->required();
  cmd_gen->callback([&] { run_gen(gen); });

  TrainOptions tr;
  CLI::App* cmd_train = app.add_subcommand("train", "train a model on a dataset");
  cmd_train->add_option("--data", tr.data, "manifest path")->required();
  cmd_train->add_option("--config", tr.config_path, "training config JSON");
  cmd_train->add_option("--model-config", tr.model_config_path, "model config JSON");
  cmd_train->add_option("--variant", tr.variant, "full, time_only, or single_encoder");
  cmd_train->add_option("--out-ckpt", tr.out_ckpt, "checkpoint path")->required();
  cmd_train->add_option("--loss-csv", tr.loss_csv, "loss history path");
  cmd_train->add_flag("--quiet", tr.quiet, "suppress per-epoch output");
  cmd_train->callback([&] { run_train(tr); });

  EvalOptions ev;
  CLI::App* cmd_eval = app.add_subcommand("eval", "evaluate a model or baseline");
  cmd_eval->add_option("--data", ev.data, "manifest path")->required();
  cmd_eval->add_option("--ckpt", ev.ckpt, "checkpoint path");
  cmd_eval->add_option("--baseline", ev.baseline, "zero_fill or linear_interp");
  cmd_eval->add_option("--split", ev.split, "train or val");
  cmd_eval->add_option("--margin", ev.margin, "gap context margin in samples");
  cmd_eval->add_option("--report", ev.report_path, "EvalReport JSON path");
  cmd_eval->callback([&] { run_eval(ev); });

  ReconstructOptions rc;
  CLI::App* cmd_rec = app.add_subcommand("reconstruct", "fill the gap of one record");
  cmd_rec->add_option("--ckpt", rc.ckpt, "checkpoint path")->required();
  cmd_rec->add_option("--in", rc.in_path, "gapped waveform file")->required();
  cmd_rec->add_option("--out", rc.out_path, "reconstructed waveform file")->required();
  cmd_rec->add_option("--sample-rate", rc.sample_rate, "sample rate in Hz");
  cmd_rec->add_option("--gap-start", rc.gap_start, "gap start (default: detect zeros)");
  cmd_rec->add_option("--gap-len", rc.gap_len, "gap length (default: detect zeros)");
  cmd_rec->callback([&] { run_reconstruct(rc); });

  PlotOptions pl;
  CLI::App* cmd_plot = app.add_subcommand("plot", "render original/gapped/reconstructed");
  cmd_plot->add_option("--target", pl.target, "original waveform file")->required();
  cmd_plot->add_option("--gapped", pl.gapped, "gapped waveform file")->required();
  cmd_plot->add_option("--recon", pl.recon, "reconstructed waveform file")->required();
  cmd_plot->add_option("--out", pl.out, "SVG output path")->required();
  cmd_plot->add_option("--sample-rate", pl.sample_rate, "sample rate in Hz");
  cmd_plot->callback([&] { run_plot(pl); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const DataError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
  return 0;
}
