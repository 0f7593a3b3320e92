#include "minetlab/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "minetlab/ablation.hpp"
#include "minetlab/checkpoint.hpp"
#include "minetlab/config.hpp"
#include "minetlab/data.hpp"
#include "minetlab/gradcheck.hpp"
#include "minetlab/image_io.hpp"
#include "minetlab/report.hpp"
#include "minetlab/trainer.hpp"

namespace minetlab::cli {

namespace fs = std::filesystem;

namespace {

/// Worker cap from MINETLAB_THREADS; 1 when unset or invalid.
unsigned worker_threads() {
  const char* env = std::getenv("MINETLAB_THREADS");
  if (!env || !*env) return 1;
  try {
    const long v = std::stol(env);
    if (v >= 1) return static_cast<unsigned>(std::min<long>(v, 256));
  } catch (...) {
  }
  return 1;
}

config::RunConfig load_config(const std::string& path) {
  return path.empty() ? config::parse_run_config(config::json::object()) : config::load_run_config(path);
}

void print_dataset_notes(const data::Dataset& ds, std::ostream& err) {
  for (const auto& m : ds.missing) err << "warning: unmatched " << m << "\n";
  for (const auto& w : ds.warnings) err << "warning: " << w << "\n";
  if (ds.corrupt_count > 0) err << "warning: " << ds.corrupt_count << " corrupt file(s) skipped\n";
}

data::Dataset load_training_data(const std::string& data_dir, int synthetic, std::uint64_t seed,
                                  const data::AugmentationConfig& aug, std::ostream& err) {
  data::Dataset ds = synthetic > 0 ? data::synth_generate(synthetic, aug.resize_h, aug.resize_w, seed)
                                   : data::load_directory(data_dir, aug.resize_h, aug.resize_w);
  print_dataset_notes(ds, err);
  if (ds.empty()) throw DataError("no usable training samples");
  return ds;
}

struct TrainArgs {
  std::string config;
  std::string data_dir;
  std::string val_dir;
  int synthetic = 0;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs;
};

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  config::RunConfig cfg = load_config(a.config);
  if (a.seed) cfg.train.seed = *a.seed;
  if (a.epochs) cfg.train.epochs = *a.epochs;
  cfg.validate();
  const data::Dataset ds = load_training_data(a.data_dir, a.synthetic, cfg.train.seed, cfg.augment, err);
  std::optional<data::Dataset> val;
  if (!a.val_dir.empty()) {
    val = data::load_directory(a.val_dir, cfg.augment.resize_h, cfg.augment.resize_w);
    print_dataset_notes(*val, err);
  }
  fs::create_directories(a.out_dir);
  report::write_text(fs::path(a.out_dir) / "config.json", config::to_json(cfg).dump(2) + "\n");

  MINet<float> model(cfg.model);
  TrainOptions opt;
  opt.out_dir = a.out_dir;
  opt.metric_cfg = cfg.metrics;
  opt.validation = val ? &*val : nullptr;
  const std::int64_t steps = steps_per_epoch(ds.size(), cfg.train.batch_size);
  opt.on_iteration = [&](const LogRow& r) {
    if ((r.iteration + 1) % steps == 0) {
      out << "epoch " << r.epoch + 1 << "/" << cfg.train.epochs << "  iteration " << r.iteration + 1 << "  loss "
          << r.total << "\n";
    }
  };
  const TrainResult res = train(model, ds, cfg.train, cfg.augment, opt);
  out << "trained " << res.state.global_iteration << " iterations on " << ds.size() << " samples; outputs in "
      << a.out_dir << "\n";
  return kExitOk;
}

// Runs the model on one image of any size: the input is resized to the
// nearest size the model accepts and the prediction resized back.
Tensor<float> predict_image(MINet<float>& model, const Tensor<float>& image) {
  const int h = image.h(), w = image.w();
  const int m = model.config().use_sim ? 32 : 16;
  const int hm = std::max(m, (h + m / 2) / m * m), wm = std::max(m, (w + m / 2) / m * m);
  Tensor<float> input = image;
  if (hm != h || wm != w) input = ops::resize_bilinear(Var<float>(image), hm, wm).value();
  data::Dataset one;
  one.samples.push_back({input, Tensor<float>(1, 1, hm, wm), "x"});
  Tensor<float> p = predict(model, one, 1).front();
  if (hm != h || wm != w) p = ops::resize_bilinear(Var<float>(p), h, w).value();
  return p;
}

int cmd_predict(const std::string& checkpoint, const std::string& images, const std::string& out_dir,
                std::ostream& out, std::ostream& err) {
  const Checkpoint ck = read_checkpoint(checkpoint);
  auto model = model_from_checkpoint<float>(ck);
  if (!fs::is_directory(images)) throw DataError("image directory not found: " + images);
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(images)) {
    if (e.is_regular_file() && io::is_image_file(e.path())) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  fs::create_directories(out_dir);
  int failures = 0, written = 0;
  for (const auto& f : files) {
    auto img = io::read_rgb(f);
    if (!img) {
      err << "error: cannot decode " << f.string() << "\n";
      ++failures;
      continue;
    }
    try {
      io::write_gray_png(fs::path(out_dir) / (f.stem().string() + ".png"), predict_image(*model, *img));
      ++written;
    } catch (const std::exception& e) {
      err << "error: " << f.string() << ": " << e.what() << "\n";
      ++failures;
    }
  }
  out << "wrote " << written << " prediction(s) to " << out_dir << "\n";
  return failures > 0 ? kExitData : kExitOk;
}

int cmd_eval(const std::string& pred_dir, const std::string& gt_dir, const std::string& report_path,
             const std::string& config_path, std::ostream& out, std::ostream& err) {
  const config::RunConfig cfg = load_config(config_path);
  const report::Evaluation ev = report::evaluate_dataset(pred_dir, gt_dir, cfg.metrics, worker_threads());
  report::write_report(report_path, ev.report, ev.ids, cfg.metrics);
  for (const auto& u : ev.unmatched) err << "warning: unmatched " << u << "\n";
  for (const auto& u : ev.unreadable) err << "warning: unreadable " << u << "\n";
  out << report::summary_json(ev.report).dump(2) << "\n";
  return ev.unmatched.empty() && ev.unreadable.empty() ? kExitOk : kExitData;
}

int cmd_gradcheck(const gradcheck::Options& opt, double tolerance, std::ostream& out) {
  const gradcheck::Report r = gradcheck::run(opt);
  auto print = [&](const char* name, const gradcheck::Worst& w) {
    out << name << ": max relative error " << w.rel_error << " at case " << w.image_case << " pixel (" << w.y << ", "
        << w.x << "), analytic " << w.analytic << ", numeric " << w.numeric << "\n";
  };
  out.precision(6);
  print("bcel", r.bcel.worst);
  print("cel", r.cel.worst);
  out << "cel intra-class spread: foreground " << r.cel_fg_spread << ", background " << r.cel_bg_spread << "\n";
  out << "cel class gap error |(g_bg - g_fg) - 2/sum(p+g)|: " << r.cel_gap_error << "\n";
  const bool ok = r.max_rel_error() < tolerance;
  out << (ok ? "gradient check passed" : "gradient check FAILED") << " (tolerance " << tolerance << ")\n";
  return ok ? kExitOk : kExitNumeric;
}

struct AblateArgs {
  std::string config;
  std::string rows;
  int synthetic = 16;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<int> epochs;
};

int cmd_ablate(const AblateArgs& a, std::ostream& out, std::ostream& err) {
  const std::vector<std::string> rows = ablation::parse_rows(a.rows);
  config::RunConfig cfg = load_config(a.config);
  if (a.seed) cfg.train.seed = *a.seed;
  if (a.epochs) cfg.train.epochs = *a.epochs;
  cfg.validate();
  const data::Dataset ds = load_training_data("", a.synthetic, cfg.train.seed, cfg.augment, err);
  std::vector<ablation::RowResult> results;
  for (const auto& row : rows) {
    out << "training row " << row << "\n";
    results.push_back(ablation::run_row(cfg, row, ds));
    out << "  f_avg " << results.back().report.f_avg << "  mae " << results.back().report.mae << "\n";
  }
  const std::string csv = ablation::results_csv(results);
  if (a.out.empty()) {
    out << csv;
  } else {
    report::write_text(a.out, csv);
    out << "wrote " << a.out << "\n";
  }
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"MINet salient object detection: training, inference and evaluation", "minetlab"};
  app.require_subcommand(1);

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train", "Train a model");
  train_cmd->add_option("--config", train_args.config, "JSON run configuration")->check(CLI::ExistingFile);
  auto* data_opt = train_cmd->add_option("--data-dir", train_args.data_dir, "Directory with images/ and masks/");
  auto* synth_opt = train_cmd->add_option("--synthetic", train_args.synthetic, "Generate N synthetic samples")
                        ->check(CLI::PositiveNumber);
  data_opt->excludes(synth_opt);
  train_cmd->add_option("--val-dir", train_args.val_dir, "Validation directory with images/ and masks/");
  train_cmd->add_option("--out-dir", train_args.out_dir, "Output directory")->required();
  train_cmd->add_option("--seed", train_args.seed, "Overrides train.seed");
  train_cmd->add_option("--epochs", train_args.epochs, "Overrides train.epochs");

  std::string ckpt, images, pred_out;
  auto* predict_cmd = app.add_subcommand("predict", "Write saliency maps for a directory of images");
  predict_cmd->add_option("--checkpoint", ckpt, "Checkpoint file")->required();
  predict_cmd->add_option("--images", images, "Input image directory")->required();
  predict_cmd->add_option("--out-dir", pred_out, "Output directory")->required();

  std::string pred_dir, gt_dir, report_path, eval_config;
  auto* eval_cmd = app.add_subcommand("eval", "Score predictions against ground-truth masks");
  eval_cmd->add_option("--pred-dir", pred_dir, "Prediction directory")->required();
  eval_cmd->add_option("--gt-dir", gt_dir, "Ground-truth directory")->required();
  eval_cmd->add_option("--report", report_path, "Report JSON path")->required();
  eval_cmd->add_option("--config", eval_config, "JSON run configuration (metrics section)")->check(CLI::ExistingFile);

  gradcheck::Options gc;
  double tolerance = 1e-4;
  auto* gc_cmd = app.add_subcommand("gradcheck", "Compare analytic and finite-difference loss gradients");
  gc_cmd->add_option("--size", gc.size, "Map side length")->check(CLI::Range(2, 256));
  gc_cmd->add_option("--seed", gc.seed, "Random seed");
  gc_cmd->add_option("--tolerance", tolerance, "Maximum relative error");
  gc_cmd->add_option("--cases", gc.cases, "Number of random cases")->check(CLI::PositiveNumber);
  gc_cmd->add_flag("--corrupt-analytic", gc.corrupt_analytic)->group("");

  AblateArgs ab;
  ab.rows = "baseline,+aim,+sim,+aim+sim,+aim+sim+cel";
  auto* ablate_cmd = app.add_subcommand("ablate", "Train and compare the ablation rows");
  ablate_cmd->add_option("--config", ab.config, "JSON run configuration")->check(CLI::ExistingFile);
  ablate_cmd->add_option("--rows", ab.rows, "Comma-separated rows");
  ablate_cmd->add_option("--synthetic", ab.synthetic, "Synthetic sample count")->check(CLI::PositiveNumber);
  ablate_cmd->add_option("--out", ab.out, "Comparison CSV path (stdout when omitted)");
  ablate_cmd->add_option("--seed", ab.seed, "Overrides train.seed");
  ablate_cmd->add_option("--epochs", ab.epochs, "Overrides train.epochs");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }

  try {
    if (*train_cmd) {
      if (train_args.data_dir.empty() && train_args.synthetic == 0) {
        err << "error: one of --data-dir or --synthetic is required\n";
        return kExitConfig;
      }
      return cmd_train(train_args, out, err);
    }
    if (*predict_cmd) return cmd_predict(ckpt, images, pred_out, out, err);
    if (*eval_cmd) return cmd_eval(pred_dir, gt_dir, report_path, eval_config, out, err);
    if (*gc_cmd) return cmd_gradcheck(gc, tolerance, out);
    if (*ablate_cmd) return cmd_ablate(ab, out, err);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const ShapeError& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitConfig;
}

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace minetlab::cli
