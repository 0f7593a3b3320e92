#pragma once

// Training loop (momentum SGD, poly schedule, BCEL + lambda * CEL),
// checkpointing, CSV logging and model evaluation.

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "minetlab/checkpoint.hpp"
#include "minetlab/data.hpp"
#include "minetlab/losses.hpp"
#include "minetlab/metrics.hpp"
#include "minetlab/minet.hpp"
#include "minetlab/optim.hpp"
#include "minetlab/report.hpp"

namespace minetlab {

namespace fs = std::filesystem;

struct LogRow {
  std::int64_t iteration = 0;  // optimizer steps completed before this one
  int epoch = 0;
  double lr = 0.0;
  double bcel = 0.0;
  double cel = 0.0;
  double total = 0.0;
};

inline std::string log_csv_header() { return "iteration,epoch,lr,bcel,cel,total\n"; }

inline std::string log_csv_line(const LogRow& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%lld,%d,%.17g,%.17g,%.17g,%.17g\n", static_cast<long long>(r.iteration), r.epoch, r.lr,
                r.bcel, r.cel, r.total);
  return buf;
}

struct TrainOptions {
  // Directory for log.csv, last.ckpt and best.ckpt; empty keeps everything
  // in memory.
  fs::path out_dir;
  // Scored after every epoch when given; selects best.ckpt by F_avg.
  const data::Dataset* validation = nullptr;
  metrics::MetricConfig metric_cfg;
  std::function<void(const LogRow&)> on_iteration;
};

struct TrainResult {
  std::vector<LogRow> log;
  TrainState state;
};

/// Visiting order for one epoch: a seeded Fisher-Yates shuffle.
inline std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch, bool shuffle) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (!shuffle || n < 2) return order;
  Rng rng(mix_seed(seed, 0x6f72646572ull + static_cast<std::uint64_t>(epoch)));
  for (std::size_t i = n - 1; i > 0; --i) {
    const auto j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(i)));
    std::swap(order[i], order[j]);
  }
  return order;
}

inline std::int64_t steps_per_epoch(std::size_t samples, int batch_size) {
  return static_cast<std::int64_t>((samples + batch_size - 1) / batch_size);
}

struct Batch {
  Tensor<float> images;
  Tensor<float> masks;
};

inline Batch make_batch(const data::Dataset& ds, const std::vector<std::size_t>& indices,
                        const data::AugmentationConfig& aug, std::uint64_t seed, int epoch) {
  std::vector<Tensor<float>> images, masks;
  for (std::size_t idx : indices) {
    const auto& s = ds.samples.at(idx);
    Rng rng = data::sample_rng(seed, s.id, static_cast<std::uint64_t>(epoch));
    data::SamplePair a = data::augment(s, aug, rng);
    images.push_back(std::move(a.image));
    masks.push_back(std::move(a.mask));
  }
  std::vector<const Tensor<float>*> ip, mp;
  for (std::size_t i = 0; i < images.size(); ++i) {
    ip.push_back(&images[i]);
    mp.push_back(&masks[i]);
  }
  return {stack_batch(ip), stack_batch(mp)};
}

inline std::uint64_t hash_tensor(const Tensor<float>& t) {
  std::uint64_t h = 1469598103934665603ull;
  for (float v : t.storage()) {
    h ^= std::bit_cast<std::uint32_t>(v);
    h *= 1099511628211ull;
  }
  return h;
}

/// Inference-mode probabilities for every sample, 1 x 1 x H x W each.
template <class T>
std::vector<Tensor<T>> predict(MINet<T>& model, const data::Dataset& ds, int batch_size = 4) {
  NoGradGuard guard;
  RunContext ctx;
  ctx.training = false;
  std::vector<Tensor<T>> out;
  for (std::size_t first = 0; first < ds.size(); first += batch_size) {
    const std::size_t last = std::min(ds.size(), first + batch_size);
    std::vector<const Tensor<float>*> ptrs;
    for (std::size_t i = first; i < last; ++i) ptrs.push_back(&ds.samples[i].image);
    const Tensor<T> images = stack_batch(ptrs).template cast<T>();
    const Tensor<T> p = model.forward(ctx, images).value();
    for (std::size_t i = 0; i < last - first; ++i) out.push_back(p.slice_batch(static_cast<int>(i), 1));
  }
  return out;
}

/// Quantizes predictions to 8-bit codes (as written to disk) and scores them
/// against the dataset masks.
template <class T>
metrics::MetricReport evaluate_model(MINet<T>& model, const data::Dataset& ds, const metrics::MetricConfig& cfg,
                                     unsigned threads = 1, std::vector<Tensor<T>>* predictions = nullptr) {
  auto preds = predict(model, ds);
  std::vector<metrics::GrayImage> pv, gv;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& m = ds.samples[i].mask;
    metrics::GrayImage p(m.h(), m.w()), g(m.h(), m.w());
    for (std::size_t k = 0; k < m.size(); ++k) {
      p.v[k] = io::quantize(static_cast<double>(preds[i][k])) / 255.0;
      g.v[k] = m[k];
    }
    pv.push_back(std::move(p));
    gv.push_back(std::move(g));
  }
  if (predictions) *predictions = std::move(preds);
  return metrics::evaluate(pv, gv, cfg, threads);
}

/// Runs cfg.epochs epochs of SGD over `ds`. Each sample's augmentation is
/// drawn from (cfg.seed, id, epoch), so a given seed always yields the same
/// log in single-threaded mode.
template <class T>
TrainResult train(MINet<T>& model, const data::Dataset& ds, const TrainConfig& cfg,
                  const data::AugmentationConfig& aug, const TrainOptions& opt = {}) {
  cfg.validate();
  aug.validate();
  if (ds.empty()) throw DataError("training set is empty");
  const std::int64_t steps = steps_per_epoch(ds.size(), cfg.batch_size);
  TrainResult result;
  TrainState& st = result.state;
  st.total_iterations = steps * cfg.epochs;
  st.data_seed = cfg.seed;
  st.current_lr = poly_lr(0, st.total_iterations, cfg.lr0, cfg.poly_power);

  std::ofstream log_file;
  if (!opt.out_dir.empty()) {
    fs::create_directories(opt.out_dir);
    log_file.open(opt.out_dir / "log.csv", std::ios::binary | std::ios::trunc);
    if (!log_file) throw DataError("cannot write " + (opt.out_dir / "log.csv").string());
    log_file << log_csv_header();
  }

  Sgd<T> sgd(cfg.momentum, cfg.weight_decay);
  losses::LossOptions loss_opt;
  loss_opt.lambda = cfg.lambda_cel;
  RunContext ctx;
  ctx.training = true;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = epoch_order(ds.size(), cfg.seed, epoch, cfg.shuffle);
    double epoch_loss = 0.0;
    for (std::int64_t s = 0; s < steps; ++s) {
      const std::size_t first = static_cast<std::size_t>(s) * cfg.batch_size;
      const std::size_t last = std::min(ds.size(), first + cfg.batch_size);
      const std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(first),
                                         order.begin() + static_cast<std::ptrdiff_t>(last));
      const Batch batch = make_batch(ds, idx, aug, cfg.seed, epoch);
      const double lr = poly_lr(st.global_iteration, st.total_iterations, cfg.lr0, cfg.poly_power);

      auto params = model.parameters();
      params.zero_grad();
      Var<T> pred = model.forward(ctx, batch.images.template cast<T>());
      const Tensor<double> p = pred.value().template cast<double>();
      const Tensor<double> g = batch.masks.template cast<double>();
      auto fail = [&](const char* what, double bcel, double cel, double total) {
        char buf[512];
        std::snprintf(buf, sizeof buf,
                      "%s at iteration %lld (epoch %d): input hash %016llx, lr %.17g, bcel %.17g, cel %.17g, "
                      "total %.17g",
                      what, static_cast<long long>(st.global_iteration), epoch,
                      static_cast<unsigned long long>(hash_tensor(batch.images)), lr, bcel, cel, total);
        throw NumericError(buf);
      };
      const double nan = std::numeric_limits<double>::quiet_NaN();
      for (double v : p.storage()) {
        if (!std::isfinite(v)) fail("non-finite prediction", nan, nan, nan);
      }
      const losses::LossBreakdown loss = losses::total_loss(p, g, loss_opt);
      if (!std::isfinite(loss.total) || !std::isfinite(loss.bcel) || !std::isfinite(loss.cel)) {
        fail("non-finite loss", loss.bcel, loss.cel, loss.total);
      }
      backward(pred, losses::total_loss_grad(p, g, loss_opt).template cast<T>());
      sgd.step(params, lr, cfg.grad_clip);

      const LogRow row{st.global_iteration, epoch, lr, loss.bcel, loss.cel, loss.total};
      result.log.push_back(row);
      if (log_file) log_file << log_csv_line(row);
      if (opt.on_iteration) opt.on_iteration(row);
      epoch_loss += loss.total;
      ++st.global_iteration;
      st.current_lr = poly_lr(st.global_iteration, st.total_iterations, cfg.lr0, cfg.poly_power);
    }
    st.epoch = epoch + 1;
    epoch_loss /= static_cast<double>(steps);

    bool improved = false;
    if (opt.validation && !opt.validation->empty()) {
      const double f = evaluate_model(model, *opt.validation, opt.metric_cfg).f_avg;
      improved = f > st.best_validation_f_avg;
      if (improved) st.best_validation_f_avg = f;
    }
    if (epoch_loss < st.best_epoch_loss) {
      if (!opt.validation) improved = true;
      st.best_epoch_loss = epoch_loss;
    }
    if (!opt.out_dir.empty()) {
      log_file.flush();
      const Checkpoint ck = make_checkpoint(model, st);
      write_checkpoint(opt.out_dir / "last.ckpt", ck);
      if (improved) write_checkpoint(opt.out_dir / "best.ckpt", ck);
    }
  }
  return result;
}

/// Loads a checkpoint, writes one 8-bit PNG per sample into `pred_dir` (when
/// non-empty) and scores the predictions. With `expected`, the checkpoint's
/// configuration must match it field by field.
inline metrics::MetricReport evaluate_checkpoint(const fs::path& checkpoint, const data::Dataset& ds,
                                                 const metrics::MetricConfig& cfg, const fs::path& pred_dir = {},
                                                 const ModelConfig* expected = nullptr, unsigned threads = 1) {
  const Checkpoint ck = read_checkpoint(checkpoint);
  if (expected) {
    const auto d = config::diff(*expected, ck.model_config);
    if (!d.empty()) {
      std::string msg = "checkpoint configuration differs from the expected one:";
      for (const auto& line : d) msg += "\n  " + line;
      throw ConfigError(msg);
    }
  }
  auto model = model_from_checkpoint<float>(ck);
  std::vector<Tensor<float>> preds;
  auto report = evaluate_model(*model, ds, cfg, threads, &preds);
  if (!pred_dir.empty()) {
    fs::create_directories(pred_dir);
    for (std::size_t i = 0; i < ds.size(); ++i) io::write_gray_png(pred_dir / (ds.samples[i].id + ".png"), preds[i]);
  }
  return report;
}

}  // namespace minetlab
