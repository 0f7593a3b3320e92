#pragma once

// JSON run configuration with a strict schema: unknown keys and wrongly typed
// values are rejected with the offending key path.
//
//   {
//     "backbone": {...}, "model": {...}, "train": {...},
//     "augment": {...},  "metrics": {...}
//   }
//
// Every section and key is optional; omitted values keep their defaults.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "minetlab/data.hpp"
#include "minetlab/errors.hpp"
#include "minetlab/metrics.hpp"
#include "minetlab/minet.hpp"
#include "minetlab/optim.hpp"

namespace minetlab::config {

using json = nlohmann::ordered_json;

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  data::AugmentationConfig augment;
  metrics::MetricConfig metrics;

  void validate() const {
    model.validate();
    train.validate();
    augment.validate();
    metrics.validate();
    if (model.use_sim && (augment.resize_h % 32 != 0 || augment.resize_w % 32 != 0)) {
      throw ConfigError("models with SIMs need multiples of 32", "augment.resize_to");
    }
  }
};

namespace detail {

// Reads keys from one JSON object, remembering which were consumed.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError("expected an object", path_.empty() ? "<root>" : path_);
  }

  std::string key_path(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const json* find(const std::string& key) {
    auto it = j_.find(key);
    if (it == j_.end()) return nullptr;
    seen_.insert(key);
    return &*it;
  }

  void read(const std::string& key, int& out) {
    if (const json* v = find(key)) out = as_int(*v, key_path(key));
  }
  void read(const std::string& key, std::uint64_t& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_unsigned() && !(v->is_number_integer() && v->get<std::int64_t>() >= 0)) {
        throw ConfigError("expected a non-negative integer", key_path(key));
      }
      out = v->get<std::uint64_t>();
    }
  }
  void read(const std::string& key, double& out) {
    if (const json* v = find(key)) {
      if (!v->is_number()) throw ConfigError("expected a number", key_path(key));
      out = v->get<double>();
    }
  }
  void read(const std::string& key, bool& out) {
    if (const json* v = find(key)) {
      if (!v->is_boolean()) throw ConfigError("expected true or false", key_path(key));
      out = v->get<bool>();
    }
  }
  void read(const std::string& key, std::string& out) {
    if (const json* v = find(key)) {
      if (!v->is_string()) throw ConfigError("expected a string", key_path(key));
      out = v->get<std::string>();
    }
  }
  template <class V, std::size_t N>
  void read(const std::string& key, std::array<V, N>& out) {
    if (const json* v = find(key)) {
      const std::string p = key_path(key);
      if (!v->is_array() || v->size() != N) throw ConfigError("expected an array of " + std::to_string(N) + " values", p);
      for (std::size_t i = 0; i < N; ++i) {
        const std::string ip = p + "[" + std::to_string(i) + "]";
        if constexpr (std::is_integral_v<V>) {
          out[i] = as_int((*v)[i], ip);
        } else {
          if (!(*v)[i].is_number()) throw ConfigError("expected a number", ip);
          out[i] = (*v)[i].template get<V>();
        }
      }
    }
  }

  /// Rejects any key that was not read.
  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.contains(it.key())) throw ConfigError("unknown key", key_path(it.key()));
    }
  }

 private:
  static int as_int(const json& v, const std::string& path) {
    if (!v.is_number_integer()) throw ConfigError("expected an integer", path);
    const auto x = v.get<std::int64_t>();
    if (x < std::numeric_limits<int>::min() || x > std::numeric_limits<int>::max()) {
      throw ConfigError("integer out of range", path);
    }
    return static_cast<int>(x);
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <class E, class Parse>
void read_enum(ObjectReader& r, const std::string& key, E& out, Parse parse) {
  std::string s;
  if (!r.find(key)) return;
  r.read(key, s);
  try {
    out = parse(s);
  } catch (const ConfigError& e) {
    throw ConfigError(e.what(), r.key_path(key));
  }
}

}  // namespace detail

inline BackboneConfig parse_backbone(const json& j, const std::string& path = "backbone") {
  detail::ObjectReader r(j, path);
  BackboneConfig cfg;
  std::string kind;
  r.read("kind", kind);
  if (!kind.empty()) {
    BackboneKind k;
    try {
      k = parse_backbone_kind(kind);
    } catch (const ConfigError& e) {
      throw ConfigError(e.what(), r.key_path("kind"));
    }
    if (k == BackboneKind::vgg16) cfg = BackboneConfig::vgg16();
    cfg.kind = k;
  }
  r.read("channels", cfg.channels);
  r.read("depths", cfg.depths);
  r.read("batch_norm", cfg.batch_norm);
  r.read("freeze_bn_stats", cfg.freeze_bn_stats);
  r.read("mean", cfg.mean);
  r.read("std", cfg.std);
  r.finish();
  return cfg;
}

/// Reads the "model" section on top of an already parsed backbone.
inline ModelConfig parse_model(const json& j, BackboneConfig backbone, const std::string& path = "model") {
  detail::ObjectReader r(j, path);
  ModelConfig cfg;
  cfg.backbone = std::move(backbone);
  r.read("widths", cfg.widths);
  detail::read_enum(r, "decoder_upsample", cfg.decoder_upsample, parse_upsample_mode);
  detail::read_enum(r, "downsample", cfg.downsample, parse_downsample_mode);
  r.read("sim_high_divisor", cfg.sim_high_divisor);
  r.read("use_aim", cfg.use_aim);
  r.read("use_sim", cfg.use_sim);
  r.read("init_seed", cfg.init_seed);
  r.finish();
  return cfg;
}

inline TrainConfig parse_train(const json& j, const std::string& path = "train") {
  detail::ObjectReader r(j, path);
  TrainConfig cfg;
  r.read("epochs", cfg.epochs);
  r.read("batch_size", cfg.batch_size);
  r.read("lr0", cfg.lr0);
  r.read("momentum", cfg.momentum);
  r.read("weight_decay", cfg.weight_decay);
  r.read("poly_power", cfg.poly_power);
  r.read("lambda_cel", cfg.lambda_cel);
  r.read("seed", cfg.seed);
  r.read("grad_clip", cfg.grad_clip);
  r.read("shuffle", cfg.shuffle);
  r.finish();
  return cfg;
}

inline data::AugmentationConfig parse_augment(const json& j, const std::string& path = "augment") {
  detail::ObjectReader r(j, path);
  data::AugmentationConfig cfg;
  r.read("enabled", cfg.enabled);
  r.read("hflip_prob", cfg.hflip_prob);
  r.read("rotation_degrees", cfg.rotation_degrees);
  r.read("brightness", cfg.brightness);
  r.read("contrast", cfg.contrast);
  r.read("saturation", cfg.saturation);
  std::array<int, 2> size{cfg.resize_h, cfg.resize_w};
  r.read("resize_to", size);
  cfg.resize_h = size[0];
  cfg.resize_w = size[1];
  r.finish();
  return cfg;
}

inline metrics::MetricConfig parse_metrics(const json& j, const std::string& path = "metrics") {
  detail::ObjectReader r(j, path);
  metrics::MetricConfig cfg;
  r.read("beta_sq", cfg.beta_sq);
  r.read("alpha", cfg.alpha);
  r.read("threshold_count", cfg.threshold_count);
  r.read("adaptive_factor", cfg.adaptive_factor);
  r.read("weighted_beta_sq", cfg.weighted_beta_sq);
  r.read("normalize", cfg.normalize);
  r.finish();
  return cfg;
}

inline RunConfig parse_run_config(const json& j) {
  detail::ObjectReader r(j, "");
  RunConfig cfg;
  const json empty = json::object();
  const json* b = r.find("backbone");
  const json* m = r.find("model");
  const json* t = r.find("train");
  const json* a = r.find("augment");
  const json* x = r.find("metrics");
  r.finish();
  cfg.model = parse_model(m ? *m : empty, parse_backbone(b ? *b : empty));
  cfg.train = parse_train(t ? *t : empty);
  cfg.augment = parse_augment(a ? *a : empty);
  cfg.metrics = parse_metrics(x ? *x : empty);
  cfg.validate();
  return cfg;
}

inline RunConfig parse_run_config_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("invalid JSON: ") + e.what(), "<root>");
  }
  return parse_run_config(j);
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config_text(ss.str());
}

// ---------------------------------------------------------------------------
// Serialization (the inverse of the parsers above).

inline json to_json(const BackboneConfig& c) {
  json j;
  j["kind"] = to_string(c.kind);
  j["channels"] = c.channels;
  j["depths"] = c.depths;
  j["batch_norm"] = c.batch_norm;
  j["freeze_bn_stats"] = c.freeze_bn_stats;
  j["mean"] = c.mean;
  j["std"] = c.std;
  return j;
}

/// The "model" section only; the backbone is serialized separately.
inline json to_json(const ModelConfig& c) {
  json j;
  j["widths"] = c.widths;
  j["decoder_upsample"] = to_string(c.decoder_upsample);
  j["downsample"] = to_string(c.downsample);
  j["sim_high_divisor"] = c.sim_high_divisor;
  j["use_aim"] = c.use_aim;
  j["use_sim"] = c.use_sim;
  j["init_seed"] = c.init_seed;
  return j;
}

inline json to_json(const TrainConfig& c) {
  json j;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["lr0"] = c.lr0;
  j["momentum"] = c.momentum;
  j["weight_decay"] = c.weight_decay;
  j["poly_power"] = c.poly_power;
  j["lambda_cel"] = c.lambda_cel;
  j["seed"] = c.seed;
  j["grad_clip"] = c.grad_clip;
  j["shuffle"] = c.shuffle;
  return j;
}

inline json to_json(const data::AugmentationConfig& c) {
  json j;
  j["enabled"] = c.enabled;
  j["hflip_prob"] = c.hflip_prob;
  j["rotation_degrees"] = c.rotation_degrees;
  j["brightness"] = c.brightness;
  j["contrast"] = c.contrast;
  j["saturation"] = c.saturation;
  j["resize_to"] = std::array<int, 2>{c.resize_h, c.resize_w};
  return j;
}

inline json to_json(const metrics::MetricConfig& c) {
  json j;
  j["beta_sq"] = c.beta_sq;
  j["alpha"] = c.alpha;
  j["threshold_count"] = c.threshold_count;
  j["adaptive_factor"] = c.adaptive_factor;
  j["weighted_beta_sq"] = c.weighted_beta_sq;
  j["normalize"] = c.normalize;
  return j;
}

inline json to_json(const RunConfig& c) {
  json j;
  j["backbone"] = to_json(c.model.backbone);
  j["model"] = to_json(c.model);
  j["train"] = to_json(c.train);
  j["augment"] = to_json(c.augment);
  j["metrics"] = to_json(c.metrics);
  return j;
}

/// Backbone and model sections together, as stored in checkpoints.
inline json model_to_json(const ModelConfig& c) {
  json j;
  j["backbone"] = to_json(c.backbone);
  j["model"] = to_json(c);
  return j;
}

inline ModelConfig model_from_json(const json& j) {
  detail::ObjectReader r(j, "model_config");
  const json* b = r.find("backbone");
  const json* m = r.find("model");
  r.finish();
  if (!b || !m) throw ConfigError("expected backbone and model sections", "model_config");
  ModelConfig cfg = parse_model(*m, parse_backbone(*b, "model_config.backbone"), "model_config.model");
  cfg.validate();
  return cfg;
}

inline json to_json(const TrainState& s) {
  json j;
  j["epoch"] = s.epoch;
  j["global_iteration"] = s.global_iteration;
  j["total_iterations"] = s.total_iterations;
  j["current_lr"] = s.current_lr;
  j["best_validation_f_avg"] = s.best_validation_f_avg;
  // JSON has no infinity; absent means "no epoch finished yet".
  if (std::isfinite(s.best_epoch_loss)) j["best_epoch_loss"] = s.best_epoch_loss;
  j["data_seed"] = s.data_seed;
  return j;
}

inline TrainState train_state_from_json(const json& j) {
  detail::ObjectReader r(j, "train_state");
  TrainState s;
  r.read("epoch", s.epoch);
  if (const json* v = r.find("global_iteration")) s.global_iteration = v->get<std::int64_t>();
  if (const json* v = r.find("total_iterations")) s.total_iterations = v->get<std::int64_t>();
  r.read("current_lr", s.current_lr);
  r.read("best_validation_f_avg", s.best_validation_f_avg);
  r.read("best_epoch_loss", s.best_epoch_loss);
  r.read("data_seed", s.data_seed);
  r.finish();
  return s;
}

namespace detail {

inline void flatten(const json& j, const std::string& path, std::vector<std::pair<std::string, std::string>>& out) {
  if (j.is_object()) {
    for (auto it = j.begin(); it != j.end(); ++it) flatten(it.value(), path.empty() ? it.key() : path + "." + it.key(), out);
  } else {
    out.emplace_back(path, j.dump());
  }
}

}  // namespace detail

/// Field-by-field differences between two model configurations, one line
/// per differing field ("backbone.kind: toy vs vgg16-style").
inline std::vector<std::string> diff(const ModelConfig& a, const ModelConfig& b) {
  std::vector<std::pair<std::string, std::string>> fa, fb;
  detail::flatten(model_to_json(a), "", fa);
  detail::flatten(model_to_json(b), "", fb);
  std::vector<std::string> out;
  for (std::size_t i = 0; i < fa.size(); ++i) {
    if (fa[i].second != fb[i].second) out.push_back(fa[i].first + ": " + fa[i].second + " vs " + fb[i].second);
  }
  return out;
}

}  // namespace minetlab::config
