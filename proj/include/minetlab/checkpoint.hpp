#pragma once

// Checkpoint archive:
//
//   "MINETLAB1\n"
//   uint64 little-endian header length
//   JSON header {format_version, model_config, train_state,
//                tensors: [{name, shape, offset}]}
//   payload: every tensor as float64 little-endian, at its offset (in values)
//
// Tensors are stored in name order, so equal models give equal bytes.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "minetlab/config.hpp"
#include "minetlab/errors.hpp"
#include "minetlab/minet.hpp"
#include "minetlab/optim.hpp"

namespace minetlab {

inline constexpr char kCheckpointMagic[] = "MINETLAB1\n";
inline constexpr int kCheckpointFormatVersion = 1;

struct Checkpoint {
  ModelConfig model_config;
  TrainState train_state;
  std::map<std::string, Tensor<double>> tensors;
};

namespace detail {

inline void write_u64_le(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

inline std::uint64_t read_u64_le(std::istream& in) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) throw DataError("checkpoint truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

}  // namespace detail

inline void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  using config::json;
  json header;
  header["format_version"] = kCheckpointFormatVersion;
  header["model_config"] = config::model_to_json(ck.model_config);
  header["train_state"] = config::to_json(ck.train_state);
  json entries = json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : ck.tensors) {
    entries.push_back({{"name", name}, {"shape", {t.n(), t.c(), t.h(), t.w()}}, {"offset", offset}});
    offset += t.size();
  }
  header["tensors"] = std::move(entries);
  const std::string text = header.dump();

  // Write to a sibling file first so a crash never leaves a partial archive.
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write checkpoint " + path.string());
    out.write(kCheckpointMagic, sizeof(kCheckpointMagic) - 1);
    detail::write_u64_le(out, text.size());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& [name, t] : ck.tensors) {
      for (double v : t.storage()) detail::write_u64_le(out, std::bit_cast<std::uint64_t>(v));
    }
    if (!out) throw DataError("cannot write checkpoint " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

inline Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path.string());
  char magic[sizeof(kCheckpointMagic) - 1];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) {
    throw DataError(path.string() + " is not a minetlab checkpoint");
  }
  const std::uint64_t len = detail::read_u64_le(in);
  if (len > (1ull << 30)) throw DataError("checkpoint header too large");
  std::string text(len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(len))) throw DataError("checkpoint truncated");
  config::json header;
  try {
    header = config::json::parse(text);
  } catch (const config::json::parse_error& e) {
    throw DataError(std::string("checkpoint header is not valid JSON: ") + e.what());
  }
  if (header.value("format_version", 0) != kCheckpointFormatVersion) {
    throw DataError("unsupported checkpoint format version");
  }
  Checkpoint ck;
  ck.model_config = config::model_from_json(header.at("model_config"));
  ck.train_state = config::train_state_from_json(header.at("train_state"));
  std::vector<std::pair<std::string, Shape>> layout;
  for (const auto& e : header.at("tensors")) {
    const auto s = e.at("shape");
    layout.emplace_back(e.at("name").get<std::string>(),
                        Shape{s.at(0).get<int>(), s.at(1).get<int>(), s.at(2).get<int>(), s.at(3).get<int>()});
  }
  for (const auto& [name, shape] : layout) {
    Tensor<double> t(shape);
    for (auto& v : t.storage()) v = std::bit_cast<double>(detail::read_u64_le(in));
    ck.tensors.emplace(name, std::move(t));
  }
  return ck;
}

template <class T>
Checkpoint make_checkpoint(MINet<T>& model, const TrainState& state) {
  Checkpoint ck;
  ck.model_config = model.config();
  ck.train_state = state;
  for (auto& [name, t] : named_tensors(model.parameters())) ck.tensors.emplace(name, t.template cast<double>());
  return ck;
}

/// Copies a checkpoint's tensors into `model`. The configurations must agree;
/// otherwise the error lists every differing field.
template <class T>
void load_into(MINet<T>& model, const Checkpoint& ck) {
  const auto d = config::diff(model.config(), ck.model_config);
  if (!d.empty()) {
    std::string msg = "checkpoint configuration differs from the model:";
    for (const auto& line : d) msg += "\n  " + line;
    throw ConfigError(msg);
  }
  model.load_named_parameters(ck.tensors, true);
}

/// Builds a model from a checkpoint's own configuration.
template <class T>
std::unique_ptr<MINet<T>> model_from_checkpoint(const Checkpoint& ck) {
  auto model = std::make_unique<MINet<T>>(ck.model_config);
  load_into(*model, ck);
  return model;
}

}  // namespace minetlab
