#pragma once

// Ablation rows: the FPN-like baseline and the variants adding AIMs, SIMs
// and the consistency-enhanced loss, trained on a shared split.

#include <string>
#include <vector>

#include "minetlab/config.hpp"
#include "minetlab/errors.hpp"
#include "minetlab/trainer.hpp"

namespace minetlab::ablation {

inline const std::vector<std::string>& all_rows() {
  static const std::vector<std::string> rows{"baseline", "+aim", "+sim", "+aim+sim", "+aim+sim+cel"};
  return rows;
}

struct RowSpec {
  bool use_aim = false;
  bool use_sim = false;
  bool use_cel = false;
};

inline RowSpec parse_row(const std::string& name) {
  if (name == "baseline") return {false, false, false};
  if (name == "+aim") return {true, false, false};
  if (name == "+sim") return {false, true, false};
  if (name == "+aim+sim") return {true, true, false};
  if (name == "+aim+sim+cel") return {true, true, true};
  throw ConfigError("unknown ablation row '" + name + "' (expected baseline, +aim, +sim, +aim+sim or +aim+sim+cel)",
                    "rows");
}

/// Splits a comma-separated row list, validating every name.
inline std::vector<std::string> parse_rows(const std::string& list) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= list.size()) {
    const auto comma = list.find(',', start);
    const std::string item = list.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    parse_row(item);
    out.push_back(item);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

/// The run configuration of one row: architecture switches from the row,
/// everything else from `base`. Rows without CEL train on BCEL alone.
inline config::RunConfig row_config(const config::RunConfig& base, const std::string& row) {
  const RowSpec spec = parse_row(row);
  config::RunConfig cfg = base;
  cfg.model.use_aim = spec.use_aim;
  cfg.model.use_sim = spec.use_sim;
  cfg.train.lambda_cel = spec.use_cel ? base.train.lambda_cel : 0.0;
  return cfg;
}

struct RowResult {
  std::string row;
  metrics::MetricReport report;
  std::vector<LogRow> log;
};

/// Trains the row on `ds` and scores it on the same set.
inline RowResult run_row(const config::RunConfig& base, const std::string& row, const data::Dataset& ds,
                         const fs::path& out_dir = {}) {
  const config::RunConfig cfg = row_config(base, row);
  MINet<float> model(cfg.model);
  TrainOptions opt;
  opt.out_dir = out_dir;
  opt.metric_cfg = cfg.metrics;
  auto trained = train(model, ds, cfg.train, cfg.augment, opt);
  RowResult r;
  r.row = row;
  r.log = std::move(trained.log);
  r.report = evaluate_model(model, ds, cfg.metrics);
  return r;
}

inline std::string results_csv(const std::vector<RowResult>& rows) {
  std::string s = "row,f_max,f_avg,f_w,e_m,s_m,mae\n";
  for (const auto& r : rows) {
    const auto& m = r.report;
    s += r.row + "," + report::format_double(m.f_max) + "," + report::format_double(m.f_avg) + "," +
         report::format_double(m.f_w) + "," + report::format_double(m.e_m) + "," + report::format_double(m.s_m) + "," +
         report::format_double(m.mae) + "\n";
  }
  return s;
}

}  // namespace minetlab::ablation
