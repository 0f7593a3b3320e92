#pragma once

// Dataset-level evaluation from image directories and the report files:
// a JSON summary, a per-image CSV and a PR / F-measure curve CSV.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "minetlab/errors.hpp"
#include "minetlab/image_io.hpp"
#include "minetlab/metrics.hpp"

namespace minetlab::report {

namespace fs = std::filesystem;

struct Evaluation {
  metrics::MetricReport report;
  std::vector<std::string> ids;  // parallel to report.per_image
  std::vector<std::string> unmatched;
  std::vector<std::string> unreadable;
};

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Matches `pred_dir` and `gt_dir` by file stem and scores every pair.
/// Throws DataError (listing the stems) when no stems match; unmatched and
/// unreadable files are reported in the result. Prediction maps whose size
/// differs from the mask are resized (nearest neighbour).
inline Evaluation evaluate_dataset(const fs::path& pred_dir, const fs::path& gt_dir, const metrics::MetricConfig& cfg,
                                   unsigned threads = 1) {
  cfg.validate();
  for (const auto& d : {pred_dir, gt_dir}) {
    if (!fs::is_directory(d)) throw DataError("directory not found: " + d.string());
  }
  auto list = [](const fs::path& dir) {
    std::map<std::string, fs::path> out;
    for (const auto& e : fs::directory_iterator(dir)) {
      if (e.is_regular_file() && io::is_image_file(e.path())) out.emplace(e.path().stem().string(), e.path());
    }
    return out;
  };
  const auto preds = list(pred_dir), gts = list(gt_dir);
  Evaluation ev;
  std::vector<metrics::GrayImage> pv, gv;
  for (const auto& [stem, path] : preds) {
    auto it = gts.find(stem);
    if (it == gts.end()) {
      ev.unmatched.push_back(path.filename().string());
      continue;
    }
    auto g = io::read_binary_gray(it->second);
    if (!g) {
      ev.unreadable.push_back(it->second.string());
      continue;
    }
    auto codes = io::read_gray_codes(path, g->h, g->w);
    if (!codes) {
      ev.unreadable.push_back(path.string());
      continue;
    }
    metrics::GrayImage p(g->h, g->w);
    for (int y = 0; y < p.h; ++y) {
      for (int x = 0; x < p.w; ++x) p(y, x) = codes->at<unsigned char>(y, x) / 255.0;
    }
    pv.push_back(std::move(p));
    gv.push_back(std::move(*g));
    ev.ids.push_back(stem);
  }
  for (const auto& [stem, path] : gts) {
    if (!preds.contains(stem)) ev.unmatched.push_back(path.filename().string());
  }
  if (ev.ids.empty()) {
    std::string msg = "no prediction/ground-truth pairs could be evaluated";
    for (const auto& u : ev.unmatched) msg += "\n  unmatched: " + u;
    for (const auto& u : ev.unreadable) msg += "\n  unreadable: " + u;
    throw DataError(msg);
  }
  ev.report = metrics::evaluate(pv, gv, cfg, threads);
  return ev;
}

inline nlohmann::ordered_json summary_json(const metrics::MetricReport& r) {
  nlohmann::ordered_json j;
  j["f_max"] = r.f_max;
  j["f_avg"] = r.f_avg;
  j["f_w"] = r.f_w;
  j["e_m"] = r.e_m;
  j["s_m"] = r.s_m;
  j["mae"] = r.mae;
  return j;
}

inline void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
  if (!out) throw DataError("cannot write " + path.string());
}

inline std::string per_image_csv(const metrics::MetricReport& r, const std::vector<std::string>& ids) {
  std::string s = "id,mae,f_avg,f_w,s_m,e_mean,e_max,e_adaptive\n";
  for (std::size_t i = 0; i < r.per_image.size(); ++i) {
    const auto& p = r.per_image[i];
    s += (i < ids.size() ? ids[i] : std::to_string(i)) + "," + format_double(p.mae) + "," + format_double(p.f_adaptive) +
         "," + format_double(p.f_w) + "," + format_double(p.s_m) + "," + format_double(p.e.mean) + "," +
         format_double(p.e.max) + "," + format_double(p.e.adaptive) + "\n";
  }
  return s;
}

inline std::string curve_csv(const metrics::MetricReport& r, const metrics::MetricConfig& cfg) {
  std::string s = "threshold,precision,recall,f\n";
  for (std::size_t k = 0; k < r.pr_curve.size(); ++k) {
    s += format_double(metrics::threshold_at(static_cast<int>(k), cfg)) + "," + format_double(r.pr_curve[k].precision) +
         "," + format_double(r.pr_curve[k].recall) + "," + format_double(r.fm_curve[k]) + "\n";
  }
  return s;
}

/// Writes `report_path` (JSON with the six scalar metrics) and, next to it,
/// `<stem>_per_image.csv` and `<stem>_curve.csv`.
inline void write_report(const fs::path& report_path, const metrics::MetricReport& r,
                         const std::vector<std::string>& ids, const metrics::MetricConfig& cfg) {
  write_text(report_path, summary_json(r).dump(2) + "\n");
  const fs::path dir = report_path.parent_path();
  const std::string stem = report_path.stem().string();
  write_text(dir / (stem + "_per_image.csv"), per_image_csv(r, ids));
  write_text(dir / (stem + "_curve.csv"), curve_csv(r, cfg));
}

}  // namespace minetlab::report
