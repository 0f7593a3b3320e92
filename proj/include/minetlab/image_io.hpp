#pragma once

// Image file access (PNG / JPEG / BMP through OpenCV) converted to and from
// the library's tensor layout.

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <cmath>
#include <filesystem>
#include <optional>
#include <string>

#include "minetlab/errors.hpp"
#include "minetlab/metrics.hpp"
#include "minetlab/tensor.hpp"

namespace minetlab::io {

namespace fs = std::filesystem;

inline bool is_image_file(const fs::path& p) {
  std::string ext = p.extension().string();
  for (auto& ch : ext) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp";
}

/// RGB image as 1 x 3 x H x W in [0,1], optionally resized (bilinear).
/// Returns nothing when the file cannot be decoded.
inline std::optional<Tensor<float>> read_rgb(const fs::path& path, int height = 0, int width = 0) {
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) return std::nullopt;
  if (height > 0 && width > 0 && (bgr.rows != height || bgr.cols != width)) {
    cv::resize(bgr, bgr, cv::Size(width, height), 0, 0, cv::INTER_LINEAR);
  }
  Tensor<float> out(1, 3, bgr.rows, bgr.cols);
  for (int y = 0; y < bgr.rows; ++y) {
    const auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < bgr.cols; ++x) {
      for (int c = 0; c < 3; ++c) out.at(0, c, y, x) = static_cast<float>(row[x][2 - c]) / 255.0f;
    }
  }
  return out;
}

/// 8-bit grayscale codes, optionally resized with nearest-neighbour sampling.
inline std::optional<cv::Mat> read_gray_codes(const fs::path& path, int height = 0, int width = 0) {
  cv::Mat g = cv::imread(path.string(), cv::IMREAD_GRAYSCALE);
  if (g.empty()) return std::nullopt;
  if (height > 0 && width > 0 && (g.rows != height || g.cols != width)) {
    cv::resize(g, g, cv::Size(width, height), 0, 0, cv::INTER_NEAREST);
  }
  return g;
}

/// Binary mask as 1 x 1 x H x W; codes above 127 become 1.
inline std::optional<Tensor<float>> read_mask(const fs::path& path, int height = 0, int width = 0) {
  auto g = read_gray_codes(path, height, width);
  if (!g) return std::nullopt;
  Tensor<float> out(1, 1, g->rows, g->cols);
  for (int y = 0; y < g->rows; ++y) {
    const auto* row = g->ptr<unsigned char>(y);
    for (int x = 0; x < g->cols; ++x) out.at(0, 0, y, x) = row[x] > 127 ? 1.0f : 0.0f;
  }
  return out;
}

/// Grayscale image scaled to [0,1] (code / 255).
inline std::optional<metrics::GrayImage> read_gray(const fs::path& path) {
  auto g = read_gray_codes(path);
  if (!g) return std::nullopt;
  metrics::GrayImage out(g->rows, g->cols);
  for (int y = 0; y < g->rows; ++y) {
    const auto* row = g->ptr<unsigned char>(y);
    for (int x = 0; x < g->cols; ++x) out(y, x) = row[x] / 255.0;
  }
  return out;
}

/// Ground-truth mask as a binary GrayImage (codes above 127 become 1).
inline std::optional<metrics::GrayImage> read_binary_gray(const fs::path& path) {
  auto g = read_gray_codes(path);
  if (!g) return std::nullopt;
  metrics::GrayImage out(g->rows, g->cols);
  for (int y = 0; y < g->rows; ++y) {
    const auto* row = g->ptr<unsigned char>(y);
    for (int x = 0; x < g->cols; ++x) out(y, x) = row[x] > 127 ? 1.0 : 0.0;
  }
  return out;
}

/// round(255 * p) for p in [0,1].
inline unsigned char quantize(double p) {
  return static_cast<unsigned char>(std::lround(std::clamp(p, 0.0, 1.0) * 255.0));
}

/// Writes channel `c` of image `n` as an 8-bit single-channel PNG.
template <class T>
void write_gray_png(const fs::path& path, const Tensor<T>& t, int n = 0, int c = 0) {
  cv::Mat m(t.h(), t.w(), CV_8UC1);
  const T* src = t.plane(n, c);
  for (int y = 0; y < t.h(); ++y) {
    auto* row = m.ptr<unsigned char>(y);
    for (int x = 0; x < t.w(); ++x) row[x] = quantize(static_cast<double>(src[static_cast<std::size_t>(y) * t.w() + x]));
  }
  if (!cv::imwrite(path.string(), m)) throw DataError("cannot write " + path.string());
}

/// Writes a 1 x 3 x H x W [0,1] tensor as an 8-bit RGB PNG.
template <class T>
void write_rgb_png(const fs::path& path, const Tensor<T>& t, int n = 0) {
  cv::Mat m(t.h(), t.w(), CV_8UC3);
  for (int y = 0; y < t.h(); ++y) {
    auto* row = m.ptr<cv::Vec3b>(y);
    for (int x = 0; x < t.w(); ++x) {
      for (int c = 0; c < 3; ++c) row[x][2 - c] = quantize(static_cast<double>(t.at(n, c, y, x)));
    }
  }
  if (!cv::imwrite(path.string(), m)) throw DataError("cannot write " + path.string());
}

}  // namespace minetlab::io
