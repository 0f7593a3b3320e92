#pragma once

// Image/mask datasets: directory and manifest loading, training-time
// augmentation and a synthetic-shapes generator.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "minetlab/errors.hpp"
#include "minetlab/image_io.hpp"
#include "minetlab/rng.hpp"
#include "minetlab/tensor.hpp"

namespace minetlab::data {

namespace fs = std::filesystem;

/// One training example. `image` is 1 x 3 x H x W in [0,1]; `mask` is
/// 1 x 1 x H x W with values in {0, 1}.
struct SamplePair {
  Tensor<float> image;
  Tensor<float> mask;
  std::string id;
};

struct Dataset {
  std::vector<SamplePair> samples;
  // Stems present on only one side (image without mask or the reverse).
  std::vector<std::string> missing;
  std::vector<std::string> warnings;
  std::size_t corrupt_count = 0;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
};

struct AugmentationConfig {
  bool enabled = true;
  double hflip_prob = 0.5;
  double rotation_degrees = 15.0;  // angle drawn uniformly from [-r, r]
  double brightness = 0.2;
  double contrast = 0.2;
  double saturation = 0.2;
  int resize_h = 320;
  int resize_w = 320;

  void validate() const {
    if (!(hflip_prob >= 0 && hflip_prob <= 1)) throw ConfigError("must lie in [0,1]", "augment.hflip_prob");
    if (!(rotation_degrees >= 0 && rotation_degrees <= 180)) {
      throw ConfigError("must lie in [0,180]", "augment.rotation_degrees");
    }
    if (!(brightness >= 0 && brightness < 1)) throw ConfigError("must lie in [0,1)", "augment.brightness");
    if (!(contrast >= 0 && contrast < 1)) throw ConfigError("must lie in [0,1)", "augment.contrast");
    if (!(saturation >= 0 && saturation < 1)) throw ConfigError("must lie in [0,1)", "augment.saturation");
    if (resize_h <= 0 || resize_h % 16 != 0) throw ConfigError("must be a positive multiple of 16", "augment.resize_h");
    if (resize_w <= 0 || resize_w % 16 != 0) throw ConfigError("must be a positive multiple of 16", "augment.resize_w");
  }

  friend bool operator==(const AugmentationConfig&, const AugmentationConfig&) = default;
};

// ---------------------------------------------------------------------------
// Loading.

namespace detail {

inline std::map<std::string, fs::path> images_by_stem(const fs::path& dir) {
  std::map<std::string, fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && io::is_image_file(entry.path())) out.emplace(entry.path().stem().string(), entry.path());
  }
  return out;
}

inline bool load_one(Dataset& ds, const std::string& id, const fs::path& image_path, const fs::path& mask_path, int h,
                     int w) {
  auto image = io::read_rgb(image_path, h, w);
  if (!image) {
    ds.warnings.push_back("skipping '" + id + "': cannot decode " + image_path.string());
    ++ds.corrupt_count;
    return false;
  }
  auto mask = io::read_mask(mask_path, h, w);
  if (!mask) {
    ds.warnings.push_back("skipping '" + id + "': cannot decode " + mask_path.string());
    ++ds.corrupt_count;
    return false;
  }
  ds.samples.push_back({std::move(*image), std::move(*mask), id});
  return true;
}

}  // namespace detail

/// Pairs images and masks by file stem, sorted by stem. Images are resized
/// bilinearly, masks by nearest neighbour and binarized at code 127.
inline Dataset load_pairs(const fs::path& image_dir, const fs::path& mask_dir, int height, int width) {
  if (!fs::is_directory(image_dir)) throw DataError("image directory not found: " + image_dir.string());
  if (!fs::is_directory(mask_dir)) throw DataError("mask directory not found: " + mask_dir.string());
  const auto images = detail::images_by_stem(image_dir);
  const auto masks = detail::images_by_stem(mask_dir);
  Dataset ds;
  for (const auto& [stem, path] : images) {
    auto it = masks.find(stem);
    if (it == masks.end()) {
      ds.missing.push_back(stem + " (no mask)");
      continue;
    }
    detail::load_one(ds, stem, path, it->second, height, width);
  }
  for (const auto& [stem, _] : masks) {
    if (!images.contains(stem)) ds.missing.push_back(stem + " (no image)");
  }
  if (ds.samples.empty()) ds.warnings.push_back("dataset is empty");
  return ds;
}

/// Loads `root/images` + `root/masks`.
inline Dataset load_directory(const fs::path& root, int height, int width) {
  return load_pairs(root / "images", root / "masks", height, width);
}

/// Two-column CSV manifest (image path, mask path), relative paths resolved
/// against the manifest's directory. Lines starting with '#' are ignored.
inline Dataset load_manifest(const fs::path& csv, int height, int width) {
  std::ifstream in(csv);
  if (!in) throw DataError("cannot open manifest " + csv.string());
  Dataset ds;
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::pair<std::string, std::pair<fs::path, fs::path>>> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) {
      throw DataError(csv.string() + ":" + std::to_string(line_no) + ": expected 'image,mask'");
    }
    fs::path img = line.substr(0, comma), mask = line.substr(comma + 1);
    if (img.is_relative()) img = csv.parent_path() / img;
    if (mask.is_relative()) mask = csv.parent_path() / mask;
    rows.push_back({img.stem().string(), {img, mask}});
  }
  std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  for (const auto& [id, paths] : rows) {
    if (!fs::exists(paths.first)) {
      ds.missing.push_back(id + " (no image)");
    } else if (!fs::exists(paths.second)) {
      ds.missing.push_back(id + " (no mask)");
    } else {
      detail::load_one(ds, id, paths.first, paths.second, height, width);
    }
  }
  if (ds.samples.empty()) ds.warnings.push_back("dataset is empty");
  return ds;
}

/// Writes `dir/images/<id>.png` and `dir/masks/<id>.png`.
inline void save_dataset(const Dataset& ds, const fs::path& dir) {
  fs::create_directories(dir / "images");
  fs::create_directories(dir / "masks");
  for (const auto& s : ds.samples) {
    io::write_rgb_png(dir / "images" / (s.id + ".png"), s.image);
    io::write_gray_png(dir / "masks" / (s.id + ".png"), s.mask);
  }
}

// ---------------------------------------------------------------------------
// Augmentation.

/// Per-sample generator state derived from (seed, id, epoch), independent of
/// worker scheduling.
inline Rng sample_rng(std::uint64_t seed, const std::string& id, std::uint64_t epoch) {
  return Rng(mix_seed(mix_seed(seed, hash_string(id)), epoch));
}

inline SamplePair hflip(const SamplePair& s) {
  SamplePair out = s;
  auto flip = [](Tensor<float>& t) {
    for (int c = 0; c < t.c(); ++c) {
      float* p = t.plane(0, c);
      for (int y = 0; y < t.h(); ++y) std::reverse(p + static_cast<std::size_t>(y) * t.w(), p + static_cast<std::size_t>(y + 1) * t.w());
    }
  };
  flip(out.image);
  flip(out.mask);
  return out;
}

/// Rotates about the image centre; pixels mapped from outside the frame take
/// value 0. The image is sampled bilinearly, the mask bilinearly then
/// re-binarized at 0.5.
inline SamplePair rotate(const SamplePair& s, double degrees) {
  const double th = degrees * std::numbers::pi / 180.0;
  const double cs = std::cos(th), sn = std::sin(th);
  const int h = s.image.h(), w = s.image.w();
  const double cy = (h - 1) / 2.0, cx = (w - 1) / 2.0;
  SamplePair out{Tensor<float>(s.image.shape()), Tensor<float>(s.mask.shape()), s.id};
  auto sample = [&](const float* src, double sy, double sx) {
    const int x0 = static_cast<int>(std::floor(sx)), y0 = static_cast<int>(std::floor(sy));
    const double fx = sx - x0, fy = sy - y0;
    double acc = 0.0;
    for (int dy = 0; dy < 2; ++dy) {
      for (int dx = 0; dx < 2; ++dx) {
        const int yy = y0 + dy, xx = x0 + dx;
        if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
        acc += (dy ? fy : 1 - fy) * (dx ? fx : 1 - fx) * src[static_cast<std::size_t>(yy) * w + xx];
      }
    }
    return acc;
  };
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      // Inverse map: output pixel -> source location.
      const double dx = x - cx, dy = y - cy;
      const double sx = cs * dx + sn * dy + cx;
      const double sy = -sn * dx + cs * dy + cy;
      for (int c = 0; c < 3; ++c) out.image.at(0, c, y, x) = static_cast<float>(sample(s.image.plane(0, c), sy, sx));
      out.mask.at(0, 0, y, x) = sample(s.mask.plane(0, 0), sy, sx) >= 0.5 ? 1.0f : 0.0f;
    }
  }
  return out;
}

/// Brightness, contrast and saturation factors, each drawn from
/// [1 - strength, 1 + strength]; a zero strength skips that step.
inline Tensor<float> color_jitter(const Tensor<float>& image, const AugmentationConfig& cfg, Rng& rng) {
  Tensor<float> out = image;
  const std::size_t plane = image.shape().plane();
  auto gray_at = [&](std::size_t i) {
    return 0.299f * out.plane(0, 0)[i] + 0.587f * out.plane(0, 1)[i] + 0.114f * out.plane(0, 2)[i];
  };
  if (cfg.brightness > 0) {
    const auto f = static_cast<float>(rng.uniform(1 - cfg.brightness, 1 + cfg.brightness));
    for (auto& v : out.storage()) v *= f;
  }
  if (cfg.contrast > 0) {
    const auto f = static_cast<float>(rng.uniform(1 - cfg.contrast, 1 + cfg.contrast));
    double mean = 0.0;
    for (std::size_t i = 0; i < plane; ++i) mean += gray_at(i);
    const auto m = static_cast<float>(mean / static_cast<double>(plane));
    for (auto& v : out.storage()) v = (v - m) * f + m;
  }
  if (cfg.saturation > 0) {
    const auto f = static_cast<float>(rng.uniform(1 - cfg.saturation, 1 + cfg.saturation));
    for (std::size_t i = 0; i < plane; ++i) {
      const float g = gray_at(i);
      for (int c = 0; c < 3; ++c) out.plane(0, c)[i] = (out.plane(0, c)[i] - g) * f + g;
    }
  }
  for (auto& v : out.storage()) v = std::clamp(v, 0.0f, 1.0f);
  return out;
}

/// Random horizontal flip, rotation and color jitter. The same geometric
/// transform is applied to image and mask.
inline SamplePair augment(const SamplePair& s, const AugmentationConfig& cfg, Rng& rng) {
  if (!cfg.enabled) return s;
  SamplePair out = rng.bernoulli(cfg.hflip_prob) ? hflip(s) : s;
  if (cfg.rotation_degrees > 0) {
    const double angle = rng.uniform(-cfg.rotation_degrees, cfg.rotation_degrees);
    out = rotate(out, angle);
  }
  if (cfg.brightness > 0 || cfg.contrast > 0 || cfg.saturation > 0) out.image = color_jitter(out.image, cfg, rng);
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic shapes.

/// Foreground area ratio bands; sample i targets band i % 3.
inline constexpr std::array<std::pair<double, double>, 3> kSynthAreaBands{{{0.01, 0.05}, {0.05, 0.3}, {0.3, 0.6}}};

namespace detail {

struct Shape2D {
  bool ellipse;
  double cx, cy, a, b, angle;
  std::array<float, 3> color;

  bool contains(double x, double y) const {
    const double dx = x - cx, dy = y - cy;
    const double u = std::cos(angle) * dx + std::sin(angle) * dy;
    const double v = -std::sin(angle) * dx + std::cos(angle) * dy;
    if (ellipse) return (u * u) / (a * a) + (v * v) / (b * b) <= 1.0;
    return std::abs(u) <= a && std::abs(v) <= b;
  }
};

inline std::array<float, 3> random_color(Rng& rng) {
  return {static_cast<float>(rng.uniform()), static_cast<float>(rng.uniform()), static_cast<float>(rng.uniform())};
}

inline double color_distance(const std::array<float, 3>& p, const std::array<float, 3>& q) {
  return std::abs(p[0] - q[0]) + std::abs(p[1] - q[1]) + std::abs(p[2] - q[2]);
}

// Draws shapes whose union covers a ratio inside `band`; returns the shapes.
inline std::vector<Shape2D> draw_layout(int h, int w, std::pair<double, double> band, Rng& rng,
                                        const std::array<float, 3>& bg, double& ratio) {
  const double area = static_cast<double>(h) * w;
  for (int attempt = 0;; ++attempt) {
    const int count = rng.uniform_int(1, 3);
    const double target = rng.uniform(band.first, band.second) * area;
    std::vector<Shape2D> shapes;
    for (int k = 0; k < count; ++k) {
      Shape2D s{};
      s.ellipse = rng.bernoulli(0.5);
      const double share = target / count;
      const double aspect = rng.uniform(0.5, 2.0);
      // ellipse area pi*a*b, rectangle area 4*a*b
      const double ab = share / (s.ellipse ? std::numbers::pi : 4.0);
      s.a = std::sqrt(ab * aspect);
      s.b = std::sqrt(ab / aspect);
      s.angle = rng.uniform(0.0, std::numbers::pi);
      const double r = std::max(s.a, s.b);
      s.cx = 2 * r < w ? rng.uniform(r, w - r) : w / 2.0;
      s.cy = 2 * r < h ? rng.uniform(r, h - r) : h / 2.0;
      do {
        s.color = random_color(rng);
      } while (color_distance(s.color, bg) < 0.6);
      shapes.push_back(s);
    }
    std::size_t fg = 0;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        for (const auto& s : shapes) {
          if (s.contains(x + 0.5, y + 0.5)) {
            ++fg;
            break;
          }
        }
      }
    }
    ratio = static_cast<double>(fg) / area;
    if (ratio >= band.first && ratio <= band.second && ratio > 0) return shapes;
    if (attempt > 10000) throw DataError("synthetic generator could not place shapes at this image size");
  }
}

}  // namespace detail

/// `count` images with 1-3 anti-aliased ellipses or rectangles on a smooth
/// background. Masks are the shapes rasterized at pixel centres. Fully
/// determined by `seed`. Ids are `synth_0000`, `synth_0001`, ...
inline Dataset synth_generate(int count, int height, int width, std::uint64_t seed) {
  if (count < 1) throw DataError("synthetic sample count must be at least 1");
  if (height <= 0 || width <= 0 || height % 16 != 0 || width % 16 != 0) {
    throw DataError("synthetic image size must be a positive multiple of 16");
  }
  constexpr int kSuper = 4;  // sub-samples per axis for anti-aliasing
  Dataset ds;
  for (int i = 0; i < count; ++i) {
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(i)));
    const auto bg0 = detail::random_color(rng);
    auto bg1 = bg0;
    for (auto& c : bg1) c = std::clamp(c + static_cast<float>(rng.uniform(-0.15, 0.15)), 0.0f, 1.0f);
    double ratio = 0.0;
    const auto shapes = detail::draw_layout(height, width, kSynthAreaBands[i % 3], rng, bg0, ratio);
    SamplePair s{Tensor<float>(1, 3, height, width), Tensor<float>(1, 1, height, width), ""};
    char id[32];
    std::snprintf(id, sizeof id, "synth_%04d", i);
    s.id = id;
    for (int y = 0; y < height; ++y) {
      const float t = height > 1 ? static_cast<float>(y) / (height - 1) : 0.0f;
      for (int x = 0; x < width; ++x) {
        std::array<float, 3> px{};
        for (int c = 0; c < 3; ++c) px[c] = bg0[c] * (1 - t) + bg1[c] * t;
        // Later shapes are painted over earlier ones.
        for (const auto& sh : shapes) {
          int hits = 0;
          for (int sy = 0; sy < kSuper; ++sy) {
            for (int sx = 0; sx < kSuper; ++sx) {
              hits += sh.contains(x + (sx + 0.5) / kSuper, y + (sy + 0.5) / kSuper) ? 1 : 0;
            }
          }
          const float cov = static_cast<float>(hits) / (kSuper * kSuper);
          for (int c = 0; c < 3; ++c) px[c] = px[c] * (1 - cov) + sh.color[c] * cov;
        }
        for (int c = 0; c < 3; ++c) s.image.at(0, c, y, x) = px[c];
        bool inside = false;
        for (const auto& sh : shapes) inside = inside || sh.contains(x + 0.5, y + 0.5);
        s.mask.at(0, 0, y, x) = inside ? 1.0f : 0.0f;
      }
    }
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

/// Foreground pixel fraction of a mask.
inline double foreground_ratio(const Tensor<float>& mask) {
  double fg = 0.0;
  for (float v : mask.storage()) fg += v;
  return mask.empty() ? 0.0 : fg / static_cast<double>(mask.size());
}

}  // namespace minetlab::data
