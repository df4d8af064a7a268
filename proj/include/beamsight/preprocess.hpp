#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <vector>

#include "beamsight/errors.hpp"
#include "beamsight/rng.hpp"
#include "beamsight/scenegen.hpp"
#include "beamsight/tensor.hpp"

namespace beamsight::preprocess {

struct PreprocConfig {
  // GPS min/max are fitted on the training split only and frozen here.
  double gps_min_lat = 0.0, gps_max_lat = 1.0;
  double gps_min_lon = 0.0, gps_max_lon = 1.0;
  std::size_t image_h = 32, image_w = 32;
  std::array<double, 3> channel_mean{0.485, 0.456, 0.406};
  std::array<double, 3> channel_std{0.229, 0.224, 0.225};
  std::size_t n_points = 256;
  double pad_value = 0.0;
  std::uint64_t downsample_seed = 0;

  void validate() const {
    if (!(gps_max_lat > gps_min_lat) || !(gps_max_lon > gps_min_lon))
      throw ConfigError("PreprocConfig: degenerate GPS range (max must exceed min)");
    if (n_points < 1) throw ConfigError("PreprocConfig: n_points must be >= 1");
    if (image_h == 0 || image_w == 0) throw ConfigError("PreprocConfig: empty image size");
  }
};

struct PreprocessedSample {
  std::array<double, 2> gps_norm{0.0, 0.0};
  Tensor image_tensor;   // [3, H, W]
  Tensor points_tensor;  // [n_points, 3]
  std::size_t label = 0;
};

// Min-max scaling per coordinate; out-of-range inputs clamp to [0, 1] so
// inference never leaks outside the training range.
inline std::array<double, 2> normalize_gps(double lat, double lon, const PreprocConfig& cfg) {
  cfg.validate();
  const double a = (lat - cfg.gps_min_lat) / (cfg.gps_max_lat - cfg.gps_min_lat);
  const double b = (lon - cfg.gps_min_lon) / (cfg.gps_max_lon - cfg.gps_min_lon);
  return {std::clamp(a, 0.0, 1.0), std::clamp(b, 0.0, 1.0)};
}

// Fit the normalization range from the training split.
inline void fit_gps_range(const std::vector<scenegen::Sample>& samples,
                          const std::vector<std::size_t>& train_indices, PreprocConfig& cfg) {
  if (train_indices.empty()) throw DataError("fit_gps_range: empty training split");
  double min_lat = 1e300, max_lat = -1e300, min_lon = 1e300, max_lon = -1e300;
  for (auto i : train_indices) {
    min_lat = std::min(min_lat, samples[i].gps_lat);
    max_lat = std::max(max_lat, samples[i].gps_lat);
    min_lon = std::min(min_lon, samples[i].gps_lon);
    max_lon = std::max(max_lon, samples[i].gps_lon);
  }
  if (!(max_lat > min_lat)) max_lat = min_lat + 1e-12;
  if (!(max_lon > min_lon)) max_lon = min_lon + 1e-12;
  cfg.gps_min_lat = min_lat;
  cfg.gps_max_lat = max_lat;
  cfg.gps_min_lon = min_lon;
  cfg.gps_max_lon = max_lon;
}

// Bilinear resize, byte scale to [0,1], then per-channel standardization.
inline Tensor preprocess_image(const scenegen::Image& img, const PreprocConfig& cfg) {
  if (img.rgb.size() != img.height * img.width * 3)
    throw DataError("preprocess_image: image is not 3-channel HxWx3");
  const std::size_t oh = cfg.image_h, ow = cfg.image_w;
  const std::size_t ih = img.height, iw = img.width;
  Tensor out = Tensor::zeros({3, oh, ow});
  auto& od = out.data();
  const double sy = static_cast<double>(ih) / static_cast<double>(oh);
  const double sx = static_cast<double>(iw) / static_cast<double>(ow);
  for (std::size_t y = 0; y < oh; ++y) {
    const double fy = (static_cast<double>(y) + 0.5) * sy - 0.5;
    const double cy = std::clamp(fy, 0.0, static_cast<double>(ih - 1));
    const std::size_t y0 = static_cast<std::size_t>(cy);
    const std::size_t y1 = std::min(y0 + 1, ih - 1);
    const double wy = cy - static_cast<double>(y0);
    for (std::size_t x = 0; x < ow; ++x) {
      const double fx = (static_cast<double>(x) + 0.5) * sx - 0.5;
      const double cx = std::clamp(fx, 0.0, static_cast<double>(iw - 1));
      const std::size_t x0 = static_cast<std::size_t>(cx);
      const std::size_t x1 = std::min(x0 + 1, iw - 1);
      const double wx = cx - static_cast<double>(x0);
      for (std::size_t c = 0; c < 3; ++c) {
        const double v00 = img.at(y0, x0, c), v01 = img.at(y0, x1, c);
        const double v10 = img.at(y1, x0, c), v11 = img.at(y1, x1, c);
        const double v = (1.0 - wy) * ((1.0 - wx) * v00 + wx * v01) +
                         wy * ((1.0 - wx) * v10 + wx * v11);
        od[(c * oh + y) * ow + x] = (v / 255.0 - cfg.channel_mean[c]) / cfg.channel_std[c];
      }
    }
  }
  return out;
}

// Pad with zero rows or drop uniformly random rows (seeded) to exactly
// n_points; surviving points keep their original relative order.
inline Tensor fix_pointcloud(const std::vector<std::array<double, 3>>& points,
                             const PreprocConfig& cfg) {
  const std::size_t n = cfg.n_points;
  Tensor out = Tensor::filled({n, 3}, cfg.pad_value);
  auto& od = out.data();
  if (points.size() <= n) {
    for (std::size_t i = 0; i < points.size(); ++i)
      for (std::size_t j = 0; j < 3; ++j) od[i * 3 + j] = points[i][j];
    return out;
  }
  std::vector<std::size_t> idx(points.size());
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(cfg.downsample_seed);
  rng.shuffle(idx);
  idx.resize(n);
  std::sort(idx.begin(), idx.end());
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < 3; ++j) od[i * 3 + j] = points[idx[i]][j];
  return out;
}

inline PreprocessedSample preprocess_sample(const scenegen::Sample& s, const PreprocConfig& cfg) {
  PreprocessedSample out;
  out.gps_norm = normalize_gps(s.gps_lat, s.gps_lon, cfg);
  out.image_tensor = preprocess_image(s.image, cfg);
  out.points_tensor = fix_pointcloud(s.points, cfg);
  out.label = s.label;
  return out;
}

}  // namespace beamsight::preprocess
