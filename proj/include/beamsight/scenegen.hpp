#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "beamsight/channel.hpp"
#include "beamsight/errors.hpp"
#include "beamsight/rng.hpp"

namespace beamsight::scenegen {

using json = nlohmann::json;

enum class Mode { V2I, V2V };
enum class Lighting { Day, Night };

inline std::string mode_str(Mode m) { return m == Mode::V2I ? "v2i" : "v2v"; }
inline std::string lighting_str(Lighting l) { return l == Lighting::Day ? "day" : "night"; }

struct Pose2 {
  double x = 0.0;
  double y = 0.0;
};

struct Waypoint {
  double t = 0.0;
  double x = 0.0;
  double y = 0.0;
};

struct Box3 {
  std::array<double, 3> lo{0, 0, 0};
  std::array<double, 3> hi{0, 0, 0};
};

struct ReceiverPose {
  std::array<double, 3> position{0, 0, 0};
  double heading_rad = 0.0;
};

// Static world for one scenario run. The receiver is the sensing side; the
// transmitter moves along the timed polyline. For V2V the frame is attached
// to the receiver vehicle, so the trajectory is relative motion.
struct Scene {
  Mode mode = Mode::V2I;
  Lighting lighting = Lighting::Day;
  ReceiverPose receiver;
  std::vector<Waypoint> trajectory;
  std::vector<Box3> obstacles;
  std::uint64_t rng_seed = 0;
};

struct CameraConfig {
  std::size_t width = 64;
  std::size_t height = 64;
  double focal_px = 30.0;
  double height_m = 2.0;  // optical center above receiver ground position
};

struct LidarConfig {
  std::size_t n_azimuth_rays = 96;
  std::size_t n_elevation_rays = 6;
  double azimuth_min_rad = -1.0471975511965976;  // -60 deg
  double azimuth_max_rad = 1.0471975511965976;
  double elevation_min_rad = -0.13962634015954636;  // -8 deg
  double elevation_max_rad = 0.03490658503988659;   // +2 deg
  double max_range_m = 60.0;
  double height_m = 2.0;
  std::size_t max_points = 600;
};

struct GenConfig {
  CameraConfig camera;
  LidarConfig lidar;
  double dt_s = 0.1;
  double gps_sigma_m = 1.0;
  double gps_origin_lat = 45.0;
  double gps_origin_lon = -93.0;
  std::array<double, 3> tx_box_dims{1.9, 4.2, 1.6};  // x width, y length, z height
  double day_pixel_noise_sigma = 1.5;
  std::size_t max_reflections = 3;
  double refl_gain_min = 0.05;
  double refl_gain_max = 0.30;
  double refl_delay_max_symbols = 5.0;
};

struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> rgb;  // H x W x 3, row major

  std::uint8_t at(std::size_t y, std::size_t x, std::size_t c) const {
    return rgb[(y * width + x) * 3 + c];
  }
};

// One synchronized multimodal observation.
struct Sample {
  double timestamp_s = 0.0;
  double gps_lat = 0.0;
  double gps_lon = 0.0;
  Image image;
  std::vector<std::array<double, 3>> points;
  channel::PowerVector powers;
  std::uint32_t label = 0;
};

struct DatasetManifest {
  int schema_version = 1;
  std::string scenario;
  std::size_t n_samples = 0;
  std::vector<std::uint64_t> offsets;  // byte offset of each record in samples.bin
  std::uint64_t seed = 0;
  json generator_config;
};

// ---------------------------------------------------------------------------
// Trajectory
// ---------------------------------------------------------------------------

// Uniform speed along the polyline; total duration comes from the first and
// last waypoint times. Samples past the end hold the final position.
inline std::vector<Pose2> simulate_trajectory(const Scene& scene, std::size_t n_samples,
                                              double dt = 0.1) {
  if (scene.trajectory.empty()) throw DataError("simulate_trajectory: empty trajectory");
  if (n_samples < 1) throw ConfigError("simulate_trajectory: n_samples must be >= 1");
  const auto& wp = scene.trajectory;
  std::vector<Pose2> out;
  out.reserve(n_samples);
  if (wp.size() == 1) {
    out.assign(n_samples, Pose2{wp[0].x, wp[0].y});
    return out;
  }
  std::vector<double> cum(wp.size(), 0.0);
  for (std::size_t i = 1; i < wp.size(); ++i)
    cum[i] = cum[i - 1] + std::hypot(wp[i].x - wp[i - 1].x, wp[i].y - wp[i - 1].y);
  const double total_len = cum.back();
  const double duration = wp.back().t - wp.front().t;
  if (duration <= 0.0) throw DataError("simulate_trajectory: non-increasing waypoint times");
  const double speed = total_len / duration;
  for (std::size_t i = 0; i < n_samples; ++i) {
    const double t = static_cast<double>(i) * dt;
    double s = std::min(speed * t, total_len);
    std::size_t seg = 1;
    while (seg + 1 < wp.size() && cum[seg] < s) ++seg;
    const double seg_len = cum[seg] - cum[seg - 1];
    const double a = seg_len > 0.0 ? (s - cum[seg - 1]) / seg_len : 0.0;
    out.push_back(Pose2{wp[seg - 1].x + a * (wp[seg].x - wp[seg - 1].x),
                        wp[seg - 1].y + a * (wp[seg].y - wp[seg - 1].y)});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Geometry helpers
// ---------------------------------------------------------------------------

namespace detail {

inline std::uint64_t splitmix64_seed(std::uint64_t a, std::uint64_t b) {
  return beamsight::detail::splitmix64(a ^ beamsight::detail::splitmix64(b + 0x9e37));
}

inline Box3 tx_box(const Pose2& pose, const std::array<double, 3>& dims) {
  return Box3{{pose.x - dims[0] / 2.0, pose.y - dims[1] / 2.0, 0.0},
              {pose.x + dims[0] / 2.0, pose.y + dims[1] / 2.0, dims[2]}};
}

// Azimuth of a world point in the receiver frame.
inline double receiver_azimuth(const Scene& scene, double x, double y) {
  const double dx = x - scene.receiver.position[0];
  const double dy = y - scene.receiver.position[1];
  return std::remainder(std::atan2(dy, dx) - scene.receiver.heading_rad,
                        2.0 * std::numbers::pi);
}

// Slab-method ray/AABB intersection. Returns the hit parameter, preferring the
// entry face; a ray starting inside the box reports the nearest exit face.
inline std::optional<double> ray_box_hit(const std::array<double, 3>& origin,
                                         const std::array<double, 3>& dir, const Box3& box) {
  double tnear = -std::numeric_limits<double>::infinity();
  double tfar = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    if (std::abs(dir[a]) < 1e-13) {
      if (origin[a] < box.lo[a] || origin[a] > box.hi[a]) return std::nullopt;
      continue;
    }
    double t0 = (box.lo[a] - origin[a]) / dir[a];
    double t1 = (box.hi[a] - origin[a]) / dir[a];
    if (t0 > t1) std::swap(t0, t1);
    tnear = std::max(tnear, t0);
    tfar = std::min(tfar, t1);
    if (tnear > tfar) return std::nullopt;
  }
  if (tfar < 0.0) return std::nullopt;
  return tnear >= 0.0 ? tnear : tfar;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// LiDAR
// ---------------------------------------------------------------------------

// Casts the configured ray fan against obstacle boxes plus the transmitter
// vehicle box; returns hit points in the sensor frame.
inline std::vector<std::array<double, 3>> cast_lidar(const Scene& scene, const Pose2& tx_pose,
                                                     const GenConfig& cfg) {
  const auto& lc = cfg.lidar;
  if (lc.n_azimuth_rays < 1 || lc.n_elevation_rays < 1)
    throw ConfigError("cast_lidar: ray counts must be >= 1");
  std::vector<Box3> boxes = scene.obstacles;
  boxes.push_back(detail::tx_box(tx_pose, cfg.tx_box_dims));

  const std::array<double, 3> origin{scene.receiver.position[0], scene.receiver.position[1],
                                     lc.height_m};
  const double heading = scene.receiver.heading_rad;
  std::vector<std::array<double, 3>> points;
  for (std::size_t e = 0; e < lc.n_elevation_rays; ++e) {
    const double el =
        lc.n_elevation_rays == 1
            ? lc.elevation_min_rad
            : lc.elevation_min_rad + (lc.elevation_max_rad - lc.elevation_min_rad) *
                                         static_cast<double>(e) /
                                         static_cast<double>(lc.n_elevation_rays - 1);
    for (std::size_t a = 0; a < lc.n_azimuth_rays; ++a) {
      const double az =
          lc.n_azimuth_rays == 1
              ? lc.azimuth_min_rad
              : lc.azimuth_min_rad + (lc.azimuth_max_rad - lc.azimuth_min_rad) *
                                         static_cast<double>(a) /
                                         static_cast<double>(lc.n_azimuth_rays - 1);
      const double world_az = heading + az;
      const std::array<double, 3> dir{std::cos(el) * std::cos(world_az),
                                      std::cos(el) * std::sin(world_az), std::sin(el)};
      double best = std::numeric_limits<double>::infinity();
      for (const auto& b : boxes) {
        auto hit = detail::ray_box_hit(origin, dir, b);
        if (hit && *hit > 1e-9 && *hit < best) best = *hit;
      }
      if (best <= lc.max_range_m) {
        // world hit point, then into the sensor frame
        const double wx = origin[0] + best * dir[0];
        const double wy = origin[1] + best * dir[1];
        const double wz = origin[2] + best * dir[2];
        const double rx = wx - origin[0], ry = wy - origin[1];
        const double ch = std::cos(-heading), sh = std::sin(-heading);
        points.push_back({ch * rx - sh * ry, sh * rx + ch * ry, wz - origin[2]});
        if (points.size() >= lc.max_points) return points;
      }
    }
  }
  return points;
}

// ---------------------------------------------------------------------------
// Pseudo-image rendering
// ---------------------------------------------------------------------------

namespace detail {

struct Shade {
  double r, g, b;
};

inline void fill_rect_aa(std::vector<double>& fb, std::size_t w, std::size_t h, double u0,
                         double u1, double v0, double v1, Shade s) {
  if (u1 < 0.0 || v1 < 0.0 || u0 > static_cast<double>(w) || v0 > static_cast<double>(h)) return;
  const long x0 = static_cast<long>(std::floor(std::max(u0, 0.0)));
  const long x1 = static_cast<long>(std::ceil(std::min(u1, static_cast<double>(w))));
  const long y0 = static_cast<long>(std::floor(std::max(v0, 0.0)));
  const long y1 = static_cast<long>(std::ceil(std::min(v1, static_cast<double>(h))));
  for (long y = y0; y < y1; ++y) {
    const double cov_y = std::min(static_cast<double>(y + 1), v1) -
                         std::max(static_cast<double>(y), v0);
    if (cov_y <= 0.0) continue;
    for (long x = x0; x < x1; ++x) {
      const double cov_x = std::min(static_cast<double>(x + 1), u1) -
                           std::max(static_cast<double>(x), u0);
      if (cov_x <= 0.0) continue;
      const double a = std::clamp(cov_x, 0.0, 1.0) * std::clamp(cov_y, 0.0, 1.0);
      const std::size_t idx = (static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)) * 3;
      fb[idx + 0] = (1.0 - a) * fb[idx + 0] + a * s.r;
      fb[idx + 1] = (1.0 - a) * fb[idx + 1] + a * s.g;
      fb[idx + 2] = (1.0 - a) * fb[idx + 2] + a * s.b;
    }
  }
}

}  // namespace detail

// Deterministic rasterization: sky/ground split, obstacle boxes painted far to
// near, transmitter vehicle as a bright anti-aliased rectangle whose column is
// a strictly monotone function of its azimuth. Night halves brightness and
// doubles the seeded pixel noise.
inline Image render_pseudo_image(const Scene& scene, const Pose2& tx_pose, const GenConfig& cfg,
                                 std::uint64_t sample_index = 0) {
  const auto& cam = cfg.camera;
  const std::size_t w = cam.width, h = cam.height;
  const double cx = (static_cast<double>(w) - 1.0) / 2.0;
  const double cy = (static_cast<double>(h) - 1.0) / 2.0;
  const double f = cam.focal_px;
  const double cam_z = cam.height_m;
  const double heading = scene.receiver.heading_rad;
  const double ox = scene.receiver.position[0], oy = scene.receiver.position[1];

  std::vector<double> fb(w * h * 3, 0.0);
  // sky above the horizon row, ground below
  for (std::size_t y = 0; y < h; ++y) {
    const bool sky = static_cast<double>(y) < cy;
    const double t = static_cast<double>(y) / static_cast<double>(h);
    detail::Shade s = sky ? detail::Shade{140.0 + 40.0 * t, 170.0 + 30.0 * t, 205.0 + 20.0 * t}
                          : detail::Shade{78.0, 80.0, 78.0};
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t idx = (y * w + x) * 3;
      fb[idx] = s.r;
      fb[idx + 1] = s.g;
      fb[idx + 2] = s.b;
    }
  }

  struct DrawBox {
    double dist;
    Box3 box;
    bool is_tx;
  };
  std::vector<DrawBox> draw;
  for (const auto& b : scene.obstacles) {
    if (b.hi[2] <= 0.05) continue;  // ground slab is painted as background
    const double mx = (b.lo[0] + b.hi[0]) / 2.0, my = (b.lo[1] + b.hi[1]) / 2.0;
    draw.push_back({std::hypot(mx - ox, my - oy), b, false});
  }
  {
    Box3 tb = detail::tx_box(tx_pose, cfg.tx_box_dims);
    draw.push_back({std::hypot(tx_pose.x - ox, tx_pose.y - oy), tb, true});
  }
  std::sort(draw.begin(), draw.end(),
            [](const DrawBox& a, const DrawBox& b) { return a.dist > b.dist; });

  const double ch = std::cos(-heading), sh = std::sin(-heading);
  for (const auto& d : draw) {
    // project the eight corners; keep boxes fully in front of the camera
    double umin = 1e30, umax = -1e30, vmin = 1e30, vmax = -1e30;
    bool behind = false;
    for (int corner = 0; corner < 8; ++corner) {
      const double bx = (corner & 1) ? d.box.hi[0] : d.box.lo[0];
      const double by = (corner & 2) ? d.box.hi[1] : d.box.lo[1];
      const double bz = (corner & 4) ? d.box.hi[2] : d.box.lo[2];
      const double rx = bx - ox, ry = by - oy;
      const double xf = ch * rx - sh * ry;   // forward
      const double yl = sh * rx + ch * ry;   // left
      if (xf < 0.3) {
        behind = true;
        break;
      }
      const double u = cx - f * (yl / xf);
      const double v = cy - f * ((bz - cam_z) / xf);
      umin = std::min(umin, u);
      umax = std::max(umax, u);
      vmin = std::min(vmin, v);
      vmax = std::max(vmax, v);
    }
    if (behind) continue;
    const double shade_falloff = 1.0 / (1.0 + 0.015 * d.dist);
    detail::Shade s = d.is_tx
                          ? detail::Shade{235.0, 64.0, 36.0}
                          : detail::Shade{128.0 * shade_falloff + 30.0, 126.0 * shade_falloff + 30.0,
                                          132.0 * shade_falloff + 30.0};
    detail::fill_rect_aa(fb, w, h, umin, umax + 1.0, vmin, vmax + 1.0, s);
  }

  const double brightness = scene.lighting == Lighting::Night ? 0.5 : 1.0;
  const double noise_sigma =
      cfg.day_pixel_noise_sigma * (scene.lighting == Lighting::Night ? 2.0 : 1.0);
  Rng rng(detail::splitmix64_seed(scene.rng_seed, sample_index));
  Image img;
  img.height = h;
  img.width = w;
  img.rgb.resize(w * h * 3);
  for (std::size_t i = 0; i < fb.size(); ++i) {
    double v = fb[i] * brightness;
    if (noise_sigma > 0.0) v += rng.normal(0.0, noise_sigma);
    img.rgb[i] = static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0) + 0.5);
  }
  return img;
}

// ---------------------------------------------------------------------------
// Dataset generation
// ---------------------------------------------------------------------------

struct ChannelSetup {
  channel::CodebookConfig codebook;
  channel::OfdmConfig ofdm;
};

// Per-timestep channel paths: geometric LoS plus 0..max_reflections seeded
// reflection paths with attenuated gains.
inline channel::PathSet make_paths(const Scene& scene, const Pose2& tx_pose,
                                   const ChannelSetup& ch, const GenConfig& cfg, Rng& rng) {
  const double dx = tx_pose.x - scene.receiver.position[0];
  const double dy = tx_pose.y - scene.receiver.position[1];
  const double range = std::max(std::hypot(dx, dy), 1e-6);
  const double az = detail::receiver_azimuth(scene, tx_pose.x, tx_pose.y);
  if (az < ch.codebook.azimuth_min - 1e-9 || az > ch.codebook.azimuth_max + 1e-9)
    throw DataError("make_paths: transmitter left the codebook azimuth coverage");
  const double el = std::atan2(cfg.tx_box_dims[2] / 2.0 - scene.receiver.position[2],
                               range);  // box center vs receiver height

  channel::PathSet ps;
  const double los_mag = 1.0 / std::max(range, 1.0);
  const double los_phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  ps.paths.push_back({std::polar(los_mag, los_phase), range / 299792458.0, el, az});

  const std::size_t n_refl = rng.uniform_index(cfg.max_reflections + 1);
  for (std::size_t r = 0; r < n_refl; ++r) {
    const double mag = rng.uniform(cfg.refl_gain_min, cfg.refl_gain_max) * los_mag;
    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double raz = rng.uniform(ch.codebook.azimuth_min, ch.codebook.azimuth_max);
    const double delay =
        rng.uniform(0.0, cfg.refl_delay_max_symbols * ch.ofdm.symbol_period_s);
    ps.paths.push_back({std::polar(mag, phase), std::max(delay, 1e-12), el, raz});
  }
  return ps;
}

inline Sample generate_sample(const Scene& scene, const Pose2& pose, std::size_t index,
                              const ChannelSetup& ch, const channel::Codebook& cb,
                              const GenConfig& cfg) {
  Rng rng = Rng(scene.rng_seed).fork(0xA001 + index);
  Sample s;
  s.timestamp_s = static_cast<double>(index) * cfg.dt_s;

  channel::PathSet paths = make_paths(scene, pose, ch, cfg, rng);
  auto h = channel::synth_channel(paths, ch.ofdm, ch.codebook);
  s.powers = channel::received_power(h, cb, ch.ofdm, rng.next_u64());
  s.label = static_cast<std::uint32_t>(channel::optimal_beam(s.powers));

  const double noisy_x = pose.x + rng.normal(0.0, cfg.gps_sigma_m);
  const double noisy_y = pose.y + rng.normal(0.0, cfg.gps_sigma_m);
  const double meters_per_deg = 111320.0;
  s.gps_lat = cfg.gps_origin_lat + noisy_y / meters_per_deg;
  s.gps_lon = cfg.gps_origin_lon +
              noisy_x / (meters_per_deg * std::cos(cfg.gps_origin_lat * std::numbers::pi / 180.0));

  s.image = render_pseudo_image(scene, pose, cfg, index);
  s.points = cast_lidar(scene, pose, cfg);
  return s;
}

inline std::vector<Sample> generate_samples(const Scene& scene, std::size_t n_samples,
                                            const ChannelSetup& ch, const GenConfig& cfg) {
  auto poses = simulate_trajectory(scene, n_samples, cfg.dt_s);
  auto cb = channel::make_codebook(ch.codebook);
  std::vector<Sample> out;
  out.reserve(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i)
    out.push_back(generate_sample(scene, poses[i], i, ch, cb, cfg));
  return out;
}

// ---------------------------------------------------------------------------
// Dataset files: manifest.json + samples.bin + labels.csv
// ---------------------------------------------------------------------------

namespace detail {

inline void put_u32(std::string& buf, std::uint32_t v) {
  buf.append(reinterpret_cast<const char*>(&v), 4);
}
inline void put_f64(std::string& buf, double v) {
  buf.append(reinterpret_cast<const char*>(&v), 8);
}

struct RecordReader {
  const char* p;
  const char* end;
  std::uint32_t u32() {
    if (p + 4 > end) throw DataError("dataset record truncated (u32)");
    std::uint32_t v;
    std::memcpy(&v, p, 4);
    p += 4;
    return v;
  }
  double f64() {
    if (p + 8 > end) throw DataError("dataset record truncated (f64)");
    double v;
    std::memcpy(&v, p, 8);
    p += 8;
    return v;
  }
  void bytes(std::uint8_t* dst, std::size_t n) {
    if (p + n > end) throw DataError("dataset record truncated (bytes)");
    std::memcpy(dst, p, n);
    p += n;
  }
};

}  // namespace detail

// Record layout (all little-endian): u32 payload length, then
// f64 timestamp, f64 lat, f64 lon, u32 H, u32 W, H*W*3 bytes,
// u32 n_points, n_points x 3 f64, u32 K, K f64, u32 label.
inline std::string encode_record(const Sample& s) {
  std::string payload;
  payload.reserve(64 + s.image.rgb.size() + s.points.size() * 24 + s.powers.size() * 8);
  detail::put_f64(payload, s.timestamp_s);
  detail::put_f64(payload, s.gps_lat);
  detail::put_f64(payload, s.gps_lon);
  detail::put_u32(payload, static_cast<std::uint32_t>(s.image.height));
  detail::put_u32(payload, static_cast<std::uint32_t>(s.image.width));
  payload.append(reinterpret_cast<const char*>(s.image.rgb.data()), s.image.rgb.size());
  detail::put_u32(payload, static_cast<std::uint32_t>(s.points.size()));
  for (const auto& p : s.points) {
    detail::put_f64(payload, p[0]);
    detail::put_f64(payload, p[1]);
    detail::put_f64(payload, p[2]);
  }
  detail::put_u32(payload, static_cast<std::uint32_t>(s.powers.size()));
  for (double v : s.powers) detail::put_f64(payload, v);
  detail::put_u32(payload, s.label);

  std::string rec;
  detail::put_u32(rec, static_cast<std::uint32_t>(payload.size()));
  rec += payload;
  return rec;
}

inline Sample decode_record(const char* data, std::size_t len) {
  detail::RecordReader r{data, data + len};
  Sample s;
  s.timestamp_s = r.f64();
  s.gps_lat = r.f64();
  s.gps_lon = r.f64();
  s.image.height = r.u32();
  s.image.width = r.u32();
  s.image.rgb.resize(s.image.height * s.image.width * 3);
  r.bytes(s.image.rgb.data(), s.image.rgb.size());
  const std::uint32_t np = r.u32();
  s.points.resize(np);
  for (auto& p : s.points) {
    p[0] = r.f64();
    p[1] = r.f64();
    p[2] = r.f64();
  }
  const std::uint32_t k = r.u32();
  s.powers.resize(k);
  for (auto& v : s.powers) v = r.f64();
  s.label = r.u32();
  if (r.p != r.end) throw DataError("dataset record has trailing bytes");
  return s;
}

// Writes samples.bin and labels.csv, then the manifest last so a failed run
// never leaves a readable dataset behind.
inline DatasetManifest generate_dataset(const Scene& scene, std::size_t n_samples,
                                        const ChannelSetup& ch, const GenConfig& cfg,
                                        const std::string& out_dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(out_dir))
    throw DataError("generate_dataset: output directory does not exist: " + out_dir);

  DatasetManifest man;
  man.scenario = mode_str(scene.mode) + "-" + lighting_str(scene.lighting);
  man.n_samples = n_samples;
  man.seed = scene.rng_seed;
  man.generator_config = {
      {"dt_s", cfg.dt_s},
      {"gps_sigma_m", cfg.gps_sigma_m},
      {"gps_origin", {cfg.gps_origin_lat, cfg.gps_origin_lon}},
      {"image", {cfg.camera.width, cfg.camera.height}},
      {"focal_px", cfg.camera.focal_px},
      {"lidar_rays", {cfg.lidar.n_azimuth_rays, cfg.lidar.n_elevation_rays}},
      {"n_rx", ch.codebook.n_rx},
      {"n_beams", ch.codebook.n_beams},
      {"n_subcarriers", ch.ofdm.n_subcarriers},
      {"noise_variance", ch.ofdm.noise_variance},
      {"max_reflections", cfg.max_reflections},
  };

  auto poses = simulate_trajectory(scene, n_samples, cfg.dt_s);
  auto cb = channel::make_codebook(ch.codebook);

  const fs::path dir(out_dir);
  std::ofstream bin(dir / "samples.bin", std::ios::binary | std::ios::trunc);
  std::ofstream csv(dir / "labels.csv", std::ios::trunc);
  if (!bin || !csv) throw DataError("generate_dataset: cannot create dataset files");
  csv << "index,label,power_max\n";
  csv << std::setprecision(17);

  std::uint64_t offset = 0;
  for (std::size_t i = 0; i < n_samples; ++i) {
    Sample s = generate_sample(scene, poses[i], i, ch, cb, cfg);
    const std::string rec = encode_record(s);
    man.offsets.push_back(offset);
    bin.write(rec.data(), static_cast<std::streamsize>(rec.size()));
    offset += rec.size();
    csv << i << "," << s.label << "," << s.powers[s.label] << "\n";
  }
  bin.close();
  csv.close();
  if (!bin || !csv) throw DataError("generate_dataset: dataset write failed");

  json j;
  j["schema_version"] = man.schema_version;
  j["scenario"] = man.scenario;
  j["n_samples"] = man.n_samples;
  j["offsets"] = man.offsets;
  j["seed"] = man.seed;
  j["generator_config"] = man.generator_config;
  const fs::path tmp = dir / "manifest.json.tmp";
  {
    std::ofstream mf(tmp, std::ios::trunc);
    if (!mf) throw DataError("generate_dataset: cannot write manifest");
    mf << j.dump(2) << "\n";
  }
  fs::rename(tmp, dir / "manifest.json");
  return man;
}

// Sequential and random-access reader over a dataset directory. Validates the
// stored label against optimal_beam(powers) on load unless disabled.
class DatasetReader {
 public:
  explicit DatasetReader(const std::string& dir, bool validate = true)
      : dir_(dir), validate_(validate) {
    namespace fs = std::filesystem;
    std::ifstream mf(fs::path(dir) / "manifest.json");
    if (!mf) throw DataError("DatasetReader: missing manifest.json in " + dir);
    json j;
    try {
      mf >> j;
    } catch (const std::exception& e) {
      throw DataError(std::string("DatasetReader: manifest parse error: ") + e.what());
    }
    if (!j.contains("schema_version") || j["schema_version"].get<int>() != 1)
      throw DataError("DatasetReader: unsupported schema version");
    man_.schema_version = j["schema_version"].get<int>();
    man_.scenario = j["scenario"].get<std::string>();
    man_.n_samples = j["n_samples"].get<std::size_t>();
    man_.offsets = j["offsets"].get<std::vector<std::uint64_t>>();
    man_.seed = j["seed"].get<std::uint64_t>();
    man_.generator_config = j.value("generator_config", json::object());
    if (man_.offsets.size() != man_.n_samples)
      throw DataError("DatasetReader: manifest offsets disagree with sample count");
    for (std::size_t i = 1; i < man_.offsets.size(); ++i)
      if (man_.offsets[i] <= man_.offsets[i - 1])
        throw DataError("DatasetReader: offsets are not strictly increasing");

    std::ifstream bin(fs::path(dir) / "samples.bin", std::ios::binary);
    if (!bin) throw DataError("DatasetReader: missing samples.bin in " + dir);
    bin.seekg(0, std::ios::end);
    blob_.resize(static_cast<std::size_t>(bin.tellg()));
    bin.seekg(0);
    bin.read(blob_.data(), static_cast<std::streamsize>(blob_.size()));
    if (!bin) throw DataError("DatasetReader: failed to read samples.bin");
  }

  const DatasetManifest& manifest() const { return man_; }
  std::size_t size() const { return man_.n_samples; }

  Sample read(std::size_t i) const {
    if (i >= man_.n_samples) throw DataError("DatasetReader: index out of range");
    const std::uint64_t off = man_.offsets[i];
    if (off + 4 > blob_.size()) throw DataError("DatasetReader: record offset beyond file");
    std::uint32_t len;
    std::memcpy(&len, blob_.data() + off, 4);
    if (off + 4 + len > blob_.size()) throw DataError("DatasetReader: truncated record blob");
    Sample s = decode_record(blob_.data() + off + 4, len);
    if (validate_ && s.label != channel::optimal_beam(s.powers))
      throw DataError("DatasetReader: stored label disagrees with optimal_beam(powers)");
    return s;
  }

  std::vector<Sample> read_all() const {
    std::vector<Sample> out;
    out.reserve(size());
    for (std::size_t i = 0; i < size(); ++i) out.push_back(read(i));
    return out;
  }

 private:
  std::string dir_;
  bool validate_;
  DatasetManifest man_;
  std::vector<char> blob_;
};

// ---------------------------------------------------------------------------
// Scenario presets
// ---------------------------------------------------------------------------

// v2i: roadside unit watching a straight drive-by; v2v: receiver-relative
// weave of a leading vehicle. Night variants change lighting only.
inline Scene make_scene(const std::string& scenario, std::size_t n_samples, std::uint64_t seed,
                        double dt = 0.1) {
  Scene s;
  s.rng_seed = seed;
  const double t_end = std::max(static_cast<double>(n_samples - 1) * dt, dt);
  if (scenario == "v2i-day" || scenario == "v2i-night") {
    s.mode = Mode::V2I;
    s.lighting = scenario == "v2i-day" ? Lighting::Day : Lighting::Night;
    s.receiver = ReceiverPose{{0.0, 0.0, 0.0}, 0.0};
    s.trajectory = {{0.0, 15.0, -13.8}, {t_end, 15.0, 13.8}};
    s.obstacles = {
        {{-5.0, -40.0, -0.2}, {60.0, 40.0, 0.0}},   // ground slab
        {{18.5, -9.0, 0.0}, {22.7, -7.1, 1.5}},     // parked car
        {{18.5, 2.0, 0.0}, {22.7, 3.9, 1.5}},       // parked car
        {{26.0, -18.0, 0.0}, {34.0, -6.0, 9.0}},    // building
        {{26.0, 4.0, 0.0}, {34.0, 16.0, 7.5}},      // building
    };
  } else if (scenario == "v2v-day" || scenario == "v2v-night") {
    s.mode = Mode::V2V;
    s.lighting = scenario == "v2v-day" ? Lighting::Day : Lighting::Night;
    s.receiver = ReceiverPose{{0.0, 0.0, 0.0}, 0.0};
    s.trajectory = {{0.0, 10.0, -8.0}, {t_end * 0.35, 13.0, -2.0}, {t_end * 0.7, 9.0, 4.0},
                    {t_end, 12.0, 9.0}};
    s.obstacles = {
        {{-5.0, -40.0, -0.2}, {60.0, 40.0, 0.0}},   // ground slab
        {{6.0, -12.0, 0.0}, {20.0, -10.5, 0.8}},    // roadside barrier
        {{17.0, 3.0, 0.0}, {21.2, 4.9, 1.5}},       // parked car
    };
  } else {
    throw ConfigError("make_scene: unknown scenario '" + scenario + "'");
  }
  return s;
}

inline GenConfig default_gen_config(const std::string& scenario) {
  GenConfig cfg;
  if (scenario.rfind("v2v", 0) == 0) {
    cfg.camera.height_m = 1.5;
    cfg.lidar.height_m = 1.5;
  }
  return cfg;
}

}  // namespace beamsight::scenegen
