#include <doctest.h>

#include <cmath>
#include <numeric>

#include "beamsight/preprocess.hpp"

using namespace beamsight;
using namespace beamsight::preprocess;

TEST_SUITE_BEGIN("preprocess");

namespace {
PreprocConfig range_cfg() {
  PreprocConfig cfg;
  cfg.gps_min_lat = 40.0;
  cfg.gps_max_lat = 41.0;
  cfg.gps_min_lon = -90.0;
  cfg.gps_max_lon = -88.0;
  return cfg;
}

scenegen::Image const_image(std::size_t h, std::size_t w, std::uint8_t v) {
  scenegen::Image img;
  img.height = h;
  img.width = w;
  img.rgb.assign(h * w * 3, v);
  return img;
}
}  // namespace

TEST_CASE("normalize_gps endpoints, midpoint, clamp") {
  auto cfg = range_cfg();
  auto lo = normalize_gps(40.0, -90.0, cfg);
  CHECK(lo[0] == doctest::Approx(0.0));
  CHECK(lo[1] == doctest::Approx(0.0));
  auto hi = normalize_gps(41.0, -88.0, cfg);
  CHECK(hi[0] == doctest::Approx(1.0));
  CHECK(hi[1] == doctest::Approx(1.0));
  auto mid = normalize_gps(40.5, -89.0, cfg);
  CHECK(mid[0] == doctest::Approx(0.5));
  CHECK(mid[1] == doctest::Approx(0.5));

  auto clamped = normalize_gps(39.0, -87.0, cfg);
  CHECK(clamped[0] == 0.0);
  CHECK(clamped[1] == 1.0);

  PreprocConfig bad = cfg;
  bad.gps_max_lat = bad.gps_min_lat;
  CHECK_THROWS_AS(normalize_gps(40.0, -89.0, bad), ConfigError);
}

TEST_CASE("normalize_gps is monotone per coordinate") {
  auto cfg = range_cfg();
  double prev = -1.0;
  for (int i = 0; i <= 10; ++i) {
    const double lat = 40.0 + 0.1 * i;
    auto v = normalize_gps(lat, -89.0, cfg);
    CHECK(v[0] > prev);
    prev = v[0];
  }
}

TEST_CASE("fit_gps_range maps the training extremes to 0 and 1") {
  std::vector<scenegen::Sample> samples(4);
  samples[0].gps_lat = 40.1;
  samples[0].gps_lon = -89.9;
  samples[1].gps_lat = 40.9;
  samples[1].gps_lon = -88.2;
  samples[2].gps_lat = 40.4;
  samples[2].gps_lon = -89.0;
  samples[3].gps_lat = 45.0;  // not in the training split
  samples[3].gps_lon = -80.0;
  PreprocConfig cfg;
  fit_gps_range(samples, {0, 1, 2}, cfg);
  auto lo = normalize_gps(40.1, -89.9, cfg);
  auto hi = normalize_gps(40.9, -88.2, cfg);
  CHECK(lo[0] == doctest::Approx(0.0));
  CHECK(lo[1] == doctest::Approx(0.0));
  CHECK(hi[0] == doctest::Approx(1.0));
  CHECK(hi[1] == doctest::Approx(1.0));
  // the held-out extreme clamps
  auto out = normalize_gps(45.0, -80.0, cfg);
  CHECK(out[0] == 1.0);
  CHECK(out[1] == 1.0);
}

TEST_CASE("preprocess_image constant value arithmetic") {
  PreprocConfig cfg;
  cfg.image_h = 8;
  cfg.image_w = 8;
  auto img = const_image(16, 16, 124);
  Tensor t = preprocess_image(img, cfg);
  REQUIRE(t.shape() == Shape{3, 8, 8});
  const double expect_r = (124.0 / 255.0 - 0.485) / 0.229;
  const double expect_g = (124.0 / 255.0 - 0.456) / 0.224;
  const double expect_b = (124.0 / 255.0 - 0.406) / 0.225;
  CHECK(expect_r == doctest::Approx(0.0056).epsilon(0.05));
  for (std::size_t i = 0; i < 64; ++i) {
    CHECK(t.data()[i] == doctest::Approx(expect_r).epsilon(1e-12));
    CHECK(t.data()[64 + i] == doctest::Approx(expect_g).epsilon(1e-12));
    CHECK(t.data()[128 + i] == doctest::Approx(expect_b).epsilon(1e-12));
  }
}

TEST_CASE("preprocess_image at target size is pixel identity") {
  PreprocConfig cfg;
  cfg.image_h = 8;
  cfg.image_w = 8;
  scenegen::Image img;
  img.height = 8;
  img.width = 8;
  img.rgb.resize(8 * 8 * 3);
  for (std::size_t i = 0; i < img.rgb.size(); ++i)
    img.rgb[i] = static_cast<std::uint8_t>((i * 37) % 251);
  Tensor t = preprocess_image(img, cfg);
  for (std::size_t y = 0; y < 8; ++y)
    for (std::size_t x = 0; x < 8; ++x)
      for (std::size_t c = 0; c < 3; ++c) {
        const double expect =
            (img.at(y, x, c) / 255.0 - cfg.channel_mean[c]) / cfg.channel_std[c];
        CHECK(t.data()[(c * 8 + y) * 8 + x] == doctest::Approx(expect).epsilon(1e-12));
      }
}

TEST_CASE("bilinear downsample of a 2x checkerboard matches the oracle") {
  PreprocConfig cfg;
  cfg.image_h = 2;
  cfg.image_w = 2;
  scenegen::Image img;
  img.height = 4;
  img.width = 4;
  img.rgb.resize(4 * 4 * 3);
  for (std::size_t y = 0; y < 4; ++y)
    for (std::size_t x = 0; x < 4; ++x) {
      const std::uint8_t v = ((x + y) % 2 == 0) ? 255 : 0;
      for (std::size_t c = 0; c < 3; ++c) img.rgb[(y * 4 + x) * 3 + c] = v;
    }
  Tensor t = preprocess_image(img, cfg);
  // every 2x2 source block averages to 127.5 under the half-pixel-center rule
  for (std::size_t c = 0; c < 3; ++c) {
    const double expect = (127.5 / 255.0 - cfg.channel_mean[c]) / cfg.channel_std[c];
    for (std::size_t i = 0; i < 4; ++i)
      CHECK(t.data()[c * 4 + i] == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("preprocess_image output shape is config-determined") {
  PreprocConfig cfg;
  cfg.image_h = 5;
  cfg.image_w = 7;
  for (std::size_t hw : {3ul, 8ul, 31ul}) {
    Tensor t = preprocess_image(const_image(hw, hw + 2, 90), cfg);
    CHECK(t.shape() == Shape{3, 5, 7});
  }
}

TEST_CASE("fix_pointcloud pads, passes through, and downsamples") {
  PreprocConfig cfg;
  cfg.n_points = 4;
  cfg.downsample_seed = 77;

  SUBCASE("empty cloud -> all pad rows") {
    Tensor t = fix_pointcloud({}, cfg);
    REQUIRE(t.shape() == Shape{4, 3});
    for (double v : t.data()) CHECK(v == 0.0);
  }

  SUBCASE("exact count is identity") {
    std::vector<std::array<double, 3>> pts = {
        {1, 2, 3}, {4, 5, 6}, {7, 8, 9}, {10, 11, 12}};
    Tensor t = fix_pointcloud(pts, cfg);
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 3; ++j) CHECK(t.data()[i * 3 + j] == pts[i][j]);
  }

  SUBCASE("padding appends zero rows after the points") {
    std::vector<std::array<double, 3>> pts = {{1, 1, 1}, {2, 2, 2}};
    Tensor t = fix_pointcloud(pts, cfg);
    CHECK(t.data()[0] == 1.0);
    CHECK(t.data()[3] == 2.0);
    for (std::size_t i = 6; i < 12; ++i) CHECK(t.data()[i] == 0.0);
  }

  SUBCASE("seeded downsample matches the sampler oracle and preserves order") {
    std::vector<std::array<double, 3>> pts(10);
    for (std::size_t i = 0; i < 10; ++i) pts[i] = {double(i), double(i), double(i)};
    Tensor t = fix_pointcloud(pts, cfg);
    Tensor t2 = fix_pointcloud(pts, cfg);
    CHECK(t.data() == t2.data());  // repeatable

    // oracle: partial Fisher-Yates with the same seeded stream, keep 4, sort
    std::vector<std::size_t> idx(10);
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(cfg.downsample_seed);
    rng.shuffle(idx);
    idx.resize(4);
    std::sort(idx.begin(), idx.end());
    for (std::size_t i = 0; i < 4; ++i)
      CHECK(t.data()[i * 3] == doctest::Approx(double(idx[i])));
    // ascending retained indices == original relative order preserved
    for (std::size_t i = 1; i < 4; ++i) CHECK(t.data()[i * 3] > t.data()[(i - 1) * 3]);
  }

  SUBCASE("row count always equals n_points") {
    for (std::size_t n : {0ul, 3ul, 4ul, 9ul, 40ul}) {
      std::vector<std::array<double, 3>> pts(n, {1.0, 2.0, 3.0});
      CHECK(fix_pointcloud(pts, cfg).shape() == Shape{4, 3});
    }
  }
}

TEST_SUITE_END();
