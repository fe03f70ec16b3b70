#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <random>

#include "interflow/flowio.hpp"
#include "oracles.hpp"

using namespace interflow;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("interflow_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

FlowField random_flow(int h, int w, std::mt19937_64& rng, float scale) {
  FlowField f(h, w);
  f.u = oracle::random_vector(f.size(), rng, -scale, scale);
  f.v = oracle::random_vector(f.size(), rng, -scale, scale);
  return f;
}

double hue_of(const Image& img) {
  const double r = img.at(0, 0, 0), g = img.at(1, 0, 0), b = img.at(2, 0, 0);
  const double mx = std::max({r, g, b}), mn = std::min({r, g, b});
  if (mx - mn < 1e-9) return 0.0;
  double h;
  if (mx == r) h = std::fmod((g - b) / (mx - mn), 6.0);
  else if (mx == g) h = (b - r) / (mx - mn) + 2.0;
  else h = (r - g) / (mx - mn) + 4.0;
  h *= 60.0;
  return h < 0 ? h + 360.0 : h;
}

}  // namespace

TEST_CASE(".flo size arithmetic and header") {
  FlowField f(2, 2);
  f.u = {1, 2, 3, 4};
  const auto bytes = flowio::encode_flo(f);
  CHECK(bytes.size() == 44);
  float tag;
  std::memcpy(&tag, bytes.data(), 4);
  CHECK(tag == flowio::kFloTag);
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "PIEH");
}

TEST_CASE(".flo round trip is bit exact") {
  std::mt19937_64 rng(1);
  const fs::path dir = temp_dir("flo");
  for (int trial = 0; trial < 10; ++trial) {
    const int h = 1 + static_cast<int>(rng() % 64), w = 1 + static_cast<int>(rng() % 128);
    const FlowField f = random_flow(h, w, rng, 100.0f);
    flowio::write_flo(dir / "f.flo", f);
    const FlowField g = flowio::read_flo(dir / "f.flo");
    CHECK(g.u == f.u);
    CHECK(g.v == f.v);
    CHECK(g.valid_count() == g.size());
  }
}

TEST_CASE(".flo corruption reports byte offsets") {
  FlowField f(3, 3, 1.0f, 2.0f);
  auto bytes = flowio::encode_flo(f);
  auto bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(flowio::decode_flo(bad), FormatError);
  try {
    flowio::decode_flo(std::span(bytes.data(), bytes.size() - 3));
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(e.offset() == bytes.size() - 3);
  }
  auto huge = bytes;
  const std::int32_t big = 1 << 30;
  std::memcpy(huge.data() + 4, &big, 4);
  std::memcpy(huge.data() + 8, &big, 4);
  CHECK_THROWS_AS(flowio::decode_flo(huge), FormatError);
  CHECK_THROWS_AS(flowio::decode_flo(std::span(bytes.data(), 6)), FormatError);
}

TEST_CASE("KITTI encoding formula") {
  CHECK(flowio::kitti_encode(0.0f) == 32768);
  CHECK(flowio::kitti_encode(1.0f) == 32832);
  CHECK(flowio::kitti_decode(32832) == 1.0f);
  bool clamped = false;
  flowio::kitti_encode(600.0f, &clamped);
  CHECK(clamped);
}

TEST_CASE("KITTI PNG round trip at 1/64 px") {
  std::mt19937_64 rng(2);
  const fs::path dir = temp_dir("kitti");
  FlowField f = random_flow(17, 23, rng, 300.0f);
  for (std::size_t i = 0; i < f.size(); ++i) {
    f.u[i] = std::round(f.u[i] * 64.0f) / 64.0f;
    f.v[i] = std::round(f.v[i] * 64.0f) / 64.0f;
    f.valid[i] = (i % 5) != 0;
  }
  CHECK(flowio::write_kitti_flow(dir / "f.png", f) == 0);
  const FlowField g = flowio::read_kitti_flow(dir / "f.png");
  for (std::size_t i = 0; i < f.size(); ++i) {
    CHECK(g.valid[i] == f.valid[i]);
    if (f.valid[i]) {
      CHECK(g.u[i] == f.u[i]);
      CHECK(g.v[i] == f.v[i]);
    }
  }
}

TEST_CASE("flow color wheel") {
  const Image zero = flowio::flow_to_color(FlowField(1, 1), 1.0);
  CHECK(zero.at(0, 0, 0) == doctest::Approx(1.0));
  CHECK(zero.at(1, 0, 0) == doctest::Approx(1.0));
  CHECK(zero.at(2, 0, 0) == doctest::Approx(1.0));

  const Image a = flowio::flow_to_color(FlowField(1, 1, 1.0f, 0.5f), 2.0);
  const Image b = flowio::flow_to_color(FlowField(1, 1, -1.0f, -0.5f), 2.0);
  const double diff = std::fmod(std::abs(hue_of(a) - hue_of(b)), 360.0);
  CHECK(std::abs(diff - 180.0) < 2.0);

  std::vector<double> hues;
  for (int k = 0; k <= 36; ++k) {
    const double ang = k * 2.0 * M_PI / 36;
    hues.push_back(hue_of(flowio::flow_to_color(FlowField(1, 1, std::cos(ang), std::sin(ang)), 1.0)));
  }
  CHECK(hues.front() == doctest::Approx(hues.back()).epsilon(1e-3));
  std::vector<bool> seen(12, false);
  for (double h : hues) seen[static_cast<int>(h / 30.0) % 12] = true;
  for (bool s : seen) CHECK(s);

  FlowField inv(1, 2, 3.0f, 0.0f);
  inv.valid[1] = 0;
  const Image c = flowio::flow_to_color(inv);
  CHECK(c.at(0, 0, 1) == 0.0f);
  CHECK(c.at(1, 0, 1) == 0.0f);
  CHECK(c.at(2, 0, 1) == 0.0f);
}

TEST_CASE("image and mask files round trip at 8 bits") {
  const fs::path dir = temp_dir("img");
  Image img(1, 3, 4);
  for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = static_cast<float>(i * 20) / 255.0f;
  flowio::write_image(dir / "a.png", img);
  const Image back = flowio::read_image(dir / "a.png");
  CHECK(back.channels == 1);
  for (std::size_t i = 0; i < img.data.size(); ++i) CHECK(back.data[i] == doctest::Approx(img.data[i]).epsilon(1e-6));
  std::vector<std::uint8_t> mask{1, 0, 1, 1, 0, 0};
  flowio::write_mask(dir / "m.png", mask, 3, 2);
  CHECK(flowio::read_mask(dir / "m.png", 3, 2) == mask);
  CHECK_THROWS_AS(flowio::read_image(dir / "missing.png"), DataError);
}
