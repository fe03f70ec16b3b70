#include "interflow/flowio.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#include <spdlog/spdlog.h>

namespace interflow::flowio {
namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> b, std::size_t off) {
  return static_cast<std::uint32_t>(b[off]) | (static_cast<std::uint32_t>(b[off + 1]) << 8) |
         (static_cast<std::uint32_t>(b[off + 2]) << 16) | (static_cast<std::uint32_t>(b[off + 3]) << 24);
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

std::vector<std::uint8_t> encode_flo(const FlowField& flow) {
  std::vector<std::uint8_t> out;
  out.reserve(kFloHeaderBytes + flow.size() * 8);
  put_u32(out, std::bit_cast<std::uint32_t>(kFloTag));
  put_u32(out, static_cast<std::uint32_t>(flow.width));
  put_u32(out, static_cast<std::uint32_t>(flow.height));
  for (std::size_t i = 0; i < flow.size(); ++i) {
    if (!std::isfinite(flow.u[i]) || !std::isfinite(flow.v[i])) {
      throw DataError(".flo writer: non-finite flow at pixel " + std::to_string(i));
    }
    put_u32(out, std::bit_cast<std::uint32_t>(flow.u[i]));
    put_u32(out, std::bit_cast<std::uint32_t>(flow.v[i]));
  }
  return out;
}

FlowField decode_flo(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kFloHeaderBytes) throw FormatError(".flo: truncated header", bytes.size());
  if (std::bit_cast<float>(get_u32(bytes, 0)) != kFloTag) throw FormatError(".flo: bad magic", 0);
  const auto width = static_cast<std::int32_t>(get_u32(bytes, 4));
  const auto height = static_cast<std::int32_t>(get_u32(bytes, 8));
  if (width < 1) throw FormatError(".flo: invalid width " + std::to_string(width), 4);
  if (height < 1) throw FormatError(".flo: invalid height " + std::to_string(height), 8);
  const std::uint64_t payload = static_cast<std::uint64_t>(width) * static_cast<std::uint64_t>(height) * 8u;
  const std::uint64_t available = bytes.size() - kFloHeaderBytes;
  if (payload > available) throw FormatError(".flo: truncated payload", bytes.size());
  if (payload < available) throw FormatError(".flo: trailing bytes", kFloHeaderBytes + payload);

  FlowField f(height, width);
  std::size_t off = kFloHeaderBytes;
  for (std::size_t i = 0; i < f.size(); ++i, off += 8) {
    f.u[i] = std::bit_cast<float>(get_u32(bytes, off));
    f.v[i] = std::bit_cast<float>(get_u32(bytes, off + 4));
  }
  return f;
}

void write_flo(const std::filesystem::path& path, const FlowField& flow) {
  const auto bytes = encode_flo(flow);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("write failed: " + path.string());
}

FlowField read_flo(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  try {
    return decode_flo(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what(), e.offset());
  }
}

std::uint16_t kitti_encode(float component, bool* clamped) {
  const double stored = std::round(static_cast<double>(component) * 64.0 + 32768.0);
  const double c = std::clamp(stored, 0.0, 65535.0);
  if (clamped != nullptr) *clamped = c != stored;
  return static_cast<std::uint16_t>(c);
}

float kitti_decode(std::uint16_t stored) { return (static_cast<float>(stored) - 32768.0f) / 64.0f; }

std::size_t write_kitti_flow(const std::filesystem::path& path, const FlowField& flow) {
  // OpenCV orders channels B, G, R: valid, v, u.
  cv::Mat img(flow.height, flow.width, CV_16UC3);
  std::size_t clamped = 0;
  for (int y = 0; y < flow.height; ++y) {
    auto* row = img.ptr<cv::Vec3w>(y);
    for (int x = 0; x < flow.width; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * flow.width + x;
      if (!flow.valid[i]) {
        row[x] = cv::Vec3w(0, 0, 0);
        continue;
      }
      bool cu = false, cv_ = false;
      const std::uint16_t su = kitti_encode(flow.u[i], &cu);
      const std::uint16_t sv = kitti_encode(flow.v[i], &cv_);
      clamped += static_cast<std::size_t>(cu) + static_cast<std::size_t>(cv_);
      row[x] = cv::Vec3w(1, sv, su);
    }
  }
  if (clamped > 0) spdlog::warn("{}: clamped {} flow components to the KITTI range", path.string(), clamped);
  if (!cv::imwrite(path.string(), img)) throw DataError("cannot write " + path.string());
  return clamped;
}

FlowField read_kitti_flow(const std::filesystem::path& path) {
  const cv::Mat img = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (img.empty()) throw DataError("cannot read KITTI flow " + path.string());
  if (img.type() != CV_16UC3) throw DataError(path.string() + ": expected a 16-bit 3-channel PNG");
  FlowField f(img.rows, img.cols);
  for (int y = 0; y < img.rows; ++y) {
    const auto* row = img.ptr<cv::Vec3w>(y);
    for (int x = 0; x < img.cols; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * img.cols + x;
      f.valid[i] = row[x][0] > 0 ? 1 : 0;
      f.u[i] = f.valid[i] ? kitti_decode(row[x][2]) : 0.0f;
      f.v[i] = f.valid[i] ? kitti_decode(row[x][1]) : 0.0f;
    }
  }
  return f;
}

Image flow_to_color(const FlowField& flow, double max_magnitude) {
  std::vector<float> mags;
  mags.reserve(flow.size());
  for (std::size_t i = 0; i < flow.size(); ++i) {
    if (flow.valid[i]) mags.push_back(std::hypot(flow.u[i], flow.v[i]));
  }
  double max_mag = max_magnitude;
  if (!(max_mag > 0.0)) {
    max_mag = 0.0;
    if (!mags.empty()) {
      const std::size_t k = std::min(mags.size() - 1, static_cast<std::size_t>(0.99 * mags.size()));
      std::nth_element(mags.begin(), mags.begin() + static_cast<std::ptrdiff_t>(k), mags.end());
      max_mag = mags[k];
    }
    if (!(max_mag > 0.0)) max_mag = 1.0;
  }

  cv::Mat hsv(flow.height, flow.width, CV_32FC3);
  for (int y = 0; y < flow.height; ++y) {
    auto* row = hsv.ptr<cv::Vec3f>(y);
    for (int x = 0; x < flow.width; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * flow.width + x;
      if (!flow.valid[i]) {
        row[x] = cv::Vec3f(0.0f, 0.0f, 0.0f);
        continue;
      }
      double angle = std::atan2(flow.v[i], flow.u[i]) * 180.0 / M_PI;
      if (angle < 0.0) angle += 360.0;
      const double sat = std::min(1.0, std::hypot(flow.u[i], flow.v[i]) / max_mag);
      row[x] = cv::Vec3f(static_cast<float>(angle), static_cast<float>(sat), 1.0f);
    }
  }
  cv::Mat rgb;
  cv::cvtColor(hsv, rgb, cv::COLOR_HSV2RGB);
  Image out(3, flow.height, flow.width);
  for (int y = 0; y < flow.height; ++y) {
    const auto* row = rgb.ptr<cv::Vec3f>(y);
    for (int x = 0; x < flow.width; ++x) {
      for (int c = 0; c < 3; ++c) out.at(c, y, x) = std::clamp(row[x][c], 0.0f, 1.0f);
    }
  }
  return out;
}

Image read_image(const std::filesystem::path& path) {
  const cv::Mat img = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (img.empty()) throw DataError("cannot read image " + path.string());
  double scale = 1.0;
  switch (img.depth()) {
    case CV_8U: scale = 1.0 / 255.0; break;
    case CV_16U: scale = 1.0 / 65535.0; break;
    case CV_32F: scale = 1.0; break;
    default: throw DataError(path.string() + ": unsupported pixel depth");
  }
  cv::Mat f;
  img.convertTo(f, CV_32F, scale);
  const int channels = f.channels();
  if (channels == 1) {
    Image out(1, f.rows, f.cols);
    for (int y = 0; y < f.rows; ++y) std::memcpy(&out.at(0, y, 0), f.ptr<float>(y), sizeof(float) * f.cols);
    return out;
  }
  if (channels != 3 && channels != 4) throw DataError(path.string() + ": unsupported channel count");
  Image out(3, f.rows, f.cols);
  for (int y = 0; y < f.rows; ++y) {
    const float* row = f.ptr<float>(y);
    for (int x = 0; x < f.cols; ++x) {
      // BGR(A) -> RGB
      out.at(0, y, x) = row[x * channels + 2];
      out.at(1, y, x) = row[x * channels + 1];
      out.at(2, y, x) = row[x * channels + 0];
    }
  }
  return out;
}

void write_image(const std::filesystem::path& path, const Image& img) {
  if (img.channels != 1 && img.channels != 3) throw ShapeError("write_image: expected 1 or 3 channels");
  cv::Mat out(img.height, img.width, img.channels == 1 ? CV_8UC1 : CV_8UC3);
  auto to8 = [](float v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
  };
  for (int y = 0; y < img.height; ++y) {
    auto* row = out.ptr<std::uint8_t>(y);
    for (int x = 0; x < img.width; ++x) {
      if (img.channels == 1) {
        row[x] = to8(img.at(0, y, x));
      } else {
        row[3 * x + 0] = to8(img.at(2, y, x));
        row[3 * x + 1] = to8(img.at(1, y, x));
        row[3 * x + 2] = to8(img.at(0, y, x));
      }
    }
  }
  if (!cv::imwrite(path.string(), out)) throw DataError("cannot write " + path.string());
}

void write_mask(const std::filesystem::path& path, const std::vector<std::uint8_t>& valid, int width, int height) {
  cv::Mat out(height, width, CV_8UC1);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) out.at<std::uint8_t>(y, x) = valid[static_cast<std::size_t>(y) * width + x] ? 255 : 0;
  }
  if (!cv::imwrite(path.string(), out)) throw DataError("cannot write " + path.string());
}

std::vector<std::uint8_t> read_mask(const std::filesystem::path& path, int width, int height) {
  const cv::Mat img = cv::imread(path.string(), cv::IMREAD_GRAYSCALE);
  if (img.empty()) throw DataError("cannot read mask " + path.string());
  if (img.cols != width || img.rows != height) throw DataError(path.string() + ": mask size mismatch");
  std::vector<std::uint8_t> out(static_cast<std::size_t>(width) * height);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) out[static_cast<std::size_t>(y) * width + x] = img.at<std::uint8_t>(y, x) > 127 ? 1 : 0;
  }
  return out;
}

}  // namespace interflow::flowio
