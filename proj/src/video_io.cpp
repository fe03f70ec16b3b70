#include "interflow/video_io.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <opencv2/imgproc.hpp>
#include <opencv2/videoio.hpp>
#include <spdlog/spdlog.h>

#include "interflow/flowio.hpp"

namespace fs = std::filesystem;

namespace interflow {
namespace {

bool has_prefix(const std::string& s, const char* prefix) { return s.rfind(prefix, 0) == 0; }

bool is_image(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp" || ext == ".ppm" || ext == ".pgm";
}

std::string numbered(const char* prefix, int i, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%04d%s", prefix, i, ext);
  return buf;
}

std::vector<Image> read_video(const fs::path& path, int limit, bool color) {
  cv::VideoCapture cap(path.string());
  if (!cap.isOpened()) throw DataError("cannot open video " + path.string());
  std::vector<Image> frames;
  cv::Mat bgr;
  while ((limit <= 0 || static_cast<int>(frames.size()) < limit) && cap.read(bgr)) {
    cv::Mat rgb, f;
    cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
    rgb.convertTo(f, CV_32FC3, 1.0 / 255.0);
    Image img(3, f.rows, f.cols);
    for (int y = 0; y < f.rows; ++y) {
      const auto* row = f.ptr<cv::Vec3f>(y);
      for (int x = 0; x < f.cols; ++x) {
        for (int c = 0; c < 3; ++c) img.at(c, y, x) = row[x][c];
      }
    }
    frames.push_back(color ? std::move(img) : to_gray(img));
  }
  return frames;
}

}  // namespace

std::vector<ManifestEntry> read_manifest(const fs::path& file, const fs::path& data_root) {
  std::ifstream in(file);
  if (!in) throw DataError("cannot open manifest " + file.string());
  const fs::path base = data_root.empty() ? file.parent_path() : data_root;
  std::vector<ManifestEntry> out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::string path, count, corpus;
    if (!std::getline(ss, path, '\t') || !std::getline(ss, count, '\t') || !std::getline(ss, corpus)) {
      throw DataError(file.string() + ":" + std::to_string(line_no) + ": expected path<TAB>frames<TAB>corpus");
    }
    ManifestEntry e;
    e.path = fs::path(path).is_absolute() ? fs::path(path) : base / path;
    try {
      e.frame_count = std::stoi(count);
    } catch (const std::exception&) {
      throw DataError(file.string() + ":" + std::to_string(line_no) + ": bad frame count '" + count + "'");
    }
    e.corpus = corpus;
    out.push_back(std::move(e));
  }
  return out;
}

void write_manifest(const fs::path& file, const std::vector<ManifestEntry>& entries) {
  std::ofstream out(file);
  if (!out) throw DataError("cannot write " + file.string());
  for (const auto& e : entries) out << e.path.generic_string() << '\t' << e.frame_count << '\t' << e.corpus << '\n';
}

Sequence load_sequence(const ManifestEntry& entry, bool color) {
  Sequence seq;
  seq.id = entry.path.filename().string();
  seq.corpus = entry.corpus;
  if (fs::is_regular_file(entry.path)) {
    seq.frames = read_video(entry.path, entry.frame_count, color);
  } else if (fs::is_directory(entry.path)) {
    std::vector<fs::path> files;
    for (const auto& de : fs::directory_iterator(entry.path)) {
      const std::string name = de.path().filename().string();
      if (de.is_regular_file() && is_image(de.path()) && !has_prefix(name, "flow_") && !has_prefix(name, "valid_")) {
        files.push_back(de.path());
      }
    }
    std::sort(files.begin(), files.end());
    if (entry.frame_count > 0 && static_cast<int>(files.size()) > entry.frame_count) files.resize(entry.frame_count);
    for (const auto& f : files) {
      Image img = flowio::read_image(f);
      seq.frames.push_back(color ? std::move(img) : to_gray(img));
    }
    for (int i = 0; i + 1 < static_cast<int>(seq.frames.size()); ++i) {
      const fs::path flo = entry.path / numbered("flow", i, ".flo");
      const fs::path kitti = entry.path / numbered("flow", i, ".png");
      FlowField f;
      if (fs::exists(flo)) {
        f = flowio::read_flo(flo);
        const fs::path mask = entry.path / numbered("valid", i, ".png");
        if (fs::exists(mask)) f.valid = flowio::read_mask(mask, f.width, f.height);
      } else if (fs::exists(kitti)) {
        f = flowio::read_kitti_flow(kitti);
      } else {
        if (!seq.flows.empty()) throw DataError("ground truth missing for pair " + std::to_string(i) + " in " + entry.path.string());
        break;
      }
      seq.flows.push_back(std::move(f));
    }
  } else {
    throw DataError("sequence path not found: " + entry.path.string());
  }
  if (entry.frame_count > 0 && seq.length() != entry.frame_count) {
    throw DataError(entry.path.string() + ": manifest declares " + std::to_string(entry.frame_count) + " frames, found " +
                    std::to_string(seq.length()));
  }
  for (const auto& f : seq.frames) {
    if (f.width != seq.frames.front().width || f.height != seq.frames.front().height) {
      throw DataError(entry.path.string() + ": frames differ in size");
    }
  }
  return seq;
}

std::vector<Sequence> load_corpus(const fs::path& manifest, const fs::path& data_root, bool color) {
  std::vector<Sequence> out;
  for (const auto& e : read_manifest(manifest, data_root)) out.push_back(load_sequence(e, color));
  spdlog::info("loaded {} sequences from {}", out.size(), manifest.string());
  return out;
}

void write_sequence(const fs::path& dir, const Sequence& seq) {
  fs::create_directories(dir);
  for (int i = 0; i < seq.length(); ++i) flowio::write_image(dir / numbered("frame", i, ".png"), seq.frames[i]);
  for (int i = 0; i < static_cast<int>(seq.flows.size()); ++i) {
    const FlowField& f = seq.flows[i];
    flowio::write_flo(dir / numbered("flow", i, ".flo"), f);
    flowio::write_mask(dir / numbered("valid", i, ".png"), f.valid, f.width, f.height);
  }
}

void write_corpus(const fs::path& out_dir, const std::vector<Sequence>& sequences) {
  fs::create_directories(out_dir);
  std::vector<ManifestEntry> entries;
  for (const auto& s : sequences) {
    write_sequence(out_dir / s.id, s);
    entries.push_back({fs::path(s.id), s.length(), s.corpus});
  }
  write_manifest(out_dir / "manifest.tsv", entries);
}

}  // namespace interflow
