#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "interflow/data.hpp"

namespace interflow {

// One sequence per line: path <TAB> frame count <TAB> corpus tag. Blank lines
// and lines starting with '#' are ignored. Relative paths resolve against
// the data root when given, otherwise against the manifest's directory.
struct ManifestEntry {
  std::filesystem::path path;
  int frame_count = 0;
  std::string corpus;
};

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& file,
                                         const std::filesystem::path& data_root = {});
void write_manifest(const std::filesystem::path& file, const std::vector<ManifestEntry>& entries);

// A sequence is either a directory of numbered images (sorted by name) or a
// video file. Directories may also hold ground truth: flow_NNNN.flo with an
// optional valid_NNNN.png mask, or KITTI-style flow_NNNN.png. Frames are
// converted to grayscale unless `color` is set.
Sequence load_sequence(const ManifestEntry& entry, bool color = false);
std::vector<Sequence> load_corpus(const std::filesystem::path& manifest, const std::filesystem::path& data_root = {},
                                  bool color = false);

// Writes frame_NNNN.png, flow_NNNN.flo and valid_NNNN.png.
void write_sequence(const std::filesystem::path& dir, const Sequence& seq);
// Writes every sequence under out_dir plus out_dir/manifest.tsv.
void write_corpus(const std::filesystem::path& out_dir, const std::vector<Sequence>& sequences);

}  // namespace interflow
