#pragma once

// Hourglass encoder-decoder with concatenative side channels.
//
//   Conv1..Conv5   three conv units each, 2x2 max-pool after every block
//   Bottleneck     two conv units + 2x transposed conv
//   Dec5..Dec2     concat(skip) + two conv units + 2x transposed conv
//   Dec1           concat(skip) + one conv unit + head conv (no BN, no ReLU)
//
// A conv unit is conv -> batch norm -> leaky ReLU. The head emits one channel
// (center-frame interpolation) or two channels (u, v flow in pixels).

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "interflow/image.hpp"
#include "interflow/layers.hpp"
#include "interflow/tensor.hpp"

namespace interflow {

enum class Head { Interpolation, Flow };
enum class Mode { Train, Eval };

std::string_view to_string(Head head);
Head head_from_string(std::string_view s);

// Encoder block k (1-based) feeds decoder block k at the same resolution.
struct SkipLink {
  int encoder_block = 0;
  int decoder_block = 0;
  int channels = 0;
  bool operator==(const SkipLink&) const = default;
};

struct NetworkSpec {
  int n_input_frames = 4;
  // Conv1..Conv5 output channels; every conv inside a block uses this width.
  std::array<int, 5> conv_block_channels{128, 128, 256, 256, 512};
  int bottleneck_channels = 1024;
  // Output width of the transposed convs: bottleneck, Dec5, Dec4, Dec3, Dec2.
  std::array<int, 5> upsample_channels{512, 768, 256, 384, 128};
  // Declared input width (after concatenation) of Dec5..Dec1.
  std::array<int, 5> decoder_input_channels{1024, 1024, 512, 512, 256};
  // Width of the convs inside Dec5..Dec1 (Dec1: the conv before the head).
  std::array<int, 5> decoder_conv_channels{1024, 512, 512, 256, 128};
  std::vector<SkipLink> skip_plan{{5, 5, 512}, {4, 4, 256}, {3, 3, 256}, {2, 2, 128}, {1, 1, 128}};
  Head head = Head::Interpolation;
  float leaky_relu_slope = 0.1f;
  int width = 384;
  int height = 192;

  // Channel layout from the reference architecture table.
  static NetworkSpec reference();
  // Every channel count divided by `divisor` (input frames and head kept).
  NetworkSpec scaled(int divisor) const;

  int head_channels() const { return head == Head::Flow ? 2 : 1; }
  // Input channel count of each block in order Conv1..Conv5, Bottleneck,
  // Dec5..Dec1.
  std::vector<int> block_input_channels() const;
  // Throws ShapeError naming the offending boundary.
  void validate() const;
  bool operator==(const NetworkSpec&) const = default;
};

void validate_resolution(int width, int height);

struct BlockTrace {
  std::string block;
  Shape input;
  Shape output;
};

class Network {
 public:
  Network() = default;
  Network(const NetworkSpec& spec, std::uint64_t seed);

  const NetworkSpec& spec() const { return spec_; }
  Head head() const { return spec_.head; }
  Mode mode() const { return mode_; }
  void set_mode(Mode mode);

  // x: batch x n_input_frames x H x W, H and W multiples of 32.
  Tensor forward(const Tensor& x);
  // Accumulates parameter gradients for the most recent train-mode forward.
  void backward(const Tensor& grad_output);
  void zero_grad();
  void clear_cache();

  // Canonical order; includes non-trainable batch-norm buffers.
  std::vector<nn::Parameter*> parameters();
  std::vector<const nn::Parameter*> parameters() const;
  std::size_t parameter_count(bool trainable_only = true) const;

  // Per-block shapes from the most recent forward.
  const std::vector<BlockTrace>& trace() const { return trace_; }

  // Replaces the final conv of Dec1 with a freshly initialized one.
  void replace_head(Head head, std::uint64_t seed);

 private:
  struct Encoder {
    std::vector<nn::ConvUnit> units;
    nn::MaxPool2 pool;
  };
  struct Decoder {
    std::vector<nn::ConvUnit> units;
    nn::UpUnit up;  // unused for Dec1
    int skip_channels = 0;
  };


  NetworkSpec spec_;
  Mode mode_ = Mode::Train;
  std::array<Encoder, 5> encoders_;
  std::vector<nn::ConvUnit> bottleneck_;
  nn::UpUnit bottleneck_up_;
  std::array<Decoder, 5> decoders_;  // index 0 = Dec5 ... 4 = Dec1
  nn::Conv2d head_;
  std::vector<BlockTrace> trace_;
  bool cached_ = false;
};

Network build_network(const NetworkSpec& spec, std::uint64_t seed);

// Copy of `net` with a 2-channel flow head; all other parameters identical.
Network swap_head(const Network& net, std::uint64_t seed);

// FNV-1a over the raw bytes of every parameter; the head conv is skipped
// when include_head is false.
std::uint64_t parameter_checksum(const Network& net, bool include_head = true);

// Runs the interpolation network once per color channel. Each channel's four
// frames are normalized jointly and the prediction is denormalized with the
// same statistics. Frames of any size are edge-padded to multiples of 32 and
// the prediction is cropped back.
Image interpolate_color(Network& net, std::span<const Image> frames);

}  // namespace interflow
