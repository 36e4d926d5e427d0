#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "mcanet/layers.hpp"

namespace mcanet {

enum class BlockKind { kRes2Net, kResNet };
enum class StemKind { kFull, kTiny };

std::string_view to_string(BlockKind kind);
std::string_view to_string(StemKind kind);
BlockKind parse_block_kind(std::string_view text);
StemKind parse_stem_kind(std::string_view text);

struct BlockSpec {
  BlockKind kind = BlockKind::kRes2Net;
  std::size_t in_channels = 0;
  std::size_t mid_channels = 0;  // width of the 3x3 stage (split into `scale` groups)
  std::size_t out_channels = 0;
  std::size_t stride = 1;
  std::size_t scale = 4;  // ignored for kResNet
  bool batchnorm = true;
  bool allow_projection = true;
};

// Bottleneck residual block.
//
// kResNet: 1x1 reduce -> 3x3 -> 1x1 expand, plus skip.
// kRes2Net: the reduced tensor is split into `scale` channel groups x_1..x_s.
//   At stride 1:  y_1 = x_1, y_2 = K_2(x_2), y_i = K_i(x_i + y_{i-1}) for i >= 3.
//   At stride 2:  y_i = K_i(x_i) for every group (strided 3x3 each).
//   With scale 1 the single group is convolved, which is the plain bottleneck.
// The groups are concatenated and expanded by a 1x1 conv. The skip is
// projected by a strided 1x1 conv + BN when the shape changes. Every conv is
// followed by BN; relu follows every conv except the expansion, and the sum.
template <typename T>
class BottleneckBlock {
 public:
  BottleneckBlock(const std::string& name, const BlockSpec& spec, std::mt19937_64& rng);

  Tensor<T> forward(const Tensor<T>& input, Mode mode);
  Tensor<T> backward(const Tensor<T>& grad_output);

  void collect_parameters(std::vector<Param<T>*>& out);
  void collect_buffers(std::vector<NamedBuffer<T>>& out);
  Dims output_dims(const Dims& input) const;
  T relu_margin() const;
  std::uint64_t relu_signature() const;

  const BlockSpec& spec() const { return spec_; }
  std::size_t groups() const { return groups_; }
  // y_1..y_s from the most recent forward (any mode), for inspection.
  const std::vector<Tensor<T>>& group_outputs() const { return group_outputs_; }

  ConvUnit<T>& reduce() { return reduce_; }
  ConvUnit<T>& expand() { return expand_; }
  std::vector<std::optional<ConvUnit<T>>>& group_convs() { return group_convs_; }
  std::optional<ConvUnit<T>>& projection() { return projection_; }

 private:
  bool adds_previous(std::size_t group) const;

  std::string name_;
  BlockSpec spec_;
  std::size_t groups_ = 1;
  std::size_t group_width_ = 0;
  ConvUnit<T> reduce_;
  std::vector<std::optional<ConvUnit<T>>> group_convs_;  // nullopt = identity group
  ConvUnit<T> expand_;
  std::optional<ConvUnit<T>> projection_;

  std::vector<Tensor<T>> group_outputs_;
  Tensor<T> pre_relu_;
  T relu_margin_ = std::numeric_limits<T>::infinity();
  std::uint64_t relu_signature_ = 0;
};

struct BackboneConfig {
  BlockKind block_kind = BlockKind::kRes2Net;
  std::vector<std::size_t> stage_blocks{1, 1, 1, 1};
  std::vector<std::size_t> stage_widths{16, 32, 64, 128};
  std::vector<std::size_t> bottleneck_widths{8, 16, 32, 64};
  std::size_t scale = 4;
  StemKind stem = StemKind::kTiny;
  std::size_t stem_width = 16;
  std::size_t input_size = 32;
  bool batchnorm = true;

  // "tiny", "paper50" (K=[3,4,6,3]) or "paper101" (K=[3,4,23,3]).
  static BackboneConfig preset(std::string_view name);
  void validate() const;
  std::size_t downsample_factor() const { return stem == StemKind::kFull ? 32 : 8; }
};

// Backbone output: [N, d, h, w].
template <typename T>
struct FeatureMap {
  Tensor<T> tensor;

  std::size_t batch() const { return tensor.dim(0); }
  std::size_t channels() const { return tensor.dim(1); }
  std::size_t height() const { return tensor.dim(2); }
  std::size_t width() const { return tensor.dim(3); }
  std::size_t locations() const { return tensor.dim(2) * tensor.dim(3); }
};

// Stem followed by four stages of bottleneck blocks; the first block of
// stages 2-4 strides by 2. Layers run in order forward and in reverse order
// for the gradient pass.
template <typename T>
class Backbone {
 public:
  Backbone(const BackboneConfig& config, std::uint64_t seed);

  FeatureMap<T> forward(const Tensor<T>& images, Mode mode);
  // Accumulates parameter gradients; returns dL/d(images).
  Tensor<T> backward(const Tensor<T>& grad_features);

  std::vector<Param<T>*> parameters();
  std::vector<NamedBuffer<T>> buffers();
  std::size_t parameter_count();
  std::size_t block_count() const { return blocks_.size(); }
  Dims output_dims(const Dims& input) const;
  T relu_margin() const;
  std::uint64_t relu_signature() const;

  const BackboneConfig& config() const { return config_; }
  std::vector<BottleneckBlock<T>>& blocks() { return blocks_; }
  ConvUnit<T>& stem_conv() { return stem_; }

 private:
  void check_input(const Dims& dims) const;

  BackboneConfig config_;
  ConvUnit<T> stem_;
  std::vector<BottleneckBlock<T>> blocks_;
  std::vector<std::size_t> pool_argmax_;
  Dims pool_input_dims_;
};

extern template class BottleneckBlock<float>;
extern template class BottleneckBlock<double>;
extern template class Backbone<float>;
extern template class Backbone<double>;

}  // namespace mcanet
