#include "mcanet/backbone.hpp"

#include <algorithm>

#include "mcanet/rng.hpp"

namespace mcanet {

std::string_view to_string(BlockKind kind) {
  return kind == BlockKind::kRes2Net ? "res2net" : "resnet";
}

std::string_view to_string(StemKind kind) { return kind == StemKind::kFull ? "full" : "tiny"; }

BlockKind parse_block_kind(std::string_view text) {
  if (text == "res2net") return BlockKind::kRes2Net;
  if (text == "resnet") return BlockKind::kResNet;
  throw ConfigError("unknown block kind '" + std::string(text) + "' (expected res2net|resnet)");
}

StemKind parse_stem_kind(std::string_view text) {
  if (text == "full") return StemKind::kFull;
  if (text == "tiny") return StemKind::kTiny;
  throw ConfigError("unknown stem '" + std::string(text) + "' (expected full|tiny)");
}

// ---------------------------------------------------------------------------
// BottleneckBlock

template <typename T>
BottleneckBlock<T>::BottleneckBlock(const std::string& name, const BlockSpec& spec,
                                    std::mt19937_64& rng)
    : name_(name), spec_(spec) {
  if (spec.in_channels == 0 || spec.mid_channels == 0 || spec.out_channels == 0) {
    throw ConfigError("block '" + name + "' has a zero width");
  }
  if (spec.stride < 1) throw ConfigError("block '" + name + "' stride must be >= 1");
  groups_ = spec.kind == BlockKind::kRes2Net ? spec.scale : 1;
  if (groups_ < 1) throw ConfigError("block '" + name + "' scale must be >= 1");
  if (spec.mid_channels % groups_ != 0) {
    throw ConfigError("block '" + name + "': width " + std::to_string(spec.mid_channels) +
                      " is not divisible by scale " + std::to_string(groups_));
  }
  group_width_ = spec.mid_channels / groups_;

  reduce_ = ConvUnit<T>(name + ".reduce",
                        {spec.in_channels, spec.mid_channels, 1, {1, 0}, spec.batchnorm, true}, rng);
  const bool identity_first = groups_ > 1 && spec.stride == 1;
  for (std::size_t i = 0; i < groups_; ++i) {
    if (i == 0 && identity_first) {
      group_convs_.emplace_back(std::nullopt);
      continue;
    }
    group_convs_.emplace_back(ConvUnit<T>(
        name + ".group" + std::to_string(i + 1),
        {group_width_, group_width_, 3, {spec.stride, 1}, spec.batchnorm, true}, rng));
  }
  expand_ = ConvUnit<T>(name + ".expand",
                        {spec.mid_channels, spec.out_channels, 1, {1, 0}, spec.batchnorm, false}, rng);
  if (spec.in_channels != spec.out_channels || spec.stride != 1) {
    if (!spec.allow_projection) {
      throw ConfigError("block '" + name + "': skip shape changes (" +
                        std::to_string(spec.in_channels) + "->" +
                        std::to_string(spec.out_channels) + ", stride " +
                        std::to_string(spec.stride) + ") but projection is disabled");
    }
    projection_.emplace(name + ".projection",
                        ConvUnitSpec{spec.in_channels, spec.out_channels, 1, {spec.stride, 0},
                                     spec.batchnorm, false},
                        rng);
  }
}

template <typename T>
bool BottleneckBlock<T>::adds_previous(std::size_t group) const {
  // Cascade only at stride 1, starting from the third group (index 2).
  return spec_.stride == 1 && groups_ > 1 && group >= 2;
}

template <typename T>
Tensor<T> BottleneckBlock<T>::forward(const Tensor<T>& input, Mode mode) {
  Tensor<T> reduced = reduce_.forward(input, mode);
  std::vector<Tensor<T>> outs;
  outs.reserve(groups_);
  for (std::size_t i = 0; i < groups_; ++i) {
    Tensor<T> xi = groups_ == 1 ? std::move(reduced)
                                : channel_slice(reduced, i * group_width_, group_width_);
    if (adds_previous(i)) add_inplace(xi, outs.back());
    outs.push_back(group_convs_[i] ? group_convs_[i]->forward(xi, mode) : std::move(xi));
  }
  Tensor<T> merged = groups_ == 1 ? outs[0] : channel_concat<T>(outs);
  group_outputs_ = std::move(outs);
  Tensor<T> sum = expand_.forward(merged, mode);
  if (projection_) {
    add_inplace(sum, projection_->forward(input, mode));
  } else {
    add_inplace(sum, input);
  }
  if (mode == Mode::kTrain) {
    T margin = std::numeric_limits<T>::infinity();
    for (T v : sum.data()) margin = std::min(margin, std::abs(v));
    relu_margin_ = margin;
    relu_signature_ = sign_pattern_hash(sum);
    Tensor<T> out = relu(sum);
    pre_relu_ = std::move(sum);
    return out;
  }
  return relu(sum);
}

template <typename T>
Tensor<T> BottleneckBlock<T>::backward(const Tensor<T>& grad_output) {
  if (pre_relu_.empty()) {
    throw ConfigError("block '" + name_ + "': backward without a train-mode forward");
  }
  const Tensor<T> g_sum = relu_backward(pre_relu_, grad_output);
  Tensor<T> g_input = projection_ ? projection_->backward(g_sum) : g_sum;
  const Tensor<T> g_merged = expand_.backward(g_sum);

  std::vector<Tensor<T>> g_groups(groups_);
  Tensor<T> carry;  // gradient flowing into y_i from the input of group i+1
  for (std::size_t k = groups_; k-- > 0;) {
    Tensor<T> gy = groups_ == 1 ? g_merged : channel_slice(g_merged, k * group_width_, group_width_);
    if (!carry.empty()) add_inplace(gy, carry);
    Tensor<T> gx = group_convs_[k] ? group_convs_[k]->backward(gy) : std::move(gy);
    carry = adds_previous(k) ? gx : Tensor<T>();
    g_groups[k] = std::move(gx);
  }
  const Tensor<T> g_reduced = groups_ == 1 ? g_groups[0] : channel_concat<T>(g_groups);
  add_inplace(g_input, reduce_.backward(g_reduced));
  return g_input;
}

template <typename T>
void BottleneckBlock<T>::collect_parameters(std::vector<Param<T>*>& out) {
  reduce_.collect_parameters(out);
  for (auto& c : group_convs_)
    if (c) c->collect_parameters(out);
  expand_.collect_parameters(out);
  if (projection_) projection_->collect_parameters(out);
}

template <typename T>
void BottleneckBlock<T>::collect_buffers(std::vector<NamedBuffer<T>>& out) {
  reduce_.collect_buffers(out);
  for (auto& c : group_convs_)
    if (c) c->collect_buffers(out);
  expand_.collect_buffers(out);
  if (projection_) projection_->collect_buffers(out);
}

template <typename T>
Dims BottleneckBlock<T>::output_dims(const Dims& input) const {
  Dims reduced = reduce_.output_dims(input);
  Dims group{reduced[0], group_width_, reduced[2], reduced[3]};
  Dims after = group;
  for (const auto& c : group_convs_)
    if (c) after = c->output_dims(group);
  after[1] = spec_.mid_channels;
  return expand_.output_dims(after);
}

template <typename T>
T BottleneckBlock<T>::relu_margin() const {
  T m = std::min(relu_margin_, reduce_.relu_margin());
  for (const auto& c : group_convs_)
    if (c) m = std::min(m, c->relu_margin());
  return m;
}

// ---------------------------------------------------------------------------
// BackboneConfig

BackboneConfig BackboneConfig::preset(std::string_view name) {
  BackboneConfig c;
  if (name == "tiny") return c;
  if (name == "paper50" || name == "paper101") {
    c.stage_blocks = name == "paper50" ? std::vector<std::size_t>{3, 4, 6, 3}
                                       : std::vector<std::size_t>{3, 4, 23, 3};
    c.stage_widths = {256, 512, 1024, 2048};
    c.bottleneck_widths = {104, 208, 416, 832};  // 26 channels per group, scale 4
    c.scale = 4;
    c.stem = StemKind::kFull;
    c.stem_width = 64;
    c.input_size = 448;
    return c;
  }
  throw ConfigError("unknown backbone preset '" + std::string(name) +
                    "' (expected tiny|paper50|paper101)");
}

void BackboneConfig::validate() const {
  auto four = [](const std::vector<std::size_t>& v, const char* what) {
    if (v.size() != 4) {
      throw ConfigError(std::string("backbone ") + what + " must have exactly 4 entries, got " +
                        std::to_string(v.size()));
    }
    for (auto x : v)
      if (x < 1) throw ConfigError(std::string("backbone ") + what + " entries must be >= 1");
  };
  four(stage_blocks, "stage_blocks");
  four(stage_widths, "stage_widths");
  four(bottleneck_widths, "bottleneck_widths");
  if (stem_width < 1) throw ConfigError("backbone stem_width must be >= 1");
  if (block_kind == BlockKind::kRes2Net) {
    if (scale < 2) throw ConfigError("res2net scale must be >= 2, got " + std::to_string(scale));
    for (auto w : bottleneck_widths) {
      if (w % scale != 0) {
        throw ConfigError("res2net bottleneck width " + std::to_string(w) +
                          " is not divisible by scale " + std::to_string(scale));
      }
    }
  }
  const std::size_t min_size = stem == StemKind::kFull ? 32 : 8;
  if (input_size < min_size) {
    throw ConfigError("input size " + std::to_string(input_size) + " below minimum " +
                      std::to_string(min_size) + " for the " + std::string(to_string(stem)) +
                      " stem");
  }
}

// ---------------------------------------------------------------------------
// Backbone

template <typename T>
Backbone<T>::Backbone(const BackboneConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  std::mt19937_64 rng(seed);
  if (config_.stem == StemKind::kFull) {
    stem_ = ConvUnit<T>("backbone.stem", {3, config_.stem_width, 7, {2, 3}, config_.batchnorm, true},
                        rng);
  } else {
    stem_ = ConvUnit<T>("backbone.stem", {3, config_.stem_width, 3, {1, 1}, config_.batchnorm, true},
                        rng);
  }
  std::size_t in = config_.stem_width;
  for (std::size_t s = 0; s < 4; ++s) {
    for (std::size_t b = 0; b < config_.stage_blocks[s]; ++b) {
      BlockSpec spec;
      spec.kind = config_.block_kind;
      spec.in_channels = in;
      spec.mid_channels = config_.bottleneck_widths[s];
      spec.out_channels = config_.stage_widths[s];
      spec.stride = (s > 0 && b == 0) ? 2 : 1;
      spec.scale = config_.scale;
      spec.batchnorm = config_.batchnorm;
      blocks_.emplace_back("backbone.stage" + std::to_string(s + 1) + ".block" + std::to_string(b),
                           spec, rng);
      in = spec.out_channels;
    }
  }
}

template <typename T>
void Backbone<T>::check_input(const Dims& dims) const {
  if (dims.size() != 4 || dims[1] != 3) {
    throw ConfigError("backbone expects [N,3,S,S] images, got " + dims_to_string(dims));
  }
  const std::size_t min_size = config_.stem == StemKind::kFull ? 32 : 8;
  if (dims[2] < min_size || dims[3] < min_size) {
    throw ConfigError("image size " + dims_to_string(dims) + " below minimum " +
                      std::to_string(min_size) + " for the " +
                      std::string(to_string(config_.stem)) + " stem");
  }
}

template <typename T>
FeatureMap<T> Backbone<T>::forward(const Tensor<T>& images, Mode mode) {
  check_input(images.dims());
  Tensor<T> x = stem_.forward(images, mode);
  if (config_.stem == StemKind::kFull) {
    MaxPoolResult<T> pooled = maxpool2d(x, PoolGeometry{3, 2, 1});
    if (mode == Mode::kTrain) {
      pool_input_dims_ = x.dims();
      pool_argmax_ = std::move(pooled.argmax);
    }
    x = std::move(pooled.output);
  }
  for (auto& b : blocks_) x = b.forward(x, mode);
  return FeatureMap<T>{std::move(x)};
}

template <typename T>
Tensor<T> Backbone<T>::backward(const Tensor<T>& grad_features) {
  Tensor<T> g = grad_features;
  for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it) g = it->backward(g);
  if (config_.stem == StemKind::kFull) g = maxpool2d_backward(pool_input_dims_, pool_argmax_, g);
  return stem_.backward(g);
}

template <typename T>
std::vector<Param<T>*> Backbone<T>::parameters() {
  std::vector<Param<T>*> out;
  stem_.collect_parameters(out);
  for (auto& b : blocks_) b.collect_parameters(out);
  return out;
}

template <typename T>
std::vector<NamedBuffer<T>> Backbone<T>::buffers() {
  std::vector<NamedBuffer<T>> out;
  stem_.collect_buffers(out);
  for (auto& b : blocks_) b.collect_buffers(out);
  return out;
}

template <typename T>
std::size_t Backbone<T>::parameter_count() {
  std::size_t n = 0;
  for (auto* p : parameters()) n += p->value.size();
  return n;
}

template <typename T>
Dims Backbone<T>::output_dims(const Dims& input) const {
  check_input(input);
  Dims d = stem_.output_dims(input);
  if (config_.stem == StemKind::kFull) {
    d[2] = (d[2] + 2 - 3) / 2 + 1;
    d[3] = (d[3] + 2 - 3) / 2 + 1;
  }
  for (const auto& b : blocks_) d = b.output_dims(d);
  return d;
}

template <typename T>
std::uint64_t BottleneckBlock<T>::relu_signature() const {
  std::uint64_t h = mix64(relu_signature_ ^ reduce_.relu_signature());
  for (const auto& c : group_convs_)
    if (c) h = mix64(h ^ c->relu_signature());
  if (projection_) h = mix64(h ^ projection_->relu_signature());
  return mix64(h ^ expand_.relu_signature());
}

template <typename T>
std::uint64_t Backbone<T>::relu_signature() const {
  std::uint64_t h = stem_.relu_signature();
  for (const auto& b : blocks_) h = mix64(h ^ b.relu_signature());
  return h;
}

template <typename T>
T Backbone<T>::relu_margin() const {
  T m = stem_.relu_margin();
  for (const auto& b : blocks_) m = std::min(m, b.relu_margin());
  return m;
}

template class BottleneckBlock<float>;
template class BottleneckBlock<double>;
template class Backbone<float>;
template class Backbone<double>;

}  // namespace mcanet
