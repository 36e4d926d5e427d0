#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "mcanet/backbone.hpp"
#include "mcanet/csra.hpp"

namespace mcanet {

// kGap is the class-agnostic baseline: global average pooling + linear.
enum class HeadKind { kCsra, kGap };

std::string_view to_string(HeadKind kind);
HeadKind parse_head_kind(std::string_view text);

struct ModelConfig {
  BackboneConfig backbone;
  CsraHeadConfig head;
  HeadKind head_kind = HeadKind::kCsra;

  void validate() const;
};

// Backbone plus classifier m [C, d]. The same m produces the class score maps
// and the final logits.
template <typename T>
class Model {
 public:
  Model(const ModelConfig& config, std::uint64_t seed);

  // images [N,3,S,S] -> logits [N,C]. Train mode caches what backward needs.
  Tensor<T> forward(const Tensor<T>& images, Mode mode);
  // Accumulates gradients of every parameter from dL/d(logits); returns
  // dL/d(images).
  Tensor<T> backward(const Tensor<T>& grad_logits);

  FeatureMap<T> features(const Tensor<T>& images) { return backbone_.forward(images, Mode::kEval); }
  Tensor<T> logits_from_features(const FeatureMap<T>& features) const;

  std::vector<Param<T>*> parameters();
  std::vector<NamedBuffer<T>> buffers();
  void zero_grad();

  Param<T>& classifier() { return classifier_; }
  const Param<T>& classifier() const { return classifier_; }
  Backbone<T>& backbone() { return backbone_; }
  const Backbone<T>& backbone() const { return backbone_; }
  const ModelConfig& config() const { return config_; }

 private:
  ModelConfig config_;
  Backbone<T> backbone_;
  Param<T> classifier_;
  FeatureMap<T> cached_features_;
};

extern template class Model<float>;
extern template class Model<double>;

}  // namespace mcanet
