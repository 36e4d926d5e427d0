#include "mcanet/model.hpp"

#include <random>

#include "mcanet/ops.hpp"

namespace mcanet {

std::string_view to_string(HeadKind kind) { return kind == HeadKind::kCsra ? "csra" : "gap"; }

HeadKind parse_head_kind(std::string_view text) {
  if (text == "csra") return HeadKind::kCsra;
  if (text == "gap") return HeadKind::kGap;
  throw ConfigError("unknown head kind '" + std::string(text) + "' (expected csra|gap)");
}

void ModelConfig::validate() const {
  backbone.validate();
  head.validate();
}

template <typename T>
Model<T>::Model(const ModelConfig& config, std::uint64_t seed)
    : config_(config), backbone_((config.validate(), config.backbone), seed) {
  // Separate stream for the classifier so backbone init does not depend on C.
  std::mt19937_64 rng(seed ^ 0xc1a551f1e5ULL);
  const std::size_t d = config_.backbone.stage_widths.back();
  classifier_ = Param<T>("head.classifier",
                         he_normal<T>(Dims{config_.head.num_classes, d}, d, rng),
                         ParamGroup::kHead, true);
}

template <typename T>
Tensor<T> Model<T>::logits_from_features(const FeatureMap<T>& features) const {
  if (config_.head_kind == HeadKind::kGap) {
    return linear<T>(global_feature(features), classifier_.value, nullptr);
  }
  return multi_head_forward(features, classifier_.value, config_.head);
}

template <typename T>
Tensor<T> Model<T>::forward(const Tensor<T>& images, Mode mode) {
  FeatureMap<T> f = backbone_.forward(images, mode);
  Tensor<T> logits = logits_from_features(f);
  if (mode == Mode::kTrain) cached_features_ = std::move(f);
  return logits;
}

template <typename T>
Tensor<T> Model<T>::backward(const Tensor<T>& grad_logits) {
  if (cached_features_.tensor.empty()) {
    throw ConfigError("model backward without a train-mode forward");
  }
  const FeatureMap<T>& f = cached_features_;
  Tensor<T> grad_features;
  if (config_.head_kind == HeadKind::kGap) {
    const Tensor<T> g = global_feature(f);
    LinearGrads<T> lg = linear_backward(g, classifier_.value, false, grad_logits);
    add_inplace(classifier_.grad, lg.weight);
    grad_features = Tensor<T>::zeros_like(f.tensor);
    const std::size_t n = f.batch(), d = f.channels(), l = f.locations();
    const T inv_l = T(1) / static_cast<T>(l);
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t k = 0; k < d; ++k)
        for (std::size_t j = 0; j < l; ++j)
          grad_features[(b * d + k) * l + j] = lg.input.at(b, k) * inv_l;
  } else {
    HeadGrads<T> hg = multi_head_backward(f, classifier_.value, config_.head, grad_logits);
    add_inplace(classifier_.grad, hg.classifier);
    grad_features = std::move(hg.features);
  }
  return backbone_.backward(grad_features);
}

template <typename T>
std::vector<Param<T>*> Model<T>::parameters() {
  std::vector<Param<T>*> out = backbone_.parameters();
  out.push_back(&classifier_);
  return out;
}

template <typename T>
std::vector<NamedBuffer<T>> Model<T>::buffers() {
  return backbone_.buffers();
}

template <typename T>
void Model<T>::zero_grad() {
  for (auto* p : parameters()) p->zero_grad();
}

template class Model<float>;
template class Model<double>;

}  // namespace mcanet
