#include "mcanet/csra.hpp"

#include <cmath>

#include "mcanet/detail/gemm.hpp"
#include "mcanet/ops.hpp"

namespace mcanet {

std::vector<double> CsraHeadConfig::default_temperatures(std::size_t heads) {
  if (heads == 0) throw ConfigError("CSRA needs at least one head");
  if (heads == 1) return {1.0};
  std::vector<double> t;
  for (std::size_t i = 1; i < heads; ++i) t.push_back(static_cast<double>(i));
  t.push_back(99.0);
  return t;
}

CsraHeadConfig CsraHeadConfig::with_heads(std::size_t classes, std::size_t heads, double lambda) {
  return CsraHeadConfig{classes, heads, default_temperatures(heads), lambda};
}

void CsraHeadConfig::validate() const {
  if (num_classes == 0) throw ConfigError("CSRA num_classes must be >= 1");
  if (num_heads == 0) throw ConfigError("CSRA num_heads must be >= 1");
  if (temperatures.size() != num_heads) {
    throw ConfigError("CSRA has " + std::to_string(num_heads) + " heads but " +
                      std::to_string(temperatures.size()) + " temperatures");
  }
  for (double t : temperatures) {
    if (!(t > 0) || !std::isfinite(t)) {
      throw ConfigError("CSRA temperatures must be finite and > 0, got " + std::to_string(t));
    }
  }
  if (!(lambda >= 0) || !std::isfinite(lambda)) {
    throw ConfigError("CSRA lambda must be finite and >= 0, got " + std::to_string(lambda));
  }
}

namespace {

template <typename T>
void check_classifier(const FeatureMap<T>& x, const Tensor<T>& classifier) {
  if (x.tensor.rank() != 4) {
    throw ConfigError("feature map must be rank 4, got " + dims_to_string(x.tensor.dims()));
  }
  if (classifier.rank() != 2 || classifier.dim(1) != x.channels()) {
    throw ConfigError("classifier dims " + dims_to_string(classifier.dims()) +
                      " do not match feature channels " + std::to_string(x.channels()));
  }
}

template <typename T>
void check_temperature_lambda(T temperature, T lambda) {
  if (!(temperature > T(0))) {
    throw ConfigError("CSRA temperature must be > 0, got " + std::to_string(temperature));
  }
  if (!(lambda >= T(0))) {
    throw ConfigError("CSRA lambda must be >= 0, got " + std::to_string(lambda));
  }
}

// Score maps flattened to [N, C, L].
template <typename T>
Tensor<T> flat_scores(const FeatureMap<T>& x, const Tensor<T>& classifier) {
  const Tensor<T> r = class_score_maps(x, classifier);
  return r.reshaped(Dims{r.dim(0), r.dim(1), r.dim(2) * r.dim(3)});
}

template <typename T>
Tensor<T> head_logits(const Tensor<T>& scores, T temperature, T lambda) {
  const std::size_t n = scores.dim(0), c = scores.dim(1), l = scores.dim(2);
  const Tensor<T> s = softmax_with_temperature(scores, temperature, 2);
  Tensor<T> out(Dims{n, c});
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t i = 0; i < c; ++i) {
      const std::size_t base = (b * c + i) * l;
      T sum = 0, att = 0;
      for (std::size_t j = 0; j < l; ++j) {
        sum += scores[base + j];
        att += s[base + j] * scores[base + j];
      }
      out.at(b, i) = sum / static_cast<T>(l) + lambda * att;
    }
  }
  return out;
}

// Adds dL/dR for one head into grad_scores.
template <typename T>
void head_scores_backward(const Tensor<T>& scores, T temperature, T lambda,
                          const Tensor<T>& grad_logits, Tensor<T>& grad_scores) {
  const std::size_t n = scores.dim(0), c = scores.dim(1), l = scores.dim(2);
  const Tensor<T> s = softmax_with_temperature(scores, temperature, 2);
  const T inv_l = T(1) / static_cast<T>(l);
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t i = 0; i < c; ++i) {
      const std::size_t base = (b * c + i) * l;
      const T dy = grad_logits.at(b, i);
      T att = 0;
      for (std::size_t j = 0; j < l; ++j) att += s[base + j] * scores[base + j];
      for (std::size_t j = 0; j < l; ++j) {
        const T sj = s[base + j];
        grad_scores[base + j] +=
            dy * (inv_l + lambda * sj * (T(1) + temperature * (scores[base + j] - att)));
      }
    }
  }
}

// Backpropagates dL/dR (flattened [N, C, L]) into features and classifier.
template <typename T>
HeadGrads<T> scores_backward(const FeatureMap<T>& x, const Tensor<T>& classifier,
                             const Tensor<T>& grad_scores) {
  const std::size_t n = x.batch(), d = x.channels(), l = x.locations(), c = classifier.dim(0);
  HeadGrads<T> g{Tensor<T>::zeros_like(x.tensor), Tensor<T>::zeros_like(classifier)};
  std::vector<T> xt(l * d);
  for (std::size_t b = 0; b < n; ++b) {
    const T* xb = x.tensor.data().data() + b * d * l;
    const T* gr = grad_scores.data().data() + b * c * l;
    for (std::size_t k = 0; k < d; ++k)
      for (std::size_t j = 0; j < l; ++j) xt[j * d + k] = xb[k * l + j];
    detail::gemm_nn(c, d, l, gr, xt.data(), g.classifier.data().data());
    detail::gemm_tn(d, l, c, classifier.data().data(), gr, g.features.data().data() + b * d * l);
  }
  return g;
}

}  // namespace

template <typename T>
Tensor<T> class_score_maps(const FeatureMap<T>& x, const Tensor<T>& classifier) {
  check_classifier(x, classifier);
  const std::size_t n = x.batch(), d = x.channels(), l = x.locations(), c = classifier.dim(0);
  Tensor<T> r(Dims{n, c, x.height(), x.width()});
  for (std::size_t b = 0; b < n; ++b) {
    detail::gemm_nn(c, l, d, classifier.data().data(), x.tensor.data().data() + b * d * l,
                    r.data().data() + b * c * l);
  }
  return r;
}

template <typename T>
Tensor<T> attention_scores(const Tensor<T>& score_maps, T temperature) {
  if (score_maps.rank() != 4) {
    throw ConfigError("attention_scores expects [N,C,h,w], got " +
                      dims_to_string(score_maps.dims()));
  }
  const Tensor<T> flat = score_maps.reshaped(
      Dims{score_maps.dim(0), score_maps.dim(1), score_maps.dim(2) * score_maps.dim(3)});
  return softmax_with_temperature(flat, temperature, 2);
}

template <typename T>
Tensor<T> class_feature_aggregate(const FeatureMap<T>& x, const Tensor<T>& attention) {
  const std::size_t n = x.batch(), d = x.channels(), l = x.locations();
  if (attention.rank() != 3 || attention.dim(0) != n || attention.dim(2) != l) {
    throw ConfigError("attention dims " + dims_to_string(attention.dims()) +
                      " do not match feature map " + dims_to_string(x.tensor.dims()));
  }
  const std::size_t c = attention.dim(1);
  Tensor<T> a(Dims{n, c, d});
  for (std::size_t b = 0; b < n; ++b) {
    // a[b] [C, d] = s[b] [C, L] * X[b]^T [L, d]
    detail::gemm_nt(c, d, l, attention.data().data() + b * c * l,
                    x.tensor.data().data() + b * d * l, a.data().data() + b * c * d);
  }
  return a;
}

template <typename T>
Tensor<T> global_feature(const FeatureMap<T>& x) {
  const std::size_t n = x.batch(), d = x.channels(), l = x.locations();
  Tensor<T> g(Dims{n, d});
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t k = 0; k < d; ++k) {
      const T* row = x.tensor.data().data() + (b * d + k) * l;
      T sum = 0;
      for (std::size_t j = 0; j < l; ++j) sum += row[j];
      g.at(b, k) = sum / static_cast<T>(l);
    }
  }
  return g;
}

template <typename T>
Tensor<T> csra_head_forward(const FeatureMap<T>& x, const Tensor<T>& classifier, T temperature,
                            T lambda) {
  check_temperature_lambda(temperature, lambda);
  return head_logits(flat_scores(x, classifier), temperature, lambda);
}

template <typename T>
HeadOutput<T> csra_head_details(const FeatureMap<T>& x, const Tensor<T>& classifier,
                                T temperature, T lambda) {
  check_temperature_lambda(temperature, lambda);
  HeadOutput<T> h;
  h.attention = attention_scores(class_score_maps(x, classifier), temperature);
  h.class_features = class_feature_aggregate(x, h.attention);
  h.global = global_feature(x);
  const std::size_t n = x.batch(), d = x.channels(), c = classifier.dim(0);
  h.fused = Tensor<T>(Dims{n, c, d});
  h.logits = Tensor<T>(Dims{n, c});
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t i = 0; i < c; ++i) {
      T y = 0;
      for (std::size_t k = 0; k < d; ++k) {
        const T f = h.global.at(b, k) + lambda * h.class_features[(b * c + i) * d + k];
        h.fused[(b * c + i) * d + k] = f;
        y += classifier.at(i, k) * f;
      }
      h.logits.at(b, i) = y;
    }
  }
  return h;
}

template <typename T>
HeadGrads<T> csra_head_backward(const FeatureMap<T>& x, const Tensor<T>& classifier,
                                T temperature, T lambda, const Tensor<T>& grad_logits) {
  check_temperature_lambda(temperature, lambda);
  const Tensor<T> scores = flat_scores(x, classifier);
  if (grad_logits.dims() != Dims{scores.dim(0), scores.dim(1)}) {
    throw ConfigError("grad_logits dims " + dims_to_string(grad_logits.dims()) +
                      " do not match [N,C]");
  }
  Tensor<T> grad_scores = Tensor<T>::zeros_like(scores);
  head_scores_backward(scores, temperature, lambda, grad_logits, grad_scores);
  return scores_backward(x, classifier, grad_scores);
}

template <typename T>
Tensor<T> multi_head_forward(const FeatureMap<T>& x, const Tensor<T>& classifier,
                             const CsraHeadConfig& config) {
  config.validate();
  if (classifier.rank() != 2 || classifier.dim(0) != config.num_classes) {
    throw ConfigError("classifier dims " + dims_to_string(classifier.dims()) + " do not match " +
                      std::to_string(config.num_classes) + " classes");
  }
  const T lambda = static_cast<T>(config.lambda);
  const Tensor<T> scores = flat_scores(x, classifier);
  Tensor<T> fused = head_logits(scores, static_cast<T>(config.temperatures[0]), lambda);
  for (std::size_t h = 1; h < config.num_heads; ++h) {
    add_inplace(fused, head_logits(scores, static_cast<T>(config.temperatures[h]), lambda));
  }
  return fused;
}

template <typename T>
HeadGrads<T> multi_head_backward(const FeatureMap<T>& x, const Tensor<T>& classifier,
                                 const CsraHeadConfig& config, const Tensor<T>& grad_logits) {
  config.validate();
  const Tensor<T> scores = flat_scores(x, classifier);
  Tensor<T> grad_scores = Tensor<T>::zeros_like(scores);
  for (std::size_t h = 0; h < config.num_heads; ++h) {
    head_scores_backward(scores, static_cast<T>(config.temperatures[h]),
                         static_cast<T>(config.lambda), grad_logits, grad_scores);
  }
  return scores_backward(x, classifier, grad_scores);
}

template <typename T>
LabelMatrix predict_labels(const Tensor<T>& logits) {
  if (logits.rank() != 2) {
    throw ConfigError("predict_labels expects [N,C] logits, got " + dims_to_string(logits.dims()));
  }
  LabelMatrix out(logits.dim(0), logits.dim(1));
  for (std::size_t i = 0; i < logits.size(); ++i) out.values[i] = logits[i] >= T(0) ? 1 : 0;
  return out;
}

#define MCANET_INSTANTIATE_CSRA(T)                                                            \
  template Tensor<T> class_score_maps(const FeatureMap<T>&, const Tensor<T>&);                \
  template Tensor<T> attention_scores(const Tensor<T>&, T);                                   \
  template Tensor<T> class_feature_aggregate(const FeatureMap<T>&, const Tensor<T>&);         \
  template Tensor<T> global_feature(const FeatureMap<T>&);                                    \
  template Tensor<T> csra_head_forward(const FeatureMap<T>&, const Tensor<T>&, T, T);         \
  template HeadOutput<T> csra_head_details(const FeatureMap<T>&, const Tensor<T>&, T, T);     \
  template HeadGrads<T> csra_head_backward(const FeatureMap<T>&, const Tensor<T>&, T, T,      \
                                           const Tensor<T>&);                                 \
  template Tensor<T> multi_head_forward(const FeatureMap<T>&, const Tensor<T>&,               \
                                        const CsraHeadConfig&);                               \
  template HeadGrads<T> multi_head_backward(const FeatureMap<T>&, const Tensor<T>&,           \
                                            const CsraHeadConfig&, const Tensor<T>&);         \
  template LabelMatrix predict_labels(const Tensor<T>&);

MCANET_INSTANTIATE_CSRA(float)
MCANET_INSTANTIATE_CSRA(double)

}  // namespace mcanet
