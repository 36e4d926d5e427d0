#pragma once

#include <vector>

#include "mcanet/backbone.hpp"
#include "mcanet/label_matrix.hpp"
#include "mcanet/tensor.hpp"

// Class-specific residual attention.
//
// For class i with classifier direction m_i and feature vectors X_j at each
// spatial location j:
//   s_j^i = softmax_j(T * X_j^T m_i)
//   a^i   = sum_j s_j^i X_j
//   g     = mean_j X_j
//   y^i   = m_i^T (g + lambda * a^i)
// Multiple heads share m and lambda, differ in T, and their logits are summed.
namespace mcanet {

struct CsraHeadConfig {
  std::size_t num_classes = 1;
  std::size_t num_heads = 1;
  std::vector<double> temperatures{1.0};
  double lambda = 0.1;

  // {1} for one head, {1, 2, ..., H-1, 99} otherwise.
  static std::vector<double> default_temperatures(std::size_t heads);
  static CsraHeadConfig with_heads(std::size_t classes, std::size_t heads, double lambda = 0.1);
  void validate() const;
};

// Per-head intermediate values of the literal feature-space formulation.
template <typename T>
struct HeadOutput {
  Tensor<T> logits;     // [N, C]
  Tensor<T> attention;  // s: [N, C, h*w]
  Tensor<T> class_features;  // a: [N, C, d]
  Tensor<T> global;          // g: [N, d]
  Tensor<T> fused;           // f: [N, C, d]
};

template <typename T>
struct HeadGrads {
  Tensor<T> features;    // [N, d, h, w]
  Tensor<T> classifier;  // [C, d]
};

// R[n, i, j] = X_j^T m_i: [N, C, h, w].
template <typename T>
Tensor<T> class_score_maps(const FeatureMap<T>& x, const Tensor<T>& classifier);

// Softmax over the spatial locations of each (sample, class) score map:
// [N, C, h, w] -> [N, C, h*w].
template <typename T>
Tensor<T> attention_scores(const Tensor<T>& score_maps, T temperature);

// a^i = sum_k s_k^i X_k: [N, C, d].
template <typename T>
Tensor<T> class_feature_aggregate(const FeatureMap<T>& x, const Tensor<T>& attention);

// g = mean_k X_k: [N, d].
template <typename T>
Tensor<T> global_feature(const FeatureMap<T>& x);

// Evaluates one head through the score maps: y^i = mean_j R_ij + lambda *
// sum_j s_j^i R_ij, which equals m_i^T (g + lambda a^i).
template <typename T>
Tensor<T> csra_head_forward(const FeatureMap<T>& x, const Tensor<T>& classifier, T temperature,
                            T lambda);

// Same head evaluated literally in feature space, keeping every intermediate.
template <typename T>
HeadOutput<T> csra_head_details(const FeatureMap<T>& x, const Tensor<T>& classifier,
                                T temperature, T lambda);

template <typename T>
HeadGrads<T> csra_head_backward(const FeatureMap<T>& x, const Tensor<T>& classifier,
                                T temperature, T lambda, const Tensor<T>& grad_logits);

// Sum of per-head logits.
template <typename T>
Tensor<T> multi_head_forward(const FeatureMap<T>& x, const Tensor<T>& classifier,
                             const CsraHeadConfig& config);

template <typename T>
HeadGrads<T> multi_head_backward(const FeatureMap<T>& x, const Tensor<T>& classifier,
                                 const CsraHeadConfig& config, const Tensor<T>& grad_logits);

// 1 iff sigmoid(logit) >= 0.5, i.e. logit >= 0.
template <typename T>
LabelMatrix predict_labels(const Tensor<T>& logits);

}  // namespace mcanet
