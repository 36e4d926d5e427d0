#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "mcanet/ops.hpp"
#include "mcanet/tensor.hpp"

namespace mcanet {

enum class ParamGroup { kBackbone, kHead };

// A trainable tensor with its gradient accumulator and momentum buffer.
template <typename T>
struct Param {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  Tensor<T> momentum;
  ParamGroup group = ParamGroup::kBackbone;
  bool weight_decay = true;

  Param() = default;
  Param(std::string n, Tensor<T> v, ParamGroup g, bool decay)
      : name(std::move(n)),
        value(std::move(v)),
        grad(Tensor<T>::zeros_like(value)),
        momentum(Tensor<T>::zeros_like(value)),
        group(g),
        weight_decay(decay) {}

  void zero_grad() { grad.fill(T(0)); }
};

// Non-trainable state that still belongs in a checkpoint (BN running stats).
template <typename T>
struct NamedBuffer {
  std::string name;
  Tensor<T>* tensor;
};

// He/Kaiming fan-in normal initialisation.
template <typename T>
Tensor<T> he_normal(const Dims& dims, std::size_t fan_in, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  Tensor<T> t(dims);
  for (auto& v : t.data()) v = static_cast<T>(dist(rng));
  return t;
}

// FNV-1a over the positive/non-positive bit of every element.
template <typename T>
std::uint64_t sign_pattern_hash(const Tensor<T>& t) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  std::uint64_t word = 0;
  std::size_t bits = 0;
  for (T v : t.data()) {
    word = (word << 1) | (v > T(0));
    if (++bits == 64) {
      h = (h ^ word) * 0x100000001b3ULL;
      word = 0;
      bits = 0;
    }
  }
  return (h ^ word ^ (bits << 56)) * 0x100000001b3ULL;
}

struct ConvUnitSpec {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 1;
  ConvGeometry geometry{};
  bool batchnorm = true;
  bool relu = true;
};

// conv -> [batchnorm] -> [relu]. The conv carries a bias only when batch norm
// is off. Caches activations for backward in train mode only.
template <typename T>
class ConvUnit {
 public:
  ConvUnit() = default;
  ConvUnit(const std::string& name, const ConvUnitSpec& spec, std::mt19937_64& rng);

  Tensor<T> forward(const Tensor<T>& input, Mode mode);
  Tensor<T> backward(const Tensor<T>& grad_output);

  void collect_parameters(std::vector<Param<T>*>& out);
  void collect_buffers(std::vector<NamedBuffer<T>>& out);

  Param<T>& weight() { return weight_; }
  std::optional<Param<T>>& bias() { return bias_; }
  std::optional<Param<T>>& gamma() { return gamma_; }
  std::optional<Param<T>>& beta() { return beta_; }
  BatchNormStats<T>& bn_stats() { return stats_; }
  const ConvUnitSpec& spec() const { return spec_; }

  Dims output_dims(const Dims& input) const;
  // Smallest |pre-activation| seen by the relu in the last train forward.
  T relu_margin() const { return relu_margin_; }
  // Hash of the relu on/off pattern of the last train forward.
  std::uint64_t relu_signature() const { return relu_signature_; }

  static constexpr double kBatchNormEps = 1e-5;

 private:
  std::string name_;
  ConvUnitSpec spec_;
  Param<T> weight_;
  std::optional<Param<T>> bias_;
  std::optional<Param<T>> gamma_;
  std::optional<Param<T>> beta_;
  BatchNormStats<T> stats_;

  Tensor<T> input_;
  Tensor<T> pre_relu_;
  BatchNormCache<T> bn_cache_;
  T relu_margin_ = std::numeric_limits<T>::infinity();
  std::uint64_t relu_signature_ = 0;
};

extern template class ConvUnit<float>;
extern template class ConvUnit<double>;

}  // namespace mcanet
