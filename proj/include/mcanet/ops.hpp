#pragma once

#include <cstddef>
#include <vector>

#include "mcanet/tensor.hpp"

// Differentiable primitives. Every forward op is a pure function of its
// arguments; the matching *_backward function maps an upstream gradient to
// gradients for each differentiable argument.
namespace mcanet {

enum class Mode { kTrain, kEval };

struct ConvGeometry {
  std::size_t stride = 1;
  std::size_t padding = 0;
};

template <typename T>
struct Conv2dGrads {
  Tensor<T> input;
  Tensor<T> weight;
  Tensor<T> bias;  // empty when the forward had no bias
};

// input [N,Cin,H,W], weight [Cout,Cin,kH,kW], bias [Cout] or nullptr.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>* bias,
                 ConvGeometry geometry);

template <typename T>
Conv2dGrads<T> conv2d_backward(const Tensor<T>& input, const Tensor<T>& weight, bool with_bias,
                               const Tensor<T>& grad_output, ConvGeometry geometry);

template <typename T>
struct BatchNormStats {
  Tensor<T> running_mean;
  Tensor<T> running_var;
  T momentum = T(0.1);

  explicit BatchNormStats(std::size_t channels = 1)
      : running_mean(Dims{channels}, T(0)), running_var(Dims{channels}, T(1)) {}
};

template <typename T>
struct BatchNormCache {
  Tensor<T> normalized;
  std::vector<T> inv_std;
  Mode mode = Mode::kTrain;
};

template <typename T>
struct BatchNormGrads {
  Tensor<T> input;
  Tensor<T> gamma;
  Tensor<T> beta;
};

// Train mode normalizes with batch statistics and updates `stats`; eval mode
// reads `stats` only. `cache` may be null when no backward pass follows.
template <typename T>
Tensor<T> batchnorm2d(const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta,
                      BatchNormStats<T>& stats, Mode mode, T eps,
                      BatchNormCache<T>* cache = nullptr);

template <typename T>
BatchNormGrads<T> batchnorm2d_backward(const BatchNormCache<T>& cache, const Tensor<T>& gamma,
                                       const Tensor<T>& grad_output);

template <typename T>
Tensor<T> relu(const Tensor<T>& input);

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& input, const Tensor<T>& grad_output);

struct PoolGeometry {
  std::size_t kernel = 2;
  std::size_t stride = 2;
  std::size_t padding = 0;
};

template <typename T>
struct MaxPoolResult {
  Tensor<T> output;
  std::vector<std::size_t> argmax;  // flat input index per output element
};

template <typename T>
MaxPoolResult<T> maxpool2d(const Tensor<T>& input, PoolGeometry geometry);

// Routes each output gradient to the first (row-major) maximal input element.
template <typename T>
Tensor<T> maxpool2d_backward(const Dims& input_dims, const std::vector<std::size_t>& argmax,
                             const Tensor<T>& grad_output);

template <typename T>
struct LinearGrads {
  Tensor<T> input;
  Tensor<T> weight;
  Tensor<T> bias;
};

// input [N,D], weight [C,D], bias [C] or nullptr -> [N,C]
template <typename T>
Tensor<T> linear(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>* bias);

template <typename T>
LinearGrads<T> linear_backward(const Tensor<T>& input, const Tensor<T>& weight, bool with_bias,
                               const Tensor<T>& grad_output);

// out_j = exp(T z_j - max_k T z_k) / sum_k exp(T z_k - max_k T z_k) along `axis`.
template <typename T>
Tensor<T> softmax_with_temperature(const Tensor<T>& logits, T temperature, std::size_t axis);

// Gradient w.r.t. the logits given the softmax output.
template <typename T>
Tensor<T> softmax_with_temperature_backward(const Tensor<T>& output, const Tensor<T>& grad_output,
                                            T temperature, std::size_t axis);

template <typename T>
T sigmoid(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& input);

}  // namespace mcanet

namespace mcanet {

// Channels [begin, begin + count) of a rank-4 tensor.
template <typename T>
Tensor<T> channel_slice(const Tensor<T>& input, std::size_t begin, std::size_t count);

// Concatenate rank-4 tensors along the channel axis.
template <typename T>
Tensor<T> channel_concat(std::span<const Tensor<T>> parts);

}  // namespace mcanet
