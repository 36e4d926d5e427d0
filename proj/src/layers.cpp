#include "mcanet/layers.hpp"

#include <algorithm>
#include <cmath>

namespace mcanet {

template <typename T>
ConvUnit<T>::ConvUnit(const std::string& name, const ConvUnitSpec& spec, std::mt19937_64& rng)
    : name_(name), spec_(spec), stats_(spec.out_channels) {
  if (spec.in_channels == 0 || spec.out_channels == 0 || spec.kernel == 0) {
    throw ConfigError("conv unit '" + name + "' has a zero dimension");
  }
  const Dims wd{spec.out_channels, spec.in_channels, spec.kernel, spec.kernel};
  weight_ = Param<T>(name + ".weight",
                     he_normal<T>(wd, spec.in_channels * spec.kernel * spec.kernel, rng),
                     ParamGroup::kBackbone, true);
  if (spec.batchnorm) {
    gamma_.emplace(name + ".bn.gamma", Tensor<T>(Dims{spec.out_channels}, T(1)),
                   ParamGroup::kBackbone, false);
    beta_.emplace(name + ".bn.beta", Tensor<T>(Dims{spec.out_channels}, T(0)),
                  ParamGroup::kBackbone, false);
  } else {
    bias_.emplace(name + ".bias", Tensor<T>(Dims{spec.out_channels}, T(0)), ParamGroup::kBackbone,
                  true);
  }
}

template <typename T>
Tensor<T> ConvUnit<T>::forward(const Tensor<T>& input, Mode mode) {
  const bool train = mode == Mode::kTrain;
  Tensor<T> y = conv2d(input, weight_.value, bias_ ? &bias_->value : nullptr, spec_.geometry);
  if (spec_.batchnorm) {
    y = batchnorm2d(y, gamma_->value, beta_->value, stats_, mode, static_cast<T>(kBatchNormEps),
                    train ? &bn_cache_ : nullptr);
  }
  if (train) input_ = input;
  if (spec_.relu) {
    if (train) {
      T margin = std::numeric_limits<T>::infinity();
      for (T v : y.data()) margin = std::min(margin, std::abs(v));
      relu_margin_ = margin;
      relu_signature_ = sign_pattern_hash(y);
      Tensor<T> out = relu(y);
      pre_relu_ = std::move(y);
      return out;
    }
    return relu(y);
  }
  return y;
}

template <typename T>
Tensor<T> ConvUnit<T>::backward(const Tensor<T>& grad_output) {
  if (input_.empty()) {
    throw ConfigError("conv unit '" + name_ + "': backward without a train-mode forward");
  }
  Tensor<T> g = spec_.relu ? relu_backward(pre_relu_, grad_output) : grad_output;
  if (spec_.batchnorm) {
    BatchNormGrads<T> bg = batchnorm2d_backward(bn_cache_, gamma_->value, g);
    add_inplace(gamma_->grad, bg.gamma);
    add_inplace(beta_->grad, bg.beta);
    g = std::move(bg.input);
  }
  Conv2dGrads<T> cg = conv2d_backward(input_, weight_.value, bias_.has_value(), g, spec_.geometry);
  add_inplace(weight_.grad, cg.weight);
  if (bias_) add_inplace(bias_->grad, cg.bias);
  return std::move(cg.input);
}

template <typename T>
void ConvUnit<T>::collect_parameters(std::vector<Param<T>*>& out) {
  out.push_back(&weight_);
  if (bias_) out.push_back(&*bias_);
  if (gamma_) out.push_back(&*gamma_);
  if (beta_) out.push_back(&*beta_);
}

template <typename T>
void ConvUnit<T>::collect_buffers(std::vector<NamedBuffer<T>>& out) {
  if (!spec_.batchnorm) return;
  out.push_back({name_ + ".bn.running_mean", &stats_.running_mean});
  out.push_back({name_ + ".bn.running_var", &stats_.running_var});
}

template <typename T>
Dims ConvUnit<T>::output_dims(const Dims& input) const {
  if (input.size() != 4 || input[1] != spec_.in_channels) {
    throw ConfigError("conv unit '" + name_ + "' expects " + std::to_string(spec_.in_channels) +
                      " input channels, got dims " + dims_to_string(input));
  }
  const auto& g = spec_.geometry;
  return {input[0], spec_.out_channels, (input[2] + 2 * g.padding - spec_.kernel) / g.stride + 1,
          (input[3] + 2 * g.padding - spec_.kernel) / g.stride + 1};
}

template class ConvUnit<float>;
template class ConvUnit<double>;

}  // namespace mcanet
