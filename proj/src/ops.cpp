#include "mcanet/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mcanet/detail/gemm.hpp"

namespace mcanet {

namespace {

struct ConvShape {
  std::size_t n, cin, h, w, cout, kh, kw, ho, wo;
};

ConvShape conv_shape(const Dims& in, const Dims& wt, ConvGeometry g) {
  if (in.size() != 4 || wt.size() != 4) {
    throw ConfigError("conv2d expects rank-4 input and weight, got " + dims_to_string(in) +
                      " and " + dims_to_string(wt));
  }
  if (in[1] != wt[1]) {
    throw ConfigError("conv2d input channels " + std::to_string(in[1]) +
                      " do not match weight Cin " + std::to_string(wt[1]) + " (input " +
                      dims_to_string(in) + ", weight " + dims_to_string(wt) + ")");
  }
  if (g.stride < 1) throw ConfigError("conv2d stride must be >= 1");
  if (in[2] + 2 * g.padding < wt[2] || in[3] + 2 * g.padding < wt[3]) {
    throw ConfigError("conv2d kernel " + dims_to_string(wt) + " larger than padded input " +
                      dims_to_string(in));
  }
  ConvShape s{in[0], in[1], in[2], in[3], wt[0], wt[2], wt[3], 0, 0};
  s.ho = (s.h + 2 * g.padding - s.kh) / g.stride + 1;
  s.wo = (s.w + 2 * g.padding - s.kw) / g.stride + 1;
  return s;
}

bool is_pointwise(const ConvShape& s, ConvGeometry g) {
  return s.kh == 1 && s.kw == 1 && g.stride == 1 && g.padding == 0;
}

// cols[(c*kh + i)*kw + j][oh*wo + ow] = x[c][oh*stride - pad + i][ow*stride - pad + j]
template <typename T>
void im2col(const T* x, const ConvShape& s, ConvGeometry g, T* cols) {
  const std::size_t p = s.ho * s.wo;
  for (std::size_t c = 0; c < s.cin; ++c) {
    for (std::size_t ki = 0; ki < s.kh; ++ki) {
      for (std::size_t kj = 0; kj < s.kw; ++kj) {
        T* row = cols + ((c * s.kh + ki) * s.kw + kj) * p;
        for (std::size_t oh = 0; oh < s.ho; ++oh) {
          const long ih = static_cast<long>(oh * g.stride + ki) - static_cast<long>(g.padding);
          T* out = row + oh * s.wo;
          if (ih < 0 || ih >= static_cast<long>(s.h)) {
            std::fill(out, out + s.wo, T(0));
            continue;
          }
          const T* xrow = x + (c * s.h + ih) * s.w;
          for (std::size_t ow = 0; ow < s.wo; ++ow) {
            const long iw = static_cast<long>(ow * g.stride + kj) - static_cast<long>(g.padding);
            out[ow] = (iw < 0 || iw >= static_cast<long>(s.w)) ? T(0) : xrow[iw];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* cols, const ConvShape& s, ConvGeometry g, T* dx) {
  const std::size_t p = s.ho * s.wo;
  for (std::size_t c = 0; c < s.cin; ++c) {
    for (std::size_t ki = 0; ki < s.kh; ++ki) {
      for (std::size_t kj = 0; kj < s.kw; ++kj) {
        const T* row = cols + ((c * s.kh + ki) * s.kw + kj) * p;
        for (std::size_t oh = 0; oh < s.ho; ++oh) {
          const long ih = static_cast<long>(oh * g.stride + ki) - static_cast<long>(g.padding);
          if (ih < 0 || ih >= static_cast<long>(s.h)) continue;
          T* xrow = dx + (c * s.h + ih) * s.w;
          const T* in = row + oh * s.wo;
          for (std::size_t ow = 0; ow < s.wo; ++ow) {
            const long iw = static_cast<long>(ow * g.stride + kj) - static_cast<long>(g.padding);
            if (iw >= 0 && iw < static_cast<long>(s.w)) xrow[iw] += in[ow];
          }
        }
      }
    }
  }
}

struct AxisSplit {
  std::size_t outer, len, inner;
};

AxisSplit split_axis(const Dims& d, std::size_t axis) {
  if (axis >= d.size()) {
    throw ConfigError("axis " + std::to_string(axis) + " out of range for dims " +
                      dims_to_string(d));
  }
  AxisSplit s{1, d[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) s.outer *= d[i];
  for (std::size_t i = axis + 1; i < d.size(); ++i) s.inner *= d[i];
  return s;
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>* bias,
                 ConvGeometry geometry) {
  const ConvShape s = conv_shape(input.dims(), weight.dims(), geometry);
  if (bias && (bias->rank() != 1 || bias->dim(0) != s.cout)) {
    throw ConfigError("conv2d bias dims " + dims_to_string(bias->dims()) + " do not match Cout " +
                      std::to_string(s.cout));
  }
  Tensor<T> out(Dims{s.n, s.cout, s.ho, s.wo});
  const std::size_t k = s.cin * s.kh * s.kw;
  const std::size_t p = s.ho * s.wo;
  const bool pointwise = is_pointwise(s, geometry);
  std::vector<T> cols(pointwise ? 0 : k * p);
  for (std::size_t n = 0; n < s.n; ++n) {
    const T* x = input.data().data() + n * s.cin * s.h * s.w;
    const T* b = x;
    if (!pointwise) {
      im2col(x, s, geometry, cols.data());
      b = cols.data();
    }
    T* y = out.data().data() + n * s.cout * p;
    if (bias) {
      for (std::size_t c = 0; c < s.cout; ++c) std::fill(y + c * p, y + (c + 1) * p, (*bias)[c]);
    }
    detail::gemm_nn(s.cout, p, k, weight.data().data(), b, y);
  }
  return out;
}

template <typename T>
Conv2dGrads<T> conv2d_backward(const Tensor<T>& input, const Tensor<T>& weight, bool with_bias,
                               const Tensor<T>& grad_output, ConvGeometry geometry) {
  const ConvShape s = conv_shape(input.dims(), weight.dims(), geometry);
  if (grad_output.dims() != Dims{s.n, s.cout, s.ho, s.wo}) {
    throw ConfigError("conv2d_backward grad dims " + dims_to_string(grad_output.dims()) +
                      " do not match output dims");
  }
  Conv2dGrads<T> g{Tensor<T>::zeros_like(input), Tensor<T>::zeros_like(weight), {}};
  if (with_bias) g.bias = Tensor<T>(Dims{s.cout});
  const std::size_t k = s.cin * s.kh * s.kw;
  const std::size_t p = s.ho * s.wo;
  const bool pointwise = is_pointwise(s, geometry);
  std::vector<T> cols(pointwise ? 0 : k * p);
  std::vector<T> cols_t(k * p);
  std::vector<T> dcols(pointwise ? 0 : k * p);
  for (std::size_t n = 0; n < s.n; ++n) {
    const T* x = input.data().data() + n * s.cin * s.h * s.w;
    const T* dy = grad_output.data().data() + n * s.cout * p;
    const T* c = x;
    if (!pointwise) {
      im2col(x, s, geometry, cols.data());
      c = cols.data();
    }
    for (std::size_t r = 0; r < k; ++r)
      for (std::size_t q = 0; q < p; ++q) cols_t[q * k + r] = c[r * p + q];
    detail::gemm_nn(s.cout, k, p, dy, cols_t.data(), g.weight.data().data());
    if (with_bias) {
      for (std::size_t co = 0; co < s.cout; ++co) {
        T acc = 0;
        for (std::size_t q = 0; q < p; ++q) acc += dy[co * p + q];
        g.bias[co] += acc;
      }
    }
    T* dx = g.input.data().data() + n * s.cin * s.h * s.w;
    if (pointwise) {
      detail::gemm_tn(k, p, s.cout, weight.data().data(), dy, dx);
    } else {
      std::fill(dcols.begin(), dcols.end(), T(0));
      detail::gemm_tn(k, p, s.cout, weight.data().data(), dy, dcols.data());
      col2im(dcols.data(), s, geometry, dx);
    }
  }
  return g;
}

template <typename T>
Tensor<T> batchnorm2d(const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta,
                      BatchNormStats<T>& stats, Mode mode, T eps, BatchNormCache<T>* cache) {
  if (input.rank() != 4) {
    throw ConfigError("batchnorm2d expects rank-4 input, got " + dims_to_string(input.dims()));
  }
  const std::size_t n = input.dim(0), c = input.dim(1), hw = input.dim(2) * input.dim(3);
  if (gamma.dims() != Dims{c} || beta.dims() != Dims{c} ||
      stats.running_mean.dims() != Dims{c} || stats.running_var.dims() != Dims{c}) {
    throw ConfigError("batchnorm2d parameter dims do not match channel count " +
                      std::to_string(c));
  }
  const std::size_t m = n * hw;
  if (mode == Mode::kTrain && m < 2) {
    throw DataError("batchnorm2d degenerate batch: N*H*W = " + std::to_string(m) +
                    " < 2 in train mode");
  }
  Tensor<T> out = Tensor<T>::zeros_like(input);
  Tensor<T> normalized = Tensor<T>::zeros_like(input);
  std::vector<T> inv_std(c);
  const T* x = input.data().data();
  for (std::size_t ch = 0; ch < c; ++ch) {
    T mean, var;
    if (mode == Mode::kTrain) {
      double sum = 0;
      for (std::size_t b = 0; b < n; ++b)
        for (std::size_t i = 0; i < hw; ++i) sum += x[(b * c + ch) * hw + i];
      const double mu = sum / static_cast<double>(m);
      double sq = 0;
      for (std::size_t b = 0; b < n; ++b)
        for (std::size_t i = 0; i < hw; ++i) {
          const double d = x[(b * c + ch) * hw + i] - mu;
          sq += d * d;
        }
      mean = static_cast<T>(mu);
      var = static_cast<T>(sq / static_cast<double>(m));
      const T unbiased = static_cast<T>(sq / static_cast<double>(m - 1));
      stats.running_mean[ch] = (T(1) - stats.momentum) * stats.running_mean[ch] + stats.momentum * mean;
      stats.running_var[ch] = (T(1) - stats.momentum) * stats.running_var[ch] + stats.momentum * unbiased;
    } else {
      mean = stats.running_mean[ch];
      var = stats.running_var[ch];
    }
    const T is = T(1) / std::sqrt(var + eps);
    inv_std[ch] = is;
    for (std::size_t b = 0; b < n; ++b) {
      const std::size_t base = (b * c + ch) * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        const T xh = (x[base + i] - mean) * is;
        normalized[base + i] = xh;
        out[base + i] = gamma[ch] * xh + beta[ch];
      }
    }
  }
  if (cache) {
    cache->normalized = std::move(normalized);
    cache->inv_std = std::move(inv_std);
    cache->mode = mode;
  }
  return out;
}

template <typename T>
BatchNormGrads<T> batchnorm2d_backward(const BatchNormCache<T>& cache, const Tensor<T>& gamma,
                                       const Tensor<T>& grad_output) {
  const Tensor<T>& xh = cache.normalized;
  if (!xh.same_dims(grad_output)) {
    throw ConfigError("batchnorm2d_backward grad dims " + dims_to_string(grad_output.dims()) +
                      " do not match cached dims " + dims_to_string(xh.dims()));
  }
  const std::size_t n = xh.dim(0), c = xh.dim(1), hw = xh.dim(2) * xh.dim(3);
  const T m = static_cast<T>(n * hw);
  BatchNormGrads<T> g{Tensor<T>::zeros_like(xh), Tensor<T>(Dims{c}), Tensor<T>(Dims{c})};
  for (std::size_t ch = 0; ch < c; ++ch) {
    T sum_dy = 0, sum_dy_xh = 0;
    for (std::size_t b = 0; b < n; ++b) {
      const std::size_t base = (b * c + ch) * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        sum_dy += grad_output[base + i];
        sum_dy_xh += grad_output[base + i] * xh[base + i];
      }
    }
    g.beta[ch] = sum_dy;
    g.gamma[ch] = sum_dy_xh;
    const T scale = gamma[ch] * cache.inv_std[ch];
    for (std::size_t b = 0; b < n; ++b) {
      const std::size_t base = (b * c + ch) * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        if (cache.mode == Mode::kTrain) {
          g.input[base + i] =
              scale * (grad_output[base + i] - sum_dy / m - xh[base + i] * sum_dy_xh / m);
        } else {
          g.input[base + i] = scale * grad_output[base + i];
        }
      }
    }
  }
  return g;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& input) {
  Tensor<T> out = input;
  for (auto& v : out.data()) v = v > T(0) ? v : T(0);
  return out;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& input, const Tensor<T>& grad_output) {
  if (!input.same_dims(grad_output)) throw ConfigError("relu_backward dims mismatch");
  Tensor<T> g = grad_output;
  for (std::size_t i = 0; i < g.size(); ++i)
    if (!(input[i] > T(0))) g[i] = T(0);
  return g;
}

template <typename T>
MaxPoolResult<T> maxpool2d(const Tensor<T>& input, PoolGeometry geo) {
  if (input.rank() != 4) {
    throw ConfigError("maxpool2d expects rank-4 input, got " + dims_to_string(input.dims()));
  }
  if (geo.kernel < 1 || geo.stride < 1) throw ConfigError("maxpool2d kernel and stride must be >= 1");
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  if (h + 2 * geo.padding < geo.kernel || w + 2 * geo.padding < geo.kernel) {
    throw ConfigError("maxpool2d window " + std::to_string(geo.kernel) +
                      " larger than input " + dims_to_string(input.dims()));
  }
  if (geo.padding * 2 > geo.kernel) {
    throw ConfigError("maxpool2d padding must be at most half the window");
  }
  const std::size_t ho = (h + 2 * geo.padding - geo.kernel) / geo.stride + 1;
  const std::size_t wo = (w + 2 * geo.padding - geo.kernel) / geo.stride + 1;
  MaxPoolResult<T> r{Tensor<T>(Dims{n, c, ho, wo}), std::vector<std::size_t>(n * c * ho * wo)};
  for (std::size_t plane = 0; plane < n * c; ++plane) {
    const std::size_t base = plane * h * w;
    for (std::size_t oh = 0; oh < ho; ++oh) {
      for (std::size_t ow = 0; ow < wo; ++ow) {
        T best = -std::numeric_limits<T>::infinity();
        std::size_t arg = 0;
        bool found = false;
        for (std::size_t ki = 0; ki < geo.kernel; ++ki) {
          const long ih = static_cast<long>(oh * geo.stride + ki) - static_cast<long>(geo.padding);
          if (ih < 0 || ih >= static_cast<long>(h)) continue;
          for (std::size_t kj = 0; kj < geo.kernel; ++kj) {
            const long iw = static_cast<long>(ow * geo.stride + kj) - static_cast<long>(geo.padding);
            if (iw < 0 || iw >= static_cast<long>(w)) continue;
            const std::size_t idx = base + ih * w + iw;
            if (!found || input[idx] > best) {
              best = input[idx];
              arg = idx;
              found = true;
            }
          }
        }
        const std::size_t o = (plane * ho + oh) * wo + ow;
        r.output[o] = best;
        r.argmax[o] = arg;
      }
    }
  }
  return r;
}

template <typename T>
Tensor<T> maxpool2d_backward(const Dims& input_dims, const std::vector<std::size_t>& argmax,
                             const Tensor<T>& grad_output) {
  if (argmax.size() != grad_output.size()) throw ConfigError("maxpool2d_backward size mismatch");
  Tensor<T> g(input_dims);
  for (std::size_t i = 0; i < argmax.size(); ++i) g[argmax[i]] += grad_output[i];
  return g;
}

template <typename T>
Tensor<T> linear(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>* bias) {
  if (input.rank() != 2 || weight.rank() != 2 || input.dim(1) != weight.dim(1)) {
    throw ConfigError("linear dim mismatch: input " + dims_to_string(input.dims()) +
                      ", weight " + dims_to_string(weight.dims()));
  }
  const std::size_t n = input.dim(0), d = input.dim(1), c = weight.dim(0);
  if (bias && bias->dims() != Dims{c}) {
    throw ConfigError("linear bias dims " + dims_to_string(bias->dims()) + " do not match " +
                      std::to_string(c) + " outputs");
  }
  Tensor<T> out(Dims{n, c});
  if (bias)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < c; ++j) out.at(i, j) = (*bias)[j];
  detail::gemm_nt(n, c, d, input.data().data(), weight.data().data(), out.data().data());
  return out;
}

template <typename T>
LinearGrads<T> linear_backward(const Tensor<T>& input, const Tensor<T>& weight, bool with_bias,
                               const Tensor<T>& grad_output) {
  const std::size_t n = input.dim(0), d = input.dim(1), c = weight.dim(0);
  if (grad_output.dims() != Dims{n, c}) {
    throw ConfigError("linear_backward grad dims " + dims_to_string(grad_output.dims()) +
                      " do not match output");
  }
  LinearGrads<T> g{Tensor<T>::zeros_like(input), Tensor<T>::zeros_like(weight), {}};
  // dX[N,D] = dY[N,C] W[C,D];  dW[C,D] = dY^T X
  detail::gemm_nn(n, d, c, grad_output.data().data(), weight.data().data(), g.input.data().data());
  detail::gemm_tn(c, d, n, grad_output.data().data(), input.data().data(), g.weight.data().data());
  if (with_bias) {
    g.bias = Tensor<T>(Dims{c});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < c; ++j) g.bias[j] += grad_output.at(i, j);
  }
  return g;
}

template <typename T>
Tensor<T> softmax_with_temperature(const Tensor<T>& logits, T temperature, std::size_t axis) {
  if (!(temperature > T(0))) {
    throw ConfigError("softmax temperature must be > 0, got " + std::to_string(temperature));
  }
  const AxisSplit s = split_axis(logits.dims(), axis);
  Tensor<T> out = Tensor<T>::zeros_like(logits);
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.len * s.inner + in;
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t j = 0; j < s.len; ++j) mx = std::max(mx, temperature * logits[base + j * s.inner]);
      T sum = 0;
      for (std::size_t j = 0; j < s.len; ++j) {
        const T e = std::exp(temperature * logits[base + j * s.inner] - mx);
        out[base + j * s.inner] = e;
        sum += e;
      }
      for (std::size_t j = 0; j < s.len; ++j) out[base + j * s.inner] /= sum;
    }
  }
  return out;
}

template <typename T>
Tensor<T> softmax_with_temperature_backward(const Tensor<T>& output, const Tensor<T>& grad_output,
                                            T temperature, std::size_t axis) {
  if (!output.same_dims(grad_output)) throw ConfigError("softmax backward dims mismatch");
  const AxisSplit s = split_axis(output.dims(), axis);
  Tensor<T> g = Tensor<T>::zeros_like(output);
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.len * s.inner + in;
      T dot = 0;
      for (std::size_t j = 0; j < s.len; ++j)
        dot += output[base + j * s.inner] * grad_output[base + j * s.inner];
      for (std::size_t j = 0; j < s.len; ++j) {
        const std::size_t i = base + j * s.inner;
        g[i] = temperature * output[i] * (grad_output[i] - dot);
      }
    }
  }
  return g;
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& input) {
  Tensor<T> out = input;
  for (auto& v : out.data()) v = sigmoid(v);
  return out;
}

#define MCANET_INSTANTIATE_OPS(T)                                                              \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>*,             \
                            ConvGeometry);                                                     \
  template Conv2dGrads<T> conv2d_backward(const Tensor<T>&, const Tensor<T>&, bool,           \
                                          const Tensor<T>&, ConvGeometry);                     \
  template Tensor<T> batchnorm2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,        \
                                 BatchNormStats<T>&, Mode, T, BatchNormCache<T>*);             \
  template BatchNormGrads<T> batchnorm2d_backward(const BatchNormCache<T>&, const Tensor<T>&, \
                                                  const Tensor<T>&);                           \
  template Tensor<T> relu(const Tensor<T>&);                                                   \
  template Tensor<T> relu_backward(const Tensor<T>&, const Tensor<T>&);                        \
  template MaxPoolResult<T> maxpool2d(const Tensor<T>&, PoolGeometry);                         \
  template Tensor<T> maxpool2d_backward(const Dims&, const std::vector<std::size_t>&,          \
                                        const Tensor<T>&);                                     \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>*);             \
  template LinearGrads<T> linear_backward(const Tensor<T>&, const Tensor<T>&, bool,           \
                                          const Tensor<T>&);                                   \
  template Tensor<T> softmax_with_temperature(const Tensor<T>&, T, std::size_t);               \
  template Tensor<T> softmax_with_temperature_backward(const Tensor<T>&, const Tensor<T>&, T,  \
                                                       std::size_t);                           \
  template Tensor<T> sigmoid(const Tensor<T>&);

MCANET_INSTANTIATE_OPS(float)
MCANET_INSTANTIATE_OPS(double)

}  // namespace mcanet

namespace mcanet {

template <typename T>
Tensor<T> channel_slice(const Tensor<T>& input, std::size_t begin, std::size_t count) {
  if (input.rank() != 4 || begin + count > input.dim(1)) {
    throw ConfigError("channel_slice [" + std::to_string(begin) + ", +" + std::to_string(count) +
                      ") out of range for " + dims_to_string(input.dims()));
  }
  const std::size_t n = input.dim(0), c = input.dim(1), hw = input.dim(2) * input.dim(3);
  Tensor<T> out(Dims{n, count, input.dim(2), input.dim(3)});
  for (std::size_t b = 0; b < n; ++b) {
    const T* src = input.data().data() + (b * c + begin) * hw;
    std::copy(src, src + count * hw, out.data().data() + b * count * hw);
  }
  return out;
}

template <typename T>
Tensor<T> channel_concat(std::span<const Tensor<T>> parts) {
  if (parts.empty()) throw ConfigError("channel_concat of zero tensors");
  const Dims& d0 = parts[0].dims();
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.rank() != 4 || p.dim(0) != d0[0] || p.dim(2) != d0[2] || p.dim(3) != d0[3]) {
      throw ConfigError("channel_concat dims mismatch: " + dims_to_string(p.dims()) + " vs " +
                        dims_to_string(d0));
    }
    total += p.dim(1);
  }
  const std::size_t n = d0[0], hw = d0[2] * d0[3];
  Tensor<T> out(Dims{n, total, d0[2], d0[3]});
  for (std::size_t b = 0; b < n; ++b) {
    T* dst = out.data().data() + b * total * hw;
    for (const auto& p : parts) {
      const std::size_t len = p.dim(1) * hw;
      const T* src = p.data().data() + b * len;
      dst = std::copy(src, src + len, dst);
    }
  }
  return out;
}

template Tensor<float> channel_slice(const Tensor<float>&, std::size_t, std::size_t);
template Tensor<double> channel_slice(const Tensor<double>&, std::size_t, std::size_t);
template Tensor<float> channel_concat(std::span<const Tensor<float>>);
template Tensor<double> channel_concat(std::span<const Tensor<double>>);

}  // namespace mcanet
