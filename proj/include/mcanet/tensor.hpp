#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "mcanet/errors.hpp"

namespace mcanet {

using Dims = std::vector<std::size_t>;

std::string dims_to_string(const Dims& dims);
std::size_t dims_product(const Dims& dims);

// Dense row-major array of rank 1..4. Image and feature tensors use
// (batch, channel, height, width) order.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Dims dims, T fill = T(0));
  Tensor(Dims dims, std::vector<T> data);

  static Tensor zeros(Dims dims) { return Tensor(std::move(dims)); }
  static Tensor zeros_like(const Tensor& other) { return Tensor(other.dims_); }

  const Dims& dims() const { return dims_; }
  std::size_t rank() const { return dims_.size(); }
  std::size_t dim(std::size_t axis) const { return dims_.at(axis); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  const std::vector<T>& vec() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  // Rank-4 element access (n, c, h, w).
  T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    return data_[((n * dims_[1] + c) * dims_[2] + h) * dims_[3] + w];
  }
  const T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return data_[((n * dims_[1] + c) * dims_[2] + h) * dims_[3] + w];
  }
  // Rank-2 element access.
  T& at(std::size_t r, std::size_t c) { return data_[r * dims_[1] + c]; }
  const T& at(std::size_t r, std::size_t c) const { return data_[r * dims_[1] + c]; }

  Tensor reshaped(Dims dims) const;
  void fill(T value);
  bool all_finite() const;
  bool same_dims(const Tensor& other) const { return dims_ == other.dims_; }

  // Slice along axis 0: rows [begin, begin + count).
  Tensor slice0(std::size_t begin, std::size_t count) const;

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return Tensor<U>(dims_, std::move(out));
  }

  bool operator==(const Tensor& other) const = default;

 private:
  Dims dims_;
  std::vector<T> data_;
};

// Concatenate along axis 0; all trailing dims must agree.
template <typename T>
Tensor<T> concat0(std::span<const Tensor<T>> parts);

// a += b, elementwise.
template <typename T>
void add_inplace(Tensor<T>& a, const Tensor<T>& b);

template <typename T>
T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b);

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace mcanet
