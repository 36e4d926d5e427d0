#include "mcanet/tensor.hpp"

#include <algorithm>
#include <sstream>

namespace mcanet {

std::string dims_to_string(const Dims& dims) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) os << 'x';
    os << dims[i];
  }
  os << ']';
  return os.str();
}

std::size_t dims_product(const Dims& dims) {
  std::size_t p = 1;
  for (auto d : dims) p *= d;
  return p;
}

namespace {

void check_rank(const Dims& dims) {
  if (dims.empty() || dims.size() > 4) {
    throw ConfigError("tensor rank must be 1..4, got dims " + dims_to_string(dims));
  }
}

}  // namespace

template <typename T>
Tensor<T>::Tensor(Dims dims, T fill) : dims_(std::move(dims)) {
  check_rank(dims_);
  data_.assign(dims_product(dims_), fill);
}

template <typename T>
Tensor<T>::Tensor(Dims dims, std::vector<T> data) : dims_(std::move(dims)), data_(std::move(data)) {
  check_rank(dims_);
  if (dims_product(dims_) != data_.size()) {
    throw ConfigError("tensor dims " + dims_to_string(dims_) + " do not match " +
                      std::to_string(data_.size()) + " elements");
  }
}

template <typename T>
Tensor<T> Tensor<T>::reshaped(Dims dims) const {
  return Tensor(std::move(dims), data_);
}

template <typename T>
void Tensor<T>::fill(T value) {
  std::fill(data_.begin(), data_.end(), value);
}

template <typename T>
bool Tensor<T>::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
}

template <typename T>
Tensor<T> Tensor<T>::slice0(std::size_t begin, std::size_t count) const {
  if (begin + count > dims_[0]) {
    throw ConfigError("slice0 out of range for dims " + dims_to_string(dims_));
  }
  const std::size_t row = data_.size() / dims_[0];
  Dims d = dims_;
  d[0] = count;
  std::vector<T> out(data_.begin() + begin * row, data_.begin() + (begin + count) * row);
  return Tensor(std::move(d), std::move(out));
}

template <typename T>
Tensor<T> concat0(std::span<const Tensor<T>> parts) {
  if (parts.empty()) throw ConfigError("concat0 of zero tensors");
  Dims d = parts[0].dims();
  std::size_t rows = 0;
  std::vector<T> data;
  for (const auto& p : parts) {
    if (p.rank() != d.size() || !std::equal(p.dims().begin() + 1, p.dims().end(), d.begin() + 1)) {
      throw ConfigError("concat0 dims mismatch: " + dims_to_string(p.dims()) + " vs " +
                        dims_to_string(d));
    }
    rows += p.dim(0);
    data.insert(data.end(), p.data().begin(), p.data().end());
  }
  d[0] = rows;
  return Tensor<T>(std::move(d), std::move(data));
}

template <typename T>
void add_inplace(Tensor<T>& a, const Tensor<T>& b) {
  if (!a.same_dims(b)) {
    throw ConfigError("add dims mismatch: " + dims_to_string(a.dims()) + " vs " +
                      dims_to_string(b.dims()));
  }
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < x.size(); ++i) x[i] += y[i];
}

template <typename T>
T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  if (!a.same_dims(b)) {
    throw ConfigError("max_abs_diff dims mismatch: " + dims_to_string(a.dims()) + " vs " +
                      dims_to_string(b.dims()));
  }
  T m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

template class Tensor<float>;
template class Tensor<double>;
template Tensor<float> concat0(std::span<const Tensor<float>>);
template Tensor<double> concat0(std::span<const Tensor<double>>);
template void add_inplace(Tensor<float>&, const Tensor<float>&);
template void add_inplace(Tensor<double>&, const Tensor<double>&);
template float max_abs_diff(const Tensor<float>&, const Tensor<float>&);
template double max_abs_diff(const Tensor<double>&, const Tensor<double>&);

}  // namespace mcanet
