#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace denc {

// Dense row-major tensor. Rank 1 or 2 is all the engine needs.
// S is float for training, double for gradient checking.
template <typename S>
struct Tensor {
  std::vector<int64_t> shape;
  std::vector<S> data;

  Tensor() = default;

  explicit Tensor(std::vector<int64_t> shp, S fill = S(0)) : shape(std::move(shp)) {
    data.assign(static_cast<size_t>(numel_of(shape)), fill);
  }

  Tensor(std::vector<int64_t> shp, std::vector<S> values)
      : shape(std::move(shp)), data(std::move(values)) {
    if (numel_of(shape) != static_cast<int64_t>(data.size())) {
      throw std::invalid_argument("Tensor: shape does not match data length");
    }
  }

  static int64_t numel_of(const std::vector<int64_t>& shp) {
    int64_t n = 1;
    for (int64_t d : shp) {
      if (d < 0) throw std::invalid_argument("Tensor: negative dimension");
      n *= d;
    }
    return n;
  }

  static Tensor zeros(std::vector<int64_t> shp) { return Tensor(std::move(shp)); }

  static Tensor full(std::vector<int64_t> shp, S v) { return Tensor(std::move(shp), v); }

  static Tensor row(std::vector<S> values) {
    std::vector<int64_t> shp{1, static_cast<int64_t>(values.size())};
    return Tensor(std::move(shp), std::move(values));
  }

  static Tensor vec(std::vector<S> values) {
    std::vector<int64_t> shp{static_cast<int64_t>(values.size())};
    return Tensor(std::move(shp), std::move(values));
  }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int rank() const { return static_cast<int>(shape.size()); }

  // 2D accessors; rank-1 tensors behave as a single row.
  int64_t rows() const { return rank() == 2 ? shape[0] : 1; }
  int64_t cols() const { return rank() == 2 ? shape[1] : (rank() == 1 ? shape[0] : 0); }

  S& at(int64_t i) { return data[static_cast<size_t>(i)]; }
  S at(int64_t i) const { return data[static_cast<size_t>(i)]; }
  S& at(int64_t r, int64_t c) { return data[static_cast<size_t>(r * cols() + c)]; }
  S at(int64_t r, int64_t c) const { return data[static_cast<size_t>(r * cols() + c)]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  template <typename T>
  Tensor<T> cast() const {
    Tensor<T> out;
    out.shape = shape;
    out.data.resize(data.size());
    for (size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<T>(data[i]);
    return out;
  }
};

template <typename S>
bool all_finite(const Tensor<S>& t) {
  for (S v : t.data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

inline std::string shape_str(const std::vector<int64_t>& shp) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shp.size(); ++i) {
    if (i) os << ",";
    os << shp[i];
  }
  os << "]";
  return os.str();
}

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace denc
