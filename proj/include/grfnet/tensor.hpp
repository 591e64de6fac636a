#pragma once

#include <Eigen/Core>
#include <initializer_list>
#include <stdexcept>

#include "grfnet/shape.hpp"

namespace grfnet {

// Dense n-d tensor over a contiguous scalar buffer. Row-major: for an index
// (i0, i1, ..., c) the last axis varies fastest, so per-position channel
// vectors are contiguous.
template <typename T>
struct Tensor {
  using Storage = Eigen::Array<T, Eigen::Dynamic, 1>;

  Shape shape;
  Storage data;

  Tensor() = default;
  explicit Tensor(const Shape& s) : shape(s), data(Storage::Zero(s.numel())) {}
  Tensor(const Shape& s, Storage d) : shape(s), data(std::move(d)) {
    if (data.size() != shape.numel())
      throw std::invalid_argument("Tensor: data length != product of extents");
  }

  static Tensor zeros(const Shape& s) { return Tensor(s); }
  static Tensor full(const Shape& s, T v) {
    Tensor t(s);
    t.data.setConstant(v);
    return t;
  }
  static Tensor from(const Shape& s, std::initializer_list<T> vals) {
    Tensor t(s);
    if (static_cast<std::int64_t>(vals.size()) != s.numel())
      throw std::invalid_argument("Tensor::from: value count mismatch");
    std::int64_t i = 0;
    for (T v : vals) t.data[i++] = v;
    return t;
  }

  std::int64_t numel() const { return shape.numel(); }
  T* ptr() { return data.data(); }
  const T* ptr() const { return data.data(); }

  std::int64_t offset(std::initializer_list<std::int64_t> idx) const {
    if (static_cast<int>(idx.size()) != shape.rank)
      throw std::invalid_argument("Tensor: index rank mismatch");
    std::int64_t off = 0;
    int i = 0;
    for (std::int64_t x : idx) off = off * shape[i++] + x;
    return off;
  }
  T& at(std::initializer_list<std::int64_t> idx) { return data[offset(idx)]; }
  T at(std::initializer_list<std::int64_t> idx) const { return data[offset(idx)]; }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> r;
    r.shape = shape;
    r.data = data.template cast<U>();
    return r;
  }
};

}  // namespace grfnet
