#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "grfnet/tape.hpp"

namespace grfnet {

template <typename T>
inline void check_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* what) {
  if (a.shape != b.shape)
    throw std::invalid_argument(std::string(what) + ": shape mismatch " + a.shape.str() +
                                " vs " + b.shape.str());
}

template <typename T>
Var add(Tape<T>& t, Var a, Var b) {
  check_same_shape(t.val(a), t.val(b), "add");
  Tensor<T> out(t.val(a).shape);
  out.data = t.val(a).data + t.val(b).data;
  return t.push(std::move(out), {a, b}, [a, b](Tape<T>& tp, std::int32_t id) {
    const auto& g = tp.grad(Var{id}).data;
    if (tp.needs_grad(a)) tp.grad(a).data += g;
    if (tp.needs_grad(b)) tp.grad(b).data += g;
  });
}

template <typename T>
Var sub(Tape<T>& t, Var a, Var b) {
  check_same_shape(t.val(a), t.val(b), "sub");
  Tensor<T> out(t.val(a).shape);
  out.data = t.val(a).data - t.val(b).data;
  return t.push(std::move(out), {a, b}, [a, b](Tape<T>& tp, std::int32_t id) {
    const auto& g = tp.grad(Var{id}).data;
    if (tp.needs_grad(a)) tp.grad(a).data += g;
    if (tp.needs_grad(b)) tp.grad(b).data -= g;
  });
}

template <typename T>
Var mul(Tape<T>& t, Var a, Var b) {
  check_same_shape(t.val(a), t.val(b), "mul");
  Tensor<T> out(t.val(a).shape);
  out.data = t.val(a).data * t.val(b).data;
  return t.push(std::move(out), {a, b}, [a, b](Tape<T>& tp, std::int32_t id) {
    const auto& g = tp.grad(Var{id}).data;
    if (tp.needs_grad(a)) tp.grad(a).data += g * tp.val(b).data;
    if (tp.needs_grad(b)) tp.grad(b).data += g * tp.val(a).data;
  });
}

// Elementwise maximum; ties route the gradient to the first argument.
template <typename T>
Var emax(Tape<T>& t, Var a, Var b) {
  check_same_shape(t.val(a), t.val(b), "emax");
  Tensor<T> out(t.val(a).shape);
  out.data = t.val(a).data.max(t.val(b).data);
  return t.push(std::move(out), {a, b}, [a, b](Tape<T>& tp, std::int32_t id) {
    const auto& g = tp.grad(Var{id}).data;
    const auto& av = tp.val(a).data;
    const auto& bv = tp.val(b).data;
    auto a_wins = (av >= bv).template cast<T>();
    if (tp.needs_grad(a)) tp.grad(a).data += g * a_wins;
    if (tp.needs_grad(b)) tp.grad(b).data += g * (T(1) - a_wins);
  });
}

// a*x + b, elementwise with scalar coefficients
template <typename T>
Var affine(Tape<T>& t, Var x, T a, T b) {
  Tensor<T> out(t.val(x).shape);
  out.data = a * t.val(x).data + b;
  return t.push(std::move(out), {x}, [x, a](Tape<T>& tp, std::int32_t id) {
    if (tp.needs_grad(x)) tp.grad(x).data += a * tp.grad(Var{id}).data;
  });
}

template <typename T>
Var scale(Tape<T>& t, Var x, T a) {
  return affine(t, x, a, T(0));
}
template <typename T>
Var one_minus(Tape<T>& t, Var x) {
  return affine(t, x, T(-1), T(1));
}

template <typename T>
Var sigmoid(Tape<T>& t, Var x) {
  Tensor<T> out(t.val(x).shape);
  out.data = T(1) / (T(1) + (-t.val(x).data).exp());
  return t.push(std::move(out), {x}, [x](Tape<T>& tp, std::int32_t id) {
    if (!tp.needs_grad(x)) return;
    const auto& y = tp.val(Var{id}).data;
    tp.grad(x).data += tp.grad(Var{id}).data * y * (T(1) - y);
  });
}

template <typename T>
Var tanh_op(Tape<T>& t, Var x) {
  Tensor<T> out(t.val(x).shape);
  out.data = t.val(x).data.tanh();
  return t.push(std::move(out), {x}, [x](Tape<T>& tp, std::int32_t id) {
    if (!tp.needs_grad(x)) return;
    const auto& y = tp.val(Var{id}).data;
    tp.grad(x).data += tp.grad(Var{id}).data * (T(1) - y * y);
  });
}

template <typename T>
Var relu(Tape<T>& t, Var x) {
  Tensor<T> out(t.val(x).shape);
  out.data = t.val(x).data.max(T(0));
  return t.push(std::move(out), {x}, [x](Tape<T>& tp, std::int32_t id) {
    if (!tp.needs_grad(x)) return;
    auto open = (tp.val(x).data > T(0)).template cast<T>();
    tp.grad(x).data += tp.grad(Var{id}).data * open;
  });
}

// Concatenate along the channel (last) axis. Spatial extents must agree.
template <typename T>
Var concat_channels(Tape<T>& t, Var a, Var b) {
  const Tensor<T>& av = t.val(a);
  const Tensor<T>& bv = t.val(b);
  if (av.shape.rank != bv.shape.rank)
    throw std::invalid_argument("concat: rank mismatch");
  const int r = av.shape.rank;
  for (int i = 0; i + 1 < r; ++i)
    if (av.shape[i] != bv.shape[i])
      throw std::invalid_argument("concat: spatial extent mismatch");

  const std::int64_t ca = av.shape[r - 1], cb = bv.shape[r - 1];
  Shape os = av.shape;
  os[r - 1] = ca + cb;
  Tensor<T> out(os);
  const std::int64_t positions = av.numel() / ca;
  for (std::int64_t p = 0; p < positions; ++p) {
    out.data.segment(p * (ca + cb), ca) = av.data.segment(p * ca, ca);
    out.data.segment(p * (ca + cb) + ca, cb) = bv.data.segment(p * cb, cb);
  }
  return t.push(std::move(out), {a, b},
                [a, b, ca, cb, positions](Tape<T>& tp, std::int32_t id) {
                  const auto& g = tp.grad(Var{id}).data;
                  for (std::int64_t p = 0; p < positions; ++p) {
                    if (tp.needs_grad(a))
                      tp.grad(a).data.segment(p * ca, ca) += g.segment(p * (ca + cb), ca);
                    if (tp.needs_grad(b))
                      tp.grad(b).data.segment(p * cb, cb) += g.segment(p * (ca + cb) + ca, cb);
                  }
                });
}

template <typename T>
Var sum_all(Tape<T>& t, Var x) {
  Tensor<T> out(Shape{1});
  out.data[0] = t.val(x).data.sum();
  return t.push(std::move(out), {x}, [x](Tape<T>& tp, std::int32_t id) {
    if (tp.needs_grad(x)) tp.grad(x).data += tp.grad(Var{id}).data[0];
  });
}

template <typename T>
Var mean_all(Tape<T>& t, Var x) {
  const T n = static_cast<T>(t.val(x).numel());
  Tensor<T> out(Shape{1});
  out.data[0] = t.val(x).data.sum() / n;
  return t.push(std::move(out), {x}, [x, n](Tape<T>& tp, std::int32_t id) {
    if (tp.needs_grad(x)) tp.grad(x).data += tp.grad(Var{id}).data[0] / n;
  });
}

}  // namespace grfnet
