#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "grfnet/ops.hpp"
#include "grfnet/tape.hpp"

namespace grfnet {

// Strided/dilated convolution configuration over 2 or 3 spatial axes.
// Padding is either given explicitly or computed in "same" mode, where the
// output extent per axis is ceil(in / stride).
struct ConvConfig {
  int dims = 3;  // spatial dims, 2 or 3
  std::array<int, 3> kernel{1, 1, 1};
  std::array<int, 3> stride{1, 1, 1};
  std::array<int, 3> dilation{1, 1, 1};
  std::array<int, 3> pad_before{0, 0, 0};
  std::array<int, 3> pad_after{0, 0, 0};
  bool same_pad = true;
  bool has_bias = true;

  static ConvConfig conv3d(int k, int s = 1, int d = 1) {
    ConvConfig c;
    c.dims = 3;
    c.kernel = {k, k, k};
    c.stride = {s, s, s};
    c.dilation = {d, d, d};
    return c;
  }
  static ConvConfig conv2d(int k, int s = 1, int d = 1) {
    ConvConfig c;
    c.dims = 2;
    c.kernel = {k, k, 1};
    c.stride = {s, s, 1};
    c.dilation = {d, d, 1};
    return c;
  }
  // anisotropic 3D kernel, e.g. 1x1xk
  static ConvConfig conv3d_axes(int k0, int k1, int k2, int s = 1, int d = 1) {
    ConvConfig c;
    c.dims = 3;
    c.kernel = {k0, k1, k2};
    c.stride = {s, s, s};
    c.dilation = {d, d, d};
    return c;
  }
  static ConvConfig conv2d_axes(int k0, int k1, int s = 1, int d = 1) {
    ConvConfig c;
    c.dims = 2;
    c.kernel = {k0, k1, 1};
    c.stride = {s, s, 1};
    c.dilation = {d, d, 1};
    return c;
  }

  void validate() const {
    if (dims != 2 && dims != 3) throw std::invalid_argument("ConvConfig: dims must be 2 or 3");
    for (int i = 0; i < dims; ++i) {
      if (kernel[static_cast<size_t>(i)] < 1 || stride[static_cast<size_t>(i)] < 1 ||
          dilation[static_cast<size_t>(i)] < 1)
        throw std::invalid_argument("ConvConfig: kernel/stride/dilation must be >= 1");
      if (!same_pad && (pad_before[static_cast<size_t>(i)] < 0 || pad_after[static_cast<size_t>(i)] < 0))
        throw std::invalid_argument("ConvConfig: negative padding");
    }
  }
};

namespace detail {

struct ConvPlan {
  std::array<std::int64_t, 3> in{1, 1, 1}, out{1, 1, 1};
  std::array<std::int64_t, 3> k{1, 1, 1}, s{1, 1, 1}, d{1, 1, 1}, pb{0, 0, 0}, pa{0, 0, 0};
  std::int64_t cin = 0, cout = 0;
  std::int64_t out_sp = 1, kprod = 1;
};

// Normalizes 2D/3D to three spatial axes (leading extent 1 for 2D) and
// resolves padding. Throws on channel mismatch or empty output.
inline ConvPlan make_plan(const Shape& x, const Shape& w, const ConvConfig& cfg) {
  cfg.validate();
  const int sd = cfg.dims;
  if (x.rank != sd + 1) throw std::invalid_argument("conv: input rank mismatch");
  if (w.rank != sd + 2) throw std::invalid_argument("conv: weight rank mismatch");

  ConvPlan p;
  const int off = 3 - sd;  // left-pad axes with extent 1
  for (int i = 0; i < sd; ++i) {
    const auto a = static_cast<size_t>(off + i);
    const auto j = static_cast<size_t>(i);
    p.in[a] = x[i];
    p.k[a] = cfg.kernel[j];
    p.s[a] = cfg.stride[j];
    p.d[a] = cfg.dilation[j];
    if (!cfg.same_pad) {
      p.pb[a] = cfg.pad_before[j];
      p.pa[a] = cfg.pad_after[j];
    }
    if (w[i] != cfg.kernel[j])
      throw std::invalid_argument("conv: weight extents disagree with kernel config");
  }
  p.cin = w[sd];
  p.cout = w[sd + 1];
  if (x[sd] != p.cin) throw std::invalid_argument("conv: channel mismatch");

  for (size_t a = 0; a < 3; ++a) {
    const std::int64_t keff = p.d[a] * (p.k[a] - 1) + 1;
    std::int64_t out;
    if (cfg.same_pad) {
      out = (p.in[a] + p.s[a] - 1) / p.s[a];
      const std::int64_t total = std::max<std::int64_t>(0, (out - 1) * p.s[a] + keff - p.in[a]);
      p.pb[a] = total / 2;
      p.pa[a] = total - p.pb[a];
    } else {
      out = (p.in[a] + p.pb[a] + p.pa[a] - keff) / p.s[a] + 1;
    }
    if (out < 1) throw std::invalid_argument("conv: empty output extent");
    p.out[a] = out;
    p.out_sp *= out;
    p.kprod *= p.k[a];
  }
  return p;
}

inline Shape conv_out_shape(const ConvPlan& p, int dims) {
  if (dims == 2) return Shape{p.out[1], p.out[2], p.cout};
  return Shape{p.out[0], p.out[1], p.out[2], p.cout};
}

// Patch matrix: one row per output position, kprod*cin columns. Padded taps
// stay zero.
template <typename T>
void im2col(const T* x, const ConvPlan& p, T* cols) {
  const std::int64_t row_len = p.kprod * p.cin;
  const std::int64_t in12 = p.in[1] * p.in[2];
  std::int64_t r = 0;
  for (std::int64_t o0 = 0; o0 < p.out[0]; ++o0)
    for (std::int64_t o1 = 0; o1 < p.out[1]; ++o1)
      for (std::int64_t o2 = 0; o2 < p.out[2]; ++o2, ++r) {
        T* row = cols + r * row_len;
        std::int64_t c = 0;
        for (int k0 = 0; k0 < p.k[0]; ++k0) {
          const std::int64_t i0 = o0 * p.s[0] - p.pb[0] + static_cast<std::int64_t>(k0) * p.d[0];
          for (int k1 = 0; k1 < p.k[1]; ++k1) {
            const std::int64_t i1 = o1 * p.s[1] - p.pb[1] + static_cast<std::int64_t>(k1) * p.d[1];
            for (int k2 = 0; k2 < p.k[2]; ++k2, c += p.cin) {
              const std::int64_t i2 = o2 * p.s[2] - p.pb[2] + static_cast<std::int64_t>(k2) * p.d[2];
              if (i0 < 0 || i0 >= p.in[0] || i1 < 0 || i1 >= p.in[1] || i2 < 0 || i2 >= p.in[2]) {
                for (std::int64_t ch = 0; ch < p.cin; ++ch) row[c + ch] = T(0);
              } else {
                const T* src = x + (i0 * in12 + i1 * p.in[2] + i2) * p.cin;
                for (std::int64_t ch = 0; ch < p.cin; ++ch) row[c + ch] = src[ch];
              }
            }
          }
        }
      }
}

// Transpose of im2col: scatter-add column gradients back onto the input.
// Serial fixed-order loop; accumulation order does not depend on thread
// count because there is no threading here.
template <typename T>
void col2im_add(const T* cols, const ConvPlan& p, T* dx) {
  const std::int64_t row_len = p.kprod * p.cin;
  const std::int64_t in12 = p.in[1] * p.in[2];
  std::int64_t r = 0;
  for (std::int64_t o0 = 0; o0 < p.out[0]; ++o0)
    for (std::int64_t o1 = 0; o1 < p.out[1]; ++o1)
      for (std::int64_t o2 = 0; o2 < p.out[2]; ++o2, ++r) {
        const T* row = cols + r * row_len;
        std::int64_t c = 0;
        for (int k0 = 0; k0 < p.k[0]; ++k0) {
          const std::int64_t i0 = o0 * p.s[0] - p.pb[0] + static_cast<std::int64_t>(k0) * p.d[0];
          for (int k1 = 0; k1 < p.k[1]; ++k1) {
            const std::int64_t i1 = o1 * p.s[1] - p.pb[1] + static_cast<std::int64_t>(k1) * p.d[1];
            for (int k2 = 0; k2 < p.k[2]; ++k2, c += p.cin) {
              const std::int64_t i2 = o2 * p.s[2] - p.pb[2] + static_cast<std::int64_t>(k2) * p.d[2];
              if (i0 < 0 || i0 >= p.in[0] || i1 < 0 || i1 >= p.in[1] || i2 < 0 || i2 >= p.in[2]) continue;
              T* dst = dx + (i0 * in12 + i1 * p.in[2] + i2) * p.cin;
              for (std::int64_t ch = 0; ch < p.cin; ++ch) dst[ch] += row[c + ch];
            }
          }
        }
      }
}

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
bool is_pointwise(const ConvPlan& p) {
  for (int a = 0; a < 3; ++a)
    if (p.k[static_cast<size_t>(a)] != 1 || p.s[static_cast<size_t>(a)] != 1 ||
        p.pb[static_cast<size_t>(a)] != 0)
      return false;
  return true;
}

}  // namespace detail

inline Shape conv_output_shape(const Shape& x, const Shape& w, const ConvConfig& cfg) {
  return detail::conv_out_shape(detail::make_plan(x, w, cfg), cfg.dims);
}

// Untaped convolution kernel, shared by forward and gradient passes.
template <typename T>
Tensor<T> conv_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias,
                       const ConvConfig& cfg) {
  using detail::RowMat;
  const detail::ConvPlan p = detail::make_plan(x.shape, w.shape, cfg);
  if (bias && bias->numel() != p.cout)
    throw std::invalid_argument("conv: bias length mismatch");

  Tensor<T> out(detail::conv_out_shape(p, cfg.dims));
  Eigen::Map<RowMat<T>> O(out.ptr(), p.out_sp, p.cout);
  Eigen::Map<const RowMat<T>> W(w.ptr(), p.kprod * p.cin, p.cout);

  if (detail::is_pointwise<T>(p)) {
    Eigen::Map<const RowMat<T>> X(x.ptr(), p.out_sp, p.cin);
    O.noalias() = X * W;
  } else {
    std::vector<T> cols(static_cast<size_t>(p.out_sp * p.kprod * p.cin));
    detail::im2col(x.ptr(), p, cols.data());
    Eigen::Map<const RowMat<T>> C(cols.data(), p.out_sp, p.kprod * p.cin);
    O.noalias() = C * W;
  }
  if (bias) O.rowwise() += Eigen::Map<const Eigen::RowVectorX<T>>(bias->ptr(), p.cout);
  return out;
}

// Taped convolution. Gradients flow to input, weights and bias; the patch
// matrix is rebuilt in the backward pass rather than cached.
template <typename T>
Var conv(Tape<T>& t, Var x, Var w, std::optional<Var> bias, const ConvConfig& cfg) {
  using detail::RowMat;
  const Tensor<T>* bp = bias ? &t.val(*bias) : nullptr;
  Tensor<T> out = conv_forward(t.val(x), t.val(w), bp, cfg);

  std::vector<Var> inputs{x, w};
  if (bias) inputs.push_back(*bias);
  Var b = bias ? *bias : Var{};
  bool has_b = bias.has_value();

  return t.push(std::move(out), inputs, [x, w, b, has_b, cfg](Tape<T>& tp, std::int32_t id) {
    const detail::ConvPlan p = detail::make_plan(tp.val(x).shape, tp.val(w).shape, cfg);
    Eigen::Map<const RowMat<T>> dY(tp.grad(Var{id}).ptr(), p.out_sp, p.cout);

    if (has_b && tp.needs_grad(b)) {
      Eigen::Map<Eigen::RowVectorX<T>> db(tp.grad(b).ptr(), p.cout);
      db += dY.colwise().sum();
    }

    const bool pw = detail::is_pointwise<T>(p);
    std::vector<T> cols;
    const T* cols_ptr = nullptr;
    if (!pw && (tp.needs_grad(w) || tp.needs_grad(x))) {
      cols.resize(static_cast<size_t>(p.out_sp * p.kprod * p.cin));
      detail::im2col(tp.val(x).ptr(), p, cols.data());
      cols_ptr = cols.data();
    }

    if (tp.needs_grad(w)) {
      Eigen::Map<RowMat<T>> dW(tp.grad(w).ptr(), p.kprod * p.cin, p.cout);
      if (pw) {
        Eigen::Map<const RowMat<T>> X(tp.val(x).ptr(), p.out_sp, p.cin);
        dW.noalias() += X.transpose() * dY;
      } else {
        Eigen::Map<const RowMat<T>> C(cols_ptr, p.out_sp, p.kprod * p.cin);
        dW.noalias() += C.transpose() * dY;
      }
    }

    if (tp.needs_grad(x)) {
      Eigen::Map<const RowMat<T>> W(tp.val(w).ptr(), p.kprod * p.cin, p.cout);
      if (pw) {
        Eigen::Map<RowMat<T>> dX(tp.grad(x).ptr(), p.out_sp, p.cin);
        dX.noalias() += dY * W.transpose();
      } else {
        RowMat<T> G = dY * W.transpose();  // out_sp x kprod*cin
        detail::col2im_add(G.data(), p, tp.grad(x).ptr());
      }
    }
  });
}

// Max pooling over all spatial axes, window w and stride s, no padding.
// Gradient routes to the first maximum in scan order.
template <typename T>
Var max_pool(Tape<T>& t, Var x, int window, int stride) {
  const Tensor<T>& xv = t.val(x);
  const int r = xv.shape.rank;
  const int sd = r - 1;
  if (sd != 2 && sd != 3) throw std::invalid_argument("max_pool: rank must be 3 or 4");
  std::array<std::int64_t, 3> in{1, 1, 1}, out{1, 1, 1};
  for (int i = 0; i < sd; ++i) {
    in[static_cast<size_t>(3 - sd + i)] = xv.shape[i];
    if (xv.shape[i] < window)
      throw std::invalid_argument("max_pool: window larger than input extent");
    out[static_cast<size_t>(3 - sd + i)] = (xv.shape[i] - window) / stride + 1;
  }
  const std::int64_t c = xv.shape[r - 1];
  Shape os = xv.shape;
  for (int i = 0; i < sd; ++i) os[i] = out[static_cast<size_t>(3 - sd + i)];

  Tensor<T> o(os);
  auto winners = std::make_shared<std::vector<std::int64_t>>(static_cast<size_t>(o.numel()));
  const std::int64_t in12 = in[1] * in[2];
  std::int64_t w_ = window, s_ = stride;
  std::int64_t oi = 0;
  for (std::int64_t o0 = 0; o0 < out[0]; ++o0)
    for (std::int64_t o1 = 0; o1 < out[1]; ++o1)
      for (std::int64_t o2 = 0; o2 < out[2]; ++o2)
        for (std::int64_t ch = 0; ch < c; ++ch, ++oi) {
          T best{};
          std::int64_t best_at = -1;
          const std::int64_t w0 = (sd == 3) ? w_ : 1;
          for (std::int64_t k0 = 0; k0 < w0; ++k0)
            for (std::int64_t k1 = 0; k1 < w_; ++k1)
              for (std::int64_t k2 = 0; k2 < w_; ++k2) {
                const std::int64_t i0 = (sd == 3) ? o0 * s_ + k0 : 0;
                const std::int64_t idx =
                    ((i0 * in12) + (o1 * s_ + k1) * in[2] + (o2 * s_ + k2)) * c + ch;
                const T v = xv.data[idx];
                if (best_at < 0 || v > best) {
                  best = v;
                  best_at = idx;
                }
              }
          o.data[oi] = best;
          (*winners)[static_cast<size_t>(oi)] = best_at;
        }

  return t.push(std::move(o), {x}, [x, winners](Tape<T>& tp, std::int32_t id) {
    if (!tp.needs_grad(x)) return;
    const auto& g = tp.grad(Var{id});
    auto& dx = tp.grad(x).data;
    for (std::int64_t i = 0; i < g.numel(); ++i)
      dx[(*winners)[static_cast<size_t>(i)]] += g.data[i];
  });
}

// Global average over the spatial axes, broadcast back to the input extents
// so the result can be concatenated with same-size feature maps.
template <typename T>
Var global_avg_pool(Tape<T>& t, Var x) {
  const Tensor<T>& xv = t.val(x);
  const int r = xv.shape.rank;
  const std::int64_t c = xv.shape[r - 1];
  const std::int64_t sp = xv.numel() / c;

  Eigen::Array<T, Eigen::Dynamic, 1> mean = Eigen::Array<T, Eigen::Dynamic, 1>::Zero(c);
  for (std::int64_t p = 0; p < sp; ++p) mean += xv.data.segment(p * c, c);
  mean /= static_cast<T>(sp);

  Tensor<T> o(xv.shape);
  for (std::int64_t p = 0; p < sp; ++p) o.data.segment(p * c, c) = mean;

  return t.push(std::move(o), {x}, [x, c, sp](Tape<T>& tp, std::int32_t id) {
    if (!tp.needs_grad(x)) return;
    const auto& g = tp.grad(Var{id}).data;
    Eigen::Array<T, Eigen::Dynamic, 1> gsum = Eigen::Array<T, Eigen::Dynamic, 1>::Zero(c);
    for (std::int64_t p = 0; p < sp; ++p) gsum += g.segment(p * c, c);
    gsum /= static_cast<T>(sp);
    auto& dx = tp.grad(x).data;
    for (std::int64_t p = 0; p < sp; ++p) dx.segment(p * c, c) += gsum;
  });
}

}  // namespace grfnet
