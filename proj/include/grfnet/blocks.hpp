#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "grfnet/conv.hpp"
#include "grfnet/ops.hpp"
#include "grfnet/param_store.hpp"

namespace grfnet {

// ---------------------------------------------------------------------------
// cost model: exact parameter counts plus FLOPs under the convention
// 1 multiply-accumulate = 1 FLOP, elementwise/activation ops 1 per element
// ---------------------------------------------------------------------------

struct Cost {
  std::int64_t params = 0;
  std::int64_t flops = 0;
  Cost& operator+=(const Cost& o) {
    params += o.params;
    flops += o.flops;
    return *this;
  }
};

inline std::int64_t ceil_div(std::int64_t a, std::int64_t s) { return (a + s - 1) / s; }

inline std::int64_t spatial_numel(const std::vector<std::int64_t>& ext) {
  std::int64_t n = 1;
  for (auto e : ext) n *= e;
  return n;
}

// "same" padding output extents for a strided conv
inline std::vector<std::int64_t> strided_extents(std::vector<std::int64_t> ext, std::int64_t s) {
  for (auto& e : ext) e = ceil_div(e, s);
  return ext;
}

inline Cost conv_cost_at(std::int64_t out_sp, std::int64_t kprod, std::int64_t cin,
                         std::int64_t cout, bool bias) {
  Cost c;
  c.params = kprod * cin * cout + (bias ? cout : 0);
  c.flops = out_sp * cout * kprod * cin + (bias ? out_sp * cout : 0);
  return c;
}

inline Cost conv_cost(const std::vector<std::int64_t>& in_ext, std::int64_t kprod,
                      std::int64_t cin, std::int64_t cout, std::int64_t stride, bool bias) {
  return conv_cost_at(spatial_numel(strided_extents(in_ext, stride)), kprod, cin, cout, bias);
}

inline std::int64_t activation_flops(const std::vector<std::int64_t>& ext, std::int64_t ch) {
  return spatial_numel(ext) * ch;
}

// ---------------------------------------------------------------------------
// conv layer plumbing
// ---------------------------------------------------------------------------

// One registered convolution: store indices plus its fixed config.
struct ConvLayer {
  int w = -1, b = -1;  // b stays -1 when bias-free
  ConvConfig cfg;
  Shape wshape;
  std::int64_t cin = 0, cout = 0;
};

template <typename T>
ConvLayer register_conv(ParamStore<T>& ps, const std::string& prefix, ConvConfig cfg,
                        std::int64_t cin, std::int64_t cout, Rng& rng) {
  ConvLayer l;
  l.cfg = cfg;
  l.cin = cin;
  l.cout = cout;
  std::int64_t kprod = 1;
  if (cfg.dims == 3) {
    l.wshape = Shape{cfg.kernel[0], cfg.kernel[1], cfg.kernel[2], cin, cout};
    kprod = static_cast<std::int64_t>(cfg.kernel[0]) * cfg.kernel[1] * cfg.kernel[2];
  } else {
    l.wshape = Shape{cfg.kernel[0], cfg.kernel[1], cin, cout};
    kprod = static_cast<std::int64_t>(cfg.kernel[0]) * cfg.kernel[1];
  }
  l.w = ps.add(prefix + ".w", l.wshape, Init::glorot_uniform, rng, kprod * cin, kprod * cout, true);
  if (cfg.has_bias) l.b = ps.add(prefix + ".b", Shape{cout}, Init::zero, rng, 0, 0, false);
  return l;
}

template <typename T>
Var apply_conv(Tape<T>& t, const TapedParams<T>& p, const ConvLayer& l, Var x) {
  std::optional<Var> bias;
  if (l.b >= 0) bias = p[l.b];
  return conv(t, x, p[l.w], bias, l.cfg);
}

inline ConvConfig pw_cfg(int dims) {
  return dims == 3 ? ConvConfig::conv3d(1) : ConvConfig::conv2d(1);
}

// ---------------------------------------------------------------------------
// DDR block: pointwise bottleneck (w/4) -> per-axis decomposed k-convs
// (1x1xk, 1xk x1, kx1x1; two convs in 2D) -> pointwise expansion, identity
// skip when stride 1 and matching channels. ReLU after the bottleneck convs
// and after the residual add.
// ---------------------------------------------------------------------------

struct DDRConfig {
  int k = 3;
  std::int64_t w = 64;  // output channels
  int s = 1;
  int d = 1;
  int dims = 3;
};

struct DDRBlock {
  DDRConfig cfg;
  std::int64_t cin = 0;
  ConvLayer pw_in;
  std::vector<ConvLayer> axis;  // dims entries
  ConvLayer pw_out;
  bool skip = false;
};

// Axis conv i strides/dilates along its own kernel axis only.
inline ConvConfig ddr_axis_cfg(int dims, int axis, int k, int s, int d) {
  ConvConfig c;
  c.dims = dims;
  c.kernel = {1, 1, 1};
  c.stride = {1, 1, 1};
  c.dilation = {1, 1, 1};
  // axis order: last spatial axis first (1x1xk, then 1xkx1, then kx1x1)
  const int ax = dims - 1 - axis;
  c.kernel[static_cast<size_t>(ax)] = k;
  c.stride[static_cast<size_t>(ax)] = s;
  c.dilation[static_cast<size_t>(ax)] = d;
  return c;
}

template <typename T>
DDRBlock register_ddr(ParamStore<T>& ps, const std::string& prefix, std::int64_t cin,
                      const DDRConfig& cfg, Rng& rng) {
  if (cfg.w % 4 != 0) throw std::invalid_argument("ddr: width not divisible by 4");
  DDRBlock b;
  b.cfg = cfg;
  b.cin = cin;
  const std::int64_t mid = cfg.w / 4;
  b.pw_in = register_conv(ps, prefix + ".pw_in", pw_cfg(cfg.dims), cin, mid, rng);
  for (int i = 0; i < cfg.dims; ++i)
    b.axis.push_back(register_conv(ps, prefix + ".axis" + std::to_string(i),
                                   ddr_axis_cfg(cfg.dims, i, cfg.k, cfg.s, cfg.d), mid, mid, rng));
  b.pw_out = register_conv(ps, prefix + ".pw_out", pw_cfg(cfg.dims), mid, cfg.w, rng);
  b.skip = (cfg.s == 1 && cin == cfg.w);
  return b;
}

template <typename T>
Var ddr_forward(Tape<T>& t, const TapedParams<T>& p, const DDRBlock& b, Var x) {
  if (t.val(x).shape[t.val(x).shape.rank - 1] != b.cin)
    throw std::invalid_argument("ddr: input channel mismatch");
  Var y = relu(t, apply_conv(t, p, b.pw_in, x));
  for (const auto& l : b.axis) y = relu(t, apply_conv(t, p, l, y));
  y = apply_conv(t, p, b.pw_out, y);
  if (b.skip) y = add(t, y, x);
  return relu(t, y);
}

inline Cost ddr_cost(std::int64_t cin, const DDRConfig& cfg,
                     const std::vector<std::int64_t>& in_ext, bool bias = true) {
  const std::int64_t mid = cfg.w / 4;
  Cost c;
  c += conv_cost(in_ext, 1, cin, mid, 1, bias);
  c.flops += activation_flops(in_ext, mid);
  auto ext = in_ext;
  for (int i = 0; i < cfg.dims; ++i) {
    if (cfg.s > 1) {
      const size_t ax = static_cast<size_t>(cfg.dims - 1 - i);
      ext[ax] = ceil_div(ext[ax], cfg.s);
    }
    c += conv_cost_at(spatial_numel(ext), cfg.k, mid, mid, bias);
    c.flops += activation_flops(ext, mid);
  }
  c += conv_cost(ext, 1, mid, cfg.w, 1, bias);
  if (cfg.s == 1 && cin == cfg.w) c.flops += activation_flops(ext, cfg.w);  // residual add
  c.flops += activation_flops(ext, cfg.w);                                  // final relu
  return c;
}

// ---------------------------------------------------------------------------
// hybrid downsample: 2x max-pool branch alongside a stride-2 k=3 conv branch,
// channel-concatenated (pool first). The conv branch carries cout - cin
// channels so the concatenation lands on cout.
// ---------------------------------------------------------------------------

struct DownsampleBlock {
  std::int64_t cin = 0, cout = 0;
  ConvLayer conv;
};

template <typename T>
DownsampleBlock register_downsample(ParamStore<T>& ps, const std::string& prefix,
                                    std::int64_t cin, std::int64_t cout, Rng& rng) {
  if (cout <= cin) throw std::invalid_argument("downsample: cout must exceed cin");
  DownsampleBlock b;
  b.cin = cin;
  b.cout = cout;
  b.conv = register_conv(ps, prefix + ".conv", ConvConfig::conv3d(3, 2), cin, cout - cin, rng);
  return b;
}

template <typename T>
Var downsample_forward(Tape<T>& t, const TapedParams<T>& p, const DownsampleBlock& b, Var x) {
  const Shape& s = t.val(x).shape;
  for (int i = 0; i + 1 < s.rank; ++i)
    if (s[i] % 2 != 0) throw std::invalid_argument("downsample: odd spatial extent");
  Var pooled = max_pool(t, x, 2, 2);
  Var conved = apply_conv(t, p, b.conv, x);
  return relu(t, concat_channels(t, pooled, conved));
}

inline Cost downsample_cost(std::int64_t cin, std::int64_t cout,
                            const std::vector<std::int64_t>& in_ext, bool bias = true) {
  Cost c = conv_cost(in_ext, 27, cin, cout - cin, 2, bias);
  const auto out_ext = strided_extents(in_ext, 2);
  c.flops += spatial_numel(out_ext) * cin * 7;     // 2^3 max-pool comparisons
  c.flops += activation_flops(out_ext, cout);      // relu after concat
  return c;
}

// ---------------------------------------------------------------------------
// light-weight ASPP head: pointwise branch, three dilated DDR branches, and a
// global-average branch with its own pointwise conv, concatenated to 5w.
// ---------------------------------------------------------------------------

struct AsppBlock {
  std::int64_t w = 0;
  ConvLayer pw;
  std::vector<DDRBlock> ddr;  // dilations 3, 6, 9
  ConvLayer gap_pw;
};

template <typename T>
AsppBlock register_aspp(ParamStore<T>& ps, const std::string& prefix, std::int64_t w, Rng& rng) {
  AsppBlock b;
  b.w = w;
  b.pw = register_conv(ps, prefix + ".pw", pw_cfg(3), w, w, rng);
  for (int d : {3, 6, 9})
    b.ddr.push_back(register_ddr(ps, prefix + ".ddr_d" + std::to_string(d), w,
                                 DDRConfig{3, w, 1, d, 3}, rng));
  b.gap_pw = register_conv(ps, prefix + ".gap_pw", pw_cfg(3), w, w, rng);
  return b;
}

template <typename T>
Var aspp_forward(Tape<T>& t, const TapedParams<T>& p, const AsppBlock& b, Var x) {
  if (t.val(x).shape[t.val(x).shape.rank - 1] != b.w)
    throw std::invalid_argument("aspp: input channel mismatch");
  Var out = apply_conv(t, p, b.pw, x);
  for (const auto& d : b.ddr) out = concat_channels(t, out, ddr_forward(t, p, d, x));
  Var gap = apply_conv(t, p, b.gap_pw, global_avg_pool(t, x));
  return concat_channels(t, out, gap);
}

inline Cost aspp_cost(std::int64_t w, const std::vector<std::int64_t>& ext, bool bias = true) {
  Cost c = conv_cost(ext, 1, w, w, 1, bias);
  for (int d : {3, 6, 9}) c += ddr_cost(w, DDRConfig{3, w, 1, d, 3}, ext, bias);
  c.flops += spatial_numel(ext) * w;  // global average
  c += conv_cost(ext, 1, w, w, 1, bias);
  return c;
}

}  // namespace grfnet
