#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "grfnet/blocks.hpp"
#include "grfnet/fusion.hpp"
#include "grfnet/projection.hpp"

namespace grfnet {

struct RgbImage {
  std::int64_t height = 0, width = 0;
  std::vector<std::uint8_t> rgb;  // H x W x 3
};

// Declarative description of one GRFNet instance. The parameter set is a
// pure function of this config plus the seed.
struct NetworkConfig {
  int stages = 4;
  std::int64_t width2d = 8;
  std::int64_t width3d_a = 16;  // after first downsample
  std::int64_t width3d_b = 64;  // after second downsample; fusion width
  std::vector<int> stage_dilations = {1, 2, 3, 5};
  std::int64_t image_h = 640, image_w = 480;
  std::array<std::int64_t, 3> grid_extents = {240, 144, 240};
  double voxel_resolution = 0.02;
  int num_classes = 12;  // 11 semantic classes + empty
  FusionKind fusion = FusionKind::grf;
  double depth_max = 8.0;
  std::string profile = "paper";

  static NetworkConfig paper(int stages = 4, FusionKind fusion = FusionKind::grf) {
    NetworkConfig c;
    c.stages = stages;
    c.fusion = fusion;
    c.stage_dilations.resize(static_cast<size_t>(stages));
    c.validate();
    return c;
  }

  static NetworkConfig tiny(int stages = 4, FusionKind fusion = FusionKind::grf) {
    NetworkConfig c;
    c.stages = stages;
    c.fusion = fusion;
    c.width2d = 4;
    c.width3d_a = 8;
    c.width3d_b = 16;
    c.image_h = 64;
    c.image_w = 48;
    c.grid_extents = {32, 16, 32};
    c.voxel_resolution = 0.15;
    c.profile = "tiny";
    c.stage_dilations.resize(static_cast<size_t>(stages));
    c.validate();
    return c;
  }

  void validate() {
    if (stages < 1 || stages > 4) throw std::invalid_argument("config: stages must be 1..4");
    if (stage_dilations.empty()) {
      stage_dilations = {1, 2, 3, 5};
      stage_dilations.resize(static_cast<size_t>(stages));
    }
    if (static_cast<int>(stage_dilations.size()) != stages)
      throw std::invalid_argument("config: stage_dilations length must equal stages");
    for (int d : stage_dilations)
      if (d < 1) throw std::invalid_argument("config: stage dilation must be >= 1");
    for (std::int64_t w : {width2d, width3d_a, width3d_b})
      if (w < 4 || w % 4 != 0)
        throw std::invalid_argument("config: widths must be positive multiples of 4");
    for (auto e : grid_extents)
      if (e % 4 != 0) throw std::invalid_argument("config: grid extents must be divisible by 4");
  }

  std::int64_t head_mid_width() const { return 5 * width3d_b / 2; }
  std::array<std::int64_t, 3> output_extents() const {
    return {grid_extents[0] / 4, grid_extents[1] / 4, grid_extents[2] / 4};
  }
  VoxelGridSpec grid() const { return VoxelGridSpec::centered(grid_extents, voxel_resolution); }
  VoxelGridSpec output_grid() const {
    return VoxelGridSpec::centered(output_extents(), voxel_resolution * 4.0);
  }
};

// One feature-extractor branch (2D stack, projection, 3D stack).
struct BranchHandles {
  ConvLayer pw;
  DDRBlock ddr2d_a, ddr2d_b;
  DownsampleBlock ds1, ds2;
  DDRBlock ddr3d_a, ddr3d_b;
  std::vector<DDRBlock> stage_ddr;  // stages 2..N
};

template <typename T>
struct Model {
  NetworkConfig cfg;
  std::uint64_t seed = 0;
  ParamStore<T> params;
  BranchHandles depth_branch, rgb_branch;
  GrfParams grf;
  LstmParams lstm;
  GatedParams gated;
  ConcatParams concat;
  AsppBlock aspp;
  ConvLayer head1, head2;
};

template <typename T>
void register_branch(Model<T>& m, BranchHandles& b, const std::string& prefix,
                     std::int64_t in_channels, Rng& rng) {
  const auto& c = m.cfg;
  b.pw = register_conv(m.params, prefix + ".pw", pw_cfg(2), in_channels, c.width2d, rng);
  b.ddr2d_a = register_ddr(m.params, prefix + ".ddr2d_a", c.width2d,
                           DDRConfig{3, c.width2d, 1, 1, 2}, rng);
  b.ddr2d_b = register_ddr(m.params, prefix + ".ddr2d_b", c.width2d,
                           DDRConfig{3, c.width2d, 1, 1, 2}, rng);
  b.ds1 = register_downsample(m.params, prefix + ".ds1", c.width2d, c.width3d_a, rng);
  b.ddr3d_a = register_ddr(m.params, prefix + ".ddr3d_a", c.width3d_a,
                           DDRConfig{3, c.width3d_a, 1, 1, 3}, rng);
  b.ds2 = register_downsample(m.params, prefix + ".ds2", c.width3d_a, c.width3d_b, rng);
  b.ddr3d_b = register_ddr(m.params, prefix + ".ddr3d_b", c.width3d_b,
                           DDRConfig{3, c.width3d_b, 1, 1, 3}, rng);
  for (int s = 2; s <= c.stages; ++s)
    b.stage_ddr.push_back(register_ddr(m.params, prefix + ".stage" + std::to_string(s) + ".ddr",
                                       c.width3d_b,
                                       DDRConfig{3, c.width3d_b, 1,
                                                 c.stage_dilations[static_cast<size_t>(s - 1)], 3},
                                       rng));
}

// Builds the two branches, the fusion parameters for the configured strategy,
// the LW-ASPP context head and the output convolutions. Weights draw from a
// Glorot-uniform range; biases start at zero.
template <typename T>
Model<T> build_model(NetworkConfig cfg, std::uint64_t seed) {
  cfg.validate();
  Model<T> m;
  m.cfg = cfg;
  m.seed = seed;
  Rng rng(Rng::mix(seed, 0x6e657477ULL));

  register_branch(m, m.depth_branch, "depth", 1, rng);
  register_branch(m, m.rgb_branch, "rgb", 3, rng);

  switch (cfg.fusion) {
    case FusionKind::grf:
      m.grf = register_grf(m.params, "fusion.grf", cfg.width3d_b, rng);
      break;
    case FusionKind::lstm:
      m.lstm = register_lstm(m.params, "fusion.lstm", cfg.width3d_b, rng);
      break;
    case FusionKind::gated:
      m.gated = register_gated(m.params, "fusion.gated", cfg.width3d_b, rng);
      break;
    case FusionKind::concat:
      m.concat = register_concat(m.params, "fusion.concat", cfg.width3d_b, rng);
      break;
    default:
      break;  // sum / average / max register nothing
  }

  m.aspp = register_aspp(m.params, "aspp", cfg.width3d_b, rng);
  m.head1 = register_conv(m.params, "head.pw1", pw_cfg(3), 5 * cfg.width3d_b,
                          cfg.head_mid_width(), rng);
  m.head2 = register_conv(m.params, "head.pw2", pw_cfg(3), cfg.head_mid_width(),
                          static_cast<std::int64_t>(cfg.num_classes), rng);
  return m;
}

namespace detail {

template <typename T>
Var branch_forward(Tape<T>& t, const TapedParams<T>& p, const BranchHandles& b, Var input,
                   const ScatterMap& map, const VoxelGridSpec& grid) {
  Var x = relu(t, apply_conv(t, p, b.pw, input));
  x = ddr_forward(t, p, b.ddr2d_a, x);
  x = ddr_forward(t, p, b.ddr2d_b, x);
  x = project_features(t, x, map, grid);
  x = downsample_forward(t, p, b.ds1, x);
  x = ddr_forward(t, p, b.ddr3d_a, x);
  x = downsample_forward(t, p, b.ds2, x);
  return ddr_forward(t, p, b.ddr3d_b, x);
}

}  // namespace detail

// Normalized network inputs: depth scaled by the configured max range, RGB
// scaled to [0,1]. Invalid depth pixels stay zero.
template <typename T>
Tensor<T> depth_input_tensor(const DepthImage& d, const NetworkConfig& cfg) {
  Tensor<T> t(Shape{d.height, d.width, 1});
  for (std::int64_t i = 0; i < d.height * d.width; ++i) {
    const double z = d.depth[static_cast<size_t>(i)];
    t.data[i] = z > 0 ? static_cast<T>(std::min(z / cfg.depth_max, 1.0)) : T(0);
  }
  return t;
}

template <typename T>
Tensor<T> rgb_input_tensor(const RgbImage& im) {
  Tensor<T> t(Shape{im.height, im.width, 3});
  for (std::int64_t i = 0; i < im.height * im.width * 3; ++i)
    t.data[i] = static_cast<T>(im.rgb[static_cast<size_t>(i)]) / T(255);
  return t;
}

// Full forward pass to unnormalized class logits over the output grid
// (softmax is applied only inside the loss). The scatter map may be passed in
// when precomputed per sample; otherwise it is built from the depth image.
template <typename T>
Var forward(Model<T>& m, Tape<T>& t, const TapedParams<T>& p, const RgbImage& rgb,
            const DepthImage& depth, const CameraIntrinsics& cam,
            const ScatterMap* cached_map = nullptr) {
  const auto& cfg = m.cfg;
  if (rgb.height != cfg.image_h || rgb.width != cfg.image_w || depth.height != cfg.image_h ||
      depth.width != cfg.image_w)
    throw std::invalid_argument("forward: image extents do not match config");

  const VoxelGridSpec grid = cfg.grid();
  ScatterMap local;
  if (!cached_map) {
    local = ScatterMap::build(depth, cam, grid);
    cached_map = &local;
  }

  Var din = t.leaf(depth_input_tensor<T>(depth, cfg), false);
  Var rin = t.leaf(rgb_input_tensor<T>(rgb), false);

  Var f_d = detail::branch_forward(t, p, m.depth_branch, din, *cached_map, grid);
  Var f_r = detail::branch_forward(t, p, m.rgb_branch, rin, *cached_map, grid);

  // interleaved per-stage features: each branch chains its own DDRs
  std::vector<Var> seq{f_d, f_r};
  for (int s = 2; s <= cfg.stages; ++s) {
    f_d = ddr_forward(t, p, m.depth_branch.stage_ddr[static_cast<size_t>(s - 2)], f_d);
    f_r = ddr_forward(t, p, m.rgb_branch.stage_ddr[static_cast<size_t>(s - 2)], f_r);
    seq.push_back(f_d);
    seq.push_back(f_r);
  }

  Var fused;
  switch (cfg.fusion) {
    case FusionKind::grf:
      fused = multi_stage_fuse(t, std::span<const Var>(seq), p, m.grf).state.h;
      break;
    case FusionKind::lstm: {
      LstmState s{add(t, seq[0], seq[1]), t.leaf(Tensor<T>::zeros(t.val(seq[0]).shape), false)};
      for (const Var& f : seq) s = lstm_step(t, p, m.lstm, s, f);
      fused = s.h;
      break;
    }
    default: {
      // non-recurrent strategies fuse each stage pair and sum the stages
      for (size_t i = 0; i < seq.size(); i += 2) {
        Var o = baseline_fuse(t, cfg.fusion, seq[i], seq[i + 1], p,
                              cfg.fusion == FusionKind::gated ? &m.gated : nullptr,
                              cfg.fusion == FusionKind::concat ? &m.concat : nullptr);
        fused = fused.valid() ? add(t, fused, o) : o;
      }
      break;
    }
  }

  Var y = aspp_forward(t, p, m.aspp, fused);
  y = relu(t, apply_conv(t, p, m.head1, y));
  return apply_conv(t, p, m.head2, y);
}

template <typename T>
std::int64_t count_params(const Model<T>& m) {
  return m.params.total_scalars();
}

// ---------------------------------------------------------------------------
// analytic structure walk: one row per architecture-table line, with output
// shape, kernel/stride/dilation and aggregated params/FLOPs (both branches
// folded into the extractor rows; shared fusion parameters attributed to the
// first stage row). Row params sum to count_params and row FLOPs to
// count_flops.
// ---------------------------------------------------------------------------

struct LayerInfo {
  std::string module, op, out;
  int k = 0, s = 0, d = 0;  // 0 renders as "-"
  std::int64_t params = 0, flops = 0;
};

inline std::vector<LayerInfo> layer_table(const NetworkConfig& cfg) {
  std::vector<LayerInfo> rows;
  const bool bias = true;
  const std::vector<std::int64_t> img{cfg.image_h, cfg.image_w};
  const std::vector<std::int64_t> g0{cfg.grid_extents[0], cfg.grid_extents[1],
                                     cfg.grid_extents[2]};
  const auto g1 = strided_extents(g0, 2);
  const auto g2 = strided_extents(g1, 2);
  auto shp = [](const std::vector<std::int64_t>& e, std::int64_t c) {
    std::string s;
    for (auto x : e) s += std::to_string(x) + "x";
    return s + std::to_string(c);
  };
  auto add_row = [&](const std::string& mod, const std::string& op, const std::string& out, int k,
                     int s, int d, Cost c) {
    rows.push_back(LayerInfo{mod, op, out, k, s, d, c.params, c.flops});
  };

  // feature extractor (both branches share the structure; depth input has one
  // channel, rgb three)
  const std::string fe = "Feature Extractor";
  Cost c;
  c = conv_cost(img, 1, 1, cfg.width2d, 1, bias);
  c += conv_cost(img, 1, 3, cfg.width2d, 1, bias);
  c.flops += 2 * activation_flops(img, cfg.width2d);
  add_row(fe, "PWConv", shp(img, cfg.width2d), 1, 1, 1, c);

  const DDRConfig ddr2{3, cfg.width2d, 1, 1, 2};
  c = ddr_cost(cfg.width2d, ddr2, img, bias);
  c.params *= 2;
  c.flops *= 2;
  add_row(fe, "2D DDR", shp(img, cfg.width2d), 3, 1, 1, c);
  add_row(fe, "2D DDR", shp(img, cfg.width2d), 3, 1, 1, c);

  add_row(fe, "2D - 3D Projection", shp(g0, cfg.width2d), 0, 0, 0, Cost{});

  c = downsample_cost(cfg.width2d, cfg.width3d_a, g0, bias);
  c.params *= 2;
  c.flops *= 2;
  add_row(fe, "Down-sample", shp(g1, cfg.width3d_a), 3, 2, 1, c);

  c = ddr_cost(cfg.width3d_a, DDRConfig{3, cfg.width3d_a, 1, 1, 3}, g1, bias);
  c.params *= 2;
  c.flops *= 2;
  add_row(fe, "3D DDR", shp(g1, cfg.width3d_a), 3, 1, 1, c);

  c = downsample_cost(cfg.width3d_a, cfg.width3d_b, g1, bias);
  c.params *= 2;
  c.flops *= 2;
  add_row(fe, "Down-sample", shp(g2, cfg.width3d_b), 3, 2, 1, c);

  c = ddr_cost(cfg.width3d_b, DDRConfig{3, cfg.width3d_b, 1, 1, 3}, g2, bias);
  c.params *= 2;
  c.flops *= 2;
  add_row(fe, "3D DDR", shp(g2, cfg.width3d_b), 3, 1, 1, c);

  // fusion stages; recurrent strategies carry their parameters on stage 1
  const std::string ff = "Feature Fusion";
  const std::int64_t C = cfg.width3d_b;
  for (int s = 1; s <= cfg.stages; ++s) {
    if (s > 1) {
      const int d = cfg.stage_dilations[static_cast<size_t>(s - 1)];
      c = ddr_cost(C, DDRConfig{3, C, 1, d, 3}, g2, bias);
      c.params *= 2;
      c.flops *= 2;
      add_row(ff, "3D DDR", shp(g2, C), 3, 1, d, c);
    }
    Cost fc;
    switch (cfg.fusion) {
      case FusionKind::grf: {
        Cost step = grf_step_cost(C, g2, 3, bias);
        fc.flops = 2 * step.flops;
        if (s == 1) {
          fc.params = step.params;              // one shared parameter set
          fc.flops += activation_flops(g2, C);  // h0 = f_d + f_rgb
        }
        break;
      }
      case FusionKind::lstm: {
        Cost step = lstm_step_cost(C, g2, 3, bias);
        fc.flops = 2 * step.flops;
        if (s == 1) {
          fc.params = step.params;
          fc.flops += activation_flops(g2, C);
        }
        break;
      }
      case FusionKind::gated: {
        fc.flops = conv_cost(g2, 27, 2 * C, C, 1, bias).flops + 4 * activation_flops(g2, C);
        if (s == 1) fc.params = conv_cost(g2, 27, 2 * C, C, 1, bias).params;
        break;
      }
      case FusionKind::concat: {
        fc.flops = conv_cost(g2, 1, 2 * C, C, 1, bias).flops;
        if (s == 1) fc.params = conv_cost(g2, 1, 2 * C, C, 1, bias).params;
        break;
      }
      case FusionKind::average:
        fc.flops = 2 * activation_flops(g2, C);
        break;
      default:  // sum, max
        fc.flops = activation_flops(g2, C);
        break;
    }
    if (s > 1) fc.flops += activation_flops(g2, C);  // stage aggregation / state carry
    const std::string name = (cfg.fusion == FusionKind::grf
                                  ? std::string("GRF stage ")
                                  : std::string(fusion_name(cfg.fusion)) + " stage ") +
                             std::to_string(s);
    add_row(ff, name, shp(g2, C), 3, 1, 1, fc);
  }

  // LW-ASPP rows mirror its five branches plus the concatenation
  const std::string la = "LW-ASPP";
  c = conv_cost(g2, 1, C, C, 1, bias);
  add_row(la, "PWConv", shp(g2, C), 1, 1, 1, c);
  for (int d : {3, 6, 9})
    add_row(la, "3D DDR", shp(g2, C), 3, 1, d, ddr_cost(C, DDRConfig{3, C, 1, d, 3}, g2, bias));
  c = conv_cost(g2, 1, C, C, 1, bias);
  c.flops += spatial_numel(g2) * C;
  add_row(la, "GlobalAvgPool", shp(g2, C), 0, 0, 0, c);
  add_row(la, "Concatenate", shp(g2, 5 * C), 0, 0, 0, Cost{});

  // output head
  const std::string out = "Output";
  c = conv_cost(g2, 1, 5 * C, cfg.head_mid_width(), 1, bias);
  c.flops += activation_flops(g2, cfg.head_mid_width());
  add_row(out, "PWConv", shp(g2, cfg.head_mid_width()), 1, 1, 1, c);
  c = conv_cost(g2, 1, cfg.head_mid_width(), cfg.num_classes, 1, bias);
  add_row(out, "PWConv", shp(g2, cfg.num_classes), 1, 1, 1, c);
  add_row(out, "ArgMax", shp(g2, cfg.num_classes), 0, 0, 0, Cost{});

  return rows;
}

inline std::int64_t count_flops(const NetworkConfig& cfg) {
  std::int64_t f = 0;
  for (const auto& r : layer_table(cfg)) f += r.flops;
  return f;
}

inline std::int64_t table_params(const NetworkConfig& cfg) {
  std::int64_t p = 0;
  for (const auto& r : layer_table(cfg)) p += r.params;
  return p;
}

}  // namespace grfnet
