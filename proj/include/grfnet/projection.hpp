#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <vector>

#include "grfnet/tape.hpp"

namespace grfnet {

struct CameraIntrinsics {
  double fx = 0, fy = 0, cx = 0, cy = 0;
};

// Voxel grid in the camera frame: x right, y down, z forward. Extents are
// (D, H, W) voxels along (z, y, x). Default origin centers x/y so the optical
// axis pierces the middle of the grid front face.
struct VoxelGridSpec {
  std::array<double, 3> origin{0, 0, 0};  // x, y, z of voxel (0,0,0) corner
  double resolution = 0.02;
  std::array<std::int64_t, 3> extents{1, 1, 1};  // D, H, W

  static VoxelGridSpec centered(std::array<std::int64_t, 3> ext, double res) {
    VoxelGridSpec g;
    g.extents = ext;
    g.resolution = res;
    g.origin = {-0.5 * static_cast<double>(ext[2]) * res,
                -0.5 * static_cast<double>(ext[1]) * res, 0.0};
    return g;
  }

  std::int64_t num_voxels() const { return extents[0] * extents[1] * extents[2]; }
  std::int64_t cell(std::int64_t d, std::int64_t h, std::int64_t w) const {
    return (d * extents[1] + h) * extents[2] + w;
  }
  std::array<double, 3> voxel_center(std::int64_t d, std::int64_t h, std::int64_t w) const {
    return {origin[0] + (static_cast<double>(w) + 0.5) * resolution,
            origin[1] + (static_cast<double>(h) + 0.5) * resolution,
            origin[2] + (static_cast<double>(d) + 0.5) * resolution};
  }
};

struct DepthImage {
  std::int64_t height = 0, width = 0;
  std::vector<float> depth;  // z in meters, 0 (or <= 0) marks an invalid pixel

  float at(std::int64_t v, std::int64_t u) const {
    return depth[static_cast<size_t>(v * width + u)];
  }
};

// Pinhole back-projection of a pixel with depth into a voxel index (d, h, w).
// Invalid or non-positive depth, or a point outside the grid, yields nullopt.
inline std::optional<std::array<std::int64_t, 3>> pixel_to_voxel(double u, double v, double depth,
                                                                 const CameraIntrinsics& cam,
                                                                 const VoxelGridSpec& grid) {
  if (!(depth > 0.0) || !std::isfinite(depth)) return std::nullopt;
  const double x = (u - cam.cx) * depth / cam.fx;
  const double y = (v - cam.cy) * depth / cam.fy;
  const double z = depth;
  const auto w = static_cast<std::int64_t>(std::floor((x - grid.origin[0]) / grid.resolution));
  const auto h = static_cast<std::int64_t>(std::floor((y - grid.origin[1]) / grid.resolution));
  const auto d = static_cast<std::int64_t>(std::floor((z - grid.origin[2]) / grid.resolution));
  if (d < 0 || d >= grid.extents[0] || h < 0 || h >= grid.extents[1] || w < 0 ||
      w >= grid.extents[2])
    return std::nullopt;
  return std::array<std::int64_t, 3>{d, h, w};
}

// Precomputed pixel -> voxel cell map for one depth image (rays are cast
// through pixel centers). Cell -1 marks pixels that land nowhere.
struct ScatterMap {
  std::int64_t height = 0, width = 0;
  std::vector<std::int64_t> cell;

  static ScatterMap build(const DepthImage& depth, const CameraIntrinsics& cam,
                          const VoxelGridSpec& grid) {
    ScatterMap m;
    m.height = depth.height;
    m.width = depth.width;
    m.cell.assign(static_cast<size_t>(depth.height * depth.width), -1);
    std::int64_t i = 0;
    for (std::int64_t v = 0; v < depth.height; ++v)
      for (std::int64_t u = 0; u < depth.width; ++u, ++i) {
        const double z = depth.depth[static_cast<size_t>(i)];
        auto idx = pixel_to_voxel(static_cast<double>(u) + 0.5, static_cast<double>(v) + 0.5, z,
                                  cam, grid);
        if (idx) m.cell[static_cast<size_t>(i)] = grid.cell((*idx)[0], (*idx)[1], (*idx)[2]);
      }
    return m;
  }
};

// Scatter a 2D feature map (H x W x C) into the voxel grid (D x H x W x C).
// Pixels landing in one voxel aggregate per channel by max, which is
// order-independent; gradients route to the winning pixel (lowest pixel index
// on ties). Positions no pixel reaches stay zero and receive no gradient.
template <typename T>
Var project_features(Tape<T>& t, Var fmap, const ScatterMap& map, const VoxelGridSpec& grid) {
  const Tensor<T>& f = t.val(fmap);
  if (f.shape.rank != 3 || f.shape[0] != map.height || f.shape[1] != map.width)
    throw std::invalid_argument("project_features: feature/depth extent mismatch");
  const std::int64_t c = f.shape[2];
  const std::int64_t pixels = map.height * map.width;

  Tensor<T> out(Shape{grid.extents[0], grid.extents[1], grid.extents[2], c});
  auto winner = std::make_shared<std::vector<std::int64_t>>(
      static_cast<size_t>(out.numel()), std::int64_t{-1});

  for (std::int64_t p = 0; p < pixels; ++p) {
    const std::int64_t cell = map.cell[static_cast<size_t>(p)];
    if (cell < 0) continue;
    for (std::int64_t ch = 0; ch < c; ++ch) {
      const std::int64_t oi = cell * c + ch;
      const T v = f.data[p * c + ch];
      auto& win = (*winner)[static_cast<size_t>(oi)];
      if (win < 0 || v > out.data[oi]) {
        out.data[oi] = v;
        win = p;
      }
    }
  }

  return t.push(std::move(out), {fmap}, [fmap, winner, c](Tape<T>& tp, std::int32_t id) {
    if (!tp.needs_grad(fmap)) return;
    const auto& g = tp.grad(Var{id});
    auto& dx = tp.grad(fmap).data;
    for (std::int64_t oi = 0; oi < g.numel(); ++oi) {
      const std::int64_t p = (*winner)[static_cast<size_t>(oi)];
      if (p >= 0) dx[p * c + oi % c] += g.data[oi];
    }
  });
}

// Per-voxel view classification against a depth image.
enum class Visibility : std::uint8_t {
  observed_empty = 0,
  observed_surface = 1,
  occluded = 2,
  outside_fov = 3,
};

struct VisibilityGrid {
  std::array<std::int64_t, 3> extents{0, 0, 0};
  std::vector<Visibility> label;

  Visibility at(std::int64_t d, std::int64_t h, std::int64_t w) const {
    return label[static_cast<size_t>((d * extents[1] + h) * extents[2] + w)];
  }
};

// Project each voxel center into the image. Behind the camera, off-image, or
// onto an invalid depth pixel -> outside_fov. Otherwise compare the voxel
// depth z_v with the surface depth z_s at that pixel using tau = one voxel:
// z_v < z_s - tau  -> observed_empty, |z_v - z_s| <= tau -> observed_surface,
// z_v > z_s + tau  -> occluded.
inline VisibilityGrid visibility_mask(const DepthImage& depth, const CameraIntrinsics& cam,
                                      const VoxelGridSpec& grid) {
  VisibilityGrid vg;
  vg.extents = grid.extents;
  vg.label.assign(static_cast<size_t>(grid.num_voxels()), Visibility::outside_fov);
  const double tau = grid.resolution;

  std::int64_t i = 0;
  for (std::int64_t d = 0; d < grid.extents[0]; ++d)
    for (std::int64_t h = 0; h < grid.extents[1]; ++h)
      for (std::int64_t w = 0; w < grid.extents[2]; ++w, ++i) {
        const auto p = grid.voxel_center(d, h, w);
        if (p[2] <= 0.0) continue;
        const double u = cam.fx * p[0] / p[2] + cam.cx;
        const double v = cam.fy * p[1] / p[2] + cam.cy;
        const auto iu = static_cast<std::int64_t>(std::floor(u));
        const auto iv = static_cast<std::int64_t>(std::floor(v));
        if (iu < 0 || iu >= depth.width || iv < 0 || iv >= depth.height) continue;
        const double zs = depth.at(iv, iu);
        if (!(zs > 0.0) || !std::isfinite(zs)) continue;
        const double zv = p[2];
        Visibility lab;
        if (zv < zs - tau)
          lab = Visibility::observed_empty;
        else if (zv > zs + tau)
          lab = Visibility::occluded;
        else
          lab = Visibility::observed_surface;
        vg.label[static_cast<size_t>(i)] = lab;
      }
  return vg;
}

}  // namespace grfnet
