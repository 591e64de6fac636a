#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "grfnet/loss.hpp"
#include "grfnet/network.hpp"
#include "grfnet/projection.hpp"
#include "grfnet/rng.hpp"

namespace grfnet {

// ---------------------------------------------------------------------------
// procedural RGB-D scenes: an axis-aligned room shell (ceiling, floor, walls)
// plus free-standing boxes, rendered by ray casting against the camera at the
// origin looking along +z. Labels cover the full volume, occluded space
// included.
// ---------------------------------------------------------------------------

struct SceneSpec {
  std::int64_t image_h = 64, image_w = 48;
  CameraIntrinsics cam{30.0, 48.0, 24.0, 32.0};
  VoxelGridSpec grid = VoxelGridSpec::centered({32, 16, 32}, 0.15);
  int min_objects = 2, max_objects = 5;
  double min_object_size = 0.5, max_object_size = 1.4;
  double depth_noise_sigma = 0.0;  // meters
  double invalid_pixel_fraction = 0.0;
  // maps two object classes onto one base color, reproducing the
  // ambiguous-appearance failure mode
  bool color_collision = false;

  static SceneSpec tiny() { return SceneSpec{}; }
  static SceneSpec paper() {
    SceneSpec s;
    s.image_h = 640;
    s.image_w = 480;
    s.cam = CameraIntrinsics{300.0, 480.0, 240.0, 320.0};
    s.grid = VoxelGridSpec::centered({240, 144, 240}, 0.02);
    return s;
  }

  void validate() const {
    if (image_h < 1 || image_w < 1) throw std::invalid_argument("scene: bad image extents");
    if (grid.resolution <= 0) throw std::invalid_argument("scene: bad resolution");
    if (min_objects < 0 || max_objects < min_objects)
      throw std::invalid_argument("scene: bad object count range");
    const double rx = static_cast<double>(grid.extents[2]) * grid.resolution;
    const double rz = static_cast<double>(grid.extents[0]) * grid.resolution;
    if (rx < 1.0 || rz < 1.0) throw std::invalid_argument("scene: degenerate room extents");
  }
};

struct SceneSample {
  std::int64_t image_h = 0, image_w = 0;
  std::vector<std::uint8_t> rgb;  // H x W x 3
  std::vector<float> depth;       // H x W, meters, 0 = invalid
  CameraIntrinsics cam;
  VoxelGridSpec grid;
  std::vector<std::uint8_t> labels;  // D x H x W; 0 empty, 1..11, 255 unknown

  RgbImage rgb_image() const { return RgbImage{image_h, image_w, rgb}; }
  DepthImage depth_image() const { return DepthImage{image_h, image_w, depth}; }
  LabelGrid label_grid() const { return LabelGrid{grid.extents, labels}; }
};

namespace detail {

struct Box {
  std::array<double, 3> lo, hi;  // x, y, z
  std::uint8_t cls = 0;

  bool contains(const std::array<double, 3>& p) const {
    for (int i = 0; i < 3; ++i)
      if (p[static_cast<size_t>(i)] < lo[static_cast<size_t>(i)] ||
          p[static_cast<size_t>(i)] >= hi[static_cast<size_t>(i)])
        return false;
    return true;
  }
  bool overlaps(const Box& o) const {
    for (int i = 0; i < 3; ++i)
      if (hi[static_cast<size_t>(i)] <= o.lo[static_cast<size_t>(i)] ||
          o.hi[static_cast<size_t>(i)] <= lo[static_cast<size_t>(i)])
        return false;
    return true;
  }
};

// Z parameter of the nearest entry into the box along ray p(t) = t * dir,
// dir.z == 1; negative result means no forward hit.
inline double ray_box_enter(const std::array<double, 3>& dir, const Box& b) {
  double t_enter = 0.0, t_exit = 1e30;
  for (int i = 0; i < 3; ++i) {
    const double d = dir[static_cast<size_t>(i)];
    const double lo = b.lo[static_cast<size_t>(i)], hi = b.hi[static_cast<size_t>(i)];
    if (std::abs(d) < 1e-12) {
      if (0.0 < lo || 0.0 >= hi) return -1.0;
      continue;
    }
    double t0 = lo / d, t1 = hi / d;
    if (t0 > t1) std::swap(t0, t1);
    t_enter = std::max(t_enter, t0);
    t_exit = std::min(t_exit, t1);
  }
  if (t_enter > t_exit || t_exit <= 1e-9) return -1.0;
  return t_enter > 1e-9 ? t_enter : -1.0;
}

inline std::array<std::uint8_t, 3> class_base_color(int cls, bool collide) {
  // distinct hues per class; tvs (9) mirrors chair (5) in collision mode
  static const std::array<std::array<std::uint8_t, 3>, 12> palette = {{
      {40, 40, 40},     // (unused) empty
      {230, 230, 210},  // ceil.
      {140, 100, 60},   // floor
      {200, 160, 120},  // wall
      {90, 170, 230},   // win.
      {220, 60, 60},    // chair
      {60, 120, 220},   // bed
      {60, 200, 90},    // sofa
      {240, 200, 60},   // table
      {150, 60, 200},   // tvs
      {70, 210, 200},   // furn.
      {240, 120, 40},   // objs.
  }};
  if (collide && cls == 9) cls = 5;
  return palette[static_cast<size_t>(cls)];
}

}  // namespace detail

// Deterministic for a given (seed, spec): geometry, colors, noise and labels
// all derive from one seeded stream.
inline SceneSample generate_scene(std::uint64_t seed, const SceneSpec& spec) {
  spec.validate();
  Rng rng(Rng::mix(seed, 0x7363656eULL));

  const auto& g = spec.grid;
  const double res = g.resolution;
  const double x0 = g.origin[0], y0 = g.origin[1], z0 = g.origin[2];
  const double x1 = x0 + static_cast<double>(g.extents[2]) * res;
  const double y1 = y0 + static_cast<double>(g.extents[1]) * res;
  const double z1 = z0 + static_cast<double>(g.extents[0]) * res;
  const double th = 4.0 * res;  // shell thickness: one output-scale voxel

  std::vector<detail::Box> boxes;
  boxes.push_back({{x0, y0, z0}, {x1, y0 + th, z1}, 1});  // ceiling (y down)
  boxes.push_back({{x0, y1 - th, z0}, {x1, y1, z1}, 2});  // floor
  boxes.push_back({{x0, y0, z1 - th}, {x1, y1, z1}, 3});  // back wall
  boxes.push_back({{x0, y0, z0}, {x0 + th, y1, z1}, 3});  // left wall
  boxes.push_back({{x1 - th, y0, z0}, {x1, y1, z1}, 3});  // right wall

  const int n_obj = spec.min_objects +
                    static_cast<int>(rng.uniform_int(spec.max_objects - spec.min_objects + 1));
  const size_t shell_count = boxes.size();
  for (int i = 0; i < n_obj; ++i) {
    for (int attempt = 0; attempt < 40; ++attempt) {
      const double sx = rng.uniform(spec.min_object_size, spec.max_object_size);
      const double sy = rng.uniform(spec.min_object_size, std::min(spec.max_object_size,
                                                                   y1 - y0 - 2 * th));
      const double sz = rng.uniform(spec.min_object_size, spec.max_object_size);
      const double px = rng.uniform(x0 + th, x1 - th - sx);
      const double pz = rng.uniform(z0 + std::max(1.0, th), z1 - th - sz);
      detail::Box b;
      b.cls = static_cast<std::uint8_t>(4 + rng.uniform_int(8));
      b.lo = {px, y1 - th - sy, pz};  // resting on the floor
      b.hi = {px + sx, y1 - th, pz + sz};
      bool ok = true;
      for (size_t j = shell_count; j < boxes.size(); ++j)
        if (b.overlaps(boxes[j])) {
          ok = false;
          break;
        }
      if (ok) {
        boxes.push_back(b);
        break;
      }
    }
  }

  // per-scene color jitter keeps classes identifiable while varying samples
  std::array<std::array<double, 3>, 12> scene_color{};
  for (int c = 1; c <= 11; ++c) {
    const auto base = detail::class_base_color(c, spec.color_collision);
    for (int k = 0; k < 3; ++k)
      scene_color[static_cast<size_t>(c)][static_cast<size_t>(k)] =
          std::clamp(static_cast<double>(base[static_cast<size_t>(k)]) + rng.uniform(-12.0, 12.0),
                     0.0, 255.0);
  }

  SceneSample s;
  s.image_h = spec.image_h;
  s.image_w = spec.image_w;
  s.cam = spec.cam;
  s.grid = g;
  s.rgb.resize(static_cast<size_t>(spec.image_h * spec.image_w * 3));
  s.depth.resize(static_cast<size_t>(spec.image_h * spec.image_w));

  std::int64_t pi = 0;
  for (std::int64_t v = 0; v < spec.image_h; ++v)
    for (std::int64_t u = 0; u < spec.image_w; ++u, ++pi) {
      const std::array<double, 3> dir = {
          (static_cast<double>(u) + 0.5 - spec.cam.cx) / spec.cam.fx,
          (static_cast<double>(v) + 0.5 - spec.cam.cy) / spec.cam.fy, 1.0};
      double best = -1.0;
      int hit = -1;
      for (size_t bi = 0; bi < boxes.size(); ++bi) {
        const double t = detail::ray_box_enter(dir, boxes[bi]);
        if (t > 0 && (best < 0 || t < best)) {
          best = t;
          hit = static_cast<int>(bi);
        }
      }
      double z = best;
      const double noise = spec.depth_noise_sigma > 0
                               ? rng.normal() * spec.depth_noise_sigma
                               : (spec.depth_noise_sigma, 0.0);
      const bool drop = spec.invalid_pixel_fraction > 0 &&
                        rng.uniform() < spec.invalid_pixel_fraction;
      if (hit < 0 || drop) {
        s.depth[static_cast<size_t>(pi)] = 0.0f;
        for (int k = 0; k < 3; ++k) s.rgb[static_cast<size_t>(pi * 3 + k)] = 0;
        continue;
      }
      z = std::max(0.05, z + noise);
      s.depth[static_cast<size_t>(pi)] = static_cast<float>(z);
      const auto& col = scene_color[boxes[static_cast<size_t>(hit)].cls];
      for (int k = 0; k < 3; ++k) {
        const double val = col[static_cast<size_t>(k)] + rng.uniform(-10.0, 10.0);
        s.rgb[static_cast<size_t>(pi * 3 + k)] =
            static_cast<std::uint8_t>(std::clamp(val, 0.0, 255.0));
      }
    }

  s.labels.assign(static_cast<size_t>(g.num_voxels()), 0);
  std::int64_t vi = 0;
  for (std::int64_t d = 0; d < g.extents[0]; ++d)
    for (std::int64_t h = 0; h < g.extents[1]; ++h)
      for (std::int64_t w = 0; w < g.extents[2]; ++w, ++vi) {
        const auto c = g.voxel_center(d, h, w);
        // objects take precedence over the shell, scan order is fixed
        for (size_t bi = boxes.size(); bi-- > 0;) {
          if (boxes[bi].contains(c)) {
            s.labels[static_cast<size_t>(vi)] = boxes[bi].cls;
            break;
          }
        }
      }
  return s;
}

// ---------------------------------------------------------------------------
// SSCV sample container, version 1, little-endian throughout.
//
//   offset  size  field
//   0       4     magic "SSCV"
//   4       4     u32 version = 1
//   8       4     u32 reserved = 0
//   12      20    u32 H, W, D_vox, H_vox, W_vox
//   32      16    f32 fx, fy, cx, cy
//   48      4     f32 voxel resolution
//   52      12    f32 origin x, y, z
//   64      ...   rgb u8[H*W*3], depth f32[H*W], labels u8[D*H*W]
// ---------------------------------------------------------------------------

constexpr std::int64_t kSscvHeaderBytes = 64;

enum class IoCode { ok = 0, bad_magic = 1, bad_version = 2, truncated = 3, io_error = 4 };

struct IoError : public std::runtime_error {
  IoCode code;
  IoError(IoCode c, const std::string& msg) : std::runtime_error(msg), code(c) {}
};

namespace detail {

inline void put_u32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}
inline void put_f32(std::vector<std::uint8_t>& b, float f) {
  std::uint32_t v;
  std::memcpy(&v, &f, 4);
  put_u32(b, v);
}

struct Reader {
  const std::uint8_t* p;
  size_t n, at = 0;
  void need(size_t k) const {
    if (at + k > n) throw IoError(IoCode::truncated, "sscv: truncated payload");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[at + static_cast<size_t>(i)]) << (8 * i);
    at += 4;
    return v;
  }
  float f32() {
    const std::uint32_t v = u32();
    float f;
    std::memcpy(&f, &v, 4);
    return f;
  }
  void bytes(void* dst, size_t k) {
    need(k);
    std::memcpy(dst, p + at, k);
    at += k;
  }
};

}  // namespace detail

inline std::vector<std::uint8_t> encode_sample(const SceneSample& s) {
  std::vector<std::uint8_t> b;
  b.reserve(static_cast<size_t>(kSscvHeaderBytes) + s.rgb.size() + s.depth.size() * 4 +
            s.labels.size());
  b.insert(b.end(), {'S', 'S', 'C', 'V'});
  detail::put_u32(b, 1);  // version
  detail::put_u32(b, 0);  // reserved
  detail::put_u32(b, static_cast<std::uint32_t>(s.image_h));
  detail::put_u32(b, static_cast<std::uint32_t>(s.image_w));
  for (int i = 0; i < 3; ++i) detail::put_u32(b, static_cast<std::uint32_t>(s.grid.extents[static_cast<size_t>(i)]));
  detail::put_f32(b, static_cast<float>(s.cam.fx));
  detail::put_f32(b, static_cast<float>(s.cam.fy));
  detail::put_f32(b, static_cast<float>(s.cam.cx));
  detail::put_f32(b, static_cast<float>(s.cam.cy));
  detail::put_f32(b, static_cast<float>(s.grid.resolution));
  for (int i = 0; i < 3; ++i) detail::put_f32(b, static_cast<float>(s.grid.origin[static_cast<size_t>(i)]));
  b.insert(b.end(), s.rgb.begin(), s.rgb.end());
  const auto* dp = reinterpret_cast<const std::uint8_t*>(s.depth.data());
  std::vector<std::uint8_t> dbytes;
  for (float f : s.depth) detail::put_f32(dbytes, f);
  (void)dp;
  b.insert(b.end(), dbytes.begin(), dbytes.end());
  b.insert(b.end(), s.labels.begin(), s.labels.end());
  return b;
}

inline SceneSample decode_sample(const std::uint8_t* p, size_t n) {
  detail::Reader r{p, n};
  r.need(4);
  if (std::memcmp(p, "SSCV", 4) != 0) throw IoError(IoCode::bad_magic, "sscv: bad magic");
  r.at = 4;
  const std::uint32_t version = r.u32();
  if (version != 1)
    throw IoError(IoCode::bad_version, "sscv: unsupported version " + std::to_string(version));
  (void)r.u32();  // reserved
  SceneSample s;
  s.image_h = r.u32();
  s.image_w = r.u32();
  for (int i = 0; i < 3; ++i) s.grid.extents[static_cast<size_t>(i)] = r.u32();
  s.cam.fx = r.f32();
  s.cam.fy = r.f32();
  s.cam.cx = r.f32();
  s.cam.cy = r.f32();
  s.grid.resolution = r.f32();
  for (int i = 0; i < 3; ++i) s.grid.origin[static_cast<size_t>(i)] = r.f32();

  const size_t npix = static_cast<size_t>(s.image_h * s.image_w);
  s.rgb.resize(npix * 3);
  r.bytes(s.rgb.data(), npix * 3);
  s.depth.resize(npix);
  for (size_t i = 0; i < npix; ++i) s.depth[i] = r.f32();
  const size_t nvox = static_cast<size_t>(s.grid.num_voxels());
  s.labels.resize(nvox);
  r.bytes(s.labels.data(), nvox);
  return s;
}

inline void save_sample(const SceneSample& s, const std::string& path) {
  const auto bytes = encode_sample(s);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError(IoCode::io_error, "sscv: cannot open " + path + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError(IoCode::io_error, "sscv: write failed for " + path);
}

inline SceneSample load_sample(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError(IoCode::io_error, "sscv: cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                  std::istreambuf_iterator<char>());
  return decode_sample(bytes.data(), bytes.size());
}

// ---------------------------------------------------------------------------
// manifest: one "relative-path seed" pair per line
// ---------------------------------------------------------------------------

struct ManifestEntry {
  std::string path;
  std::uint64_t seed = 0;
};

inline void save_manifest(const std::vector<ManifestEntry>& entries, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw IoError(IoCode::io_error, "manifest: cannot open " + path + " for writing");
  for (const auto& e : entries) f << e.path << " " << e.seed << "\n";
}

inline std::vector<ManifestEntry> load_manifest(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError(IoCode::io_error, "manifest: cannot open " + path);
  std::vector<ManifestEntry> out;
  std::string p;
  std::uint64_t seed;
  while (f >> p >> seed) out.push_back({p, seed});
  return out;
}

// resolve a manifest-relative sample path
inline std::string resolve_manifest_path(const std::string& manifest_path,
                                         const std::string& entry) {
  namespace fs = std::filesystem;
  fs::path e(entry);
  if (e.is_absolute()) return entry;
  return (fs::path(manifest_path).parent_path() / e).string();
}

}  // namespace grfnet
