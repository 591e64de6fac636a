#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "grfnet/projection.hpp"
#include "grfnet/tape.hpp"

namespace grfnet {

constexpr std::uint8_t kUnknownLabel = 255;

struct ClassWeights {
  std::vector<double> w;  // index 0 is the empty class
};

// Empty-class weight starts at `base` and grows by `base` every `step_epochs`
// epochs; non-empty classes default to 1 unless a table is supplied.
inline ClassWeights weight_schedule(int epoch, int num_classes, double base = 0.05,
                                    int step_epochs = 40,
                                    const std::vector<double>& nonempty = {}) {
  if (epoch < 0) throw std::invalid_argument("weight_schedule: negative epoch");
  ClassWeights cw;
  cw.w.assign(static_cast<size_t>(num_classes), 1.0);
  cw.w[0] = base * (1.0 + static_cast<double>(epoch / step_epochs));
  for (size_t c = 0; c + 1 < nonempty.size() + 1 && c + 1 < cw.w.size(); ++c)
    cw.w[c + 1] = nonempty[c];
  return cw;
}

struct LabelGrid {
  std::array<std::int64_t, 3> extents{0, 0, 0};
  std::vector<std::uint8_t> label;
  std::int64_t numel() const { return extents[0] * extents[1] * extents[2]; }
};

// Per-voxel evaluation regions. in_loss is the field of view; in_sc and
// in_ssc are subsets of it.
struct EvalMask {
  std::array<std::int64_t, 3> extents{0, 0, 0};
  std::vector<std::uint8_t> in_loss, in_sc, in_ssc;

  enum class ScRegion { occluded_only, all_in_view };

  static EvalMask from_visibility(const VisibilityGrid& vg,
                                  ScRegion sc = ScRegion::occluded_only) {
    EvalMask m;
    m.extents = vg.extents;
    const size_t n = vg.label.size();
    m.in_loss.resize(n);
    m.in_sc.resize(n);
    m.in_ssc.resize(n);
    for (size_t i = 0; i < n; ++i) {
      const bool in_view = vg.label[i] != Visibility::outside_fov;
      m.in_loss[i] = in_view ? 1 : 0;
      m.in_ssc[i] = in_view ? 1 : 0;
      m.in_sc[i] = (sc == ScRegion::all_in_view)
                       ? m.in_loss[i]
                       : static_cast<std::uint8_t>(vg.label[i] == Visibility::occluded ? 1 : 0);
    }
    return m;
  }

  static EvalMask all(std::array<std::int64_t, 3> ext) {
    EvalMask m;
    m.extents = ext;
    const size_t n = static_cast<size_t>(ext[0] * ext[1] * ext[2]);
    m.in_loss.assign(n, 1);
    m.in_sc.assign(n, 1);
    m.in_ssc.assign(n, 1);
    return m;
  }
};

// Weighted softmax cross-entropy over the in_loss region. Softmax runs on the
// unnormalized logits; voxels outside the mask or labeled unknown contribute
// exactly zero loss and zero gradient. Normalization is the mean over
// contributing voxels by default; mean=false gives the raw weighted sum.
template <typename T>
Var weighted_ce(Tape<T>& t, Var logits, const LabelGrid& labels, const ClassWeights& weights,
                const EvalMask& mask, bool mean = true) {
  const Tensor<T>& lg = t.val(logits);
  if (lg.shape.rank != 4) throw std::invalid_argument("weighted_ce: logits must be D x H x W x C");
  const std::int64_t c = lg.shape[3];
  const std::int64_t vox = lg.numel() / c;
  if (labels.numel() != vox || static_cast<std::int64_t>(mask.in_loss.size()) != vox)
    throw std::invalid_argument("weighted_ce: label/mask extent mismatch");
  if (static_cast<std::int64_t>(weights.w.size()) != c)
    throw std::invalid_argument("weighted_ce: weight count mismatch");

  // softmax probabilities and (voxel, class) pairs of contributing voxels,
  // kept for the backward pass
  auto probs = std::make_shared<std::vector<T>>(static_cast<size_t>(vox * c), T(0));
  auto included = std::make_shared<std::vector<std::pair<std::int64_t, std::uint8_t>>>();
  included->reserve(static_cast<size_t>(vox));

  double total = 0.0;
  for (std::int64_t i = 0; i < vox; ++i) {
    const std::uint8_t y = labels.label[static_cast<size_t>(i)];
    if (!mask.in_loss[static_cast<size_t>(i)] || y == kUnknownLabel) continue;
    if (y >= c) throw std::invalid_argument("weighted_ce: label out of range");
    const T* row = lg.ptr() + i * c;
    T mx = row[0];
    for (std::int64_t k = 1; k < c; ++k) mx = std::max(mx, row[k]);
    double denom = 0.0;
    for (std::int64_t k = 0; k < c; ++k) denom += std::exp(static_cast<double>(row[k] - mx));
    for (std::int64_t k = 0; k < c; ++k)
      (*probs)[static_cast<size_t>(i * c + k)] =
          static_cast<T>(std::exp(static_cast<double>(row[k] - mx)) / denom);
    const double p = static_cast<double>((*probs)[static_cast<size_t>(i * c + y)]);
    total += weights.w[y] * -std::log(std::max(p, 1e-300));
    included->emplace_back(i, y);
  }

  const double norm = mean && !included->empty() ? static_cast<double>(included->size()) : 1.0;
  Tensor<T> out(Shape{1});
  out.data[0] = static_cast<T>(total / norm);

  std::vector<double> w = weights.w;
  return t.push(std::move(out), {logits},
                [logits, probs, included, w, c, norm](Tape<T>& tp, std::int32_t id) {
                  if (!tp.needs_grad(logits)) return;
                  const T g0 = tp.grad(Var{id}).data[0];
                  auto& dl = tp.grad(logits).data;
                  for (const auto& [i, y] : *included) {
                    const T scale = g0 * static_cast<T>(w[y] / norm);
                    const T* p = probs->data() + i * c;
                    for (std::int64_t k = 0; k < c; ++k)
                      dl[i * c + k] += scale * (p[k] - (k == y ? T(1) : T(0)));
                  }
                });
}

}  // namespace grfnet
