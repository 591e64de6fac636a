#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "grfnet/loss.hpp"

namespace grfnet {

inline const std::array<const char*, 11> kClassNames = {
    "ceil.", "floor", "wall", "win.", "chair", "bed", "sofa", "table", "tvs", "furn.", "objs."};

// Binary and per-class confusion counters. Merging is plain addition, so
// per-sample counts can be accumulated in any grouping.
struct ConfusionCounts {
  int num_classes = 0;
  std::int64_t sc_tp = 0, sc_fp = 0, sc_fn = 0;
  std::vector<std::int64_t> tp, fp, fn;  // non-empty classes, index 0 == class 1

  explicit ConfusionCounts(int classes = 12)
      : num_classes(classes),
        tp(static_cast<size_t>(classes - 1), 0),
        fp(static_cast<size_t>(classes - 1), 0),
        fn(static_cast<size_t>(classes - 1), 0) {}

  ConfusionCounts& operator+=(const ConfusionCounts& o) {
    sc_tp += o.sc_tp;
    sc_fp += o.sc_fp;
    sc_fn += o.sc_fn;
    for (size_t i = 0; i < tp.size(); ++i) {
      tp[i] += o.tp[i];
      fp[i] += o.fp[i];
      fn[i] += o.fn[i];
    }
    return *this;
  }
};

// Accumulate confusion counts over the mask regions. Voxels with unknown
// ground truth never count. SC treats every non-empty class as occupied.
inline ConfusionCounts accumulate_confusion(const LabelGrid& pred, const LabelGrid& gt,
                                            const EvalMask& mask, int num_classes) {
  if (pred.numel() != gt.numel() || pred.numel() != static_cast<std::int64_t>(mask.in_sc.size()))
    throw std::invalid_argument("metrics: shape mismatch");
  ConfusionCounts c(num_classes);
  for (std::int64_t i = 0; i < pred.numel(); ++i) {
    const std::uint8_t g = gt.label[static_cast<size_t>(i)];
    if (g == kUnknownLabel) continue;
    const std::uint8_t p = pred.label[static_cast<size_t>(i)];
    if (mask.in_sc[static_cast<size_t>(i)]) {
      const bool po = p != 0, go = g != 0;
      if (po && go) ++c.sc_tp;
      if (po && !go) ++c.sc_fp;
      if (!po && go) ++c.sc_fn;
    }
    if (mask.in_ssc[static_cast<size_t>(i)]) {
      if (p != 0 && p == g) ++c.tp[static_cast<size_t>(p - 1)];
      if (p != 0 && p != g) ++c.fp[static_cast<size_t>(p - 1)];
      if (g != 0 && p != g) ++c.fn[static_cast<size_t>(g - 1)];
    }
  }
  return c;
}

struct ScMetrics {
  std::optional<double> precision, recall, iou;
};

inline std::optional<double> ratio(std::int64_t num, std::int64_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

inline ScMetrics sc_metrics(const ConfusionCounts& c) {
  return ScMetrics{ratio(c.sc_tp, c.sc_tp + c.sc_fp), ratio(c.sc_tp, c.sc_tp + c.sc_fn),
                   ratio(c.sc_tp, c.sc_tp + c.sc_fp + c.sc_fn)};
}

struct SscMetrics {
  std::vector<std::optional<double>> iou;  // per non-empty class
  std::optional<double> mean;              // over classes present in pred or gt
};

inline SscMetrics ssc_metrics(const ConfusionCounts& c) {
  SscMetrics m;
  double sum = 0.0;
  int n = 0;
  for (size_t i = 0; i < c.tp.size(); ++i) {
    auto v = ratio(c.tp[i], c.tp[i] + c.fp[i] + c.fn[i]);
    m.iou.push_back(v);
    if (v) {
      sum += *v;
      ++n;
    }
  }
  if (n > 0) m.mean = sum / n;
  return m;
}

// Full evaluation result. sc_alt carries the alternate SC region (all
// in-view voxels when the primary region is occluded-only, and vice versa).
struct EvalReport {
  ScMetrics sc, sc_alt;
  SscMetrics ssc;
  std::int64_t samples = 0;
  ConfusionCounts counts;

  EvalReport() : counts(12) {}

  static std::string fmt(const std::optional<double>& v, bool percent = true) {
    if (!v) return "undef";
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(1);
    os << (percent ? *v * 100.0 : *v);
    return os.str();
  }

  // Line-oriented table mirroring the usual column order:
  // prec., recall, IoU, the 11 class IoUs, then their average.
  std::string table() const {
    std::ostringstream os;
    os << "prec.  recall IoU   |";
    for (auto* n : kClassNames) os << " " << n;
    os << " | avg.\n";
    os << fmt(sc.precision) << "   " << fmt(sc.recall) << "   " << fmt(sc.iou) << "  |";
    for (const auto& v : ssc.iou) os << " " << fmt(v);
    os << " | " << fmt(ssc.mean) << "\n";
    return os.str();
  }

  std::string kv_dump() const {
    std::ostringstream os;
    os.precision(10);
    auto put = [&](const char* k, const std::optional<double>& v) {
      os << k << "=" << (v ? std::to_string(*v) : "undef") << "\n";
    };
    put("sc_precision", sc.precision);
    put("sc_recall", sc.recall);
    put("sc_iou", sc.iou);
    put("sc_alt_precision", sc_alt.precision);
    put("sc_alt_recall", sc_alt.recall);
    put("sc_alt_iou", sc_alt.iou);
    for (size_t i = 0; i < ssc.iou.size(); ++i)
      put(("ssc_iou_" + std::to_string(i + 1)).c_str(), ssc.iou[i]);
    put("ssc_miou", ssc.mean);
    os << "samples=" << samples << "\n";
    return os.str();
  }
};

}  // namespace grfnet
