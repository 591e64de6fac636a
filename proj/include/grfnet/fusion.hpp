#pragma once

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "grfnet/blocks.hpp"
#include "grfnet/conv.hpp"
#include "grfnet/ops.hpp"

namespace grfnet {

enum class FusionKind { grf, sum, average, max, concat, gated, lstm };

inline const char* fusion_name(FusionKind k) {
  switch (k) {
    case FusionKind::grf: return "grf";
    case FusionKind::sum: return "sum";
    case FusionKind::average: return "average";
    case FusionKind::max: return "max";
    case FusionKind::concat: return "concat";
    case FusionKind::gated: return "gated";
    case FusionKind::lstm: return "lstm";
  }
  return "?";
}

inline FusionKind fusion_from_name(const std::string& s) {
  for (FusionKind k : {FusionKind::grf, FusionKind::sum, FusionKind::average, FusionKind::max,
                       FusionKind::concat, FusionKind::gated, FusionKind::lstm})
    if (s == fusion_name(k)) return k;
  throw std::invalid_argument("unknown fusion strategy: " + s);
}

// ---------------------------------------------------------------------------
// Gated recurrent fusion block.
//
// One step consumes a feature volume f and the hidden state h (same shape,
// C channels each). Gate convolutions see the channel concatenation (f, h):
//   r   = sigmoid(Wr * (f, h))
//   z   = sigmoid(Wz * (f, h))
//   h'  = r .* h
//   hc  = tanh(Wh * (f, h'))
//   out = z .* h + (1 - z) .* hc
// One parameter set serves every step of a fusion run.
// ---------------------------------------------------------------------------

struct GrfParams {
  ConvLayer wr, wz, wh;  // k=3, 2C -> C
  std::int64_t channels = 0;
};

template <typename T>
GrfParams register_grf(ParamStore<T>& ps, const std::string& prefix, std::int64_t channels,
                       Rng& rng, int k = 3) {
  GrfParams g;
  g.channels = channels;
  g.wr = register_conv(ps, prefix + ".wr", ConvConfig::conv3d(k), 2 * channels, channels, rng);
  g.wz = register_conv(ps, prefix + ".wz", ConvConfig::conv3d(k), 2 * channels, channels, rng);
  g.wh = register_conv(ps, prefix + ".wh", ConvConfig::conv3d(k), 2 * channels, channels, rng);
  return g;
}

// Hidden state threaded through the fusion steps.
struct FusionState {
  Var h;
  int step = 0;
};

struct GrfStepTrace {
  Var r, z, h_reset, h_candidate;
};

// h0 = f_d + f_rgb
template <typename T>
FusionState grf_init(Tape<T>& t, Var f_d, Var f_rgb) {
  check_same_shape(t.val(f_d), t.val(f_rgb), "grf_init");
  return FusionState{add(t, f_d, f_rgb), 0};
}

template <typename T>
std::pair<FusionState, GrfStepTrace> grf_step(Tape<T>& t, const FusionState& state, Var f,
                                              const TapedParams<T>& p, const GrfParams& g) {
  if (!state.h.valid()) throw std::invalid_argument("grf_step: uninitialized state");
  check_same_shape(t.val(f), t.val(state.h), "grf_step");

  Var fh = concat_channels(t, f, state.h);
  Var r = sigmoid(t, apply_conv(t, p, g.wr, fh));
  Var z = sigmoid(t, apply_conv(t, p, g.wz, fh));
  Var h_reset = mul(t, r, state.h);
  Var hc = tanh_op(t, apply_conv(t, p, g.wh, concat_channels(t, f, h_reset)));
  Var out = add(t, mul(t, z, state.h), mul(t, one_minus(t, z), hc));

  return {FusionState{out, state.step + 1}, GrfStepTrace{r, z, h_reset, hc}};
}

// Two steps over one feature pair: depth first, then RGB, shared parameters.
template <typename T>
std::pair<FusionState, std::vector<GrfStepTrace>> single_stage_fuse(Tape<T>& t, Var f_d, Var f_rgb,
                                                                    const TapedParams<T>& p,
                                                                    const GrfParams& g) {
  FusionState s = grf_init(t, f_d, f_rgb);
  std::vector<GrfStepTrace> traces;
  auto [s1, t1] = grf_step(t, s, f_d, p, g);
  traces.push_back(t1);
  auto [s2, t2] = grf_step(t, s1, f_rgb, p, g);
  traces.push_back(t2);
  return {s2, traces};
}

// Serial fusion over an interleaved sequence (f_d_1, f_rgb_1, ..., f_d_N,
// f_rgb_N): 2N steps reusing one parameter set. Intermediate states are
// returned so callers can interleave per-branch processing between stages.
template <typename T>
struct MultiStageResult {
  FusionState state;
  std::vector<FusionState> stage_states;  // after each (depth, rgb) pair
  std::vector<GrfStepTrace> traces;       // 2N entries
};

template <typename T>
MultiStageResult<T> multi_stage_fuse(Tape<T>& t, std::span<const Var> sequence,
                                     const TapedParams<T>& p, const GrfParams& g) {
  if (sequence.empty() || sequence.size() % 2 != 0)
    throw std::invalid_argument("multi_stage_fuse: sequence must hold N >= 1 (depth, rgb) pairs");
  for (const Var& v : sequence) check_same_shape(t.val(v), t.val(sequence[0]), "multi_stage_fuse");

  MultiStageResult<T> r;
  FusionState s = grf_init(t, sequence[0], sequence[1]);
  for (size_t i = 0; i < sequence.size(); i += 2) {
    auto [s1, t1] = grf_step(t, s, sequence[i], p, g);
    auto [s2, t2] = grf_step(t, s1, sequence[i + 1], p, g);
    r.traces.push_back(t1);
    r.traces.push_back(t2);
    s = s2;
    r.stage_states.push_back(s);
  }
  r.state = s;
  return r;
}

inline Cost grf_step_cost(std::int64_t c, const std::vector<std::int64_t>& ext, int k = 3,
                          bool bias = true) {
  Cost cost;
  const std::int64_t kprod = static_cast<std::int64_t>(k) * k * k;
  for (int i = 0; i < 3; ++i) cost += conv_cost(ext, kprod, 2 * c, c, 1, bias);
  // sigmoid x2, tanh, r.*h, z.*h, 1-z, (1-z).*hc, sum
  cost.flops += 8 * activation_flops(ext, c);
  return cost;
}

// ---------------------------------------------------------------------------
// ablation fusion strategies
// ---------------------------------------------------------------------------

// gated: G = sigmoid(Wg * (a, b)); out = G .* a + (1 - G) .* b
struct GatedParams {
  ConvLayer wg;
};

template <typename T>
GatedParams register_gated(ParamStore<T>& ps, const std::string& prefix, std::int64_t channels,
                           Rng& rng, int k = 3) {
  return GatedParams{register_conv(ps, prefix + ".wg", ConvConfig::conv3d(k), 2 * channels,
                                   channels, rng)};
}

template <typename T>
Var gated_fuse(Tape<T>& t, const TapedParams<T>& p, const GatedParams& g, Var a, Var b) {
  check_same_shape(t.val(a), t.val(b), "gated_fuse");
  Var gate = sigmoid(t, apply_conv(t, p, g.wg, concat_channels(t, a, b)));
  return add(t, mul(t, gate, a), mul(t, one_minus(t, gate), b));
}

// concat: channel concatenation projected back to C with one pointwise conv
struct ConcatParams {
  ConvLayer pw;
};

template <typename T>
ConcatParams register_concat(ParamStore<T>& ps, const std::string& prefix, std::int64_t channels,
                             Rng& rng) {
  return ConcatParams{register_conv(ps, prefix + ".pw", pw_cfg(3), 2 * channels, channels, rng)};
}

template <typename T>
Var concat_fuse(Tape<T>& t, const TapedParams<T>& p, const ConcatParams& c, Var a, Var b) {
  return apply_conv(t, p, c.pw, concat_channels(t, a, b));
}

// convolutional LSTM with the same k=3 / 2C->C channel plan as the GRF block;
// consumes the modalities as serial steps with a persistent cell state
struct LstmParams {
  ConvLayer wi, wf, wo, wg;
  std::int64_t channels = 0;
};

template <typename T>
LstmParams register_lstm(ParamStore<T>& ps, const std::string& prefix, std::int64_t channels,
                         Rng& rng, int k = 3) {
  LstmParams l;
  l.channels = channels;
  l.wi = register_conv(ps, prefix + ".wi", ConvConfig::conv3d(k), 2 * channels, channels, rng);
  l.wf = register_conv(ps, prefix + ".wf", ConvConfig::conv3d(k), 2 * channels, channels, rng);
  l.wo = register_conv(ps, prefix + ".wo", ConvConfig::conv3d(k), 2 * channels, channels, rng);
  l.wg = register_conv(ps, prefix + ".wg", ConvConfig::conv3d(k), 2 * channels, channels, rng);
  return l;
}

struct LstmState {
  Var h, c;
};

template <typename T>
LstmState lstm_step(Tape<T>& t, const TapedParams<T>& p, const LstmParams& lp, const LstmState& s,
                    Var x) {
  check_same_shape(t.val(x), t.val(s.h), "lstm_step");
  Var xh = concat_channels(t, x, s.h);
  Var gi = sigmoid(t, apply_conv(t, p, lp.wi, xh));
  Var gf = sigmoid(t, apply_conv(t, p, lp.wf, xh));
  Var go = sigmoid(t, apply_conv(t, p, lp.wo, xh));
  Var gg = tanh_op(t, apply_conv(t, p, lp.wg, xh));
  Var c = add(t, mul(t, gf, s.c), mul(t, gi, gg));
  Var h = mul(t, go, tanh_op(t, c));
  return LstmState{h, c};
}

inline Cost lstm_step_cost(std::int64_t c, const std::vector<std::int64_t>& ext, int k = 3,
                           bool bias = true) {
  Cost cost;
  const std::int64_t kprod = static_cast<std::int64_t>(k) * k * k;
  for (int i = 0; i < 4; ++i) cost += conv_cost(ext, kprod, 2 * c, c, 1, bias);
  cost.flops += 9 * activation_flops(ext, c);
  return cost;
}

// Single-pair fusion for the parameter-free strategies plus gated/concat.
// grf and lstm run their own recurrent paths and are not dispatched here.
template <typename T>
Var baseline_fuse(Tape<T>& t, FusionKind kind, Var a, Var b, const TapedParams<T>& p,
                  const GatedParams* gated, const ConcatParams* concat) {
  switch (kind) {
    case FusionKind::sum:
      return add(t, a, b);
    case FusionKind::average:
      return scale(t, add(t, a, b), T(0.5));
    case FusionKind::max:
      return emax(t, a, b);
    case FusionKind::gated:
      if (!gated) throw std::invalid_argument("baseline_fuse: missing gated params");
      return gated_fuse(t, p, *gated, a, b);
    case FusionKind::concat:
      if (!concat) throw std::invalid_argument("baseline_fuse: missing concat params");
      return concat_fuse(t, p, *concat, a, b);
    default:
      throw std::invalid_argument("baseline_fuse: unsupported strategy tag");
  }
}

}  // namespace grfnet
