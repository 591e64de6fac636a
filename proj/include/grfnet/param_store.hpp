#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "grfnet/rng.hpp"
#include "grfnet/tape.hpp"
#include "grfnet/tensor.hpp"

namespace grfnet {

enum class Init { zero, glorot_uniform };

// Named, shaped parameter tensors with gradient buffers. Registration order
// is the canonical order for everything downstream (updates, checkpoints,
// gradient merging), which keeps training bit-deterministic. An entry can be
// referenced by any number of layers; sharing is just reuse of the index.
template <typename T>
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Tensor<T> value;
    Tensor<T> grad;
    bool decay = true;  // weight decay applies (off for biases)
  };

  // fan_in/fan_out for glorot; pass 0,0 for zero init
  int add(const std::string& name, const Shape& shape, Init init, Rng& rng,
          std::int64_t fan_in = 0, std::int64_t fan_out = 0, bool decay = true) {
    if (index_.count(name)) throw std::invalid_argument("ParamStore: duplicate name " + name);
    Entry e;
    e.name = name;
    e.value = Tensor<T>::zeros(shape);
    e.grad = Tensor<T>::zeros(shape);
    e.decay = decay;
    if (init == Init::glorot_uniform) {
      const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
      for (std::int64_t i = 0; i < e.value.numel(); ++i)
        e.value.data[i] = static_cast<T>(rng.uniform(-bound, bound));
    }
    entries_.push_back(std::move(e));
    index_[name] = static_cast<int>(entries_.size()) - 1;
    return static_cast<int>(entries_.size()) - 1;
  }

  Entry& operator[](int i) { return entries_[static_cast<size_t>(i)]; }
  const Entry& operator[](int i) const { return entries_[static_cast<size_t>(i)]; }

  int find(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::invalid_argument("ParamStore: unknown name " + name);
    return it->second;
  }
  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  int count() const { return static_cast<int>(entries_.size()); }
  std::int64_t total_scalars() const {
    std::int64_t n = 0;
    for (const auto& e : entries_) n += e.value.numel();
    return n;
  }
  void zero_grads() {
    for (auto& e : entries_) e.grad.data.setZero();
  }

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, int> index_;
};

// Per-forward view of the store: every entry imported as a tape leaf, in
// store order. Gradients land on the tape and are merged back by the caller.
template <typename T>
struct TapedParams {
  Tape<T>* tape = nullptr;
  std::vector<Var> vars;

  static TapedParams import(Tape<T>& t, const ParamStore<T>& store, bool needs_grad = true) {
    TapedParams tp;
    tp.tape = &t;
    tp.vars.reserve(static_cast<size_t>(store.count()));
    for (int i = 0; i < store.count(); ++i) tp.vars.push_back(t.leaf(store[i].value, needs_grad));
    return tp;
  }
  Var operator[](int i) const { return vars[static_cast<size_t>(i)]; }
};

// Adds the tape-side leaf gradients into the store buffers, in store order.
template <typename T>
void accumulate_grads(ParamStore<T>& store, Tape<T>& tape, const TapedParams<T>& tp,
                      T scale = T(1)) {
  for (int i = 0; i < store.count(); ++i) {
    Var v = tp[i];
    if (tape.has_grad(v)) store[i].grad.data += scale * tape.grad(v).data;
  }
}

}  // namespace grfnet
