#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <string>

namespace grfnet {

// Extent list for a dense tensor, rank 1..5. Layout is always row-major with
// the last axis (channels) innermost.
struct Shape {
  int rank = 0;
  std::array<std::int64_t, 5> dim{1, 1, 1, 1, 1};

  Shape() = default;
  Shape(std::initializer_list<std::int64_t> xs) {
    if (xs.size() == 0 || xs.size() > 5)
      throw std::invalid_argument("Shape: rank must be 1..5");
    for (std::int64_t x : xs) {
      if (x < 1) throw std::invalid_argument("Shape: extents must be >= 1");
      dim[rank++] = x;
    }
  }

  std::int64_t operator[](int i) const { return dim[static_cast<size_t>(i)]; }
  std::int64_t& operator[](int i) { return dim[static_cast<size_t>(i)]; }

  std::int64_t numel() const {
    std::int64_t n = 1;
    for (int i = 0; i < rank; ++i) n *= dim[static_cast<size_t>(i)];
    return n;
  }

  bool operator==(const Shape& o) const {
    if (rank != o.rank) return false;
    for (int i = 0; i < rank; ++i)
      if (dim[static_cast<size_t>(i)] != o.dim[static_cast<size_t>(i)]) return false;
    return true;
  }
  bool operator!=(const Shape& o) const { return !(*this == o); }

  std::string str() const {
    std::string s;
    for (int i = 0; i < rank; ++i) {
      if (i) s += "x";
      s += std::to_string(dim[static_cast<size_t>(i)]);
    }
    return s;
  }
};

}  // namespace grfnet
