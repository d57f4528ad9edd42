#pragma once

// Dense row-major tensor, rank 1..4, last dimension fastest. Float32 in the
// training path; the double instantiation backs the gradient-check build.

#include <cstddef>
#include <cstdint>
#include <vector>

#include "dpl/errors.hpp"

namespace dpl {

template <typename T>
struct TensorT {
  std::vector<uint32_t> dims;
  std::vector<T> v;

  TensorT() = default;
  explicit TensorT(std::vector<uint32_t> d, T fill = T(0)) : dims(std::move(d)) {
    v.assign(count(), fill);
  }

  size_t count() const {
    if (dims.empty()) return 0;
    size_t n = 1;
    for (uint32_t d : dims) n *= d;
    return n;
  }

  bool same_shape(const TensorT& o) const { return dims == o.dims; }

  T* data() { return v.data(); }
  const T* data() const { return v.data(); }

  T& operator[](size_t i) { return v[i]; }
  const T& operator[](size_t i) const { return v[i]; }

  // Unchecked accessors for the common 2-D and 3-D layouts.
  T& at(size_t i, size_t j) { return v[i * dims[1] + j]; }
  const T& at(size_t i, size_t j) const { return v[i * dims[1] + j]; }
  T& at(size_t i, size_t j, size_t k) {
    return v[(i * dims[1] + j) * dims[2] + k];
  }
  const T& at(size_t i, size_t j, size_t k) const {
    return v[(i * dims[1] + j) * dims[2] + k];
  }

  template <typename U>
  TensorT<U> cast() const {
    TensorT<U> out(dims);
    for (size_t i = 0; i < v.size(); ++i) out.v[i] = static_cast<U>(v[i]);
    return out;
  }

  bool operator==(const TensorT& o) const = default;
};

using Tensor = TensorT<float>;

// Semantic aliases; shapes are documented at the producing operation.
using Image = Tensor;           // H x W x 3, values in [0, 1]
using LabelMap = Tensor;        // H x W x C, values in {0, 1}
using ProbMap = Tensor;         // H x W x C, values in (0, 1)
using UncertaintyMap = Tensor;  // H x W x C, values >= 0
using SelectionMask = Tensor;   // H x W x C, values in {0, 1}
using FeatureMap = Tensor;      // H x W x L

inline void require_same_shape(const Tensor& a, const Tensor& b,
                               const char* what) {
  if (!a.same_shape(b)) throw shape_error(std::string(what) + ": shape mismatch");
}

}  // namespace dpl
