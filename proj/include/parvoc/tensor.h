/*
 * Copyright 2026 The parvoc Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef PARVOC_TENSOR_H_
#define PARVOC_TENSOR_H_

#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace parvoc {

// Single error type for the whole library.  Messages carry the failing
// call site and, for shape errors, the offending axis.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Dense row-major float tensor.  Rank conventions used across the project:
//   rank 1: [T]        raw sample or scalar-per-step sequences
//   rank 2: [C, T]     channel-major single sequence
//   rank 3: [B, C, T]  batched channel-major sequences
// Feature matrices loaded from disk are frame-major [frames, bins]; they are
// transposed into [C, T] before entering the network.
struct Tensor {
  std::vector<int> shape;
  std::vector<float> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
    data.assign(static_cast<size_t>(Numel()), 0.0f);
  }
  Tensor(std::vector<int> s, std::vector<float> d)
      : shape(std::move(s)), data(std::move(d)) {
    if (static_cast<int64_t>(data.size()) != Numel()) {
      throw Error("Tensor: data size " + std::to_string(data.size()) +
                  " does not match shape (numel " + std::to_string(Numel()) +
                  ")");
    }
  }

  int64_t Numel() const {
    int64_t n = 1;
    for (int d : shape) {
      if (d < 0) throw Error("Tensor: negative dimension");
      n *= d;
    }
    return n;
  }
  int Rank() const { return static_cast<int>(shape.size()); }
  int Dim(int axis) const {
    if (axis < 0 || axis >= Rank()) {
      throw Error("Tensor: axis " + std::to_string(axis) +
                  " out of range for rank " + std::to_string(Rank()));
    }
    return shape[axis];
  }

  float* Ptr() { return data.data(); }
  const float* Ptr() const { return data.data(); }

  // Element access for rank 2/3 tensors; used on cold paths only.
  float& At2(int c, int t) { return data[static_cast<size_t>(c) * shape[1] + t]; }
  float At2(int c, int t) const {
    return data[static_cast<size_t>(c) * shape[1] + t];
  }
  float& At3(int b, int c, int t) {
    return data[(static_cast<size_t>(b) * shape[1] + c) * shape[2] + t];
  }
  float At3(int b, int c, int t) const {
    return data[(static_cast<size_t>(b) * shape[1] + c) * shape[2] + t];
  }

  static Tensor Zeros(std::vector<int> s) { return Tensor(std::move(s)); }
  static Tensor Full(std::vector<int> s, float v) {
    Tensor t(std::move(s));
    std::fill(t.data.begin(), t.data.end(), v);
    return t;
  }
  static Tensor Scalar(float v) { return Tensor({1}, {v}); }
};

inline std::string ShapeStr(const std::vector<int>& s) {
  std::string out = "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

inline bool SameShape(const Tensor& a, const Tensor& b) {
  return a.shape == b.shape;
}

inline void CheckSameShape(const Tensor& a, const Tensor& b,
                           const char* where) {
  if (!SameShape(a, b)) {
    throw Error(std::string(where) + ": shape mismatch " + ShapeStr(a.shape) +
                " vs " + ShapeStr(b.shape));
  }
}

}  // namespace parvoc

#endif  // PARVOC_TENSOR_H_
