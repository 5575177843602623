// segstream/tensor.h
//
// Copyright 2026 The segstream Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef SEGSTREAM_TENSOR_H_
#define SEGSTREAM_TENSOR_H_

#include <cstddef>
#include <string>
#include <vector>

#include "segstream/common.h"

namespace segstream {

// Dense row-major tensor of 64-bit floats. Rank 0 is a scalar, rank 1 a
// vector, rank 2 a matrix; nothing in the project needs more.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> data;

  Tensor() = default;
  Tensor(std::vector<int> s, std::vector<double> d);

  static Tensor Scalar(double v);
  static Tensor Zeros(const std::vector<int>& shape);
  static Tensor Full(const std::vector<int>& shape, double v);
  static Tensor FromVector(const std::vector<double>& v);       // rank 1
  static Tensor Randn(const std::vector<int>& shape, Rng& rng, double stddev = 1.0);

  int rank() const { return static_cast<int>(shape.size()); }
  size_t numel() const { return data.size(); }
  int rows() const {
    SEG_CHECK(rank() == 2, "rows() on rank-" << rank() << " tensor");
    return shape[0];
  }
  int cols() const {
    SEG_CHECK(rank() == 2, "cols() on rank-" << rank() << " tensor");
    return shape[1];
  }

  double& at(int i, int j) { return data[static_cast<size_t>(i) * shape[1] + j]; }
  double at(int i, int j) const { return data[static_cast<size_t>(i) * shape[1] + j]; }
  double scalar() const {
    SEG_CHECK(numel() == 1, "scalar() on tensor of shape " << shape_str());
    return data[0];
  }

  bool same_shape(const Tensor& other) const { return shape == other.shape; }
  bool all_finite() const;
  std::string shape_str() const;
};

// C = op(A) * op(B) for rank-2 tensors, with optional transposes.
Tensor MatMul(const Tensor& a, const Tensor& b, bool trans_a = false, bool trans_b = false);

}  // namespace segstream

#endif  // SEGSTREAM_TENSOR_H_
