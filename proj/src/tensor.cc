// segstream/tensor.cc
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

#include "segstream/tensor.h"

#include <Eigen/Dense>

#include <cmath>
#include <numeric>
#include <sstream>

namespace segstream {

namespace {
size_t ShapeNumel(const std::vector<int>& shape) {
  size_t n = 1;
  for (int d : shape) {
    SEG_CHECK(d > 0, "tensor dimension must be positive, got " << d);
    n *= static_cast<size_t>(d);
  }
  return n;
}
}  // namespace

Tensor::Tensor(std::vector<int> s, std::vector<double> d)
    : shape(std::move(s)), data(std::move(d)) {
  SEG_CHECK(data.size() == ShapeNumel(shape),
            "tensor value count " << data.size() << " does not match shape "
                                  << shape_str());
}

Tensor Tensor::Scalar(double v) { return Tensor({}, {v}); }

Tensor Tensor::Zeros(const std::vector<int>& shape) {
  return Tensor(shape, std::vector<double>(ShapeNumel(shape), 0.0));
}

Tensor Tensor::Full(const std::vector<int>& shape, double v) {
  return Tensor(shape, std::vector<double>(ShapeNumel(shape), v));
}

Tensor Tensor::FromVector(const std::vector<double>& v) {
  return Tensor({static_cast<int>(v.size())}, v);
}

Tensor Tensor::Randn(const std::vector<int>& shape, Rng& rng, double stddev) {
  Tensor t = Zeros(shape);
  for (double& x : t.data) x = rng.Normal() * stddev;
  return t;
}

bool Tensor::all_finite() const {
  for (double v : data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

Tensor MatMul(const Tensor& a, const Tensor& b, bool trans_a, bool trans_b) {
  SEG_CHECK(a.rank() == 2 && b.rank() == 2,
            "matmul needs rank-2 operands, got " << a.shape_str() << " and "
                                                 << b.shape_str());
  const int m = trans_a ? a.cols() : a.rows();
  const int ka = trans_a ? a.rows() : a.cols();
  const int kb = trans_b ? b.cols() : b.rows();
  const int n = trans_b ? b.rows() : b.cols();
  SEG_CHECK(ka == kb, "matmul inner-dimension mismatch: lhs " << a.shape_str()
                          << (trans_a ? "^T" : "") << " vs rhs "
                          << b.shape_str() << (trans_b ? "^T" : ""));

  using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<const Mat> ma(a.data.data(), a.rows(), a.cols());
  Eigen::Map<const Mat> mb(b.data.data(), b.rows(), b.cols());
  Tensor c = Tensor::Zeros({m, n});
  Eigen::Map<Mat> mc(c.data.data(), m, n);
  if (!trans_a && !trans_b) {
    mc.noalias() = ma * mb;
  } else if (trans_a && !trans_b) {
    mc.noalias() = ma.transpose() * mb;
  } else if (!trans_a && trans_b) {
    mc.noalias() = ma * mb.transpose();
  } else {
    mc.noalias() = ma.transpose() * mb.transpose();
  }
  return c;
}

std::string HexHash(std::string_view bytes) {
  uint64_t h = Fnv1a64(bytes);
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[i] = digits[h & 0xf];
    h >>= 4;
  }
  return out;
}

}  // namespace segstream
