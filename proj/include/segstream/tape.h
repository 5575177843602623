// segstream/tape.h
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

#ifndef SEGSTREAM_TAPE_H_
#define SEGSTREAM_TAPE_H_

#include <functional>
#include <string>
#include <vector>

#include "segstream/tensor.h"

namespace segstream {
namespace ad {

class Tape;

// Handle to a node on a Tape. Only valid for the tape that produced it.
struct Value {
  int id = -1;
  bool valid() const { return id >= 0; }
};

enum class Reduction { kMean, kSum };

// Reverse-mode tape over the fixed operation set the model needs.
// Values are recorded in definition order (which is a topological order),
// so Backward() is a single reverse sweep. Everything is 64-bit floats and
// evaluation is fully deterministic; stochastic inputs (noise, sampled k)
// are produced outside and enter as constants.
class Tape {
 public:
  // Leaves.
  Value Constant(Tensor t);                 // no gradient tracked
  Value Parameter(Tensor t);                // gradient tracked

  // Elementwise arithmetic. Add/Sub accept equal shapes, or a rank-1 rhs of
  // size cols(lhs) broadcast over rows of a rank-2 lhs.
  Value Add(Value a, Value b);
  Value Sub(Value a, Value b);
  Value Mul(Value a, Value b);              // equal shapes only
  Value Scale(Value a, double c);
  Value AddScalar(Value a, double c);

  // Elementwise functions.
  Value Sigmoid(Value a);
  Value Tanh(Value a);
  Value Exp(Value a);
  Value Log(Value a);
  Value Abs(Value a);
  Value Clamp(Value a, double lo, double hi);   // zero gradient where clamped

  // Linear algebra and NN blocks.
  Value MatMul(Value a, Value b, bool trans_a = false, bool trans_b = false);
  // Row softmax; `additive_mask` (same shape, typically 0 / -1e30) is applied
  // before the exponentials and carries no gradient. `reweight`, when valid,
  // multiplies the softmax elementwise and the row is renormalized; gradient
  // flows into both the logits and the reweighting matrix.
  Value RowSoftmax(Value logits, const Tensor* additive_mask = nullptr,
                   Value reweight = Value{});
  Value NormalizeRows(Value a);             // divide each row by its sum
  Value LayerNorm(Value x, Value gain, Value bias, double eps = 1e-5);
  Value Embedding(Value table, const std::vector<int>& ids);
  Value ReduceSum(Value a);                 // scalar
  Value ReduceMean(Value a);                // scalar
  // 1-D max pooling over a rank-1 input; windows start at 0, stride apart,
  // and a trailing partial window is kept. Ties go to the lowest index.
  Value MaxPool1d(Value a, int kernel, int stride);
  // Pairwise cosine similarity matrix between rows of a and rows of b.
  Value CosineMatrix(Value a, Value b);
  // Cross entropy of row-wise logits against integer targets.
  Value CrossEntropy(Value logits, const std::vector<int>& targets, Reduction r);
  Value Reshape(Value a, std::vector<int> shape);

  // Escape hatch for module-owned ops (expected-attention products, the
  // feature-to-segment recursion). `backward` receives the output gradient
  // plus each parent's value and gradient accumulator; a null accumulator
  // means that parent does not need a gradient.
  using CustomBackward = std::function<void(
      const Tensor& grad_out, const std::vector<const Tensor*>& parent_values,
      const std::vector<Tensor*>& parent_grads)>;
  Value CustomOp(const std::string& name, Tensor out, std::vector<Value> parents,
                 CustomBackward backward);

  // Accumulates gradients of the scalar `loss` into every grad-tracked node.
  // May be called once per tape.
  void Backward(Value loss);

  const Tensor& Val(Value v) const;
  const Tensor& Grad(Value v) const;
  bool RequiresGrad(Value v) const;
  int NumNodes() const { return static_cast<int>(nodes_.size()); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;                    // allocated iff requires_grad
    bool requires_grad = false;
    bool grad_touched = false;      // skip backward for untouched nodes
    std::vector<int> parents;
    std::function<void(Tape&, int)> backward;  // null for leaves
  };

  Value AddNode(Tensor value, std::vector<int> parents,
                std::function<void(Tape&, int)> backward);
  Value Unary(Value a, Tensor out, std::function<void(const Tensor& y, const Tensor& gy, const Tensor& x, Tensor& gx)> bw);
  Node& node(Value v);
  const Node& node(Value v) const;
  void Accumulate(int id, const Tensor& delta);

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

}  // namespace ad
}  // namespace segstream

#endif  // SEGSTREAM_TAPE_H_
