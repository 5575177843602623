// segstream/attention.h
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

#ifndef SEGSTREAM_ATTENTION_H_
#define SEGSTREAM_ATTENTION_H_

#include <optional>
#include <vector>

#include "segstream/params.h"
#include "segstream/tape.h"
#include "segstream/types.h"

namespace segstream {

// Boolean attention pattern: allowed(i, j) means feature i may attend to
// feature j.
struct SegmentMask {
  int n = 0;
  std::vector<uint8_t> allowed;  // row-major n x n

  bool at(int i, int j) const { return allowed[static_cast<size_t>(i) * n + j] != 0; }
  // 0 where allowed, -1e30 where masked.
  Tensor ToAdditive() const;
};

inline constexpr double kMaskValue = -1e30;

// Probability that feature i may attend feature j: the product of (1 - p_l)
// over l in [i, j-1] for i < j, and 1 for i >= j. Computed via prefix sums
// of log(1 - p); exact for p = 0 and p = 1.
Tensor SameSegmentProbabilities(const Tensor& p);
ad::Value SameSegmentProbabilities(ad::Tape& tape, ad::Value p);

// gamma = row-normalized (alpha ⊙ beta). Rows of alpha must be stochastic.
Tensor ExpectedSegmentedAttention(const Tensor& alpha, const Tensor& beta);

// Segment mask from hard decisions: feature i attends j iff segment(j) <=
// segment(i), i.e. bi-directional within a segment, uni-directional across.
SegmentMask HardSegmentMask(const std::vector<int>& b);

// Plain causal / unmasked patterns for the baselines.
SegmentMask CausalMask(int n);
SegmentMask FullMask(int n);

enum class AttentionMode { kExpected, kHard, kUni, kBi };

// Per-head projection weights of one multi-head attention block.
struct AttentionHeadNames {
  std::string wq, bq, wk, bk, wv, bv, wo;
};
struct AttentionBlockNames {
  std::vector<AttentionHeadNames> heads;
  std::string bo;
  static AttentionBlockNames Make(const std::string& prefix, int num_heads);
};

void InitAttentionParams(ParameterSet& params, const AttentionBlockNames& names,
                         int d_model, Rng& rng);

// One multi-head scaled dot-product attention application. `beta`, when
// valid, reweights the softmax (expected segmented attention; shared across
// heads); `additive_mask`, when non-null, is added to the logits.
ad::Value AttentionBlock(ad::Tape& tape, ad::Value queries, ad::Value keys_values,
                         const std::map<std::string, ad::Value>& params,
                         const AttentionBlockNames& names, ad::Value beta = {},
                         const Tensor* additive_mask = nullptr);

// Self-attention over projected features in one of the four encoder modes.
// kExpected needs p (segmentation probabilities); kHard needs b. Returns the
// context matrix.
Tensor EncoderAttention(const FeatureSequence& features, const ParameterSet& params,
                        const AttentionBlockNames& names, AttentionMode mode,
                        const std::vector<double>* p = nullptr,
                        const std::vector<int>* b = nullptr);

}  // namespace segstream

#endif  // SEGSTREAM_ATTENTION_H_
