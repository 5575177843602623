// segstream/types.h
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

#ifndef SEGSTREAM_TYPES_H_
#define SEGSTREAM_TYPES_H_

#include <utility>
#include <vector>

#include "segstream/tensor.h"

namespace segstream {

// A sequence of feature frames (one row per frame) plus the wall-clock
// duration each frame stands for.
struct FeatureSequence {
  Tensor frames;        // rank 2: |a| x d
  double frame_ms = 40.0;

  int length() const { return frames.rank() == 2 ? frames.rows() : 0; }
  int dim() const { return frames.rank() == 2 ? frames.cols() : 0; }
  double duration_ms() const { return length() * frame_ms; }

  // Rows [0, n) as a new sequence.
  FeatureSequence Prefix(int n) const;
};

// Inclusive subword index ranges, one per word, 0-based and contiguous.
// (The on-disk corpus format stores them 1-based.)
using WordSpans = std::vector<std::pair<int, int>>;

void ValidateWordSpans(const WordSpans& spans, int num_subwords);

// Segmentation probabilities and hard decisions for one feature sequence.
struct SegmentationState {
  std::vector<double> p;  // each in [kProbEps, 1 - kProbEps]
  std::vector<int> b;     // 0/1, b[i] = 1 cuts the stream after frame i
  int target_words = 0;   // K
  double noise_variance = 0.0;
};

inline constexpr double kProbEps = 1e-7;

// Segment id of each frame, 1-based: 1 + number of cuts strictly before it.
std::vector<int> SegmentIds(const std::vector<int>& b);

}  // namespace segstream

#endif  // SEGSTREAM_TYPES_H_
