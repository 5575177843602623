// segstream/segmentation.h
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

#ifndef SEGSTREAM_SEGMENTATION_H_
#define SEGSTREAM_SEGMENTATION_H_

#include <vector>

#include "segstream/params.h"
#include "segstream/tape.h"
#include "segstream/types.h"

namespace segstream {

enum class SegMode { kTrain, kInfer };

// Parameter names of the frame-local segmenter FFN (one hidden layer of
// width 4*d with tanh, to a scalar logit).
struct SegmenterNames {
  std::string w1 = "seg.w1";
  std::string b1 = "seg.b1";
  std::string w2 = "seg.w2";
  std::string b2 = "seg.b2";
};

// Inserts freshly initialized segmenter weights for frame dimension d.
void InitSegmenterParams(ParameterSet& params, int frame_dim, Rng& rng,
                         const SegmenterNames& names = {});

// Draws the pre-sigmoid Gaussian noise (variance `noise_variance`) for a
// sequence of `n` frames. Training-only; inference never applies noise.
std::vector<double> SampleSegmentationNoise(int n, double noise_variance, Rng& rng);

// Tape builder: per-frame segmentation probabilities for `features`.
// p_i = sigmoid(FFN(a_i) + eta_i), clamped to [kProbEps, 1 - kProbEps].
// `noise` must have one entry per frame in train mode; it is ignored in
// inference mode.
ad::Value SegmentationProbabilities(ad::Tape& tape, const FeatureSequence& features,
                                    const std::map<std::string, ad::Value>& params,
                                    SegMode mode, const std::vector<double>& noise = {},
                                    const SegmenterNames& names = {});

// Plain evaluation of the above (no gradients). `seed` feeds the noise draw
// in train mode.
std::vector<double> SegmentationProbabilities(const FeatureSequence& features,
                                              const ParameterSet& params,
                                              double noise_variance, SegMode mode,
                                              uint64_t seed,
                                              const SegmenterNames& names = {});

// b_i = 1 iff p_i >= 0.5.
std::vector<int> HardDecisions(const std::vector<double>& p);

// | sum(p) - K | + | sum(MaxPool(p, w)) - K | with w = max(1, floor(|a|/K));
// non-overlapping windows, trailing partial window kept.
ad::Value SegmentCountLoss(ad::Tape& tape, ad::Value p, int target_words);
double SegmentCountLoss(const std::vector<double>& p, int target_words);

}  // namespace segstream

#endif  // SEGSTREAM_SEGMENTATION_H_
