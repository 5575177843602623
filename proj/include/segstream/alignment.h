// segstream/alignment.h
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

#ifndef SEGSTREAM_ALIGNMENT_H_
#define SEGSTREAM_ALIGNMENT_H_

#include <vector>

#include "segstream/tape.h"
#include "segstream/types.h"

namespace segstream {

// p(frame i in segment k), an |a| x K matrix. The first frame is always in
// segment 1 and the final column absorbs all overflow mass, so every row
// sums to 1.
//
// Recursion: M[i][k] = M[i-1][k-1] * p[i-1] + M[i-1][k] * (1 - p[i-1]) for
// k < K, and M[i][K] = M[i-1][K-1] * p[i-1] + M[i-1][K].
Tensor SegmentMarginals(const std::vector<double>& p, int num_segments);
ad::Value SegmentMarginals(ad::Tape& tape, ad::Value p, int num_segments);

// Expected index sum_k k * M[i][k] per frame (1-based k); non-decreasing in i.
std::vector<double> ExpectedSegmentIndex(const Tensor& marginals);

// f^s_k = sum_i M[i][k] * features_i (a weighted sum, not a mean).
Tensor ExpectedSegmentRepresentations(const Tensor& features, const Tensor& marginals);
ad::Value ExpectedSegmentRepresentations(ad::Tape& tape, ad::Value features,
                                         ad::Value marginals);

// f^t_k = mean of embedding rows in span k.
Tensor SubwordToWord(const Tensor& embeddings, const WordSpans& spans);
ad::Value SubwordToWord(ad::Tape& tape, ad::Value embeddings, const WordSpans& spans);

// Multi-class N-pair contrastive loss over cosine similarities at temperature
// tau; positives are the diagonal pairs, negatives the same sentence's other
// words. Per-sentence sum (batch averaging is the caller's job).
double ContrastiveLoss(const Tensor& segment_reps, const Tensor& word_reps, double tau);
ad::Value ContrastiveLoss(ad::Tape& tape, ad::Value segment_reps, ad::Value word_reps,
                          double tau);

}  // namespace segstream

#endif  // SEGSTREAM_ALIGNMENT_H_
