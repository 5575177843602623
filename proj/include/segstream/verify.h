// segstream/verify.h
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

#ifndef SEGSTREAM_VERIFY_H_
#define SEGSTREAM_VERIFY_H_

#include <string>
#include <vector>

#include "segstream/tensor.h"

namespace segstream {

// Reference implementations kept independent of the production paths; the
// self-check suite and the tests compare against these.

// Feature-to-segment marginals by enumerating all 2^(n-1) cut patterns,
// weighting each by its Bernoulli probability and clamping segment ids at K.
Tensor BruteForceSegmentMarginals(const std::vector<double>& p, int num_segments);

// Same-segment probabilities by direct O(n^3) products (no log space).
Tensor DirectProductSameSegment(const std::vector<double>& p);

// Softmax restricted to an allowed set, computed directly per row.
Tensor ReferenceMaskedSoftmax(const Tensor& logits,
                              const std::vector<std::vector<uint8_t>>& allowed);

struct VerifyOptions {
  // Deliberately corrupts one analytic gradient so the finite-difference
  // machinery can be shown to catch it.
  bool inject_gradient_fault = false;
  uint64_t seed = 20260401;
};

struct VerifyFamily {
  std::string name;
  int checks = 0;
  int failures = 0;
  std::string note;
};

struct VerifyReport {
  std::vector<VerifyFamily> families;
  bool pass = true;
  std::string ToJson() const;
  std::string Summary() const;
};

// The self-contained verification suite: DP brute-force oracle, marginal
// normalization, attention reductions, log-space agreement, FD gradient
// checks and metric hand-checks.
VerifyReport RunVerification(const VerifyOptions& options = {});

}  // namespace segstream

#endif  // SEGSTREAM_VERIFY_H_
