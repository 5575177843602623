// segstream/alignment.cc
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

#include "segstream/alignment.h"

#include <cmath>

namespace segstream {

Tensor SegmentMarginals(const std::vector<double>& p, int num_segments) {
  const int n = static_cast<int>(p.size());
  SEG_CHECK(n >= 1, "segment marginals need at least one frame");
  SEG_CHECK(num_segments >= 1, "segment count must be >= 1, got " << num_segments);
  const int k_count = num_segments;
  Tensor m = Tensor::Zeros({n, k_count});
  m.at(0, 0) = 1.0;  // the first frame is in the first segment
  for (int i = 1; i < n; ++i) {
    const double pi = p[i - 1];
    for (int k = 0; k < k_count; ++k) {
      const double from_prev = k > 0 ? m.at(i - 1, k - 1) * pi : 0.0;
      const double stay =
          (k == k_count - 1) ? m.at(i - 1, k) : m.at(i - 1, k) * (1.0 - pi);
      m.at(i, k) = from_prev + stay;
    }
  }
  return m;
}

ad::Value SegmentMarginals(ad::Tape& tape, ad::Value p, int num_segments) {
  const Tensor& tp = tape.Val(p);
  SEG_CHECK(tp.rank() == 1, "segment marginals need a rank-1 p, got " << tp.shape_str());
  Tensor m = SegmentMarginals(tp.data, num_segments);
  const int n = tp.shape[0];
  const int k_count = num_segments;
  return tape.CustomOp(
      "segment_marginals", std::move(m), {p},
      [n, k_count](const Tensor& grad_out, const std::vector<const Tensor*>& vals,
                   const std::vector<Tensor*>& grads) {
        if (grads[0] == nullptr) return;
        const std::vector<double>& p = vals[0]->data;
        Tensor m = SegmentMarginals(p, k_count);
        // Reverse sweep of the recursion. gm holds d(loss)/d(M[i][k]) while
        // row i is being consumed.
        Tensor gm = grad_out;
        Tensor& gp = *grads[0];
        for (int i = n - 1; i >= 1; --i) {
          const double pi = p[i - 1];
          double gpi = 0.0;
          for (int k = 0; k < k_count; ++k) {
            const double g = gm.at(i, k);
            if (g == 0.0) continue;
            if (k > 0) {
              gm.at(i - 1, k - 1) += g * pi;
              gpi += g * m.at(i - 1, k - 1);
            }
            if (k == k_count - 1) {
              gm.at(i - 1, k) += g;
            } else {
              gm.at(i - 1, k) += g * (1.0 - pi);
              gpi -= g * m.at(i - 1, k);
            }
          }
          gp.data[i - 1] += gpi;
        }
      });
}

std::vector<double> ExpectedSegmentIndex(const Tensor& marginals) {
  std::vector<double> idx(marginals.rows(), 0.0);
  for (int i = 0; i < marginals.rows(); ++i)
    for (int k = 0; k < marginals.cols(); ++k)
      idx[i] += (k + 1) * marginals.at(i, k);
  return idx;
}

Tensor ExpectedSegmentRepresentations(const Tensor& features, const Tensor& marginals) {
  SEG_CHECK(features.rank() == 2 && marginals.rank() == 2 &&
                features.rows() == marginals.rows(),
            "marginals " << marginals.shape_str() << " do not match features "
                         << features.shape_str());
  return MatMul(marginals, features, /*trans_a=*/true);
}

ad::Value ExpectedSegmentRepresentations(ad::Tape& tape, ad::Value features,
                                         ad::Value marginals) {
  SEG_CHECK(tape.Val(features).rows() == tape.Val(marginals).rows(),
            "marginals " << tape.Val(marginals).shape_str()
                         << " do not match features "
                         << tape.Val(features).shape_str());
  return tape.MatMul(marginals, features, /*trans_a=*/true);
}

ad::Value SubwordToWord(ad::Tape& tape, ad::Value embeddings, const WordSpans& spans) {
  const Tensor& e = tape.Val(embeddings);
  SEG_CHECK(e.rank() == 2, "subword embeddings must be rank 2, got " << e.shape_str());
  ValidateWordSpans(spans, e.rows());
  const int k_count = static_cast<int>(spans.size());
  Tensor avg = Tensor::Zeros({k_count, e.rows()});
  for (int k = 0; k < k_count; ++k) {
    const double w = 1.0 / (spans[k].second - spans[k].first + 1);
    for (int i = spans[k].first; i <= spans[k].second; ++i) avg.at(k, i) = w;
  }
  return tape.MatMul(tape.Constant(std::move(avg)), embeddings);
}

Tensor SubwordToWord(const Tensor& embeddings, const WordSpans& spans) {
  ad::Tape tape;
  return tape.Val(SubwordToWord(tape, tape.Constant(embeddings), spans));
}

ad::Value ContrastiveLoss(ad::Tape& tape, ad::Value segment_reps, ad::Value word_reps,
                          double tau) {
  const Tensor& fs = tape.Val(segment_reps);
  const Tensor& ft = tape.Val(word_reps);
  SEG_CHECK(tau > 0.0, "contrastive temperature must be positive, got " << tau);
  SEG_CHECK(fs.rank() == 2 && ft.rank() == 2 && fs.rows() == ft.rows(),
            "segment reps " << fs.shape_str() << " do not pair with word reps "
                            << ft.shape_str());
  const int k_count = fs.rows();
  ad::Value logits = tape.Scale(tape.CosineMatrix(segment_reps, word_reps), 1.0 / tau);
  std::vector<int> diagonal(k_count);
  for (int k = 0; k < k_count; ++k) diagonal[k] = k;
  return tape.CrossEntropy(logits, diagonal, ad::Reduction::kSum);
}

double ContrastiveLoss(const Tensor& segment_reps, const Tensor& word_reps, double tau) {
  ad::Tape tape;
  return tape
      .Val(ContrastiveLoss(tape, tape.Constant(segment_reps),
                           tape.Constant(word_reps), tau))
      .scalar();
}

}  // namespace segstream
