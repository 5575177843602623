// segstream/segmentation.cc
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

#include "segstream/segmentation.h"

#include <cmath>

namespace segstream {

FeatureSequence FeatureSequence::Prefix(int n) const {
  SEG_CHECK(n >= 1 && n <= length(), "prefix length " << n << " out of range [1, "
                                                      << length() << "]");
  Tensor sub = Tensor::Zeros({n, dim()});
  std::copy(frames.data.begin(), frames.data.begin() + static_cast<size_t>(n) * dim(),
            sub.data.begin());
  return FeatureSequence{std::move(sub), frame_ms};
}

void ValidateWordSpans(const WordSpans& spans, int num_subwords) {
  SEG_CHECK(!spans.empty(), "word spans are empty");
  SEG_CHECK(spans.front().first == 0,
            "word spans must start at subword 0, got " << spans.front().first);
  for (size_t k = 0; k < spans.size(); ++k) {
    SEG_CHECK(spans[k].first <= spans[k].second,
              "word span " << k << " is reversed: [" << spans[k].first << ", "
                           << spans[k].second << "]");
    if (k + 1 < spans.size()) {
      SEG_CHECK(spans[k + 1].first == spans[k].second + 1,
                "word spans have a gap or overlap between " << k << " and " << k + 1);
    }
  }
  SEG_CHECK(spans.back().second == num_subwords - 1,
            "word spans must cover all " << num_subwords << " subwords, last span ends at "
                                         << spans.back().second);
}

std::vector<int> SegmentIds(const std::vector<int>& b) {
  std::vector<int> ids(b.size());
  int seg = 1;
  for (size_t i = 0; i < b.size(); ++i) {
    ids[i] = seg;
    if (b[i] == 1) ++seg;
  }
  return ids;
}

void InitSegmenterParams(ParameterSet& params, int frame_dim, Rng& rng,
                         const SegmenterNames& names) {
  const int hidden = 4 * frame_dim;
  const double scale = 1.0 / std::sqrt(static_cast<double>(frame_dim));
  params.Insert(names.w1, Tensor::Randn({frame_dim, hidden}, rng, scale));
  params.Insert(names.b1, Tensor::Zeros({hidden}));
  params.Insert(names.w2, Tensor::Randn({hidden, 1}, rng, 1.0 / std::sqrt(hidden)));
  params.Insert(names.b2, Tensor::Zeros({1}));
}

std::vector<double> SampleSegmentationNoise(int n, double noise_variance, Rng& rng) {
  SEG_CHECK(noise_variance >= 0.0,
            "noise variance must be non-negative, got " << noise_variance);
  std::vector<double> noise(n, 0.0);
  const double stddev = std::sqrt(noise_variance);
  for (double& x : noise) x = rng.Normal() * stddev;
  return noise;
}

ad::Value SegmentationProbabilities(ad::Tape& tape, const FeatureSequence& features,
                                    const std::map<std::string, ad::Value>& params,
                                    SegMode mode, const std::vector<double>& noise,
                                    const SegmenterNames& names) {
  const int n = features.length();
  SEG_CHECK(n > 0, "segmentation of an empty feature sequence");
  ad::Value x = tape.Constant(features.frames);
  ad::Value h = tape.Tanh(tape.Add(tape.MatMul(x, params.at(names.w1)), params.at(names.b1)));
  ad::Value logits = tape.Reshape(
      tape.Add(tape.MatMul(h, params.at(names.w2)), params.at(names.b2)), {n});
  if (mode == SegMode::kTrain && !noise.empty()) {
    SEG_CHECK(static_cast<int>(noise.size()) == n,
              "noise length " << noise.size() << " does not match " << n << " frames");
    logits = tape.Add(logits, tape.Constant(Tensor::FromVector(noise)));
  }
  return tape.Clamp(tape.Sigmoid(logits), kProbEps, 1.0 - kProbEps);
}

std::vector<double> SegmentationProbabilities(const FeatureSequence& features,
                                              const ParameterSet& params,
                                              double noise_variance, SegMode mode,
                                              uint64_t seed, const SegmenterNames& names) {
  ad::Tape tape;
  std::map<std::string, ad::Value> values;
  for (const std::string& name : {names.w1, names.b1, names.w2, names.b2}) {
    values[name] = tape.Constant(params.Get(name));
  }
  std::vector<double> noise;
  if (mode == SegMode::kTrain && noise_variance > 0.0) {
    Rng rng(seed);
    noise = SampleSegmentationNoise(features.length(), noise_variance, rng);
  }
  ad::Value p = SegmentationProbabilities(tape, features, values, mode, noise, names);
  return tape.Val(p).data;
}

std::vector<int> HardDecisions(const std::vector<double>& p) {
  std::vector<int> b(p.size());
  for (size_t i = 0; i < p.size(); ++i) b[i] = p[i] >= 0.5 ? 1 : 0;
  return b;
}

ad::Value SegmentCountLoss(ad::Tape& tape, ad::Value p, int target_words) {
  const Tensor& tp = tape.Val(p);
  SEG_CHECK(tp.rank() == 1 && tp.numel() >= 1,
            "segment-count loss needs a non-empty probability vector, got "
                << tp.shape_str());
  SEG_CHECK(target_words >= 1, "target word count must be >= 1, got " << target_words);
  const int n = tp.shape[0];
  const int w = std::max(1, n / target_words);
  const double k = static_cast<double>(target_words);
  ad::Value term1 = tape.Abs(tape.AddScalar(tape.ReduceSum(p), -k));
  ad::Value pooled = tape.MaxPool1d(p, w, w);
  ad::Value term2 = tape.Abs(tape.AddScalar(tape.ReduceSum(pooled), -k));
  return tape.Add(term1, term2);
}

double SegmentCountLoss(const std::vector<double>& p, int target_words) {
  ad::Tape tape;
  ad::Value pv = tape.Constant(Tensor::FromVector(p));
  return tape.Val(SegmentCountLoss(tape, pv, target_words)).scalar();
}

}  // namespace segstream
