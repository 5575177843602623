// segstream/model.h
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

#ifndef SEGSTREAM_MODEL_H_
#define SEGSTREAM_MODEL_H_

#include <limits>
#include <string>
#include <vector>

#include "segstream/attention.h"
#include "segstream/params.h"
#include "segstream/segmentation.h"
#include "segstream/types.h"

namespace segstream {

inline constexpr int kBosId = 0;
inline constexpr int kEosId = 1;
// Lagging value meaning "wait for the complete input".
inline constexpr int kInfiniteLag = std::numeric_limits<int>::max();

struct ModelConfig {
  int d_model = 64;
  int heads = 2;
  int encoder_layers = 2;
  int decoder_layers = 2;
  int ffn_width = 256;
  int source_subword_vocab = 0;  // filled from the corpus
  int target_vocab = 0;
  int frame_dim = 8;
  double noise_variance = 2.0;
  double tau = 0.1;
  double learning_rate = 1e-3;
  int batch_size = 16;
  int max_k = 10;  // upper bound on the sampled lagging
  int epochs = 25;
  uint64_t seed = 1;

  void Validate() const;
  std::string ToJson() const;
  static ModelConfig FromJson(const std::string& text);
};

// One (speech, transcription, translation) triplet as consumed by training.
struct BatchItem {
  FeatureSequence features;
  std::vector<int> subwords;          // content subword ids (no BOS/EOS)
  WordSpans spans;                    // one per word, covering `subwords`
  std::vector<int> targets_with_eos;  // content target ids + EOS
  int word_count = 0;                 // K == spans.size()
};
using Batch = std::vector<BatchItem>;

BatchItem MakeBatchItem(FeatureSequence features, std::vector<int> subwords,
                        WordSpans spans, std::vector<int> targets, int word_count);

ParameterSet InitModelParameters(const ModelConfig& config, Rng& rng);

// Sinusoidal position table, rows 0..n-1.
Tensor PositionalEncoding(int n, int d_model);

// Number of features read when emitting target t under lagging k: the
// smallest i with sum_{l<=i} b_l >= t + k - 1, or |a| when no prefix
// reaches the threshold (end of stream). 1-based t and result.
int GOfT(const std::vector<int>& b, int t, int k);

// Row t (1-based) of the result allows feature columns 1..g(t; k).
std::vector<std::vector<uint8_t>> WaitSegDecoderMask(const std::vector<int>& b, int k,
                                                     int y_len);
Tensor WaitSegAdditiveMask(const std::vector<int>& b, int k, int y_len);

// Text-side wait-k: decoder row t sees the subwords of words 1..t+k-1.
Tensor WaitKAdditiveMask(const WordSpans& spans, int k, int y_len, int num_subwords);

struct MultitaskLosses {
  double st = 0, asr = 0, mt = 0, num = 0, ctr = 0, total = 0;
};

enum class EncoderRelaxation { kExpected, kHard };

struct LossOptions {
  // Pre-sampled pre-sigmoid noise, one entry per frame; empty means none.
  std::vector<double> noise;
  EncoderRelaxation relaxation = EncoderRelaxation::kExpected;
};

// All loss terms for one sentence at lagging k (already clamped to the
// sentence's K by the caller). Values only; the training loop builds its own
// graphs for gradients.
MultitaskLosses SentenceLosses(const BatchItem& item, const ParameterSet& params,
                               const ModelConfig& config, int k,
                               const LossOptions& options = {});

// Batch-mean of the per-sentence losses (cross-entropies are token means
// within a sentence; L_num and L_ctr are per-sentence values).
MultitaskLosses MultitaskLossValues(const Batch& batch, const ParameterSet& params,
                                    const ModelConfig& config, int k,
                                    uint64_t noise_seed);

// Training-time ST decoder logits (for causality probes).
Tensor StDecoderLogits(const BatchItem& item, const ParameterSet& params,
                       const ModelConfig& config, int k, const LossOptions& options = {});

// Tape-level construction of the full per-sentence loss; the entry point for
// finite-difference verification of the whole objective.
ad::Value BuildSentenceLossGraph(ad::Tape& tape,
                                 const std::map<std::string, ad::Value>& params,
                                 const ModelConfig& config, const BatchItem& item,
                                 int k, const LossOptions& options);

// The individual terms as tape values (same graph as above).
struct SentenceLossTerms {
  ad::Value st, asr, mt, num, ctr, total;
};
SentenceLossTerms BuildSentenceLossTerms(ad::Tape& tape,
                                         const std::map<std::string, ad::Value>& params,
                                         const ModelConfig& config, const BatchItem& item,
                                         int k, const LossOptions& options);

struct EpochStats {
  double st = 0, asr = 0, mt = 0, num = 0, ctr = 0, total = 0;
};

struct TrainResult {
  ParameterSet params;
  std::vector<EpochStats> log;   // one entry per epoch
  bool loss_trend_down = false;  // first- vs last-quartile mean of totals
  std::vector<int> sampled_k;    // one entry per batch, for reproducibility checks
};

// Deterministic single-threaded training with per-batch lagging sampled
// uniformly from [1, min(max word count in batch, config.max_k)].
TrainResult Train(const Batch& corpus, const ModelConfig& config);

// Hard-mode encoder pass (inference path): segmentation decisions by
// threshold, no noise, hard segment mask. Returns the encoder states.
Tensor EncodeForInference(const FeatureSequence& features, const ParameterSet& params,
                          const ModelConfig& config, const std::vector<int>& b);

// Greedy argmax continuation given encoder states and the hypothesis so far
// (content ids, no BOS).
int GreedyNextToken(const Tensor& encoder_states, const std::vector<int>& hypothesis,
                    const ParameterSet& params, const ModelConfig& config);

struct DecodeResult {
  std::vector<int> hypothesis;  // always ends with kEosId
  bool truncated = false;       // true when the length cap forced the EOS
};

// Full-input greedy decoding (the k = infinity limit). `max_len` caps the
// number of emitted tokens; callers that know the word count use 2K + 10.
DecodeResult OfflineDecode(const FeatureSequence& features, const ParameterSet& params,
                           const ModelConfig& config, int max_len);

// Expected segmented attention weights (encoder layer 0, head 0) on clean
// inference-mode segmentation probabilities; feeds the attention dump.
Tensor ExpectedAttentionWeights(const FeatureSequence& features,
                                const ParameterSet& params, const ModelConfig& config);

// Checkpoint = parameters + config + corpus fingerprint, one JSON document.
struct Checkpoint {
  ModelConfig config;
  std::string corpus_fingerprint;
  ParameterSet params;
};
std::string CheckpointToJson(const Checkpoint& ckpt);
Checkpoint CheckpointFromJson(const std::string& text);

}  // namespace segstream

#endif  // SEGSTREAM_MODEL_H_
