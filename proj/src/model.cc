// segstream/model.cc
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

#include "segstream/model.h"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <mutex>
#include <sstream>

#include "segstream/alignment.h"
#include "segstream/params_json.h"
#include "segstream/tape.h"

namespace segstream {

using ad::Tape;
using ad::Value;
using ValueMap = std::map<std::string, Value>;

void ModelConfig::Validate() const {
  SEG_CHECK(d_model > 0 && heads > 0 && encoder_layers > 0 && decoder_layers > 0 &&
                ffn_width > 0 && frame_dim > 0 && batch_size > 0 && max_k > 0 &&
                epochs > 0 && tau > 0 && learning_rate > 0,
            "model config fields must be positive");
  SEG_CHECK(noise_variance >= 0, "noise variance must be non-negative");
  SEG_CHECK(d_model % heads == 0,
            "heads " << heads << " must divide d_model " << d_model);
  SEG_CHECK(source_subword_vocab > kEosId && target_vocab > kEosId,
            "vocabulary sizes must cover BOS/EOS, got " << source_subword_vocab
                << " and " << target_vocab);
}

std::string ModelConfig::ToJson() const {
  nlohmann::ordered_json j;
  j["d_model"] = d_model;
  j["heads"] = heads;
  j["encoder_layers"] = encoder_layers;
  j["decoder_layers"] = decoder_layers;
  j["ffn_width"] = ffn_width;
  j["source_subword_vocab"] = source_subword_vocab;
  j["target_vocab"] = target_vocab;
  j["frame_dim"] = frame_dim;
  j["noise_variance"] = noise_variance;
  j["tau"] = tau;
  j["learning_rate"] = learning_rate;
  j["batch_size"] = batch_size;
  j["max_k"] = max_k;
  j["epochs"] = epochs;
  j["seed"] = seed;
  return j.dump();
}

ModelConfig ModelConfig::FromJson(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    Fail(std::string("model config parse failure: ") + e.what());
  }
  ModelConfig c;
  c.d_model = j.at("d_model").get<int>();
  c.heads = j.at("heads").get<int>();
  c.encoder_layers = j.at("encoder_layers").get<int>();
  c.decoder_layers = j.at("decoder_layers").get<int>();
  c.ffn_width = j.at("ffn_width").get<int>();
  c.source_subword_vocab = j.at("source_subword_vocab").get<int>();
  c.target_vocab = j.at("target_vocab").get<int>();
  c.frame_dim = j.at("frame_dim").get<int>();
  c.noise_variance = j.at("noise_variance").get<double>();
  c.tau = j.at("tau").get<double>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.batch_size = j.at("batch_size").get<int>();
  c.max_k = j.at("max_k").get<int>();
  c.epochs = j.at("epochs").get<int>();
  c.seed = j.at("seed").get<uint64_t>();
  return c;
}

BatchItem MakeBatchItem(FeatureSequence features, std::vector<int> subwords,
                        WordSpans spans, std::vector<int> targets, int word_count) {
  SEG_CHECK(features.length() > 0, "batch item with empty feature sequence");
  SEG_CHECK(word_count == static_cast<int>(spans.size()),
            "word count " << word_count << " does not match " << spans.size()
                          << " spans");
  ValidateWordSpans(spans, static_cast<int>(subwords.size()));
  BatchItem item;
  item.features = std::move(features);
  item.subwords = std::move(subwords);
  item.spans = std::move(spans);
  item.targets_with_eos = std::move(targets);
  item.targets_with_eos.push_back(kEosId);
  item.word_count = word_count;
  return item;
}

namespace {

// Position tables are pure functions of (position, width); cache per width.
const Tensor& CachedPositionalEncoding(int n, int d_model) {
  static std::mutex mu;
  static std::map<int, Tensor> by_width;
  std::lock_guard<std::mutex> lock(mu);
  Tensor& table = by_width[d_model];
  if (table.rank() != 2 || table.rows() < n) {
    table = PositionalEncoding(std::max(n, 512), d_model);
  }
  return table;
}

Tensor PositionalSlice(int n, int d_model) {
  const Tensor& table = CachedPositionalEncoding(n, d_model);
  Tensor out = Tensor::Zeros({n, d_model});
  std::copy(table.data.begin(), table.data.begin() + static_cast<size_t>(n) * d_model,
            out.data.begin());
  return out;
}

void InitLayerNorm(ParameterSet& params, const std::string& prefix, int d) {
  params.Insert(prefix + ".g", Tensor::Full({d}, 1.0));
  params.Insert(prefix + ".b", Tensor::Zeros({d}));
}

void InitFfn(ParameterSet& params, const std::string& prefix, int d, int width,
             Rng& rng) {
  params.Insert(prefix + ".w1", Tensor::Randn({d, width}, rng, 1.0 / std::sqrt(d)));
  params.Insert(prefix + ".b1", Tensor::Zeros({width}));
  params.Insert(prefix + ".w2", Tensor::Randn({width, d}, rng, 1.0 / std::sqrt(width)));
  params.Insert(prefix + ".b2", Tensor::Zeros({d}));
}

std::string EncLayer(int i) { return "enc.l" + std::to_string(i); }
std::string DecLayer(int i) { return "dec.l" + std::to_string(i); }

ValueMap InsertParams(Tape& tape, const ParameterSet& params, bool trainable) {
  ValueMap values;
  for (const auto& [name, t] : params) {
    values[name] = trainable ? tape.Parameter(t) : tape.Constant(t);
  }
  return values;
}

Value Ffn(Tape& t, const ValueMap& v, const std::string& prefix, Value x) {
  Value h = t.Tanh(t.Add(t.MatMul(x, v.at(prefix + ".w1")), v.at(prefix + ".b1")));
  return t.Add(t.MatMul(h, v.at(prefix + ".w2")), v.at(prefix + ".b2"));
}

Value LN(Tape& t, const ValueMap& v, const std::string& prefix, Value x) {
  return t.LayerNorm(x, v.at(prefix + ".g"), v.at(prefix + ".b"));
}

// Pre-LN encoder stack shared by the speech and text paths. `beta` (expected
// segmented attention) and `mask` (hard/causal) are mutually exclusive.
Value EncoderStack(Tape& t, const ValueMap& v, const ModelConfig& cfg, Value x,
                   Value beta, const Tensor* mask) {
  for (int i = 0; i < cfg.encoder_layers; ++i) {
    const std::string lp = EncLayer(i);
    auto attn = AttentionBlockNames::Make(lp + ".attn", cfg.heads);
    Value h = LN(t, v, lp + ".ln1", x);
    x = t.Add(x, AttentionBlock(t, h, h, v, attn, beta, mask));
    Value f = LN(t, v, lp + ".ln2", x);
    x = t.Add(x, Ffn(t, v, lp + ".ffn", f));
  }
  return LN(t, v, "enc.lnf", x);
}

Value DecoderStack(Tape& t, const ValueMap& v, const ModelConfig& cfg, Value y,
                   Value enc, const Tensor* cross_mask) {
  const int rows = t.Val(y).rows();
  const Tensor causal = CausalMask(rows).ToAdditive();
  for (int i = 0; i < cfg.decoder_layers; ++i) {
    const std::string lp = DecLayer(i);
    auto self_names = AttentionBlockNames::Make(lp + ".self", cfg.heads);
    auto cross_names = AttentionBlockNames::Make(lp + ".cross", cfg.heads);
    Value h = LN(t, v, lp + ".ln1", y);
    y = t.Add(y, AttentionBlock(t, h, h, v, self_names, {}, &causal));
    h = LN(t, v, lp + ".ln2", y);
    y = t.Add(y, AttentionBlock(t, h, enc, v, cross_names, {}, cross_mask));
    h = LN(t, v, lp + ".ln3", y);
    y = t.Add(y, Ffn(t, v, lp + ".ffn", h));
  }
  return LN(t, v, "dec.lnf", y);
}

std::vector<int> ShiftedDecoderInput(const std::vector<int>& targets_with_eos) {
  std::vector<int> in;
  in.reserve(targets_with_eos.size());
  in.push_back(kBosId);
  for (size_t i = 0; i + 1 < targets_with_eos.size(); ++i)
    in.push_back(targets_with_eos[i]);
  return in;
}

// Projected speech features before positional encoding (segment
// representations are computed on these) and after (encoder input).
struct ProjectedFeatures {
  Value pre_posenc;
  Value with_posenc;
};

ProjectedFeatures ProjectFeatures(Tape& t, const ValueMap& v, const ModelConfig& cfg,
                                  const FeatureSequence& feats) {
  Value x = t.Constant(feats.frames);
  Value proj = t.Add(t.MatMul(x, v.at("src_proj.w")), v.at("src_proj.b"));
  Value pos = t.Constant(PositionalSlice(feats.length(), cfg.d_model));
  return {proj, t.Add(proj, pos)};
}

struct SentenceGraph {
  Value p;
  std::vector<int> b_hard;
  Value st, asr, mt, num, ctr, total;
  Value st_logits;
};

SentenceGraph BuildSentenceGraph(Tape& t, const ValueMap& v, const ModelConfig& cfg,
                                 const BatchItem& item, int k,
                                 const LossOptions& options) {
  SEG_CHECK(k >= 1, "lagging must be >= 1, got " << k);
  SentenceGraph g;
  const int n = item.features.length();

  // Segmentation probabilities (noisy during training) drive everything.
  g.p = SegmentationProbabilities(t, item.features, v, SegMode::kTrain, options.noise);
  g.b_hard = HardDecisions(t.Val(g.p).data);

  Value beta;
  Tensor hard_mask;
  const Tensor* enc_mask = nullptr;
  if (options.relaxation == EncoderRelaxation::kExpected) {
    beta = SameSegmentProbabilities(t, g.p);
  } else {
    hard_mask = HardSegmentMask(g.b_hard).ToAdditive();
    enc_mask = &hard_mask;
  }

  ProjectedFeatures speech = ProjectFeatures(t, v, cfg, item.features);
  Value enc_speech = EncoderStack(t, v, cfg, speech.with_posenc, beta, enc_mask);

  // Speech-to-translation with the wait-seg decoder.
  {
    const std::vector<int>& y = item.targets_with_eos;
    std::vector<int> in_ids = ShiftedDecoderInput(y);
    Value e = t.Add(t.Embedding(v.at("emb.target"), in_ids),
                    t.Constant(PositionalSlice(static_cast<int>(in_ids.size()),
                                               cfg.d_model)));
    Tensor cross = WaitSegAdditiveMask(g.b_hard, k, static_cast<int>(y.size()));
    Value dec = DecoderStack(t, v, cfg, e, enc_speech, &cross);
    g.st_logits = t.Add(t.MatMul(dec, v.at("out.st.w")), v.at("out.st.b"));
    g.st = t.CrossEntropy(g.st_logits, y, ad::Reduction::kMean);
  }

  // Speech recognition shares the encoder states, segmentation and policy.
  {
    std::vector<int> x_tgt = item.subwords;
    x_tgt.push_back(kEosId);
    std::vector<int> in_ids = ShiftedDecoderInput(x_tgt);
    Value e = t.Add(t.Embedding(v.at("emb.subword"), in_ids),
                    t.Constant(PositionalSlice(static_cast<int>(in_ids.size()),
                                               cfg.d_model)));
    Tensor cross = WaitSegAdditiveMask(g.b_hard, k, static_cast<int>(x_tgt.size()));
    Value dec = DecoderStack(t, v, cfg, e, enc_speech, &cross);
    Value logits = t.Add(t.MatMul(dec, v.at("out.asr.w")), v.at("out.asr.b"));
    g.asr = t.CrossEntropy(logits, x_tgt, ad::Reduction::kMean);
  }

  // Text-to-translation: uni-directional text encoder, wait-k decoder
  // counting words.
  Value text_emb = t.Embedding(v.at("emb.subword"), item.subwords);
  {
    Value e = t.Add(text_emb,
                    t.Constant(PositionalSlice(
                        static_cast<int>(item.subwords.size()), cfg.d_model)));
    Tensor uni = CausalMask(static_cast<int>(item.subwords.size())).ToAdditive();
    Value enc_text = EncoderStack(t, v, cfg, e, Value{}, &uni);
    const std::vector<int>& y = item.targets_with_eos;
    std::vector<int> in_ids = ShiftedDecoderInput(y);
    Value de = t.Add(t.Embedding(v.at("emb.target"), in_ids),
                     t.Constant(PositionalSlice(static_cast<int>(in_ids.size()),
                                                cfg.d_model)));
    Tensor cross = WaitKAdditiveMask(item.spans, k, static_cast<int>(y.size()),
                                     static_cast<int>(item.subwords.size()));
    Value dec = DecoderStack(t, v, cfg, de, enc_text, &cross);
    Value logits = t.Add(t.MatMul(dec, v.at("out.st.w")), v.at("out.st.b"));
    g.mt = t.CrossEntropy(logits, y, ad::Reduction::kMean);
  }

  g.num = SegmentCountLoss(t, g.p, item.word_count);

  // Semantic alignment between expected segment representations and word
  // representations, both at model width.
  {
    Value marginals = SegmentMarginals(t, g.p, item.word_count);
    Value seg_reps = ExpectedSegmentRepresentations(t, speech.pre_posenc, marginals);
    Value word_reps = SubwordToWord(t, text_emb, item.spans);
    g.ctr = ContrastiveLoss(t, seg_reps, word_reps, cfg.tau);
  }

  Value mtl = t.Add(t.Add(g.st, g.asr), g.mt);
  g.total = t.Add(t.Add(mtl, g.num), g.ctr);
  (void)n;
  return g;
}

MultitaskLosses ReadLosses(const Tape& t, const SentenceGraph& g) {
  MultitaskLosses l;
  l.st = t.Val(g.st).scalar();
  l.asr = t.Val(g.asr).scalar();
  l.mt = t.Val(g.mt).scalar();
  l.num = t.Val(g.num).scalar();
  l.ctr = t.Val(g.ctr).scalar();
  l.total = t.Val(g.total).scalar();
  SEG_CHECK(std::isfinite(l.st), "loss term L_st is not finite");
  SEG_CHECK(std::isfinite(l.asr), "loss term L_asr is not finite");
  SEG_CHECK(std::isfinite(l.mt), "loss term L_mt is not finite");
  SEG_CHECK(std::isfinite(l.num), "loss term L_num is not finite");
  SEG_CHECK(std::isfinite(l.ctr), "loss term L_ctr is not finite");
  return l;
}

}  // namespace

ParameterSet InitModelParameters(const ModelConfig& cfg, Rng& rng) {
  cfg.Validate();
  ParameterSet p;
  const int d = cfg.d_model;
  p.Insert("src_proj.w",
           Tensor::Randn({cfg.frame_dim, d}, rng, 1.0 / std::sqrt(cfg.frame_dim)));
  p.Insert("src_proj.b", Tensor::Zeros({d}));
  p.Insert("emb.subword",
           Tensor::Randn({cfg.source_subword_vocab, d}, rng, 1.0 / std::sqrt(d)));
  p.Insert("emb.target", Tensor::Randn({cfg.target_vocab, d}, rng, 1.0 / std::sqrt(d)));
  for (int i = 0; i < cfg.encoder_layers; ++i) {
    const std::string lp = EncLayer(i);
    InitAttentionParams(p, AttentionBlockNames::Make(lp + ".attn", cfg.heads), d, rng);
    InitLayerNorm(p, lp + ".ln1", d);
    InitFfn(p, lp + ".ffn", d, cfg.ffn_width, rng);
    InitLayerNorm(p, lp + ".ln2", d);
  }
  InitLayerNorm(p, "enc.lnf", d);
  for (int i = 0; i < cfg.decoder_layers; ++i) {
    const std::string lp = DecLayer(i);
    InitAttentionParams(p, AttentionBlockNames::Make(lp + ".self", cfg.heads), d, rng);
    InitLayerNorm(p, lp + ".ln1", d);
    InitAttentionParams(p, AttentionBlockNames::Make(lp + ".cross", cfg.heads), d, rng);
    InitLayerNorm(p, lp + ".ln2", d);
    InitFfn(p, lp + ".ffn", d, cfg.ffn_width, rng);
    InitLayerNorm(p, lp + ".ln3", d);
  }
  InitLayerNorm(p, "dec.lnf", d);
  p.Insert("out.st.w", Tensor::Randn({d, cfg.target_vocab}, rng, 1.0 / std::sqrt(d)));
  p.Insert("out.st.b", Tensor::Zeros({cfg.target_vocab}));
  p.Insert("out.asr.w",
           Tensor::Randn({d, cfg.source_subword_vocab}, rng, 1.0 / std::sqrt(d)));
  p.Insert("out.asr.b", Tensor::Zeros({cfg.source_subword_vocab}));
  InitSegmenterParams(p, cfg.frame_dim, rng);
  return p;
}

Tensor PositionalEncoding(int n, int d_model) {
  Tensor pe = Tensor::Zeros({n, d_model});
  for (int pos = 0; pos < n; ++pos) {
    for (int i = 0; i < d_model; i += 2) {
      const double angle = pos / std::pow(10000.0, static_cast<double>(i) / d_model);
      pe.at(pos, i) = std::sin(angle);
      if (i + 1 < d_model) pe.at(pos, i + 1) = std::cos(angle);
    }
  }
  return pe;
}


int GOfT(const std::vector<int>& b, int t, int k) {
  SEG_CHECK(t >= 1 && k >= 1, "g(t; k) needs t >= 1 and k >= 1, got t = " << t
                                  << ", k = " << k);
  const int n = static_cast<int>(b.size());
  if (k == kInfiniteLag) return n;
  const long long threshold = static_cast<long long>(t) + k - 1;
  long long cum = 0;
  for (int i = 0; i < n; ++i) {
    cum += b[i];
    if (cum >= threshold) return i + 1;
  }
  return n;  // end of stream
}

std::vector<std::vector<uint8_t>> WaitSegDecoderMask(const std::vector<int>& b, int k,
                                                     int y_len) {
  std::vector<std::vector<uint8_t>> mask(y_len, std::vector<uint8_t>(b.size(), 0));
  for (int t = 1; t <= y_len; ++t) {
    const int g = GOfT(b, t, k);
    for (int j = 0; j < g; ++j) mask[t - 1][j] = 1;
  }
  return mask;
}

Tensor WaitSegAdditiveMask(const std::vector<int>& b, int k, int y_len) {
  Tensor m = Tensor::Zeros({y_len, static_cast<int>(b.size())});
  for (int t = 1; t <= y_len; ++t) {
    const int g = GOfT(b, t, k);
    for (int j = g; j < static_cast<int>(b.size()); ++j) m.at(t - 1, j) = kMaskValue;
  }
  return m;
}

Tensor WaitKAdditiveMask(const WordSpans& spans, int k, int y_len, int num_subwords) {
  ValidateWordSpans(spans, num_subwords);
  Tensor m = Tensor::Zeros({y_len, num_subwords});
  for (int t = 1; t <= y_len; ++t) {
    const long long visible_words = static_cast<long long>(t) + k - 1;
    for (size_t w = 0; w < spans.size(); ++w) {
      if (static_cast<long long>(w) + 1 > visible_words) {
        for (int j = spans[w].first; j <= spans[w].second; ++j)
          m.at(t - 1, j) = kMaskValue;
      }
    }
  }
  return m;
}

MultitaskLosses SentenceLosses(const BatchItem& item, const ParameterSet& params,
                               const ModelConfig& config, int k,
                               const LossOptions& options) {
  Tape tape;
  ValueMap values = InsertParams(tape, params, /*trainable=*/false);
  SentenceGraph g = BuildSentenceGraph(tape, values, config, item, k, options);
  return ReadLosses(tape, g);
}

MultitaskLosses MultitaskLossValues(const Batch& batch, const ParameterSet& params,
                                    const ModelConfig& config, int k,
                                    uint64_t noise_seed) {
  SEG_CHECK(!batch.empty(), "multitask losses over an empty batch");
  Rng rng(noise_seed);
  MultitaskLosses sum;
  for (const BatchItem& item : batch) {
    LossOptions opt;
    opt.noise = SampleSegmentationNoise(item.features.length(), config.noise_variance,
                                        rng);
    MultitaskLosses l =
        SentenceLosses(item, params, config, std::min(k, item.word_count), opt);
    sum.st += l.st;
    sum.asr += l.asr;
    sum.mt += l.mt;
    sum.num += l.num;
    sum.ctr += l.ctr;
    sum.total += l.total;
  }
  const double inv = 1.0 / batch.size();
  sum.st *= inv;
  sum.asr *= inv;
  sum.mt *= inv;
  sum.num *= inv;
  sum.ctr *= inv;
  sum.total *= inv;
  return sum;
}

Tensor StDecoderLogits(const BatchItem& item, const ParameterSet& params,
                       const ModelConfig& config, int k, const LossOptions& options) {
  Tape tape;
  ValueMap values = InsertParams(tape, params, /*trainable=*/false);
  SentenceGraph g = BuildSentenceGraph(tape, values, config, item, k, options);
  return tape.Val(g.st_logits);
}

Value BuildSentenceLossGraph(Tape& tape, const ValueMap& params,
                             const ModelConfig& config, const BatchItem& item, int k,
                             const LossOptions& options) {
  return BuildSentenceGraph(tape, params, config, item, k, options).total;
}

SentenceLossTerms BuildSentenceLossTerms(Tape& tape, const ValueMap& params,
                                         const ModelConfig& config, const BatchItem& item,
                                         int k, const LossOptions& options) {
  SentenceGraph g = BuildSentenceGraph(tape, params, config, item, k, options);
  return {g.st, g.asr, g.mt, g.num, g.ctr, g.total};
}

namespace {

struct AdamState {
  std::map<std::string, Tensor> m, v;
  long long step = 0;
};

void AdamStep(ParameterSet& params, const std::map<std::string, Tensor>& grads,
              AdamState& state, double lr) {
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  ++state.step;
  const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(state.step));
  for (auto& [name, theta] : params) {
    const Tensor& g = grads.at(name);
    Tensor& m = state.m.at(name);
    Tensor& v = state.v.at(name);
    for (size_t i = 0; i < theta.numel(); ++i) {
      m.data[i] = kBeta1 * m.data[i] + (1.0 - kBeta1) * g.data[i];
      v.data[i] = kBeta2 * v.data[i] + (1.0 - kBeta2) * g.data[i] * g.data[i];
      const double mhat = m.data[i] / bc1;
      const double vhat = v.data[i] / bc2;
      theta.data[i] -= lr * mhat / (std::sqrt(vhat) + kEps);
    }
  }
}

std::string RenderLossLog(const std::vector<EpochStats>& log) {
  std::ostringstream os;
  for (size_t e = 0; e < log.size(); ++e) {
    os << "epoch " << e + 1 << ": total " << log[e].total << ", st " << log[e].st
       << ", asr " << log[e].asr << ", mt " << log[e].mt << ", num " << log[e].num
       << ", ctr " << log[e].ctr << "\n";
  }
  return os.str();
}

}  // namespace

TrainResult Train(const Batch& corpus, const ModelConfig& config) {
  config.Validate();
  SEG_CHECK(!corpus.empty(), "training corpus is empty");
  Rng rng(config.seed);
  ParameterSet params = InitModelParameters(config, rng);

  AdamState adam;
  for (const auto& [name, t] : params) {
    adam.m.emplace(name, Tensor::Zeros(t.shape));
    adam.v.emplace(name, Tensor::Zeros(t.shape));
  }

  TrainResult result;
  const int n = static_cast<int>(corpus.size());
  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;

  int divergence_streak = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    // Fisher-Yates driven by the single training rng.
    for (int i = n - 1; i > 0; --i) std::swap(order[i], order[rng.UniformInt(0, i)]);

    EpochStats stats;
    for (int start = 0; start < n; start += config.batch_size) {
      const int end = std::min(n, start + config.batch_size);
      const int batch_n = end - start;
      int k_cap = 1;
      for (int s = start; s < end; ++s)
        k_cap = std::max(k_cap, corpus[order[s]].word_count);
      k_cap = std::min(k_cap, config.max_k);
      const int k = rng.UniformInt(1, k_cap);
      result.sampled_k.push_back(k);

      // One tape per batch: the parameter leaves are shared by every
      // sentence graph and gradients accumulate in place.
      Tape tape;
      ValueMap values = InsertParams(tape, params, /*trainable=*/true);
      Value batch_total;
      for (int s = start; s < end; ++s) {
        const BatchItem& item = corpus[order[s]];
        LossOptions opt;
        opt.noise = SampleSegmentationNoise(item.features.length(),
                                            config.noise_variance, rng);
        SentenceGraph g = BuildSentenceGraph(tape, values, config, item,
                                             std::min(k, item.word_count), opt);
        MultitaskLosses l = ReadLosses(tape, g);
        stats.st += l.st;
        stats.asr += l.asr;
        stats.mt += l.mt;
        stats.num += l.num;
        stats.ctr += l.ctr;
        stats.total += l.total;
        batch_total = batch_total.valid() ? tape.Add(batch_total, g.total) : g.total;
      }
      tape.Backward(tape.Scale(batch_total, 1.0 / batch_n));
      std::map<std::string, Tensor> grads;
      for (const auto& [name, value] : values) grads.emplace(name, tape.Grad(value));
      AdamStep(params, grads, adam, config.learning_rate);
    }
    const double inv = 1.0 / n;
    stats.st *= inv;
    stats.asr *= inv;
    stats.mt *= inv;
    stats.num *= inv;
    stats.ctr *= inv;
    stats.total *= inv;
    result.log.push_back(stats);

    if (stats.total > 10.0 * result.log.front().total) {
      if (++divergence_streak >= 3) {
        Fail("training diverged: loss exceeded 10x the initial value for 3 "
             "consecutive epochs\n" +
             RenderLossLog(result.log));
      }
    } else {
      divergence_streak = 0;
    }
  }

  // Trend check over quartile means of the per-epoch totals.
  const int e = static_cast<int>(result.log.size());
  const int q = std::max(1, e / 4);
  double first_q = 0, last_q = 0;
  for (int i = 0; i < q; ++i) first_q += result.log[i].total;
  for (int i = e - q; i < e; ++i) last_q += result.log[i].total;
  result.loss_trend_down = last_q < first_q;
  if (e >= 8) {
    SEG_CHECK(result.loss_trend_down,
              "training loss did not trend downward (first-quartile mean "
                  << first_q / q << ", last-quartile mean " << last_q / q << ")\n"
                  << RenderLossLog(result.log));
  }

  result.params = std::move(params);
  return result;
}

Tensor EncodeForInference(const FeatureSequence& features, const ParameterSet& params,
                          const ModelConfig& config, const std::vector<int>& b) {
  SEG_CHECK(static_cast<int>(b.size()) == features.length(),
            "decision count " << b.size() << " does not match " << features.length()
                              << " frames");
  Tape tape;
  ValueMap values = InsertParams(tape, params, /*trainable=*/false);
  ProjectedFeatures speech = ProjectFeatures(tape, values, config, features);
  Tensor mask = HardSegmentMask(b).ToAdditive();
  Value enc = EncoderStack(tape, values, config, speech.with_posenc, Value{}, &mask);
  return tape.Val(enc);
}

int GreedyNextToken(const Tensor& encoder_states, const std::vector<int>& hypothesis,
                    const ParameterSet& params, const ModelConfig& config) {
  Tape tape;
  ValueMap values = InsertParams(tape, params, /*trainable=*/false);
  std::vector<int> in_ids;
  in_ids.push_back(kBosId);
  for (int id : hypothesis) in_ids.push_back(id);
  Value e = tape.Add(tape.Embedding(values.at("emb.target"), in_ids),
                     tape.Constant(PositionalSlice(
                         static_cast<int>(in_ids.size()), config.d_model)));
  Value enc = tape.Constant(encoder_states);
  Value dec = DecoderStack(tape, values, config, e, enc, nullptr);
  Value logits = tape.Add(tape.MatMul(dec, values.at("out.st.w")), values.at("out.st.b"));
  const Tensor& l = tape.Val(logits);
  const int last = l.rows() - 1;
  int best = 0;
  for (int j = 1; j < l.cols(); ++j) {
    if (l.at(last, j) > l.at(last, best)) best = j;
  }
  return best;
}

DecodeResult OfflineDecode(const FeatureSequence& features, const ParameterSet& params,
                           const ModelConfig& config, int max_len) {
  SEG_CHECK(max_len >= 1, "decode length cap must be >= 1, got " << max_len);
  std::vector<double> p = SegmentationProbabilities(features, params, 0.0,
                                                    SegMode::kInfer, 0);
  std::vector<int> b = HardDecisions(p);
  Tensor enc = EncodeForInference(features, params, config, b);
  DecodeResult result;
  while (true) {
    const int token = GreedyNextToken(enc, result.hypothesis, params, config);
    if (token == kEosId) {
      result.hypothesis.push_back(kEosId);
      break;
    }
    result.hypothesis.push_back(token);
    if (static_cast<int>(result.hypothesis.size()) >= max_len) {
      result.truncated = true;
      result.hypothesis.push_back(kEosId);
      break;
    }
  }
  return result;
}

Tensor ExpectedAttentionWeights(const FeatureSequence& features,
                                const ParameterSet& params, const ModelConfig& config) {
  Tape tape;
  ValueMap values = InsertParams(tape, params, /*trainable=*/false);
  Value p = SegmentationProbabilities(tape, features, values, SegMode::kInfer);
  Value beta = SameSegmentProbabilities(tape, p);
  ProjectedFeatures speech = ProjectFeatures(tape, values, config, features);
  Value h = LN(tape, values, EncLayer(0) + ".ln1", speech.with_posenc);
  const AttentionHeadNames head =
      AttentionBlockNames::Make(EncLayer(0) + ".attn", config.heads).heads[0];
  Value q = tape.Add(tape.MatMul(h, values.at(head.wq)), values.at(head.bq));
  Value k = tape.Add(tape.MatMul(h, values.at(head.wk)), values.at(head.bk));
  const int d_head = tape.Val(q).cols();
  Value scores = tape.Scale(tape.MatMul(q, k, false, true),
                            1.0 / std::sqrt(static_cast<double>(d_head)));
  Value gamma = tape.RowSoftmax(scores, nullptr, beta);
  return tape.Val(gamma);
}

std::string CheckpointToJson(const Checkpoint& ckpt) {
  nlohmann::ordered_json doc;
  doc["format_version"] = ParameterSet::kFormatVersion;
  doc["model_config"] = nlohmann::ordered_json::parse(ckpt.config.ToJson());
  doc["corpus_fingerprint"] = ckpt.corpus_fingerprint;
  doc["parameters"] = ParamsToJsonObject(ckpt.params);
  return doc.dump();
}

Checkpoint CheckpointFromJson(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    Fail(std::string("checkpoint parse failure: ") + e.what());
  }
  SEG_CHECK(doc.contains("format_version") &&
                doc["format_version"].get<int>() == ParameterSet::kFormatVersion,
            "unsupported checkpoint format version");
  Checkpoint ckpt;
  ckpt.config = ModelConfig::FromJson(doc.at("model_config").dump());
  ckpt.corpus_fingerprint = doc.at("corpus_fingerprint").get<std::string>();
  ckpt.params = ParamsFromJsonObject(doc.at("parameters"));
  return ckpt;
}

}  // namespace segstream
