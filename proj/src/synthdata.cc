// segstream/synthdata.cc
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

#include "segstream/synthdata.h"

#include <json.hpp>

#include <algorithm>
#include <fstream>

namespace segstream {

void CorpusConfig::Validate() const {
  SEG_CHECK(word_types >= 1 && sentences >= 1, "corpus config fields must be positive");
  SEG_CHECK(frame_dim >= 3,
            "frame dimension must be >= 3 (two channels carry the phase track), got "
                << frame_dim);
  SEG_CHECK(min_frames_per_word >= 1 && min_frames_per_word <= max_frames_per_word,
            "frames-per-word range [" << min_frames_per_word << ", "
                                      << max_frames_per_word << "] is empty");
  SEG_CHECK(min_words >= 1 && min_words <= max_words,
            "words-per-sentence range [" << min_words << ", " << max_words
                                         << "] is empty");
  SEG_CHECK(frame_noise >= 0, "frame noise must be non-negative");
  SEG_CHECK(silence_prob >= 0 && silence_prob < 1, "silence probability must be in [0, 1)");
  SEG_CHECK(frame_ms > 0, "frame duration must be positive");
  SEG_CHECK(reorder_window == 0 || reorder_window == 2,
            "reorder window must be 0 or 2, got " << reorder_window);
}

namespace {

// Word-type tables fixed by the corpus seed: a prototype frame block, the
// subword split (1 or 2 subwords) and the target id per type.
struct TypeTables {
  std::vector<Tensor> prototypes;          // word_types blocks
  Tensor silence;                          // low-energy block
  std::vector<std::vector<int>> subwords;  // per type
  std::vector<int> targets;                // per type
};

// A prototype block is a fixed per-type identity vector with per-frame
// jitter, plus a two-channel phase track that sweeps across the word and
// peaks on the final frame. The identity keeps frames of one word coherent
// (cutting mid-word mixes identities); the phase track is the word-final
// cue a frame-local segmenter can read, standing in for duration and
// prosodic boundary cues in real speech.
Tensor MakePrototype(int len, int frame_dim, Rng& rng) {
  Tensor block = Tensor::Zeros({len, frame_dim});
  const int id_dims = frame_dim - 2;
  std::vector<double> identity(id_dims);
  for (double& v : identity) v = rng.Normal();
  for (int j = 0; j < len; ++j) {
    for (int d = 0; d < id_dims; ++d) block.at(j, d) = identity[d] + 0.4 * rng.Normal();
    const double theta = 3.14159265358979323846 * (j + 1) / len;
    block.at(j, id_dims) = 1.2 * std::sin(theta);
    block.at(j, id_dims + 1) = 1.2 * std::cos(theta);
  }
  return block;
}

TypeTables BuildTables(const CorpusConfig& cfg, Rng& rng) {
  TypeTables tables;
  int next_subword = 2;  // 0 = BOS, 1 = EOS
  for (int w = 0; w < cfg.word_types; ++w) {
    const int len = rng.UniformInt(cfg.min_frames_per_word, cfg.max_frames_per_word);
    tables.prototypes.push_back(MakePrototype(len, cfg.frame_dim, rng));
    const int pieces = rng.Uniform() < 0.5 ? 1 : 2;
    std::vector<int> ids;
    for (int s = 0; s < pieces; ++s) ids.push_back(next_subword++);
    tables.subwords.push_back(std::move(ids));
    tables.targets.push_back(2 + w);
  }
  const int silence_len = rng.UniformInt(2, 4);
  tables.silence = Tensor::Randn({silence_len, cfg.frame_dim}, rng, 0.25);
  return tables;
}

void AppendBlock(std::vector<double>& frames, const Tensor& block, double sigma,
                 Rng& rng) {
  for (double v : block.data) frames.push_back(v + rng.Normal() * sigma);
}

}  // namespace

Corpus GenerateCorpus(const CorpusConfig& cfg) {
  cfg.Validate();
  Rng rng(cfg.seed);
  // Reorder decisions draw from their own stream so toggling the reorder
  // window never shifts the word or noise draws.
  Rng reorder_rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);
  TypeTables tables = BuildTables(cfg, rng);

  Corpus corpus;
  corpus.reserve(cfg.sentences);
  for (int s = 0; s < cfg.sentences; ++s) {
    Sentence sent;
    sent.id = s;
    const int words = rng.UniformInt(cfg.min_words, cfg.max_words);
    sent.word_count = words;

    std::vector<double> frames;
    int frame_count = 0;
    for (int w = 0; w < words; ++w) {
      // Optional silence before a word; silence frames carry no token and
      // fall inside the following word's segment. Never after the last word,
      // so the final boundary stays at the stream end.
      if (rng.Uniform() < cfg.silence_prob) {
        AppendBlock(frames, tables.silence, cfg.frame_noise, rng);
        frame_count += tables.silence.rows();
      }
      const int type = rng.UniformInt(0, cfg.word_types - 1);
      AppendBlock(frames, tables.prototypes[type], cfg.frame_noise, rng);
      frame_count += tables.prototypes[type].rows();
      sent.boundaries_ms.push_back(frame_count * cfg.frame_ms);

      const std::vector<int>& pieces = tables.subwords[type];
      const int start = static_cast<int>(sent.subwords.size());
      sent.subwords.insert(sent.subwords.end(), pieces.begin(), pieces.end());
      sent.spans.emplace_back(start, static_cast<int>(sent.subwords.size()) - 1);
      sent.targets.push_back(tables.targets[type]);
    }
    if (cfg.reorder_window == 2) {
      for (int j = 0; j + 1 < words;) {
        if (reorder_rng.Uniform() < 0.3) {
          std::swap(sent.targets[j], sent.targets[j + 1]);
          j += 2;
        } else {
          ++j;
        }
      }
    }
    sent.features.frames = Tensor({frame_count, cfg.frame_dim}, std::move(frames));
    sent.features.frame_ms = cfg.frame_ms;
    corpus.push_back(std::move(sent));
  }
  return corpus;
}

int SubwordVocabSize(const Corpus& corpus) {
  int max_id = kEosId;
  for (const Sentence& s : corpus)
    for (int id : s.subwords) max_id = std::max(max_id, id);
  return max_id + 1;
}

int TargetVocabSize(const Corpus& corpus) {
  int max_id = kEosId;
  for (const Sentence& s : corpus)
    for (int id : s.targets) max_id = std::max(max_id, id);
  return max_id + 1;
}

Batch ToBatch(const Corpus& corpus) {
  Batch batch;
  batch.reserve(corpus.size());
  for (const Sentence& s : corpus) {
    batch.push_back(
        MakeBatchItem(s.features, s.subwords, s.spans, s.targets, s.word_count));
  }
  return batch;
}

std::string SentenceToJsonLine(const Sentence& s) {
  nlohmann::ordered_json j;
  j["id"] = s.id;
  j["frame_ms"] = s.features.frame_ms;
  nlohmann::ordered_json frames = nlohmann::ordered_json::array();
  for (int i = 0; i < s.features.length(); ++i) {
    nlohmann::ordered_json row = nlohmann::ordered_json::array();
    for (int d = 0; d < s.features.dim(); ++d) row.push_back(s.features.frames.at(i, d));
    frames.push_back(std::move(row));
  }
  j["frames"] = std::move(frames);
  j["subwords"] = s.subwords;
  nlohmann::ordered_json spans = nlohmann::ordered_json::array();
  for (const auto& [l, r] : s.spans) {
    spans.push_back(nlohmann::ordered_json::array({l + 1, r + 1}));  // 1-based on disk
  }
  j["word_spans"] = std::move(spans);
  j["target"] = s.targets;
  j["boundaries_ms"] = s.boundaries_ms;
  return j.dump();
}

Sentence SentenceFromJsonLine(const std::string& line, int line_number) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    Fail("corpus line " + std::to_string(line_number) + ": " + e.what());
  }
  Sentence s;
  try {
    s.id = j.at("id").get<int>();
    s.features.frame_ms = j.at("frame_ms").get<double>();
    const auto& frames = j.at("frames");
    SEG_CHECK(frames.is_array() && !frames.empty(),
              "corpus line " << line_number << ": frames must be a non-empty array");
    const int n = static_cast<int>(frames.size());
    const int d = static_cast<int>(frames[0].size());
    Tensor mat = Tensor::Zeros({n, d});
    for (int i = 0; i < n; ++i) {
      SEG_CHECK(static_cast<int>(frames[i].size()) == d,
                "corpus line " << line_number << ": ragged frame row " << i);
      for (int c = 0; c < d; ++c) mat.at(i, c) = frames[i][c].get<double>();
    }
    s.features.frames = std::move(mat);
    s.subwords = j.at("subwords").get<std::vector<int>>();
    for (const auto& span : j.at("word_spans")) {
      SEG_CHECK(span.is_array() && span.size() == 2,
                "corpus line " << line_number << ": malformed word span");
      s.spans.emplace_back(span[0].get<int>() - 1, span[1].get<int>() - 1);
    }
    s.targets = j.at("target").get<std::vector<int>>();
    s.boundaries_ms = j.at("boundaries_ms").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    Fail("corpus line " + std::to_string(line_number) + ": " + e.what());
  }
  s.word_count = static_cast<int>(s.spans.size());
  ValidateWordSpans(s.spans, static_cast<int>(s.subwords.size()));
  SEG_CHECK(s.boundaries_ms.size() == s.spans.size(),
            "corpus line " << line_number << ": boundary count "
                           << s.boundaries_ms.size() << " != word count "
                           << s.spans.size());
  SEG_CHECK(std::is_sorted(s.boundaries_ms.begin(), s.boundaries_ms.end()) &&
                std::adjacent_find(s.boundaries_ms.begin(), s.boundaries_ms.end()) ==
                    s.boundaries_ms.end(),
            "corpus line " << line_number << ": boundaries must strictly increase");
  SEG_CHECK(!s.boundaries_ms.empty() &&
                s.boundaries_ms.back() == s.features.duration_ms(),
            "corpus line " << line_number << ": last boundary must equal the duration");
  return s;
}

void SaveCorpus(const std::string& path, const Corpus& corpus) {
  std::ofstream out(path, std::ios::binary);
  SEG_CHECK(out.good(), "cannot open '" << path << "' for writing");
  for (const Sentence& s : corpus) out << SentenceToJsonLine(s) << "\n";
  SEG_CHECK(out.good(), "write failure on '" << path << "'");
}

Corpus LoadCorpus(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  SEG_CHECK(in.good(), "cannot open '" << path << "' for reading");
  Corpus corpus;
  std::string line;
  int line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.empty()) continue;
    corpus.push_back(SentenceFromJsonLine(line, line_number));
  }
  SEG_CHECK(!corpus.empty(), "corpus file '" << path << "' has no sentences");
  return corpus;
}

}  // namespace segstream
