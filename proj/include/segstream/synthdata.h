// segstream/synthdata.h
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

#ifndef SEGSTREAM_SYNTHDATA_H_
#define SEGSTREAM_SYNTHDATA_H_

#include <string>
#include <vector>

#include "segstream/model.h"
#include "segstream/types.h"

namespace segstream {

// Planted-boundary streaming corpus: each word type has a fixed random
// prototype frame block, sentences concatenate prototypes plus per-entry
// Gaussian noise, and the true boundary after each word is known exactly.
struct CorpusConfig {
  int word_types = 20;
  int frame_dim = 8;
  int min_frames_per_word = 2;
  int max_frames_per_word = 6;
  int min_words = 3;
  int max_words = 10;
  double frame_noise = 0.1;   // per-entry sigma
  double silence_prob = 0.1;  // chance of a silence block before a word
  double frame_ms = 40.0;
  int reorder_window = 0;  // 0 (monotone targets) or 2 (adjacent swaps)
  int sentences = 2000;
  uint64_t seed = 1;

  void Validate() const;
};

struct Sentence {
  int id = 0;
  FeatureSequence features;
  std::vector<int> subwords;  // content subword ids
  WordSpans spans;            // 0-based internally; 1-based on disk
  std::vector<int> targets;   // content target ids, no EOS
  std::vector<double> boundaries_ms;
  int word_count = 0;
};

using Corpus = std::vector<Sentence>;

Corpus GenerateCorpus(const CorpusConfig& config);

// Max id + 1 over the corpus plus specials; feeds ModelConfig vocab sizes.
int SubwordVocabSize(const Corpus& corpus);
int TargetVocabSize(const Corpus& corpus);

Batch ToBatch(const Corpus& corpus);

// JSONL, one sentence per line; word spans 1-based in the file.
std::string SentenceToJsonLine(const Sentence& sentence);
Sentence SentenceFromJsonLine(const std::string& line, int line_number);
void SaveCorpus(const std::string& path, const Corpus& corpus);
Corpus LoadCorpus(const std::string& path);

}  // namespace segstream

#endif  // SEGSTREAM_SYNTHDATA_H_
