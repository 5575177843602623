// segstream/tests/synthdata_test.cc
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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>

#include "segstream/metrics.h"
#include "segstream/synthdata.h"

using namespace segstream;

namespace {

std::string Serialize(const Corpus& corpus) {
  std::string out;
  for (const Sentence& s : corpus) out += SentenceToJsonLine(s) + "\n";
  return out;
}

}  // namespace

TEST_CASE("generation is deterministic by seed") {
  CorpusConfig cfg;
  cfg.sentences = 40;
  cfg.seed = 123;
  CHECK(Serialize(GenerateCorpus(cfg)) == Serialize(GenerateCorpus(cfg)));
  CorpusConfig other = cfg;
  other.seed = 124;
  CHECK(Serialize(GenerateCorpus(cfg)) != Serialize(GenerateCorpus(other)));
}

TEST_CASE("zero noise without silence or reorder repeats prototype blocks exactly") {
  CorpusConfig cfg;
  cfg.sentences = 60;
  cfg.seed = 5;
  cfg.frame_noise = 0.0;
  cfg.silence_prob = 0.0;
  cfg.reorder_window = 0;
  Corpus corpus = GenerateCorpus(cfg);

  // With monotone targets the target id identifies the word type, and the
  // boundary times delimit its frame block.
  std::map<int, std::vector<double>> block_by_type;
  for (const Sentence& s : corpus) {
    int start_frame = 0;
    for (int w = 0; w < s.word_count; ++w) {
      const int end_frame = static_cast<int>(s.boundaries_ms[w] / cfg.frame_ms);
      std::vector<double> block;
      for (int i = start_frame; i < end_frame; ++i)
        for (int d = 0; d < s.features.dim(); ++d) block.push_back(s.features.frames.at(i, d));
      auto [it, inserted] = block_by_type.emplace(s.targets[w], block);
      if (!inserted) CHECK(it->second == block);
      start_frame = end_frame;
    }
  }
  CHECK(block_by_type.size() > 1);
}

TEST_CASE("every sentence has one boundary per word, ending at the duration") {
  CorpusConfig cfg;
  cfg.sentences = 1000;
  cfg.seed = 9;
  Corpus corpus = GenerateCorpus(cfg);
  REQUIRE(corpus.size() == 1000);
  for (const Sentence& s : corpus) {
    CHECK(static_cast<int>(s.boundaries_ms.size()) == s.word_count);
    CHECK(static_cast<int>(s.spans.size()) == s.word_count);
    CHECK(s.boundaries_ms.back() == s.features.duration_ms());
    for (size_t i = 1; i < s.boundaries_ms.size(); ++i) {
      CHECK(s.boundaries_ms[i] > s.boundaries_ms[i - 1]);
    }
  }
}

TEST_CASE("word frequencies are uniform within 3-sigma binomial bounds") {
  CorpusConfig cfg;
  cfg.sentences = 2000;
  cfg.seed = 31;
  cfg.word_types = 10;
  cfg.reorder_window = 0;
  Corpus corpus = GenerateCorpus(cfg);
  std::map<int, long long> counts;
  long long total = 0;
  for (const Sentence& s : corpus) {
    for (int t : s.targets) {
      ++counts[t];
      ++total;
    }
  }
  const double p = 1.0 / cfg.word_types;
  const double mean = total * p;
  const double sigma = std::sqrt(total * p * (1 - p));
  for (const auto& [id, count] : counts) {
    CAPTURE(id);
    CHECK(std::fabs(count - mean) <= 3 * sigma);
  }
}

TEST_CASE("reordering leaves the token multiset intact") {
  CorpusConfig cfg;
  cfg.sentences = 50;
  cfg.seed = 77;
  cfg.reorder_window = 2;
  CorpusConfig mono = cfg;
  mono.reorder_window = 0;
  Corpus reordered = GenerateCorpus(cfg);
  Corpus monotone = GenerateCorpus(mono);
  REQUIRE(reordered.size() == monotone.size());
  bool any_swap = false;
  for (size_t i = 0; i < reordered.size(); ++i) {
    std::vector<int> a = reordered[i].targets;
    std::vector<int> b = monotone[i].targets;
    if (a != b) any_swap = true;
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    CHECK(a == b);
  }
  CHECK(any_swap);
}

TEST_CASE("save and load round trip byte for byte") {
  CorpusConfig cfg;
  cfg.sentences = 25;
  cfg.seed = 13;
  Corpus corpus = GenerateCorpus(cfg);
  const std::string path = "/tmp/segstream_synthdata_roundtrip.jsonl";
  SaveCorpus(path, corpus);
  Corpus loaded = LoadCorpus(path);
  CHECK(Serialize(loaded) == Serialize(corpus));
  std::remove(path.c_str());
}

TEST_CASE("a truncated file reports the offending line") {
  CorpusConfig cfg;
  cfg.sentences = 2;
  cfg.seed = 3;
  Corpus corpus = GenerateCorpus(cfg);
  const std::string path = "/tmp/segstream_synthdata_truncated.jsonl";
  {
    std::ofstream out(path, std::ios::binary);
    out << SentenceToJsonLine(corpus[0]) << "\n";
    out << SentenceToJsonLine(corpus[1]).substr(0, 25) << "\n";
  }
  try {
    LoadCorpus(path);
    FAIL("expected a parse failure");
  } catch (const SegError& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
  std::remove(path.c_str());
}

TEST_CASE("a hand-written single-sentence file loads to its literal contents") {
  const std::string path = "/tmp/segstream_synthdata_fixture.jsonl";
  {
    std::ofstream out(path, std::ios::binary);
    out << R"({"id": 7, "frame_ms": 40.0, "frames": [[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]],)"
        << R"( "subwords": [2, 3, 4], "word_spans": [[1, 2], [3, 3]],)"
        << R"( "target": [5, 6], "boundaries_ms": [80.0, 120.0]})" << "\n";
  }
  Corpus corpus = LoadCorpus(path);
  REQUIRE(corpus.size() == 1);
  const Sentence& s = corpus[0];
  CHECK(s.id == 7);
  CHECK(s.features.length() == 3);
  CHECK(s.features.frame_ms == 40.0);
  CHECK(s.features.frames.at(1, 0) == 3.0);
  CHECK(s.subwords == std::vector<int>{2, 3, 4});
  REQUIRE(s.spans.size() == 2);
  CHECK(s.spans[0] == std::pair<int, int>{0, 1});  // 1-based on disk
  CHECK(s.spans[1] == std::pair<int, int>{2, 2});
  CHECK(s.targets == std::vector<int>{5, 6});
  CHECK(s.boundaries_ms == std::vector<double>{80.0, 120.0});
  CHECK(s.word_count == 2);
  std::remove(path.c_str());
}

TEST_CASE("the fixed-length 280 ms segmenter scores below the oracle boundaries") {
  CorpusConfig cfg;
  cfg.sentences = 200;
  cfg.seed = 41;
  Corpus corpus = GenerateCorpus(cfg);
  int fixed_matches = 0, fixed_hyp = 0, oracle_matches = 0, oracle_hyp = 0, refs = 0;
  for (const Sentence& s : corpus) {
    const double tol = s.features.frame_ms;
    BoundaryPrf fixed = BoundaryPrfScore(
        FixedLengthBoundaries(s.features.duration_ms(), 280.0), s.boundaries_ms, tol);
    BoundaryPrf oracle = BoundaryPrfScore(s.boundaries_ms, s.boundaries_ms, tol);
    fixed_matches += fixed.matches;
    fixed_hyp += fixed.hyp_count;
    oracle_matches += oracle.matches;
    oracle_hyp += oracle.hyp_count;
    refs += fixed.ref_count;
  }
  auto micro_f1 = [&](int matches, int hyp) {
    const double p = 100.0 * matches / hyp;
    const double r = 100.0 * matches / refs;
    return (p + r) > 0 ? 2 * p * r / (p + r) : 0.0;
  };
  const double fixed_f1 = micro_f1(fixed_matches, fixed_hyp);
  const double oracle_f1 = micro_f1(oracle_matches, oracle_hyp);
  CHECK(oracle_f1 == doctest::Approx(100.0));
  CHECK(fixed_f1 < oracle_f1);
}

TEST_CASE("vocab sizes cover specials and batch conversion appends EOS") {
  CorpusConfig cfg;
  cfg.sentences = 10;
  cfg.seed = 55;
  Corpus corpus = GenerateCorpus(cfg);
  CHECK(SubwordVocabSize(corpus) >= 3);
  CHECK(TargetVocabSize(corpus) >= 3);
  Batch batch = ToBatch(corpus);
  REQUIRE(batch.size() == corpus.size());
  for (size_t i = 0; i < batch.size(); ++i) {
    CHECK(batch[i].targets_with_eos.back() == kEosId);
    CHECK(batch[i].targets_with_eos.size() == corpus[i].targets.size() + 1);
  }
}
