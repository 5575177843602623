// segstream/metrics.h
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

#ifndef SEGSTREAM_METRICS_H_
#define SEGSTREAM_METRICS_H_

#include <optional>
#include <string>
#include <vector>

#include "segstream/policy.h"

namespace segstream {

// Latency of one sentence from its emission times. Undefined (absent) when
// there were no content emissions.
struct SentenceLatency {
  double cw = 0, ap = 0, al = 0, dal = 0;
};
std::optional<SentenceLatency> LatencyMetrics(const std::vector<double>& tau_ms,
                                              double total_ms);

// Corpus-level means; sentences without emissions are excluded and counted.
struct LatencyReport {
  double cw = 0, ap = 0, al = 0, dal = 0;
  int counted = 0;
  int skipped = 0;
};
LatencyReport CorpusLatency(const std::vector<SimulationTrace>& traces);

// Greedy one-to-one boundary matching in time order: each hypothesis boundary
// takes the nearest unmatched reference within the tolerance. Percent scale.
struct BoundaryPrf {
  double precision = 0, recall = 0, f1 = 0;
  int matches = 0, hyp_count = 0, ref_count = 0;
  bool hyp_empty = false;
};
BoundaryPrf BoundaryPrfScore(const std::vector<double>& hyp_ms,
                             const std::vector<double>& ref_ms, double tol_ms);

// 100 * (R/P - 1); absent when P == 0.
std::optional<double> OverSegmentation(double precision_pct, double recall_pct);

// R-value in percent from fractional recall and over-segmentation.
double RValue(double recall_fraction, double os_fraction);

// Corpus BLEU in percent: modified n-gram precision up to max_n, uniform
// weights, strict geometric mean (any zero precision gives 0), brevity
// penalty exp(1 - r/c) for c < r.
double CorpusBleu(const std::vector<std::vector<int>>& hypotheses,
                  const std::vector<std::vector<int>>& references, int max_n = 4);

// Equal-spacing segmenter baseline: boundaries at spacing, 2*spacing, ...,
// plus the stream end.
std::vector<double> FixedLengthBoundaries(double total_ms, double spacing_ms);

// Everything the quality-latency curve needs for one lagging value.
struct MetricReport {
  int k = 1;  // kInfiniteLag encodes "inf"
  LatencyReport latency;
  double bleu = 0;
  BoundaryPrf boundary;             // micro-averaged over the corpus
  std::optional<double> os_pct;
  double r_value_pct = 0;
  double tolerance_ms = 0;
};

std::string MetricCsvHeader(double tolerance_ms);
std::string MetricCsvRow(const MetricReport& report);
std::string MetricReportToJson(const std::vector<MetricReport>& reports);

}  // namespace segstream

#endif  // SEGSTREAM_METRICS_H_
