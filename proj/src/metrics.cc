// segstream/metrics.cc
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

#include "segstream/metrics.h"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

namespace segstream {

std::optional<SentenceLatency> LatencyMetrics(const std::vector<double>& tau_ms,
                                              double total_ms) {
  if (tau_ms.empty()) return std::nullopt;
  SEG_CHECK(total_ms > 0, "latency metrics need a positive stream duration, got "
                              << total_ms);
  const int m = static_cast<int>(tau_ms.size());
  const double t_total = total_ms;
  SentenceLatency out;

  // Consecutive wait: mean gap over the strictly positive gaps, tau_0 = 0.
  double gap_sum = 0;
  int positive_gaps = 0;
  double prev = 0;
  for (double tau : tau_ms) {
    const double gap = tau - prev;
    gap_sum += gap;
    if (gap > 0) ++positive_gaps;
    prev = tau;
  }
  out.cw = positive_gaps > 0 ? gap_sum / positive_gaps : 0.0;

  // Average proportion.
  double ap = 0;
  for (double tau : tau_ms) ap += tau / t_total;
  out.ap = ap / m;

  // Average lagging up to the first emission at the stream end (falling back
  // to the full hypothesis when no emission time equals T).
  int cutoff = m;
  for (int t = 0; t < m; ++t) {
    if (tau_ms[t] == t_total) {
      cutoff = t + 1;
      break;
    }
  }
  const double rate = t_total / m;  // 1 / (|y| / T)
  double al = 0;
  for (int t = 1; t <= cutoff; ++t) al += tau_ms[t - 1] - (t - 1) * rate;
  out.al = al / cutoff;

  // Differentiable average lagging.
  double dal = 0;
  double tau_prime = 0;
  for (int t = 1; t <= m; ++t) {
    tau_prime = t == 1 ? tau_ms[0] : std::max(tau_ms[t - 1], tau_prime + rate);
    dal += tau_prime - (t - 1) * rate;
  }
  out.dal = dal / m;
  return out;
}

LatencyReport CorpusLatency(const std::vector<SimulationTrace>& traces) {
  LatencyReport report;
  for (const SimulationTrace& trace : traces) {
    std::optional<SentenceLatency> lat =
        LatencyMetrics(trace.tau_ms, trace.total_duration_ms);
    if (!lat.has_value()) {
      ++report.skipped;
      continue;
    }
    report.cw += lat->cw;
    report.ap += lat->ap;
    report.al += lat->al;
    report.dal += lat->dal;
    ++report.counted;
  }
  if (report.counted > 0) {
    report.cw /= report.counted;
    report.ap /= report.counted;
    report.al /= report.counted;
    report.dal /= report.counted;
  }
  return report;
}

BoundaryPrf BoundaryPrfScore(const std::vector<double>& hyp_ms,
                             const std::vector<double>& ref_ms, double tol_ms) {
  SEG_CHECK(tol_ms >= 0, "boundary tolerance must be non-negative, got " << tol_ms);
  SEG_CHECK(std::is_sorted(hyp_ms.begin(), hyp_ms.end()),
            "hypothesis boundaries must be sorted");
  SEG_CHECK(std::is_sorted(ref_ms.begin(), ref_ms.end()),
            "reference boundaries must be sorted");
  BoundaryPrf out;
  out.hyp_count = static_cast<int>(hyp_ms.size());
  out.ref_count = static_cast<int>(ref_ms.size());
  out.hyp_empty = hyp_ms.empty();

  std::vector<char> used(ref_ms.size(), 0);
  for (double h : hyp_ms) {
    int best = -1;
    double best_dist = tol_ms;
    for (size_t r = 0; r < ref_ms.size(); ++r) {
      if (used[r]) continue;
      const double dist = std::fabs(ref_ms[r] - h);
      if (dist < best_dist || (dist == best_dist && best == -1)) {
        best = static_cast<int>(r);
        best_dist = dist;
      }
    }
    if (best >= 0) {
      used[best] = 1;
      ++out.matches;
    }
  }
  out.precision = out.hyp_count > 0 ? 100.0 * out.matches / out.hyp_count : 0.0;
  out.recall = out.ref_count > 0 ? 100.0 * out.matches / out.ref_count : 0.0;
  out.f1 = (out.precision + out.recall) > 0
               ? 2.0 * out.precision * out.recall / (out.precision + out.recall)
               : 0.0;
  return out;
}

std::optional<double> OverSegmentation(double precision_pct, double recall_pct) {
  if (precision_pct <= 0) return std::nullopt;
  return 100.0 * (recall_pct / precision_pct - 1.0);
}

double RValue(double recall_fraction, double os_fraction) {
  const double r1 = std::sqrt((1.0 - recall_fraction) * (1.0 - recall_fraction) +
                              os_fraction * os_fraction);
  const double r2 = (-os_fraction + recall_fraction - 1.0) / std::sqrt(2.0);
  return 100.0 * (1.0 - (std::fabs(r1) + std::fabs(r2)) / 2.0);
}

namespace {

using NgramCounts = std::map<std::vector<int>, int>;

NgramCounts CountNgrams(const std::vector<int>& tokens, int n) {
  NgramCounts counts;
  for (int i = 0; i + n <= static_cast<int>(tokens.size()); ++i) {
    counts[std::vector<int>(tokens.begin() + i, tokens.begin() + i + n)] += 1;
  }
  return counts;
}

}  // namespace

double CorpusBleu(const std::vector<std::vector<int>>& hypotheses,
                  const std::vector<std::vector<int>>& references, int max_n) {
  SEG_CHECK(!hypotheses.empty(), "BLEU over an empty corpus");
  SEG_CHECK(hypotheses.size() == references.size(),
            "BLEU needs paired corpora, got " << hypotheses.size() << " hypotheses and "
                                              << references.size() << " references");
  SEG_CHECK(max_n >= 1, "BLEU order must be >= 1, got " << max_n);

  std::vector<long long> matched(max_n, 0), total(max_n, 0);
  long long hyp_len = 0, ref_len = 0;
  for (size_t s = 0; s < hypotheses.size(); ++s) {
    const std::vector<int>& hyp = hypotheses[s];
    const std::vector<int>& ref = references[s];
    hyp_len += static_cast<long long>(hyp.size());
    ref_len += static_cast<long long>(ref.size());
    for (int n = 1; n <= max_n; ++n) {
      NgramCounts hyp_counts = CountNgrams(hyp, n);
      NgramCounts ref_counts = CountNgrams(ref, n);
      for (const auto& [gram, count] : hyp_counts) {
        total[n - 1] += count;
        auto it = ref_counts.find(gram);
        if (it != ref_counts.end()) matched[n - 1] += std::min(count, it->second);
      }
    }
  }

  double log_precision = 0;
  int orders_used = 0;
  for (int n = 1; n <= max_n; ++n) {
    if (total[n - 1] == 0) continue;  // degenerate corpus shorter than n
    if (matched[n - 1] == 0) return 0.0;
    log_precision += std::log(static_cast<double>(matched[n - 1]) / total[n - 1]);
    ++orders_used;
  }
  if (orders_used == 0 || hyp_len == 0) return 0.0;
  const double brevity =
      hyp_len < ref_len
          ? std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len))
          : 1.0;
  return 100.0 * brevity * std::exp(log_precision / orders_used);
}

std::vector<double> FixedLengthBoundaries(double total_ms, double spacing_ms) {
  SEG_CHECK(total_ms > 0 && spacing_ms > 0,
            "fixed-length boundaries need positive durations");
  std::vector<double> out;
  for (double t = spacing_ms; t < total_ms; t += spacing_ms) out.push_back(t);
  out.push_back(total_ms);
  return out;
}

std::string MetricCsvHeader(double tolerance_ms) {
  std::ostringstream os;
  os << "# tolerance_ms=" << tolerance_ms << "\n";
  os << "k,AL,AP,CW,DAL,BLEU,P,R,F1,OS,R_value";
  return os.str();
}

namespace {
std::string KLabel(int k) {
  return k == kInfiniteLag ? "inf" : std::to_string(k);
}
}  // namespace

std::string MetricCsvRow(const MetricReport& r) {
  std::ostringstream os;
  os.precision(10);
  os << KLabel(r.k) << "," << r.latency.al << "," << r.latency.ap << ","
     << r.latency.cw << "," << r.latency.dal << "," << r.bleu << ","
     << r.boundary.precision << "," << r.boundary.recall << "," << r.boundary.f1 << ",";
  if (r.os_pct.has_value()) {
    os << *r.os_pct;
  } else {
    os << "undefined";
  }
  os << "," << r.r_value_pct;
  return os.str();
}

std::string MetricReportToJson(const std::vector<MetricReport>& reports) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const MetricReport& r : reports) {
    nlohmann::ordered_json j;
    j["k"] = KLabel(r.k);
    j["AL"] = r.latency.al;
    j["AP"] = r.latency.ap;
    j["CW"] = r.latency.cw;
    j["DAL"] = r.latency.dal;
    j["latency_sentences"] = r.latency.counted;
    j["latency_skipped"] = r.latency.skipped;
    j["BLEU"] = r.bleu;
    j["boundary_P"] = r.boundary.precision;
    j["boundary_R"] = r.boundary.recall;
    j["boundary_F1"] = r.boundary.f1;
    j["boundary_matches"] = r.boundary.matches;
    j["boundary_hyp_count"] = r.boundary.hyp_count;
    j["boundary_ref_count"] = r.boundary.ref_count;
    if (r.os_pct.has_value()) {
      j["OS"] = *r.os_pct;
    } else {
      j["OS"] = nullptr;
    }
    j["R_value"] = r.r_value_pct;
    j["tolerance_ms"] = r.tolerance_ms;
    arr.push_back(std::move(j));
  }
  return arr.dump(2);
}

}  // namespace segstream
