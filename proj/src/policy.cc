// segstream/policy.cc
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

#include "segstream/policy.h"

#include <json.hpp>

#include <fstream>
#include <numeric>
#include <sstream>

#include "segstream/segmentation.h"

namespace segstream {

std::vector<int> TransducerModel::SegmentDecisions(const FeatureSequence& prefix) {
  std::vector<double> p =
      SegmentationProbabilities(prefix, params_, 0.0, SegMode::kInfer, 0);
  return HardDecisions(p);
}

int TransducerModel::NextToken(const FeatureSequence& prefix,
                               const std::vector<int>& hypothesis) {
  std::vector<int> b = SegmentDecisions(prefix);
  Tensor enc = EncodeForInference(prefix, params_, config_, b);
  return GreedyNextToken(enc, hypothesis, params_, config_);
}

SimulationTrace Simulate(const FeatureSequence& features, StreamingModel& model, int k,
                         int max_len, int sentence_id) {
  SEG_CHECK(features.length() > 0, "cannot simulate over an empty feature sequence");
  SEG_CHECK(k >= 1, "lagging must be >= 1 (or infinite), got " << k);
  SEG_CHECK(max_len >= 1, "length cap must be >= 1, got " << max_len);
  const int n = features.length();
  const double frame_ms = features.frame_ms;

  SimulationTrace trace;
  trace.id = sentence_id;
  trace.k = k;
  trace.total_duration_ms = n * frame_ms;

  int revealed = 0;
  int t = 1;
  auto read_frame = [&] {
    ++revealed;
    trace.events.push_back(
        {StreamEvent::Kind::kRead, revealed * frame_ms, revealed});
  };

  while (true) {
    if (revealed == 0) {
      read_frame();
      continue;
    }
    std::vector<int> b = model.SegmentDecisions(features.Prefix(revealed));
    const long long segments = std::accumulate(b.begin(), b.end(), 0LL);
    const bool threshold_met =
        k != kInfiniteLag && segments >= static_cast<long long>(t) + k - 1;
    if (!threshold_met && revealed < n) {
      read_frame();
      continue;
    }
    const double now = revealed * frame_ms;
    const int token = model.NextToken(features.Prefix(revealed), trace.hypothesis);
    if (token == kEosId) {
      trace.hypothesis.push_back(kEosId);
      break;
    }
    trace.hypothesis.push_back(token);
    trace.events.push_back({StreamEvent::Kind::kWrite, now, token});
    trace.tau_ms.push_back(now);
    ++t;
    if (static_cast<int>(trace.hypothesis.size()) >= max_len) {
      trace.flagged = true;
      trace.hypothesis.push_back(kEosId);
      break;
    }
  }

  std::vector<int> b_full = model.SegmentDecisions(features);
  for (int i = 0; i < n; ++i) {
    if (b_full[i] == 1) trace.boundaries_ms.push_back((i + 1) * frame_ms);
  }
  return trace;
}

namespace {

bool SameTrace(const SimulationTrace& a, const SimulationTrace& b, std::string* why) {
  std::ostringstream os;
  if (a.hypothesis != b.hypothesis) {
    os << "hypothesis mismatch";
  } else if (a.tau_ms != b.tau_ms) {
    os << "tau mismatch";
  } else if (a.boundaries_ms != b.boundaries_ms) {
    os << "boundary mismatch";
  } else if (a.flagged != b.flagged) {
    os << "flag mismatch";
  } else if (a.events.size() != b.events.size()) {
    os << "event count mismatch: " << a.events.size() << " vs " << b.events.size();
  } else {
    for (size_t i = 0; i < a.events.size(); ++i) {
      if (a.events[i].kind != b.events[i].kind ||
          a.events[i].time_ms != b.events[i].time_ms ||
          a.events[i].payload != b.events[i].payload) {
        os << "event " << i << " differs";
        break;
      }
    }
  }
  *why = os.str();
  return why->empty();
}

}  // namespace

ReplayResult ReplayConsistencyCheck(const SimulationTrace& trace,
                                    const FeatureSequence& features,
                                    StreamingModel& model, int k, int max_len) {
  ReplayResult result;
  SimulationTrace rerun = Simulate(features, model, k, max_len, trace.id);
  std::string why;
  if (!SameTrace(trace, rerun, &why)) {
    result.pass = false;
    result.first_violation = "replay diverged: " + why;
    return result;
  }
  // Independently re-validate the wait-seg condition at each WRITE.
  const int n = features.length();
  int revealed = 0;
  int t = 0;
  for (size_t i = 0; i < trace.events.size(); ++i) {
    const StreamEvent& ev = trace.events[i];
    if (ev.kind == StreamEvent::Kind::kRead) {
      ++revealed;
      continue;
    }
    ++t;
    if (revealed == n) continue;  // end-of-stream emissions are always legal
    std::vector<int> b = model.SegmentDecisions(features.Prefix(revealed));
    const long long segments = std::accumulate(b.begin(), b.end(), 0LL);
    if (k == kInfiniteLag || segments < static_cast<long long>(t) + k - 1) {
      result.pass = false;
      std::ostringstream os;
      os << "event " << i << " (WRITE of token " << ev.payload << " at " << ev.time_ms
         << " ms) violates the wait-seg condition: " << segments << " segments < t+k-1";
      result.first_violation = os.str();
      return result;
    }
  }
  return result;
}

std::string TraceToJsonLine(const SimulationTrace& trace) {
  nlohmann::ordered_json j;
  j["id"] = trace.id;
  if (trace.k == kInfiniteLag) {
    j["k"] = "inf";
  } else {
    j["k"] = trace.k;
  }
  j["T_ms"] = trace.total_duration_ms;
  j["flagged"] = trace.flagged;
  nlohmann::ordered_json events = nlohmann::ordered_json::array();
  for (const StreamEvent& ev : trace.events) {
    nlohmann::ordered_json e;
    e["kind"] = ev.kind == StreamEvent::Kind::kRead ? "READ" : "WRITE";
    e["t_ms"] = ev.time_ms;
    e["payload"] = ev.payload;
    events.push_back(std::move(e));
  }
  j["events"] = std::move(events);
  j["hypothesis"] = trace.hypothesis;
  j["tau_ms"] = trace.tau_ms;
  j["boundaries_ms"] = trace.boundaries_ms;
  return j.dump();
}

SimulationTrace TraceFromJsonLine(const std::string& line, int line_number) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    Fail("trace line " + std::to_string(line_number) + ": " + e.what());
  }
  SimulationTrace trace;
  try {
    trace.id = j.at("id").get<int>();
    if (j.at("k").is_string()) {
      SEG_CHECK(j.at("k").get<std::string>() == "inf",
                "trace line " << line_number << ": unknown k label");
      trace.k = kInfiniteLag;
    } else {
      trace.k = j.at("k").get<int>();
    }
    trace.total_duration_ms = j.at("T_ms").get<double>();
    trace.flagged = j.at("flagged").get<bool>();
    for (const auto& e : j.at("events")) {
      StreamEvent ev;
      const std::string kind = e.at("kind").get<std::string>();
      SEG_CHECK(kind == "READ" || kind == "WRITE",
                "trace line " << line_number << ": unknown event kind '" << kind << "'");
      ev.kind = kind == "READ" ? StreamEvent::Kind::kRead : StreamEvent::Kind::kWrite;
      ev.time_ms = e.at("t_ms").get<double>();
      ev.payload = e.at("payload").get<int>();
      trace.events.push_back(ev);
    }
    trace.hypothesis = j.at("hypothesis").get<std::vector<int>>();
    trace.tau_ms = j.at("tau_ms").get<std::vector<double>>();
    trace.boundaries_ms = j.at("boundaries_ms").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    Fail("trace line " + std::to_string(line_number) + ": " + e.what());
  }
  for (size_t i = 1; i < trace.tau_ms.size(); ++i) {
    SEG_CHECK(trace.tau_ms[i] >= trace.tau_ms[i - 1],
              "trace line " << line_number << ": emission times decrease at token " << i);
  }
  for (double tau : trace.tau_ms) {
    SEG_CHECK(tau <= trace.total_duration_ms,
              "trace line " << line_number << ": emission after the stream end");
  }
  SEG_CHECK(!trace.hypothesis.empty() && trace.hypothesis.back() == kEosId,
            "trace line " << line_number << ": hypothesis does not end with EOS");
  return trace;
}

void SaveTraces(const std::string& path, const std::vector<SimulationTrace>& traces) {
  std::ofstream out(path, std::ios::binary);
  SEG_CHECK(out.good(), "cannot open '" << path << "' for writing");
  for (const SimulationTrace& trace : traces) out << TraceToJsonLine(trace) << "\n";
  SEG_CHECK(out.good(), "write failure on '" << path << "'");
}

std::vector<SimulationTrace> LoadTraces(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  SEG_CHECK(in.good(), "cannot open '" << path << "' for reading");
  std::vector<SimulationTrace> traces;
  std::string line;
  int line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    if (line.empty()) continue;
    traces.push_back(TraceFromJsonLine(line, line_number));
  }
  return traces;
}

}  // namespace segstream
