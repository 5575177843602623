// segstream/policy.h
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

#ifndef SEGSTREAM_POLICY_H_
#define SEGSTREAM_POLICY_H_

#include <string>
#include <vector>

#include "segstream/model.h"
#include "segstream/types.h"

namespace segstream {

struct StreamEvent {
  enum class Kind { kRead, kWrite };
  Kind kind = Kind::kRead;
  double time_ms = 0.0;
  int payload = 0;  // 1-based frame index for READ, token id for WRITE
};

// One streaming run over a sentence. WRITE events and tau_ms cover the
// content tokens; the terminating EOS is only part of the hypothesis.
struct SimulationTrace {
  int id = 0;
  int k = 1;  // kInfiniteLag encodes "inf"
  double total_duration_ms = 0.0;
  std::vector<StreamEvent> events;
  std::vector<int> hypothesis;        // always ends with kEosId
  std::vector<double> tau_ms;         // emission time per content token
  std::vector<double> boundaries_ms;  // full-input inference segmentation
  bool flagged = false;               // length cap forced the EOS
};

// What the simulator needs from a model. The production implementation wraps
// the trained transducer; tests drive scripted stubs through the same loop.
class StreamingModel {
 public:
  virtual ~StreamingModel() = default;
  // Hard segmentation decisions on a prefix (inference mode, no noise).
  virtual std::vector<int> SegmentDecisions(const FeatureSequence& prefix) = 0;
  // Greedy next token given the revealed prefix and the emitted hypothesis.
  virtual int NextToken(const FeatureSequence& prefix,
                        const std::vector<int>& hypothesis) = 0;
};

class TransducerModel : public StreamingModel {
 public:
  TransducerModel(const ParameterSet& params, ModelConfig config)
      : params_(params), config_(std::move(config)) {}
  std::vector<int> SegmentDecisions(const FeatureSequence& prefix) override;
  int NextToken(const FeatureSequence& prefix,
                const std::vector<int>& hypothesis) override;

 private:
  const ParameterSet& params_;
  ModelConfig config_;
};

// Wait-seg streaming loop: reveal one frame at a time, recompute segmentation
// on the prefix, emit whenever sum(b) >= t + k - 1 or the whole input has
// been read. Emission time is frames-read * frame_ms.
SimulationTrace Simulate(const FeatureSequence& features, StreamingModel& model, int k,
                         int max_len, int sentence_id = 0);

struct ReplayResult {
  bool pass = true;
  std::string first_violation;
};

// Re-runs the simulation and also re-validates every WRITE against the
// wait-seg condition at its recorded time.
ReplayResult ReplayConsistencyCheck(const SimulationTrace& trace,
                                    const FeatureSequence& features,
                                    StreamingModel& model, int k, int max_len);

// Trace JSONL: one sentence per line.
std::string TraceToJsonLine(const SimulationTrace& trace);
SimulationTrace TraceFromJsonLine(const std::string& line, int line_number);
void SaveTraces(const std::string& path, const std::vector<SimulationTrace>& traces);
std::vector<SimulationTrace> LoadTraces(const std::string& path);

}  // namespace segstream

#endif  // SEGSTREAM_POLICY_H_
