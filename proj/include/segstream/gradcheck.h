// segstream/gradcheck.h
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

#ifndef SEGSTREAM_GRADCHECK_H_
#define SEGSTREAM_GRADCHECK_H_

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "segstream/params.h"
#include "segstream/tape.h"

namespace segstream {
namespace ad {

// A graph description: given a tape, parameter leaves (by name) and input
// leaves, build the forward pass and return the outputs plus a scalar loss.
struct GraphOutputs {
  std::vector<Value> outputs;
  Value loss;
};
using GraphBuilder = std::function<GraphOutputs(
    Tape&, const std::map<std::string, Value>&, const std::vector<Value>&)>;

struct EvalResult {
  std::vector<Tensor> outputs;
  double loss = 0.0;
  ParameterSet gradients;  // one entry per parameter, zeros where unreachable
};

// Runs the graph forward, then accumulates d(loss)/d(theta) for every
// parameter. Outputs are identical to a pure forward evaluation.
EvalResult EvaluateWithGradients(const GraphBuilder& graph, const ParameterSet& params,
                                 const std::vector<Tensor>& inputs = {});

// Forward-only evaluation of the same graph description.
EvalResult EvaluateForward(const GraphBuilder& graph, const ParameterSet& params,
                           const std::vector<Tensor>& inputs = {});

struct FdReport {
  struct PerParameter {
    double max_rel_err = 0.0;
    size_t worst_offset = 0;
    double analytic = 0.0;
    double numeric = 0.0;
  };
  std::map<std::string, PerParameter> per_parameter;
  double max_rel_err = 0.0;
  std::string worst_parameter;
  bool pass = false;
  std::string ToString() const;
};

// Central finite differences against the tape gradient, elementwise over all
// parameters. Relative error is |analytic - numeric| / max(1, |analytic|,
// |numeric|). The loss must be deterministic in the parameters; perturbed
// evaluations that go non-finite are an error naming the parameter and offset.
FdReport FiniteDifferenceCheck(const GraphBuilder& loss_graph, const ParameterSet& params,
                               double eps = 1e-5, double tol = 1e-4,
                               const std::vector<Tensor>& inputs = {});

}  // namespace ad
}  // namespace segstream

#endif  // SEGSTREAM_GRADCHECK_H_
