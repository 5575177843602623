// segstream/gradcheck.cc
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

#include "segstream/gradcheck.h"

#include <cmath>
#include <sstream>

namespace segstream {
namespace ad {

namespace {

struct BuiltGraph {
  Tape tape;
  std::map<std::string, Value> param_values;
  GraphOutputs outs;
};

void Build(BuiltGraph& g, const GraphBuilder& graph, const ParameterSet& params,
           const std::vector<Tensor>& inputs, bool track_gradients) {
  for (const auto& [name, t] : params) {
    g.param_values[name] = track_gradients ? g.tape.Parameter(t) : g.tape.Constant(t);
  }
  std::vector<Value> input_values;
  input_values.reserve(inputs.size());
  for (const Tensor& t : inputs) input_values.push_back(g.tape.Constant(t));
  g.outs = graph(g.tape, g.param_values, input_values);
  SEG_CHECK(g.outs.loss.valid(), "graph did not produce a loss value");
}

}  // namespace

EvalResult EvaluateForward(const GraphBuilder& graph, const ParameterSet& params,
                           const std::vector<Tensor>& inputs) {
  BuiltGraph g;
  Build(g, graph, params, inputs, /*track_gradients=*/false);
  EvalResult r;
  for (Value v : g.outs.outputs) r.outputs.push_back(g.tape.Val(v));
  r.loss = g.tape.Val(g.outs.loss).scalar();
  return r;
}

EvalResult EvaluateWithGradients(const GraphBuilder& graph, const ParameterSet& params,
                                 const std::vector<Tensor>& inputs) {
  BuiltGraph g;
  Build(g, graph, params, inputs, /*track_gradients=*/true);
  EvalResult r;
  for (Value v : g.outs.outputs) r.outputs.push_back(g.tape.Val(v));
  r.loss = g.tape.Val(g.outs.loss).scalar();
  g.tape.Backward(g.outs.loss);
  for (const auto& [name, v] : g.param_values) {
    r.gradients.Insert(name, g.tape.Grad(v));
  }
  return r;
}

std::string FdReport::ToString() const {
  std::ostringstream os;
  os << (pass ? "PASS" : "FAIL") << " max rel err " << max_rel_err << " at '"
     << worst_parameter << "'";
  return os.str();
}

FdReport FiniteDifferenceCheck(const GraphBuilder& loss_graph, const ParameterSet& params,
                               double eps, double tol, const std::vector<Tensor>& inputs) {
  SEG_CHECK(eps > 0 && tol > 0, "finite differences need positive eps and tol, got "
                                    << eps << " and " << tol);
  EvalResult analytic = EvaluateWithGradients(loss_graph, params, inputs);

  FdReport report;
  ParameterSet perturbed;
  for (const auto& [name, t] : params) perturbed.Insert(name, t);

  for (const auto& [name, t] : params) {
    FdReport::PerParameter pp;
    Tensor& slot = perturbed.Get(name);
    const Tensor& grad = analytic.gradients.Get(name);
    for (size_t off = 0; off < t.numel(); ++off) {
      const double orig = slot.data[off];
      slot.data[off] = orig + eps;
      double up = EvaluateForward(loss_graph, perturbed, inputs).loss;
      slot.data[off] = orig - eps;
      double down = EvaluateForward(loss_graph, perturbed, inputs).loss;
      slot.data[off] = orig;
      SEG_CHECK(std::isfinite(up) && std::isfinite(down),
                "non-finite loss while perturbing parameter '" << name
                    << "' at offset " << off);
      double numeric = (up - down) / (2.0 * eps);
      double a = grad.data[off];
      double rel = std::fabs(a - numeric) /
                   std::max({1.0, std::fabs(a), std::fabs(numeric)});
      if (rel > pp.max_rel_err) {
        pp.max_rel_err = rel;
        pp.worst_offset = off;
        pp.analytic = a;
        pp.numeric = numeric;
      }
    }
    if (pp.max_rel_err > report.max_rel_err) {
      report.max_rel_err = pp.max_rel_err;
      report.worst_parameter = name;
    }
    report.per_parameter[name] = pp;
  }
  report.pass = report.max_rel_err <= tol;
  return report;
}

}  // namespace ad
}  // namespace segstream
