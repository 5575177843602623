// segstream/tests/autodiff_test.cc
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
#include <functional>

#include "segstream/gradcheck.h"
#include "segstream/params.h"
#include "segstream/tape.h"

using namespace segstream;
using ad::GraphBuilder;
using ad::GraphOutputs;
using ad::Tape;
using ad::Value;

namespace {

// Reduces an arbitrary tensor to a scalar through a fixed random weighting so
// the finite-difference check probes every output element.
Value WeightedSum(Tape& t, Value v, Rng& rng) {
  Tensor w = Tensor::Randn(t.Val(v).shape, rng);
  return t.ReduceSum(t.Mul(v, t.Constant(w)));
}

// Runs the FD oracle over `trials` random instances of a single op.
void CheckOp(const std::string& op_name, int trials,
             const std::function<ParameterSet(Rng&)>& make_params,
             const std::function<Value(Tape&, const std::map<std::string, Value>&, Rng&)>& apply) {
  for (int trial = 0; trial < trials; ++trial) {
    uint64_t seed = 1000 * (Fnv1a64(op_name) % 104729) + trial;
    CAPTURE(op_name);
    CAPTURE(seed);
    Rng rng(seed);
    ParameterSet params = make_params(rng);
    // The builder re-seeds its own rng so repeated forward evaluations use
    // identical constants.
    GraphBuilder builder = [&, seed](Tape& t, const std::map<std::string, Value>& p,
                                     const std::vector<Value>&) -> GraphOutputs {
      Rng local(seed + 7777);
      Value out = apply(t, p, local);
      Value loss = t.Val(out).numel() == 1 ? out : WeightedSum(t, out, local);
      return {{out}, loss};
    };
    ad::FdReport report = ad::FiniteDifferenceCheck(builder, params, 1e-5, 1e-6);
    CHECK_MESSAGE(report.pass, op_name << " trial " << trial << " seed " << seed
                                       << ": " << report.ToString());
    if (!report.pass) break;
  }
}

ParameterSet OneMatrix(Rng& rng, int r, int c, const std::string& name = "a") {
  ParameterSet p;
  p.Insert(name, Tensor::Randn({r, c}, rng));
  return p;
}

}  // namespace

TEST_CASE("linear map example: loss = sum(W x)") {
  ParameterSet params;
  params.Insert("x", Tensor({2, 1}, {1.0, 2.0}));
  GraphBuilder builder = [](Tape& t, const std::map<std::string, Value>& p,
                            const std::vector<Value>&) -> GraphOutputs {
    Value w = t.Constant(Tensor({2, 2}, {1, 0, 0, 1}));
    Value loss = t.ReduceSum(t.MatMul(w, p.at("x")));
    return {{}, loss};
  };
  ad::EvalResult r = ad::EvaluateWithGradients(builder, params);
  CHECK(r.loss == doctest::Approx(3.0).epsilon(1e-15));
  const Tensor& gx = r.gradients.Get("x");
  CHECK(gx.data[0] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(gx.data[1] == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("sigmoid at zero: value 0.5, gradient 0.25") {
  ParameterSet params;
  params.Insert("x", Tensor::Scalar(0.0));
  GraphBuilder builder = [](Tape& t, const std::map<std::string, Value>& p,
                            const std::vector<Value>&) -> GraphOutputs {
    Value loss = t.ReduceSum(t.Sigmoid(p.at("x")));
    return {{}, loss};
  };
  ad::EvalResult r = ad::EvaluateWithGradients(builder, params);
  CHECK(r.loss == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(r.gradients.Get("x").data[0] == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("random 3-layer graph matches finite differences") {
  for (uint64_t seed = 1; seed <= 20; ++seed) {
    CAPTURE(seed);
    Rng rng(seed);
    ParameterSet params;
    params.Insert("w1", Tensor::Randn({4, 5}, rng, 0.5));
    params.Insert("b1", Tensor::Randn({5}, rng, 0.1));
    params.Insert("w2", Tensor::Randn({5, 3}, rng, 0.5));
    params.Insert("b2", Tensor::Randn({3}, rng, 0.1));
    params.Insert("w3", Tensor::Randn({3, 1}, rng, 0.5));
    Tensor x = Tensor::Randn({6, 4}, rng);
    GraphBuilder builder = [x](Tape& t, const std::map<std::string, Value>& p,
                               const std::vector<Value>&) -> GraphOutputs {
      Value h1 = t.Tanh(t.Add(t.MatMul(t.Constant(x), p.at("w1")), p.at("b1")));
      Value h2 = t.Sigmoid(t.Add(t.MatMul(h1, p.at("w2")), p.at("b2")));
      Value out = t.MatMul(h2, p.at("w3"));
      return {{out}, t.ReduceMean(out)};
    };
    ad::FdReport report = ad::FiniteDifferenceCheck(builder, params, 1e-5, 1e-6);
    CHECK_MESSAGE(report.pass, "seed " << seed << ": " << report.ToString());
  }
}

TEST_CASE("per-op gradients match central finite differences over 100 trials") {
  const int kTrials = 100;

  SUBCASE("add same shape") {
    CheckOp("add", kTrials, [](Rng& r) { return OneMatrix(r, 3, 4); },
            [](Tape& t, const std::map<std::string, Value>& p, Rng& r) {
              return t.Add(p.at("a"), t.Constant(Tensor::Randn({3, 4}, r)));
            });
  }
  SUBCASE("add row-vector broadcast") {
    CheckOp("add_rowvec", kTrials,
            [](Rng& r) {
              ParameterSet p;
              p.Insert("a", Tensor::Randn({3, 4}, r));
              p.Insert("b", Tensor::Randn({4}, r));
              return p;
            },
            [](Tape& t, const std::map<std::string, Value>& p, Rng&) {
              return t.Add(p.at("a"), p.at("b"));
            });
  }
  SUBCASE("sub") {
    CheckOp("sub", kTrials,
            [](Rng& r) {
              ParameterSet p;
              p.Insert("a", Tensor::Randn({3, 4}, r));
              p.Insert("b", Tensor::Randn({3, 4}, r));
              return p;
            },
            [](Tape& t, const std::map<std::string, Value>& p, Rng&) {
              return t.Sub(p.at("a"), p.at("b"));
            });
  }
  SUBCASE("mul") {
    CheckOp("mul", kTrials,
            [](Rng& r) {
              ParameterSet p;
              p.Insert("a", Tensor::Randn({3, 4}, r));
              p.Insert("b", Tensor::Randn({3, 4}, r));
              return p;
            },
            [](Tape& t, const std::map<std::string, Value>& p, Rng&) {
              return t.Mul(p.at("a"), p.at("b"));
            });
  }
  SUBCASE("scale and add scalar") {
    CheckOp("scale", kTrials, [](Rng& r) { return OneMatrix(r, 2, 5); },
            [](Tape& t, const std::map<std::string, Value>& p, Rng&) {
              return t.AddScalar(t.Scale(p.at("a"), -1.7), 0.3);
            });
  }
  SUBCASE("sigmoid") {
    CheckOp("sigmoid", kTrials, [](Rng& r) { return OneMatrix(r, 3, 3); },
            [](Tape& t, const std::map<std::string, Value>& p, Rng&) {
              return t.Sigmoid(p.at("a"));
            });
  }
  SUBCASE("tanh") {
    CheckOp("tanh", kTrials, [](Rng& r) { return OneMatrix(r, 3, 3); },
            [](Tape& t, const std::map<std::string, Value>& p, Rng&) {
              return t.Tanh(p.at("a"));
            });
  }
  SUBCASE("exp") {
    CheckOp("exp", kTrials, [](Rng& r) { return OneMatrix(r, 3, 3); },
            [](Tape& t, const std::map<std::string, Value>& p, Rng&) {
              return t.Exp(p.at("a"));
            });
  }
  SUBCASE("log of positive input") {
    CheckOp("log", kTrials,
            [](Rng& r) {
              ParameterSet p;
              Tensor a = Tensor::Randn({3, 3}, r);
              for (double& v : a.data) v = std::fabs(v) + 0.5;
              p.Insert("a", a);
              return p;
            },
            [](Tape& t, const std::map<std::string, Value>& p, Rng&) {
              return t.Log(p.at("a"));
            });
  }
  SUBCASE("abs away from the kink") {
    CheckOp("abs", kTrials,
            [](Rng& r) {
              ParameterSet p;
              Tensor a = Tensor::Randn({3, 3}, r);
              for (double& v : a.data) v += (v >= 0 ? 0.25 : -0.25);
              p.Insert("a", a);
              return p;
            },
            [](Tape& t, const std::map<std::string, Value>& p, Rng&) {
              return t.Abs(p.at("a"));
            });
  }
  SUBCASE("clamp interior") {
    CheckOp("clamp", kTrials, [](Rng& r) { return OneMatrix(r, 3, 3); },
            [](Tape& t, const std::map<std::string, Value>& p, Rng&) {
              return t.Clamp(p.at("a"), -50.0, 50.0);
            });
  }
  SUBCASE("matmul all transpose combinations") {
    for (bool ta : {false, true}) {
      for (bool tb : {false, true}) {
        CheckOp("matmul", kTrials / 4,
                [&](Rng& r) {
                  ParameterSet p;
                  p.Insert("a", Tensor::Randn(ta ? std::vector<int>{4, 3} : std::vector<int>{3, 4}, r));
                  p.Insert("b", Tensor::Randn(tb ? std::vector<int>{2, 4} : std::vector<int>{4, 2}, r));
                  return p;
                },
                [=](Tape& t, const std::map<std::string, Value>& p, Rng&) {
                  return t.MatMul(p.at("a"), p.at("b"), ta, tb);
                });
      }
    }
  }
  SUBCASE("row softmax with mask and reweighting") {
    CheckOp("softmax", kTrials,
            [](Rng& r) {
              ParameterSet p;
              p.Insert("z", Tensor::Randn({4, 4}, r));
              Tensor w = Tensor::Randn({4, 4}, r);
              for (double& v : w.data) v = std::fabs(v) + 0.1;
              p.Insert("w", w);
              return p;
            },
            [](Tape& t, const std::map<std::string, Value>& p, Rng& r) {
              Tensor mask = Tensor::Zeros({4, 4});
              for (int i = 0; i < 4; ++i)
                for (int j = 0; j < 4; ++j)
                  if (i != j && r.Uniform() < 0.3) mask.at(i, j) = -1e30;
              return t.RowSoftmax(p.at("z"), &mask, p.at("w"));
            });
  }
  SUBCASE("normalize rows") {
    CheckOp("normalize_rows", kTrials,
            [](Rng& r) {
              ParameterSet p;
              Tensor a = Tensor::Randn({4, 5}, r);
              for (double& v : a.data) v = std::fabs(v) + 0.2;
              p.Insert("a", a);
              return p;
            },
            [](Tape& t, const std::map<std::string, Value>& p, Rng&) {
              return t.NormalizeRows(p.at("a"));
            });
  }
  SUBCASE("layer norm") {
    CheckOp("layer_norm", kTrials,
            [](Rng& r) {
              ParameterSet p;
              p.Insert("x", Tensor::Randn({4, 6}, r));
              p.Insert("g", Tensor::Randn({6}, r, 0.5));
              p.Insert("b", Tensor::Randn({6}, r, 0.5));
              return p;
            },
            [](Tape& t, const std::map<std::string, Value>& p, Rng&) {
              return t.LayerNorm(p.at("x"), p.at("g"), p.at("b"));
            });
  }
  SUBCASE("embedding") {
    CheckOp("embedding", kTrials, [](Rng& r) { return OneMatrix(r, 7, 3, "table"); },
            [](Tape& t, const std::map<std::string, Value>& p, Rng& r) {
              std::vector<int> ids;
              for (int i = 0; i < 5; ++i) ids.push_back(r.UniformInt(0, 6));
              return t.Embedding(p.at("table"), ids);
            });
  }
  SUBCASE("reductions") {
    CheckOp("reduce_sum", kTrials / 2, [](Rng& r) { return OneMatrix(r, 3, 4); },
            [](Tape& t, const std::map<std::string, Value>& p, Rng&) {
              return t.ReduceSum(p.at("a"));
            });
    CheckOp("reduce_mean", kTrials / 2, [](Rng& r) { return OneMatrix(r, 3, 4); },
            [](Tape& t, const std::map<std::string, Value>& p, Rng&) {
              return t.ReduceMean(p.at("a"));
            });
  }
  SUBCASE("max pool 1d") {
    CheckOp("max_pool", kTrials,
            [](Rng& r) {
              ParameterSet p;
              p.Insert("a", Tensor::Randn({11}, r));
              return p;
            },
            [](Tape& t, const std::map<std::string, Value>& p, Rng& r) {
              int kernel = r.UniformInt(1, 4);
              int stride = r.UniformInt(1, 4);
              return t.MaxPool1d(p.at("a"), kernel, stride);
            });
  }
  SUBCASE("cosine similarity matrix") {
    CheckOp("cosine", kTrials,
            [](Rng& r) {
              ParameterSet p;
              p.Insert("a", Tensor::Randn({3, 5}, r));
              p.Insert("b", Tensor::Randn({4, 5}, r));
              return p;
            },
            [](Tape& t, const std::map<std::string, Value>& p, Rng&) {
              return t.CosineMatrix(p.at("a"), p.at("b"));
            });
  }
  SUBCASE("cross entropy") {
    for (ad::Reduction red : {ad::Reduction::kMean, ad::Reduction::kSum}) {
      CheckOp(red == ad::Reduction::kMean ? "xent_mean" : "xent_sum", kTrials / 2,
              [](Rng& r) { return OneMatrix(r, 5, 7, "z"); },
              [red](Tape& t, const std::map<std::string, Value>& p, Rng& r) {
                std::vector<int> targets;
                for (int i = 0; i < 5; ++i) targets.push_back(r.UniformInt(0, 6));
                return t.CrossEntropy(p.at("z"), targets, red);
              });
    }
  }
  SUBCASE("reshape") {
    CheckOp("reshape", kTrials / 2, [](Rng& r) { return OneMatrix(r, 3, 4); },
            [](Tape& t, const std::map<std::string, Value>& p, Rng&) {
              return t.Reshape(p.at("a"), {12});
            });
  }
}

TEST_CASE("finite difference facility on closed forms") {
  SUBCASE("f(x) = x^2 at x = 3") {
    ParameterSet params;
    params.Insert("x", Tensor::Scalar(3.0));
    GraphBuilder builder = [](Tape& t, const std::map<std::string, Value>& p,
                              const std::vector<Value>&) -> GraphOutputs {
      Value loss = t.ReduceSum(t.Mul(p.at("x"), p.at("x")));
      return {{}, loss};
    };
    ad::EvalResult r = ad::EvaluateWithGradients(builder, params);
    CHECK(r.gradients.Get("x").data[0] == doctest::Approx(6.0).epsilon(1e-12));
    ad::FdReport report = ad::FiniteDifferenceCheck(builder, params);
    CHECK(report.pass);
    CHECK(report.per_parameter.at("x").max_rel_err < 1e-9);
  }
  SUBCASE("constant function has zero gradient and passes") {
    ParameterSet params;
    params.Insert("x", Tensor::Scalar(1.25));
    GraphBuilder builder = [](Tape& t, const std::map<std::string, Value>&,
                              const std::vector<Value>&) -> GraphOutputs {
      return {{}, t.Constant(Tensor::Scalar(4.0))};
    };
    ad::FdReport report = ad::FiniteDifferenceCheck(builder, params);
    CHECK(report.pass);
    CHECK(report.max_rel_err == 0.0);
  }
}

TEST_CASE("gradient of a sum of losses is the sum of gradients") {
  for (uint64_t seed = 11; seed <= 20; ++seed) {
    CAPTURE(seed);
    Rng rng(seed);
    ParameterSet params;
    params.Insert("w", Tensor::Randn({3, 3}, rng));
    Tensor x = Tensor::Randn({2, 3}, rng);
    auto loss1 = [x](Tape& t, const std::map<std::string, Value>& p) {
      return t.ReduceSum(t.Tanh(t.MatMul(t.Constant(x), p.at("w"))));
    };
    auto loss2 = [x](Tape& t, const std::map<std::string, Value>& p) {
      return t.ReduceMean(t.Sigmoid(t.MatMul(t.Constant(x), p.at("w"), false, true)));
    };
    auto run = [&](int which) {
      GraphBuilder b = [&, which](Tape& t, const std::map<std::string, Value>& p,
                                  const std::vector<Value>&) -> GraphOutputs {
        Value l1 = loss1(t, p);
        Value l2 = loss2(t, p);
        Value l = which == 0 ? l1 : (which == 1 ? l2 : t.Add(l1, l2));
        return {{}, l};
      };
      return ad::EvaluateWithGradients(b, params);
    };
    Tensor g1 = run(0).gradients.Get("w");
    Tensor g2 = run(1).gradients.Get("w");
    Tensor g12 = run(2).gradients.Get("w");
    for (size_t i = 0; i < g12.numel(); ++i) {
      CHECK(g12.data[i] == doctest::Approx(g1.data[i] + g2.data[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("forward evaluation is deterministic and unchanged by backward") {
  Rng rng(99);
  ParameterSet params;
  params.Insert("w", Tensor::Randn({4, 4}, rng));
  Tensor x = Tensor::Randn({4, 4}, rng);
  GraphBuilder builder = [x](Tape& t, const std::map<std::string, Value>& p,
                             const std::vector<Value>&) -> GraphOutputs {
    Value h = t.RowSoftmax(t.MatMul(t.Constant(x), p.at("w")));
    return {{h}, t.ReduceMean(h)};
  };
  ad::EvalResult a = ad::EvaluateForward(builder, params);
  ad::EvalResult b = ad::EvaluateForward(builder, params);
  ad::EvalResult c = ad::EvaluateWithGradients(builder, params);
  REQUIRE(a.outputs.size() == 1);
  CHECK(a.loss == b.loss);
  CHECK(a.loss == c.loss);
  for (size_t i = 0; i < a.outputs[0].numel(); ++i) {
    CHECK(a.outputs[0].data[i] == b.outputs[0].data[i]);
    CHECK(a.outputs[0].data[i] == c.outputs[0].data[i]);
  }
}

TEST_CASE("error paths") {
  SUBCASE("shape mismatch names both operands") {
    Tape t;
    Value a = t.Constant(Tensor::Zeros({2, 3}));
    Value b = t.Constant(Tensor::Zeros({3, 3}));
    try {
      t.Mul(a, b);
      FAIL("expected shape mismatch");
    } catch (const SegError& e) {
      std::string msg = e.what();
      CHECK(msg.find("[2, 3]") != std::string::npos);
      CHECK(msg.find("[3, 3]") != std::string::npos);
    }
  }
  SUBCASE("non-scalar loss rejected") {
    Tape t;
    Value a = t.Parameter(Tensor::Zeros({2, 2}));
    CHECK_THROWS_AS(t.Backward(a), SegError);
  }
  SUBCASE("non-finite forward value rejected") {
    Tape t;
    Value a = t.Constant(Tensor({2}, {0.0, -1.0}));
    CHECK_THROWS_AS(t.Log(a), SegError);
  }
}

TEST_CASE("parameter set JSON round trip") {
  Rng rng(5);
  ParameterSet p;
  p.Insert("alpha", Tensor::Randn({2, 3}, rng));
  p.Insert("beta", Tensor::Scalar(-1.5e-7));
  std::string json = p.ToJson();
  ParameterSet q = ParameterSet::FromJson(json);
  REQUIRE(q.size() == 2);
  CHECK(q.Get("alpha").shape == p.Get("alpha").shape);
  for (size_t i = 0; i < p.Get("alpha").numel(); ++i) {
    CHECK(q.Get("alpha").data[i] == p.Get("alpha").data[i]);
  }
  CHECK(q.Get("beta").data[0] == p.Get("beta").data[0]);
  CHECK(q.ToJson() == json);  // byte-stable re-serialization
  CHECK_THROWS_AS(ParameterSet::FromJson("{\"parameters\": {}}"), SegError);
  CHECK_THROWS_AS(ParameterSet::FromJson("not json"), SegError);
}
