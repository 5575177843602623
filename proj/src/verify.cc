// segstream/verify.cc
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

#include "segstream/verify.h"

#include <json.hpp>

#include <cmath>
#include <functional>
#include <sstream>

#include "segstream/alignment.h"
#include "segstream/attention.h"
#include "segstream/gradcheck.h"
#include "segstream/metrics.h"
#include "segstream/model.h"
#include "segstream/segmentation.h"

namespace segstream {

Tensor BruteForceSegmentMarginals(const std::vector<double>& p, int num_segments) {
  const int n = static_cast<int>(p.size());
  SEG_CHECK(n >= 1 && n <= 20, "brute-force enumeration supports 1..20 frames, got " << n);
  SEG_CHECK(num_segments >= 1, "segment count must be >= 1");
  Tensor m = Tensor::Zeros({n, num_segments});
  const int cut_vars = n - 1;  // a cut after the last frame does not move ids
  for (long long mask = 0; mask < (1LL << cut_vars); ++mask) {
    double weight = 1.0;
    for (int l = 0; l < cut_vars; ++l) {
      const bool cut = (mask >> l) & 1;
      weight *= cut ? p[l] : (1.0 - p[l]);
    }
    if (weight == 0.0) continue;
    int seg = 1;
    for (int i = 0; i < n; ++i) {
      if (i > 0 && ((mask >> (i - 1)) & 1)) ++seg;
      const int clamped = std::min(seg, num_segments);
      m.at(i, clamped - 1) += weight;
    }
  }
  return m;
}

Tensor DirectProductSameSegment(const std::vector<double>& p) {
  const int n = static_cast<int>(p.size());
  Tensor beta = Tensor::Zeros({n, n});
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i >= j) {
        beta.at(i, j) = 1.0;
      } else {
        double prod = 1.0;
        for (int l = i; l <= j - 1; ++l) prod *= 1.0 - p[l];
        beta.at(i, j) = prod;
      }
    }
  }
  return beta;
}

Tensor ReferenceMaskedSoftmax(const Tensor& logits,
                              const std::vector<std::vector<uint8_t>>& allowed) {
  const int n = logits.rows(), m = logits.cols();
  Tensor out = Tensor::Zeros({n, m});
  for (int i = 0; i < n; ++i) {
    double mx = -1e300;
    for (int j = 0; j < m; ++j) {
      if (allowed[i][j]) mx = std::max(mx, logits.at(i, j));
    }
    double denom = 0.0;
    for (int j = 0; j < m; ++j) {
      if (allowed[i][j]) denom += std::exp(logits.at(i, j) - mx);
    }
    for (int j = 0; j < m; ++j) {
      if (allowed[i][j]) out.at(i, j) = std::exp(logits.at(i, j) - mx) / denom;
    }
  }
  return out;
}

namespace {

double MaxAbsDiff(const Tensor& a, const Tensor& b) {
  SEG_CHECK(a.same_shape(b), "shape mismatch in comparison: " << a.shape_str() << " vs "
                                                              << b.shape_str());
  double worst = 0.0;
  for (size_t i = 0; i < a.numel(); ++i)
    worst = std::max(worst, std::fabs(a.data[i] - b.data[i]));
  return worst;
}

std::vector<double> RandomProbabilities(Rng& rng, int n, double lo = 0.02,
                                        double hi = 0.98) {
  std::vector<double> p(n);
  for (double& v : p) v = lo + (hi - lo) * rng.Uniform();
  return p;
}

class FamilyRunner {
 public:
  FamilyRunner(VerifyReport& report, const std::string& name) : report_(report) {
    family_.name = name;
  }
  ~FamilyRunner() {
    if (family_.failures > 0) report_.pass = false;
    report_.families.push_back(family_);
  }
  void Check(bool ok, const std::string& what) {
    ++family_.checks;
    if (!ok) {
      ++family_.failures;
      if (family_.note.empty()) family_.note = what;
    }
  }

 private:
  VerifyReport& report_;
  VerifyFamily family_;
};

void RunDpOracle(VerifyReport& report, Rng& rng) {
  FamilyRunner fam(report, "dp-brute-force-oracle");
  for (int trial = 0; trial < 100; ++trial) {
    const int n = rng.UniformInt(1, 8);
    const int k = rng.UniformInt(1, 4);
    std::vector<double> p = RandomProbabilities(rng, n, 0.0, 1.0);
    Tensor dp = SegmentMarginals(p, k);
    Tensor ref = BruteForceSegmentMarginals(p, k);
    std::ostringstream what;
    what << "dp vs enumeration mismatch at n=" << n << " K=" << k << " trial " << trial;
    fam.Check(MaxAbsDiff(dp, ref) <= 1e-10, what.str());
  }
}

void RunMarginalNormalization(VerifyReport& report, Rng& rng) {
  FamilyRunner fam(report, "marginal-row-normalization");
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = rng.UniformInt(1, 40);
    const int k = rng.UniformInt(1, 12);
    Tensor m = SegmentMarginals(RandomProbabilities(rng, n, 0.0, 1.0), k);
    double worst = 0.0;
    for (int i = 0; i < n; ++i) {
      double row = 0.0;
      for (int c = 0; c < k; ++c) row += m.at(i, c);
      worst = std::max(worst, std::fabs(row - 1.0));
    }
    std::ostringstream what;
    what << "row sum off by " << worst << " at n=" << n << " K=" << k;
    fam.Check(worst <= 1e-12, what.str());
  }
}

void RunAttentionReductions(VerifyReport& report, Rng& rng) {
  FamilyRunner fam(report, "attention-reductions");
  for (int trial = 0; trial < 100; ++trial) {
    const int n = rng.UniformInt(2, 10);
    const int d = 6;
    ParameterSet params;
    auto names = AttentionBlockNames::Make("attn", 2);
    Rng init(rng.Bits());
    InitAttentionParams(params, names, d, init);
    FeatureSequence feats{Tensor::Randn({n, d}, rng), 40.0};

    std::vector<double> zeros(n, 0.0);
    Tensor expected0 =
        EncoderAttention(feats, params, names, AttentionMode::kExpected, &zeros);
    Tensor bi = EncoderAttention(feats, params, names, AttentionMode::kBi);
    fam.Check(MaxAbsDiff(expected0, bi) <= 1e-12, "p->0 did not reduce to bi-directional");

    std::vector<double> binary(n);
    std::vector<int> b(n);
    for (int i = 0; i < n; ++i) {
      b[i] = rng.Uniform() < 0.5 ? 1 : 0;
      binary[i] = b[i];
    }
    Tensor expected_bin =
        EncoderAttention(feats, params, names, AttentionMode::kExpected, &binary);
    Tensor hard =
        EncoderAttention(feats, params, names, AttentionMode::kHard, nullptr, &b);
    fam.Check(MaxAbsDiff(expected_bin, hard) <= 1e-12,
              "binary p did not reduce to the hard segment mask");

    std::vector<int> ones(n, 1);
    Tensor hard_ones =
        EncoderAttention(feats, params, names, AttentionMode::kHard, nullptr, &ones);
    Tensor uni = EncoderAttention(feats, params, names, AttentionMode::kUni);
    fam.Check(MaxAbsDiff(hard_ones, uni) <= 1e-12, "b=1 did not reduce to uni-directional");
  }
}

void RunBetaLogSpace(VerifyReport& report, Rng& rng) {
  FamilyRunner fam(report, "beta-log-space-agreement");
  for (int n : {1, 2, 3, 5, 8, 16, 33, 64}) {
    std::vector<double> p = RandomProbabilities(rng, n, 0.0, 0.999);
    Tensor log_space = SameSegmentProbabilities(Tensor::FromVector(p));
    Tensor direct = DirectProductSameSegment(p);
    std::ostringstream what;
    what << "log-space beta deviates from direct product at n=" << n;
    fam.Check(MaxAbsDiff(log_space, direct) <= 1e-12, what.str());
  }
}

ad::GraphBuilder SquareWithFaultyBackward(bool faulty) {
  return [faulty](ad::Tape& t, const std::map<std::string, ad::Value>& p,
                  const std::vector<ad::Value>&) -> ad::GraphOutputs {
    ad::Value x = p.at("x");
    const Tensor& tx = t.Val(x);
    Tensor out = tx;
    for (double& v : out.data) v = v * v;
    const double slope = faulty ? 2.5 : 2.0;
    ad::Value y = t.CustomOp(
        "square", std::move(out), {x},
        [slope](const Tensor& g, const std::vector<const Tensor*>& vals,
                const std::vector<Tensor*>& grads) {
          if (grads[0] == nullptr) return;
          for (size_t i = 0; i < g.numel(); ++i)
            grads[0]->data[i] += slope * vals[0]->data[i] * g.data[i];
        });
    return {{}, t.ReduceSum(y)};
  };
}

BatchItem TinyFdItem(Rng& rng) {
  // d = 8, |a| = 6, |y| = 3: three single-subword words.
  FeatureSequence feats{Tensor::Randn({6, 8}, rng), 40.0};
  return MakeBatchItem(std::move(feats), {2, 3, 4}, {{0, 0}, {1, 1}, {2, 2}},
                       {2, 3, 4}, 3);
}

ModelConfig TinyFdConfig() {
  ModelConfig cfg;
  cfg.d_model = 8;
  cfg.heads = 2;
  cfg.encoder_layers = 2;
  cfg.decoder_layers = 2;
  cfg.ffn_width = 16;
  cfg.source_subword_vocab = 8;
  cfg.target_vocab = 8;
  cfg.frame_dim = 8;
  return cfg;
}

void RunFdGradients(VerifyReport& report, Rng& rng, bool inject_fault) {
  FamilyRunner fam(report, "fd-gradient-checks");
  const double tol = 1e-4;

  {  // segment-count loss wrt p
    ParameterSet params;
    params.Insert("p", Tensor::FromVector(RandomProbabilities(rng, 12, 0.05, 0.95)));
    ad::GraphBuilder builder = [](ad::Tape& t, const std::map<std::string, ad::Value>& p,
                                  const std::vector<ad::Value>&) -> ad::GraphOutputs {
      return {{}, SegmentCountLoss(t, p.at("p"), 3)};
    };
    ad::FdReport r = ad::FiniteDifferenceCheck(builder, params, 1e-5, tol);
    fam.Check(r.pass, "segment-count loss gradient: " + r.ToString());
  }

  {  // contrastive loss wrt both representations
    ParameterSet params;
    params.Insert("fs", Tensor::Randn({4, 6}, rng));
    params.Insert("ft", Tensor::Randn({4, 6}, rng));
    ad::GraphBuilder builder = [](ad::Tape& t, const std::map<std::string, ad::Value>& p,
                                  const std::vector<ad::Value>&) -> ad::GraphOutputs {
      return {{}, ContrastiveLoss(t, p.at("fs"), p.at("ft"), 0.1)};
    };
    ad::FdReport r = ad::FiniteDifferenceCheck(builder, params, 1e-5, tol);
    fam.Check(r.pass, "contrastive loss gradient: " + r.ToString());
  }

  {  // expected segmented attention output wrt p
    const int n = 7, d = 6;
    ParameterSet params;
    params.Insert("p", Tensor::FromVector(RandomProbabilities(rng, n, 0.05, 0.95)));
    Tensor feats = Tensor::Randn({n, d}, rng);
    ParameterSet attn;
    auto names = AttentionBlockNames::Make("attn", 2);
    Rng init(rng.Bits());
    InitAttentionParams(attn, names, d, init);
    Tensor probe = Tensor::Randn({n, d}, rng);
    ad::GraphBuilder builder = [feats, attn, names, probe](
                                   ad::Tape& t,
                                   const std::map<std::string, ad::Value>& p,
                                   const std::vector<ad::Value>&) -> ad::GraphOutputs {
      std::map<std::string, ad::Value> values;
      for (const auto& [name, tensor] : attn) values[name] = t.Constant(tensor);
      ad::Value beta = SameSegmentProbabilities(t, p.at("p"));
      ad::Value x = t.Constant(feats);
      ad::Value ctx = AttentionBlock(t, x, x, values, names, beta, nullptr);
      return {{}, t.ReduceSum(t.Mul(ctx, t.Constant(probe)))};
    };
    ad::FdReport r = ad::FiniteDifferenceCheck(builder, params, 1e-5, tol);
    fam.Check(r.pass, "expected attention gradient: " + r.ToString());
  }

  {  // full objective on the tiny model
    ModelConfig cfg = TinyFdConfig();
    Rng init(rng.Bits());
    ParameterSet params = InitModelParameters(cfg, init);
    BatchItem item = TinyFdItem(rng);
    LossOptions opt;
    Rng noise_rng(rng.Bits());
    opt.noise = SampleSegmentationNoise(item.features.length(), 1.0, noise_rng);
    ad::GraphBuilder builder = [&cfg, &item, opt](
                                   ad::Tape& t,
                                   const std::map<std::string, ad::Value>& p,
                                   const std::vector<ad::Value>&) -> ad::GraphOutputs {
      return {{}, BuildSentenceLossGraph(t, p, cfg, item, 2, opt)};
    };
    ad::FdReport r = ad::FiniteDifferenceCheck(builder, params, 1e-5, tol);
    fam.Check(r.pass, "full objective gradient: " + r.ToString());
  }

  {  // with the fault hook armed this check must go red
    ParameterSet params;
    params.Insert("x", Tensor::Randn({5}, rng));
    ad::FdReport r =
        ad::FiniteDifferenceCheck(SquareWithFaultyBackward(inject_fault), params, 1e-5, tol);
    fam.Check(r.pass, "square gradient: " + r.ToString());
  }
}

void RunMetricHandChecks(VerifyReport& report) {
  FamilyRunner fam(report, "metric-hand-checks");
  auto near = [](double a, double b, double tol) { return std::fabs(a - b) <= tol; };

  {  // single token emitted at the stream end
    auto lat = LatencyMetrics({1000.0}, 1000.0);
    fam.Check(lat.has_value() && near(lat->al, 1000, 1e-9) && near(lat->ap, 1, 1e-12) &&
                  near(lat->cw, 1000, 1e-9) && near(lat->dal, 1000, 1e-9),
              "single-token latency");
  }
  {  // perfectly paced emissions
    auto lat = LatencyMetrics({500, 1000, 1500, 2000}, 2000.0);
    fam.Check(lat.has_value() && near(lat->al, 500, 1e-9), "perfectly paced AL");
  }
  {  // consecutive wait over [500, 500, 1000]
    auto lat = LatencyMetrics({500, 500, 1000}, 1000.0);
    fam.Check(lat.has_value() && near(lat->cw, 500, 1e-9), "CW hand trace");
  }
  {  // DAL with both emissions at the end
    auto lat = LatencyMetrics({2000, 2000}, 2000.0);
    fam.Check(lat.has_value() && near(lat->dal, 2000, 1e-9), "DAL hand trace");
  }
  {  // over-segmentation and R-value on published P/R pairs
    auto os = OverSegmentation(34.9, 32.3);
    fam.Check(os.has_value() && near(*os, -7.4, 0.1), "OS for P=34.9 R=32.3");
    const double rv = RValue(0.323, *os / 100.0);
    fam.Check(near(rv, 44.6, 0.1), "R-value for the same pair");
    auto os2 = OverSegmentation(18.2, 54.1);
    fam.Check(os2.has_value() && near(*os2, 196.4, 1.5), "OS for P=18.2 R=54.1");
    fam.Check(near(RValue(1.0, 0.0), 100.0, 1e-12), "perfect R-value");
    fam.Check(near(RValue(0.0, 0.0), 14.6446609407, 1e-6), "degenerate R-value");
  }
  {  // BLEU identities
    std::vector<std::vector<int>> ref = {{2, 3, 4, 5}, {6, 7, 8, 9, 10}};
    fam.Check(near(CorpusBleu(ref, ref), 100.0, 1e-9), "BLEU of identical corpora");
    std::vector<std::vector<int>> hyp = {{2, 3, 4, 6}};
    std::vector<std::vector<int>> ref1 = {{2, 3, 4, 5}};
    fam.Check(CorpusBleu(hyp, ref1) == 0.0, "BLEU with zero 4-gram matches");
  }
}

}  // namespace

std::string VerifyReport::ToJson() const {
  nlohmann::ordered_json j;
  j["pass"] = pass;
  nlohmann::ordered_json fams = nlohmann::ordered_json::array();
  for (const VerifyFamily& f : families) {
    nlohmann::ordered_json e;
    e["name"] = f.name;
    e["checks"] = f.checks;
    e["failures"] = f.failures;
    if (!f.note.empty()) e["first_failure"] = f.note;
    fams.push_back(std::move(e));
  }
  j["families"] = std::move(fams);
  return j.dump(2);
}

std::string VerifyReport::Summary() const {
  std::ostringstream os;
  for (const VerifyFamily& f : families) {
    os << (f.failures == 0 ? "PASS" : "FAIL") << " " << f.name << " (" << f.checks
       << " checks";
    if (f.failures > 0) os << ", " << f.failures << " failures: " << f.note;
    os << ")\n";
  }
  os << (pass ? "verification passed" : "verification FAILED") << "\n";
  return os.str();
}

VerifyReport RunVerification(const VerifyOptions& options) {
  VerifyReport report;
  Rng rng(options.seed);
  RunDpOracle(report, rng);
  RunMarginalNormalization(report, rng);
  RunAttentionReductions(report, rng);
  RunBetaLogSpace(report, rng);
  RunFdGradients(report, rng, options.inject_gradient_fault);
  RunMetricHandChecks(report);
  return report;
}

}  // namespace segstream
