// segstream/attention.cc
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

#include "segstream/attention.h"

#include <cmath>
#include <sstream>

namespace segstream {

Tensor SegmentMask::ToAdditive() const {
  Tensor m = Tensor::Zeros({n, n});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (!at(i, j)) m.at(i, j) = kMaskValue;
  return m;
}

namespace {

// Prefix sums of log(1 - p_l) with an explicit count of -inf terms so p = 1
// stays exact (beta is exactly zero across such a cut).
struct LogPrefix {
  std::vector<double> fin;  // finite part, length n + 1
  std::vector<int> cuts;    // number of p == 1 entries so far, length n + 1
};

LogPrefix PrefixLog1mP(const std::vector<double>& p) {
  const int n = static_cast<int>(p.size());
  LogPrefix pre;
  pre.fin.assign(n + 1, 0.0);
  pre.cuts.assign(n + 1, 0);
  for (int l = 0; l < n; ++l) {
    SEG_CHECK(p[l] >= 0.0 && p[l] <= 1.0,
              "segmentation probability out of [0, 1]: p[" << l << "] = " << p[l]);
    const double q = 1.0 - p[l];
    pre.fin[l + 1] = pre.fin[l] + (q > 0.0 ? std::log(q) : 0.0);
    pre.cuts[l + 1] = pre.cuts[l] + (q > 0.0 ? 0 : 1);
  }
  return pre;
}

Tensor SameSegmentFromPrefix(const LogPrefix& pre, int n) {
  Tensor beta = Tensor::Zeros({n, n});
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      if (i >= j) {
        beta.at(i, j) = 1.0;
      } else if (pre.cuts[j] == pre.cuts[i]) {
        beta.at(i, j) = std::exp(pre.fin[j] - pre.fin[i]);
      }  // else a certain cut lies in [i, j-1]: probability 0
    }
  }
  return beta;
}

}  // namespace

Tensor SameSegmentProbabilities(const Tensor& p) {
  SEG_CHECK(p.rank() == 1, "same-segment probabilities need a rank-1 p, got "
                               << p.shape_str());
  LogPrefix pre = PrefixLog1mP(p.data);
  return SameSegmentFromPrefix(pre, static_cast<int>(p.data.size()));
}

ad::Value SameSegmentProbabilities(ad::Tape& tape, ad::Value p) {
  const Tensor& tp = tape.Val(p);
  SEG_CHECK(tp.rank() == 1, "same-segment probabilities need a rank-1 p, got "
                                << tp.shape_str());
  const int n = static_cast<int>(tp.data.size());
  Tensor beta = SameSegmentProbabilities(tp);
  return tape.CustomOp(
      "same_segment", std::move(beta), {p},
      [n](const Tensor& grad_out, const std::vector<const Tensor*>& vals,
          const std::vector<Tensor*>& grads) {
        if (grads[0] == nullptr) return;
        const Tensor& pv = *vals[0];
        // d(beta_ij)/d(fin_m) routes +1 to m = j and -1 to m = i; chain into
        // p through fin_m = sum_{l < m} log(1 - p_l).
        LogPrefix pre = PrefixLog1mP(pv.data);
        Tensor beta = SameSegmentFromPrefix(pre, n);
        std::vector<double> gfin(n + 1, 0.0);
        for (int i = 0; i < n; ++i) {
          for (int j = i + 1; j < n; ++j) {
            const double gb = grad_out.at(i, j) * beta.at(i, j);
            if (gb == 0.0) continue;
            gfin[j] += gb;
            gfin[i] -= gb;
          }
        }
        double suffix = 0.0;
        for (int l = n - 1; l >= 0; --l) {
          suffix += gfin[l + 1];
          const double q = 1.0 - pv.data[l];
          if (q > 1e-300) (*grads[0]).data[l] += suffix * (-1.0 / q);
        }
      });
}

Tensor ExpectedSegmentedAttention(const Tensor& alpha, const Tensor& beta) {
  SEG_CHECK(alpha.rank() == 2 && alpha.rows() == alpha.cols(),
            "alpha must be square, got " << alpha.shape_str());
  SEG_CHECK(alpha.same_shape(beta), "alpha " << alpha.shape_str()
                                             << " does not match beta "
                                             << beta.shape_str());
  ad::Tape tape;
  ad::Value a = tape.Constant(alpha);
  ad::Value b = tape.Constant(beta);
  return tape.Val(tape.NormalizeRows(tape.Mul(a, b)));
}

SegmentMask HardSegmentMask(const std::vector<int>& b) {
  const int n = static_cast<int>(b.size());
  std::vector<int> seg = SegmentIds(b);
  SegmentMask mask;
  mask.n = n;
  mask.allowed.assign(static_cast<size_t>(n) * n, 0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (seg[j] <= seg[i]) mask.allowed[static_cast<size_t>(i) * n + j] = 1;
  return mask;
}

SegmentMask CausalMask(int n) {
  SegmentMask mask;
  mask.n = n;
  mask.allowed.assign(static_cast<size_t>(n) * n, 0);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j <= i; ++j) mask.allowed[static_cast<size_t>(i) * n + j] = 1;
  return mask;
}

SegmentMask FullMask(int n) {
  SegmentMask mask;
  mask.n = n;
  mask.allowed.assign(static_cast<size_t>(n) * n, 1);
  return mask;
}

AttentionBlockNames AttentionBlockNames::Make(const std::string& prefix, int num_heads) {
  AttentionBlockNames names;
  for (int h = 0; h < num_heads; ++h) {
    std::ostringstream os;
    os << prefix << ".h" << h;
    const std::string p = os.str();
    names.heads.push_back({p + ".wq", p + ".bq", p + ".wk", p + ".bk", p + ".wv",
                           p + ".bv", p + ".wo"});
  }
  names.bo = prefix + ".bo";
  return names;
}

void InitAttentionParams(ParameterSet& params, const AttentionBlockNames& names,
                         int d_model, Rng& rng) {
  const int num_heads = static_cast<int>(names.heads.size());
  SEG_CHECK(num_heads >= 1 && d_model % num_heads == 0,
            "head count " << num_heads << " must divide d_model " << d_model);
  const int d_head = d_model / num_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(d_model));
  for (const AttentionHeadNames& h : names.heads) {
    params.Insert(h.wq, Tensor::Randn({d_model, d_head}, rng, scale));
    params.Insert(h.bq, Tensor::Zeros({d_head}));
    params.Insert(h.wk, Tensor::Randn({d_model, d_head}, rng, scale));
    params.Insert(h.bk, Tensor::Zeros({d_head}));
    params.Insert(h.wv, Tensor::Randn({d_model, d_head}, rng, scale));
    params.Insert(h.bv, Tensor::Zeros({d_head}));
    params.Insert(h.wo, Tensor::Randn({d_head, d_model}, rng, scale));
  }
  params.Insert(names.bo, Tensor::Zeros({d_model}));
}

ad::Value AttentionBlock(ad::Tape& tape, ad::Value queries, ad::Value keys_values,
                         const std::map<std::string, ad::Value>& params,
                         const AttentionBlockNames& names, ad::Value beta,
                         const Tensor* additive_mask) {
  ad::Value out;
  for (const AttentionHeadNames& h : names.heads) {
    ad::Value q = tape.Add(tape.MatMul(queries, params.at(h.wq)), params.at(h.bq));
    ad::Value k = tape.Add(tape.MatMul(keys_values, params.at(h.wk)), params.at(h.bk));
    ad::Value v = tape.Add(tape.MatMul(keys_values, params.at(h.wv)), params.at(h.bv));
    const int d_head = tape.Val(q).cols();
    ad::Value scores = tape.Scale(tape.MatMul(q, k, false, true),
                                  1.0 / std::sqrt(static_cast<double>(d_head)));
    ad::Value attn = tape.RowSoftmax(scores, additive_mask, beta);
    ad::Value ctx = tape.MatMul(tape.MatMul(attn, v), params.at(h.wo));
    out = out.valid() ? tape.Add(out, ctx) : ctx;
  }
  return tape.Add(out, params.at(names.bo));
}

Tensor EncoderAttention(const FeatureSequence& features, const ParameterSet& params,
                        const AttentionBlockNames& names, AttentionMode mode,
                        const std::vector<double>* p, const std::vector<int>* b) {
  const int n = features.length();
  SEG_CHECK(n > 0, "encoder attention over an empty feature sequence");
  ad::Tape tape;
  std::map<std::string, ad::Value> values;
  for (const AttentionHeadNames& h : names.heads) {
    for (const std::string& nm : {h.wq, h.bq, h.wk, h.bk, h.wv, h.bv, h.wo}) {
      values[nm] = tape.Constant(params.Get(nm));
    }
  }
  values[names.bo] = tape.Constant(params.Get(names.bo));

  ad::Value beta;
  Tensor mask;
  const Tensor* mask_ptr = nullptr;
  switch (mode) {
    case AttentionMode::kExpected:
      SEG_CHECK(p != nullptr, "expected-attention mode needs segmentation probabilities");
      beta = SameSegmentProbabilities(tape, tape.Constant(Tensor::FromVector(*p)));
      break;
    case AttentionMode::kHard:
      SEG_CHECK(b != nullptr, "hard-attention mode needs segmentation decisions");
      mask = HardSegmentMask(*b).ToAdditive();
      mask_ptr = &mask;
      break;
    case AttentionMode::kUni:
      mask = CausalMask(n).ToAdditive();
      mask_ptr = &mask;
      break;
    case AttentionMode::kBi:
      break;
  }
  ad::Value x = tape.Constant(features.frames);
  ad::Value ctx = AttentionBlock(tape, x, x, values, names, beta, mask_ptr);
  return tape.Val(ctx);
}

}  // namespace segstream
