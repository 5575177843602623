// segstream/tape.cc
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

#include "segstream/tape.h"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

namespace segstream {
namespace ad {

namespace {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// out += op(a) * op(b)
void GemmAcc(Tensor& out, const Tensor& a, const Tensor& b, bool trans_a,
             bool trans_b) {
  Eigen::Map<const Mat> ma(a.data.data(), a.rows(), a.cols());
  Eigen::Map<const Mat> mb(b.data.data(), b.rows(), b.cols());
  Eigen::Map<Mat> mo(out.data.data(), out.rows(), out.cols());
  if (!trans_a && !trans_b) {
    mo.noalias() += ma * mb;
  } else if (trans_a && !trans_b) {
    mo.noalias() += ma.transpose() * mb;
  } else if (!trans_a && trans_b) {
    mo.noalias() += ma * mb.transpose();
  } else {
    mo.noalias() += ma.transpose() * mb.transpose();
  }
}

}  // namespace

Tape::Node& Tape::node(Value v) {
  SEG_CHECK(v.id >= 0 && v.id < static_cast<int>(nodes_.size()),
            "invalid tape value id " << v.id);
  return nodes_[v.id];
}

const Tape::Node& Tape::node(Value v) const {
  SEG_CHECK(v.id >= 0 && v.id < static_cast<int>(nodes_.size()),
            "invalid tape value id " << v.id);
  return nodes_[v.id];
}

Value Tape::AddNode(Tensor value, std::vector<int> parents,
                    std::function<void(Tape&, int)> backward) {
  SEG_CHECK(value.all_finite(),
            "non-finite values in tape node " << nodes_.size() << " of shape "
                                              << value.shape_str());
  Node n;
  n.value = std::move(value);
  n.parents = std::move(parents);
  for (int p : n.parents) {
    if (nodes_[p].requires_grad) n.requires_grad = true;
  }
  if (n.requires_grad) {
    n.grad = Tensor::Zeros(n.value.shape);
    n.backward = std::move(backward);
  }
  nodes_.push_back(std::move(n));
  return Value{static_cast<int>(nodes_.size()) - 1};
}

Value Tape::Constant(Tensor t) {
  SEG_CHECK(t.all_finite(), "non-finite constant of shape " << t.shape_str());
  Node n;
  n.value = std::move(t);
  nodes_.push_back(std::move(n));
  return Value{static_cast<int>(nodes_.size()) - 1};
}

Value Tape::Parameter(Tensor t) {
  SEG_CHECK(t.all_finite(), "non-finite parameter of shape " << t.shape_str());
  Node n;
  n.value = std::move(t);
  n.requires_grad = true;
  n.grad = Tensor::Zeros(n.value.shape);
  nodes_.push_back(std::move(n));
  return Value{static_cast<int>(nodes_.size()) - 1};
}

void Tape::Accumulate(int id, const Tensor& delta) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return;
  SEG_CHECK(delta.shape == n.grad.shape, "gradient shape mismatch: "
                                             << delta.shape_str() << " vs "
                                             << n.grad.shape_str());
  for (size_t i = 0; i < delta.data.size(); ++i) n.grad.data[i] += delta.data[i];
  n.grad_touched = true;
}

const Tensor& Tape::Val(Value v) const { return node(v).value; }

const Tensor& Tape::Grad(Value v) const {
  const Node& n = node(v);
  SEG_CHECK(n.requires_grad, "gradient requested for a node that does not track one");
  return n.grad;
}

bool Tape::RequiresGrad(Value v) const { return node(v).requires_grad; }

void Tape::Backward(Value loss) {
  SEG_CHECK(!backward_done_, "Backward() may be called once per tape");
  backward_done_ = true;
  Node& l = node(loss);
  SEG_CHECK(l.value.numel() == 1,
            "gradient requested for non-scalar loss of shape " << l.value.shape_str());
  if (!l.requires_grad) return;  // constant loss: all gradients are zero
  l.grad.data[0] = 1.0;
  l.grad_touched = true;
  for (int id = loss.id; id >= 0; --id) {
    Node& n = nodes_[id];
    if (n.requires_grad && n.grad_touched && n.backward) n.backward(*this, id);
  }
}

// ---------------------------------------------------------------------------
// Elementwise arithmetic
// ---------------------------------------------------------------------------

Value Tape::Add(Value a, Value b) {
  const Tensor& ta = Val(a);
  const Tensor& tb = Val(b);
  if (ta.same_shape(tb)) {
    Tensor out = ta;
    for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += tb.data[i];
    return AddNode(std::move(out), {a.id, b.id}, [pa = a.id, pb = b.id](Tape& t, int id) {
      const Tensor& g = t.nodes_[id].grad;
      t.Accumulate(pa, g);
      t.Accumulate(pb, g);
    });
  }
  // Rank-1 rhs broadcast over the rows of a rank-2 lhs.
  SEG_CHECK(ta.rank() == 2 && tb.rank() == 1 && tb.shape[0] == ta.cols(),
            "add shape mismatch: " << ta.shape_str() << " vs " << tb.shape_str());
  Tensor out = ta;
  for (int i = 0; i < ta.rows(); ++i)
    for (int j = 0; j < ta.cols(); ++j) out.at(i, j) += tb.data[j];
  return AddNode(std::move(out), {a.id, b.id}, [pa = a.id, pb = b.id](Tape& t, int id) {
    const Tensor& g = t.nodes_[id].grad;
    t.Accumulate(pa, g);
    Node& nb = t.nodes_[pb];
    if (nb.requires_grad) {
      for (int i = 0; i < g.rows(); ++i)
        for (int j = 0; j < g.cols(); ++j) nb.grad.data[j] += g.at(i, j);
      nb.grad_touched = true;
    }
  });
}

Value Tape::Sub(Value a, Value b) {
  const Tensor& ta = Val(a);
  const Tensor& tb = Val(b);
  SEG_CHECK(ta.same_shape(tb), "sub shape mismatch: " << ta.shape_str() << " vs "
                                                      << tb.shape_str());
  Tensor out = ta;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] -= tb.data[i];
  return AddNode(std::move(out), {a.id, b.id}, [pa = a.id, pb = b.id](Tape& t, int id) {
    const Tensor& g = t.nodes_[id].grad;
    t.Accumulate(pa, g);
    Node& nb = t.nodes_[pb];
    if (nb.requires_grad) {
      for (size_t i = 0; i < g.data.size(); ++i) nb.grad.data[i] -= g.data[i];
      nb.grad_touched = true;
    }
  });
}

Value Tape::Mul(Value a, Value b) {
  const Tensor& ta = Val(a);
  const Tensor& tb = Val(b);
  SEG_CHECK(ta.same_shape(tb), "mul shape mismatch: " << ta.shape_str() << " vs "
                                                      << tb.shape_str());
  Tensor out = ta;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] *= tb.data[i];
  return AddNode(std::move(out), {a.id, b.id}, [pa = a.id, pb = b.id](Tape& t, int id) {
    const Tensor& g = t.nodes_[id].grad;
    Node& na = t.nodes_[pa];
    Node& nb = t.nodes_[pb];
    if (na.requires_grad) {
      for (size_t i = 0; i < g.data.size(); ++i)
        na.grad.data[i] += g.data[i] * nb.value.data[i];
      na.grad_touched = true;
    }
    if (nb.requires_grad) {
      for (size_t i = 0; i < g.data.size(); ++i)
        nb.grad.data[i] += g.data[i] * na.value.data[i];
      nb.grad_touched = true;
    }
  });
}

Value Tape::Scale(Value a, double c) {
  Tensor out = Val(a);
  for (double& x : out.data) x *= c;
  return AddNode(std::move(out), {a.id}, [pa = a.id, c](Tape& t, int id) {
    const Tensor& g = t.nodes_[id].grad;
    Node& na = t.nodes_[pa];
    if (na.requires_grad) {
      for (size_t i = 0; i < g.data.size(); ++i) na.grad.data[i] += c * g.data[i];
      na.grad_touched = true;
    }
  });
}

Value Tape::AddScalar(Value a, double c) {
  Tensor out = Val(a);
  for (double& x : out.data) x += c;
  return AddNode(std::move(out), {a.id},
                 [pa = a.id](Tape& t, int id) { t.Accumulate(pa, t.nodes_[id].grad); });
}

// ---------------------------------------------------------------------------
// Elementwise functions
// ---------------------------------------------------------------------------

Value Tape::Unary(Value a, Tensor out,
                  std::function<void(const Tensor&, const Tensor&, const Tensor&, Tensor&)> bw) {
  return AddNode(std::move(out), {a.id}, [pa = a.id, bw = std::move(bw)](Tape& t, int id) {
    Node& n = t.nodes_[id];
    Node& na = t.nodes_[pa];
    if (!na.requires_grad) return;
    bw(n.value, n.grad, na.value, na.grad);
    na.grad_touched = true;
  });
}

Value Tape::Sigmoid(Value a) {
  Tensor out = Val(a);
  for (double& x : out.data) x = 1.0 / (1.0 + std::exp(-x));
  return Unary(a, std::move(out), [](const Tensor& y, const Tensor& gy, const Tensor&, Tensor& gx) {
    for (size_t i = 0; i < gy.data.size(); ++i)
      gx.data[i] += gy.data[i] * y.data[i] * (1.0 - y.data[i]);
  });
}

Value Tape::Tanh(Value a) {
  Tensor out = Val(a);
  for (double& x : out.data) x = std::tanh(x);
  return Unary(a, std::move(out), [](const Tensor& y, const Tensor& gy, const Tensor&, Tensor& gx) {
    for (size_t i = 0; i < gy.data.size(); ++i)
      gx.data[i] += gy.data[i] * (1.0 - y.data[i] * y.data[i]);
  });
}

Value Tape::Exp(Value a) {
  Tensor out = Val(a);
  for (double& x : out.data) x = std::exp(x);
  return Unary(a, std::move(out), [](const Tensor& y, const Tensor& gy, const Tensor&, Tensor& gx) {
    for (size_t i = 0; i < gy.data.size(); ++i) gx.data[i] += gy.data[i] * y.data[i];
  });
}

Value Tape::Log(Value a) {
  Tensor out = Val(a);
  for (double& x : out.data) x = std::log(x);
  return Unary(a, std::move(out), [](const Tensor&, const Tensor& gy, const Tensor& x, Tensor& gx) {
    for (size_t i = 0; i < gy.data.size(); ++i) gx.data[i] += gy.data[i] / x.data[i];
  });
}

Value Tape::Abs(Value a) {
  Tensor out = Val(a);
  for (double& x : out.data) x = std::fabs(x);
  return Unary(a, std::move(out), [](const Tensor&, const Tensor& gy, const Tensor& x, Tensor& gx) {
    for (size_t i = 0; i < gy.data.size(); ++i) {
      double s = x.data[i] > 0 ? 1.0 : (x.data[i] < 0 ? -1.0 : 0.0);
      gx.data[i] += gy.data[i] * s;
    }
  });
}

Value Tape::Clamp(Value a, double lo, double hi) {
  const Tensor& x = Val(a);
  Tensor out = x;
  for (double& v : out.data) v = std::min(hi, std::max(lo, v));
  return Unary(a, std::move(out), [lo, hi](const Tensor&, const Tensor& gy, const Tensor& x, Tensor& gx) {
    for (size_t i = 0; i < gy.data.size(); ++i) {
      if (x.data[i] > lo && x.data[i] < hi) gx.data[i] += gy.data[i];
    }
  });
}

// ---------------------------------------------------------------------------
// Linear algebra and NN blocks
// ---------------------------------------------------------------------------

Value Tape::MatMul(Value a, Value b, bool trans_a, bool trans_b) {
  Tensor out = segstream::MatMul(Val(a), Val(b), trans_a, trans_b);
  return AddNode(std::move(out), {a.id, b.id},
                 [pa = a.id, pb = b.id, trans_a, trans_b](Tape& t, int id) {
    const Tensor& g = t.nodes_[id].grad;
    Node& na = t.nodes_[pa];
    Node& nb = t.nodes_[pb];
    if (na.requires_grad) {
      if (!trans_a && !trans_b) GemmAcc(na.grad, g, nb.value, false, true);
      else if (trans_a && !trans_b) GemmAcc(na.grad, nb.value, g, false, true);
      else if (!trans_a && trans_b) GemmAcc(na.grad, g, nb.value, false, false);
      else GemmAcc(na.grad, nb.value, g, true, true);
      na.grad_touched = true;
    }
    if (nb.requires_grad) {
      if (!trans_a && !trans_b) GemmAcc(nb.grad, na.value, g, true, false);
      else if (trans_a && !trans_b) GemmAcc(nb.grad, na.value, g, false, false);
      else if (!trans_a && trans_b) GemmAcc(nb.grad, g, na.value, true, false);
      else GemmAcc(nb.grad, g, na.value, true, true);
      nb.grad_touched = true;
    }
  });
}

Value Tape::RowSoftmax(Value logits, const Tensor* additive_mask, Value reweight) {
  const Tensor& z = Val(logits);
  SEG_CHECK(z.rank() == 2, "softmax needs a rank-2 input, got " << z.shape_str());
  if (additive_mask != nullptr) {
    SEG_CHECK(additive_mask->same_shape(z),
              "softmax mask shape " << additive_mask->shape_str()
                                    << " does not match logits " << z.shape_str());
  }
  const int n = z.rows(), m = z.cols();
  Tensor out = Tensor::Zeros({n, m});
  for (int i = 0; i < n; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < m; ++j) {
      double v = z.at(i, j) + (additive_mask ? additive_mask->at(i, j) : 0.0);
      mx = std::max(mx, v);
    }
    double s = 0.0;
    for (int j = 0; j < m; ++j) {
      double v = z.at(i, j) + (additive_mask ? additive_mask->at(i, j) : 0.0);
      out.at(i, j) = std::exp(v - mx);
      s += out.at(i, j);
    }
    for (int j = 0; j < m; ++j) out.at(i, j) /= s;
  }
  Value soft = AddNode(std::move(out), {logits.id}, [pz = logits.id](Tape& t, int id) {
    Node& n = t.nodes_[id];
    Node& nz = t.nodes_[pz];
    if (!nz.requires_grad) return;
    const Tensor& y = n.value;
    const Tensor& gy = n.grad;
    for (int i = 0; i < y.rows(); ++i) {
      double dot = 0.0;
      for (int j = 0; j < y.cols(); ++j) dot += gy.at(i, j) * y.at(i, j);
      for (int j = 0; j < y.cols(); ++j)
        nz.grad.at(i, j) += y.at(i, j) * (gy.at(i, j) - dot);
    }
    nz.grad_touched = true;
  });
  if (!reweight.valid()) return soft;
  return NormalizeRows(Mul(soft, reweight));
}

Value Tape::NormalizeRows(Value a) {
  const Tensor& x = Val(a);
  SEG_CHECK(x.rank() == 2, "row normalization needs a rank-2 input, got " << x.shape_str());
  Tensor out = x;
  for (int i = 0; i < x.rows(); ++i) {
    double r = 0.0;
    for (int j = 0; j < x.cols(); ++j) r += x.at(i, j);
    SEG_CHECK(r > 0.0, "row " << i << " sums to " << r << "; cannot renormalize");
    for (int j = 0; j < x.cols(); ++j) out.at(i, j) /= r;
  }
  return AddNode(std::move(out), {a.id}, [pa = a.id](Tape& t, int id) {
    Node& n = t.nodes_[id];
    Node& na = t.nodes_[pa];
    if (!na.requires_grad) return;
    const Tensor& y = n.value;
    const Tensor& gy = n.grad;
    const Tensor& x = na.value;
    for (int i = 0; i < y.rows(); ++i) {
      double r = 0.0, dot = 0.0;
      for (int j = 0; j < y.cols(); ++j) r += x.at(i, j);
      for (int j = 0; j < y.cols(); ++j) dot += gy.at(i, j) * y.at(i, j);
      for (int j = 0; j < y.cols(); ++j)
        na.grad.at(i, j) += (gy.at(i, j) - dot) / r;
    }
    na.grad_touched = true;
  });
}

Value Tape::LayerNorm(Value x, Value gain, Value bias, double eps) {
  const Tensor& tx = Val(x);
  const Tensor& tg = Val(gain);
  const Tensor& tb = Val(bias);
  SEG_CHECK(tx.rank() == 2, "layer norm input must be rank 2, got " << tx.shape_str());
  SEG_CHECK(tg.rank() == 1 && tg.shape[0] == tx.cols() && tb.same_shape(tg),
            "layer norm gain/bias " << tg.shape_str() << "/" << tb.shape_str()
                                    << " do not match input " << tx.shape_str());
  const int n = tx.rows(), d = tx.cols();
  Tensor out = Tensor::Zeros({n, d});
  Tensor xhat = Tensor::Zeros({n, d});
  std::vector<double> inv_std(n);
  for (int i = 0; i < n; ++i) {
    double mu = 0.0;
    for (int j = 0; j < d; ++j) mu += tx.at(i, j);
    mu /= d;
    double var = 0.0;
    for (int j = 0; j < d; ++j) {
      double c = tx.at(i, j) - mu;
      var += c * c;
    }
    var /= d;
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (int j = 0; j < d; ++j) {
      xhat.at(i, j) = (tx.at(i, j) - mu) * inv_std[i];
      out.at(i, j) = tg.data[j] * xhat.at(i, j) + tb.data[j];
    }
  }
  return AddNode(std::move(out), {x.id, gain.id, bias.id},
                 [px = x.id, pg = gain.id, pb = bias.id, xhat = std::move(xhat),
                  inv_std = std::move(inv_std)](Tape& t, int id) {
    Node& n = t.nodes_[id];
    const Tensor& gy = n.grad;
    Node& nx = t.nodes_[px];
    Node& ng = t.nodes_[pg];
    Node& nb = t.nodes_[pb];
    const int rows = gy.rows(), d = gy.cols();
    if (ng.requires_grad) {
      for (int i = 0; i < rows; ++i)
        for (int j = 0; j < d; ++j) ng.grad.data[j] += gy.at(i, j) * xhat.at(i, j);
      ng.grad_touched = true;
    }
    if (nb.requires_grad) {
      for (int i = 0; i < rows; ++i)
        for (int j = 0; j < d; ++j) nb.grad.data[j] += gy.at(i, j);
      nb.grad_touched = true;
    }
    if (nx.requires_grad) {
      const Tensor& g = ng.value;
      for (int i = 0; i < rows; ++i) {
        double m1 = 0.0, m2 = 0.0;
        for (int j = 0; j < d; ++j) {
          double dxh = gy.at(i, j) * g.data[j];
          m1 += dxh;
          m2 += dxh * xhat.at(i, j);
        }
        m1 /= d;
        m2 /= d;
        for (int j = 0; j < d; ++j) {
          double dxh = gy.at(i, j) * g.data[j];
          nx.grad.at(i, j) += (dxh - m1 - xhat.at(i, j) * m2) * inv_std[i];
        }
      }
      nx.grad_touched = true;
    }
  });
}

Value Tape::Embedding(Value table, const std::vector<int>& ids) {
  const Tensor& tab = Val(table);
  SEG_CHECK(tab.rank() == 2, "embedding table must be rank 2, got " << tab.shape_str());
  SEG_CHECK(!ids.empty(), "embedding lookup with no ids");
  const int d = tab.cols();
  Tensor out = Tensor::Zeros({static_cast<int>(ids.size()), d});
  for (size_t i = 0; i < ids.size(); ++i) {
    SEG_CHECK(ids[i] >= 0 && ids[i] < tab.rows(),
              "embedding id " << ids[i] << " out of range [0, " << tab.rows() << ")");
    for (int j = 0; j < d; ++j) out.at(static_cast<int>(i), j) = tab.at(ids[i], j);
  }
  return AddNode(std::move(out), {table.id}, [pt = table.id, ids](Tape& t, int id) {
    Node& nt = t.nodes_[pt];
    if (!nt.requires_grad) return;
    const Tensor& gy = t.nodes_[id].grad;
    for (size_t i = 0; i < ids.size(); ++i)
      for (int j = 0; j < gy.cols(); ++j)
        nt.grad.at(ids[i], j) += gy.at(static_cast<int>(i), j);
    nt.grad_touched = true;
  });
}

Value Tape::ReduceSum(Value a) {
  const Tensor& x = Val(a);
  double s = 0.0;
  for (double v : x.data) s += v;
  return AddNode(Tensor::Scalar(s), {a.id}, [pa = a.id](Tape& t, int id) {
    Node& na = t.nodes_[pa];
    if (!na.requires_grad) return;
    double g = t.nodes_[id].grad.data[0];
    for (double& v : na.grad.data) v += g;
    na.grad_touched = true;
  });
}

Value Tape::ReduceMean(Value a) {
  const Tensor& x = Val(a);
  double s = 0.0;
  for (double v : x.data) s += v;
  const double inv = 1.0 / static_cast<double>(x.numel());
  return AddNode(Tensor::Scalar(s * inv), {a.id}, [pa = a.id, inv](Tape& t, int id) {
    Node& na = t.nodes_[pa];
    if (!na.requires_grad) return;
    double g = t.nodes_[id].grad.data[0] * inv;
    for (double& v : na.grad.data) v += g;
    na.grad_touched = true;
  });
}

Value Tape::MaxPool1d(Value a, int kernel, int stride) {
  const Tensor& x = Val(a);
  SEG_CHECK(x.rank() == 1, "max pooling needs a rank-1 input, got " << x.shape_str());
  SEG_CHECK(kernel >= 1 && stride >= 1,
            "max pooling kernel/stride must be positive, got " << kernel << "/" << stride);
  const int n = x.shape[0];
  std::vector<double> vals;
  std::vector<int> argmax;
  for (int start = 0; start < n; start += stride) {
    int end = std::min(start + kernel, n);
    int best = start;
    for (int i = start + 1; i < end; ++i) {
      if (x.data[i] > x.data[best]) best = i;  // ties keep the lowest index
    }
    vals.push_back(x.data[best]);
    argmax.push_back(best);
  }
  return AddNode(Tensor::FromVector(vals), {a.id},
                 [pa = a.id, argmax = std::move(argmax)](Tape& t, int id) {
    Node& na = t.nodes_[pa];
    if (!na.requires_grad) return;
    const Tensor& gy = t.nodes_[id].grad;
    for (size_t w = 0; w < argmax.size(); ++w) na.grad.data[argmax[w]] += gy.data[w];
    na.grad_touched = true;
  });
}

Value Tape::CosineMatrix(Value a, Value b) {
  const Tensor& ta = Val(a);
  const Tensor& tb = Val(b);
  SEG_CHECK(ta.rank() == 2 && tb.rank() == 2 && ta.cols() == tb.cols(),
            "cosine similarity needs rank-2 inputs with equal row width, got "
                << ta.shape_str() << " and " << tb.shape_str());
  const int ka = ta.rows(), kb = tb.rows(), d = ta.cols();
  std::vector<double> na(ka), nb(kb);
  for (int i = 0; i < ka; ++i) {
    double s = 0.0;
    for (int j = 0; j < d; ++j) s += ta.at(i, j) * ta.at(i, j);
    na[i] = std::sqrt(s);
    SEG_CHECK(na[i] > 0.0, "cosine similarity undefined: zero-norm row " << i
                               << " in lhs " << ta.shape_str());
  }
  for (int i = 0; i < kb; ++i) {
    double s = 0.0;
    for (int j = 0; j < d; ++j) s += tb.at(i, j) * tb.at(i, j);
    nb[i] = std::sqrt(s);
    SEG_CHECK(nb[i] > 0.0, "cosine similarity undefined: zero-norm row " << i
                               << " in rhs " << tb.shape_str());
  }
  Tensor out = Tensor::Zeros({ka, kb});
  for (int i = 0; i < ka; ++i)
    for (int j = 0; j < kb; ++j) {
      double dot = 0.0;
      for (int l = 0; l < d; ++l) dot += ta.at(i, l) * tb.at(j, l);
      out.at(i, j) = dot / (na[i] * nb[j]);
    }
  return AddNode(std::move(out), {a.id, b.id},
                 [pa = a.id, pb = b.id, na = std::move(na), nb = std::move(nb)](Tape& t, int id) {
    Node& n = t.nodes_[id];
    const Tensor& c = n.value;
    const Tensor& gc = n.grad;
    Node& nat = t.nodes_[pa];
    Node& nbt = t.nodes_[pb];
    const int ka = c.rows(), kb = c.cols(), d = nat.value.cols();
    if (nat.requires_grad) {
      for (int i = 0; i < ka; ++i) {
        for (int j = 0; j < kb; ++j) {
          double g = gc.at(i, j);
          if (g == 0.0) continue;
          double scale_b = 1.0 / (na[i] * nb[j]);
          double scale_a = c.at(i, j) / (na[i] * na[i]);
          for (int l = 0; l < d; ++l)
            nat.grad.at(i, l) += g * (nbt.value.at(j, l) * scale_b -
                                      nat.value.at(i, l) * scale_a);
        }
      }
      nat.grad_touched = true;
    }
    if (nbt.requires_grad) {
      for (int i = 0; i < ka; ++i) {
        for (int j = 0; j < kb; ++j) {
          double g = gc.at(i, j);
          if (g == 0.0) continue;
          double scale_a = 1.0 / (na[i] * nb[j]);
          double scale_b = c.at(i, j) / (nb[j] * nb[j]);
          for (int l = 0; l < d; ++l)
            nbt.grad.at(j, l) += g * (nat.value.at(i, l) * scale_a -
                                      nbt.value.at(j, l) * scale_b);
        }
      }
      nbt.grad_touched = true;
    }
  });
}

Value Tape::CrossEntropy(Value logits, const std::vector<int>& targets, Reduction r) {
  const Tensor& z = Val(logits);
  SEG_CHECK(z.rank() == 2, "cross entropy needs rank-2 logits, got " << z.shape_str());
  SEG_CHECK(static_cast<int>(targets.size()) == z.rows(),
            "cross entropy got " << targets.size() << " targets for " << z.rows()
                                 << " logit rows");
  const int n = z.rows(), v = z.cols();
  Tensor probs = Tensor::Zeros({n, v});
  double loss = 0.0;
  for (int i = 0; i < n; ++i) {
    SEG_CHECK(targets[i] >= 0 && targets[i] < v,
              "cross entropy target " << targets[i] << " out of range [0, " << v << ")");
    double mx = z.at(i, 0);
    for (int j = 1; j < v; ++j) mx = std::max(mx, z.at(i, j));
    double s = 0.0;
    for (int j = 0; j < v; ++j) {
      probs.at(i, j) = std::exp(z.at(i, j) - mx);
      s += probs.at(i, j);
    }
    for (int j = 0; j < v; ++j) probs.at(i, j) /= s;
    loss += mx + std::log(s) - z.at(i, targets[i]);
  }
  const double norm = (r == Reduction::kMean) ? 1.0 / n : 1.0;
  return AddNode(Tensor::Scalar(loss * norm), {logits.id},
                 [pz = logits.id, probs = std::move(probs), targets, norm](Tape& t, int id) {
    Node& nz = t.nodes_[pz];
    if (!nz.requires_grad) return;
    double g = t.nodes_[id].grad.data[0] * norm;
    for (int i = 0; i < probs.rows(); ++i) {
      for (int j = 0; j < probs.cols(); ++j)
        nz.grad.at(i, j) += g * probs.at(i, j);
      nz.grad.at(i, targets[i]) -= g;
    }
    nz.grad_touched = true;
  });
}

Value Tape::Reshape(Value a, std::vector<int> shape) {
  Tensor out(shape, Val(a).data);
  return AddNode(std::move(out), {a.id}, [pa = a.id](Tape& t, int id) {
    Node& na = t.nodes_[pa];
    if (!na.requires_grad) return;
    const Tensor& gy = t.nodes_[id].grad;
    for (size_t i = 0; i < gy.data.size(); ++i) na.grad.data[i] += gy.data[i];
    na.grad_touched = true;
  });
}

Value Tape::CustomOp(const std::string& name, Tensor out, std::vector<Value> parents,
                     CustomBackward backward) {
  std::vector<int> ids;
  ids.reserve(parents.size());
  for (Value p : parents) {
    node(p);  // validates the handle
    ids.push_back(p.id);
  }
  return AddNode(std::move(out), ids,
                 [ids, name, backward = std::move(backward)](Tape& t, int id) {
    std::vector<const Tensor*> vals(ids.size());
    std::vector<Tensor*> grads(ids.size());
    bool any = false;
    for (size_t i = 0; i < ids.size(); ++i) {
      Node& p = t.nodes_[ids[i]];
      vals[i] = &p.value;
      grads[i] = p.requires_grad ? &p.grad : nullptr;
      any = any || p.requires_grad;
    }
    if (!any) return;
    backward(t.nodes_[id].grad, vals, grads);
    for (int pid : ids) {
      if (t.nodes_[pid].requires_grad) t.nodes_[pid].grad_touched = true;
    }
  });
}

}  // namespace ad
}  // namespace segstream
