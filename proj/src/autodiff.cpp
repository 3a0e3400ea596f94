#include "arta/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "arta/kernels.hpp"

namespace arta {

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, false});
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::parameter(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, true});
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, Backprop backprop) {
  return record(std::move(value), std::span<const Var>(inputs.begin(), inputs.size()),
                std::move(backprop));
}

Var Tape::record(Tensor value, std::span<const Var> inputs, Backprop backprop) {
  const bool needs_grad =
      std::any_of(inputs.begin(), inputs.end(), [&](Var v) { return nodes_.at(v.id).requires_grad; });
  Node node{std::move(value), {}, {}, needs_grad};
  if (needs_grad) node.backprop = std::move(backprop);
  nodes_.push_back(std::move(node));
  return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Tensor& Tape::grad_buffer(std::uint32_t id) {
  Node& n = nodes_[id];
  if (n.grad.shape() != n.value.shape()) n.grad = Tensor(n.value.shape(), 0.0);
  return n.grad;
}

Tensor Tape::grad(Var v) const {
  const Node& n = nodes_.at(v.id);
  if (n.grad.shape() == n.value.shape()) return n.grad;
  return Tensor(n.value.shape(), 0.0);
}

void Tape::backward(Var loss) {
  if (!loss.valid() || loss.id >= nodes_.size()) throw ContractError("backward: unknown loss");
  if (nodes_[loss.id].value.size() != 1)
    throw ContractError("backward: loss must be a scalar, got " +
                        shape_string(nodes_[loss.id].value.shape()));
  for (Node& n : nodes_) n.grad = Tensor();
  grad_buffer(loss.id)[0] = 1.0;
  for (std::uint32_t id = loss.id + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.backprop || n.grad.shape() != n.value.shape()) continue;
    n.backprop(*this, id);
  }
}

namespace ops {

namespace {

constexpr double kGeluC = 0.7978845608028654;

}  // namespace

Var matmul(Tape& t, Var a, Var b) {
  Tensor out = matmul(t.value(a), t.value(b));
  return t.record(std::move(out), {a, b}, [a, b](Tape& tp, std::uint32_t self) {
    const Tensor& g = tp.grad_of(self);
    const Tensor& av = tp.value(a);
    const Tensor& bv = tp.value(b);
    const std::size_t m = av.shape()[0], k = av.shape()[1], n = bv.shape()[1];
    if (tp.needs(a)) kernels::gemm_nt(m, n, k, g.data(), bv.data(), tp.grad_buffer(a.id).data());
    if (tp.needs(b)) kernels::gemm_tn(k, m, n, av.data(), g.data(), tp.grad_buffer(b.id).data());
  });
}

Var linear(Tape& t, Var x, Var w, Var bias) {
  Tensor out = linear(t.value(x), t.value(w), t.value(bias));
  return t.record(std::move(out), {x, w, bias}, [x, w, bias](Tape& tp, std::uint32_t self) {
    const Tensor& g = tp.grad_of(self);
    const Tensor& xv = tp.value(x);
    const Tensor& wv = tp.value(w);
    const std::size_t m = xv.rows(), k = wv.shape()[0], n = wv.shape()[1];
    if (tp.needs(x)) kernels::gemm_nt(m, n, k, g.data(), wv.data(), tp.grad_buffer(x.id).data());
    if (tp.needs(w)) kernels::gemm_tn(k, m, n, xv.data(), g.data(), tp.grad_buffer(w.id).data());
    if (tp.needs(bias)) {
      Tensor& gb = tp.grad_buffer(bias.id);
      for (std::size_t r = 0; r < m; ++r) kernels::axpy(1.0, g.row(r), gb.data());
    }
  });
}

Var add(Tape& t, Var a, Var b) {
  Tensor out = add(t.value(a), t.value(b));
  return t.record(std::move(out), {a, b}, [a, b](Tape& tp, std::uint32_t self) {
    const Tensor& g = tp.grad_of(self);
    if (tp.needs(a)) kernels::axpy(1.0, g.data(), tp.grad_buffer(a.id).data());
    if (tp.needs(b)) kernels::axpy(1.0, g.data(), tp.grad_buffer(b.id).data());
  });
}

Var add_row(Tape& t, Var x, Var row) {
  Tensor out = add_row(t.value(x), t.value(row));
  return t.record(std::move(out), {x, row}, [x, row](Tape& tp, std::uint32_t self) {
    const Tensor& g = tp.grad_of(self);
    if (tp.needs(x)) kernels::axpy(1.0, g.data(), tp.grad_buffer(x.id).data());
    if (tp.needs(row)) {
      Tensor& gr = tp.grad_buffer(row.id);
      for (std::size_t r = 0; r < g.rows(); ++r) kernels::axpy(1.0, g.row(r), gr.data());
    }
  });
}

Var gelu(Tape& t, Var x) {
  Tensor out = gelu(t.value(x));
  return t.record(std::move(out), {x}, [x](Tape& tp, std::uint32_t self) {
    const Tensor& g = tp.grad_of(self);
    const Tensor& xv = tp.value(x);
    Tensor& gx = tp.grad_buffer(x.id);
    for (std::size_t i = 0; i < xv.size(); ++i) {
      const double v = xv[i];
      const double th = std::tanh(kGeluC * (v + 0.044715 * v * v * v));
      const double d = 0.5 * (1.0 + th) +
                       0.5 * v * (1.0 - th * th) * kGeluC * (1.0 + 3.0 * 0.044715 * v * v);
      gx[i] += g[i] * d;
    }
  });
}

Var sigmoid(Tape& t, Var x) {
  Tensor out = sigmoid(t.value(x));
  return t.record(std::move(out), {x}, [x](Tape& tp, std::uint32_t self) {
    const Tensor& g = tp.grad_of(self);
    const Tensor& y = tp.value_of(self);
    Tensor& gx = tp.grad_buffer(x.id);
    for (std::size_t i = 0; i < y.size(); ++i) gx[i] += g[i] * y[i] * (1.0 - y[i]);
  });
}

Var layer_norm(Tape& t, Var x, Var gamma, Var beta, double eps) {
  Tensor out = layer_norm(t.value(x), t.value(gamma), t.value(beta), eps);
  return t.record(std::move(out), {x, gamma, beta}, [x, gamma, beta, eps](Tape& tp, std::uint32_t self) {
    const Tensor& g = tp.grad_of(self);
    const Tensor& xv = tp.value(x);
    const Tensor& gm = tp.value(gamma);
    const std::size_t d = xv.cols();
    std::vector<double> xhat(d), gxhat(d);
    Tensor* gx = tp.needs(x) ? &tp.grad_buffer(x.id) : nullptr;
    Tensor* gg = tp.needs(gamma) ? &tp.grad_buffer(gamma.id) : nullptr;
    Tensor* gb = tp.needs(beta) ? &tp.grad_buffer(beta.id) : nullptr;
    for (std::size_t r = 0; r < xv.rows(); ++r) {
      auto in = xv.row(r);
      auto gr = g.row(r);
      double mean = 0;
      for (double v : in) mean += v;
      mean /= static_cast<double>(d);
      double var = 0;
      for (double v : in) var += (v - mean) * (v - mean);
      var /= static_cast<double>(d);
      const double inv = 1.0 / std::sqrt(var + eps);
      double mean_g = 0, mean_gx = 0;
      for (std::size_t c = 0; c < d; ++c) {
        xhat[c] = (in[c] - mean) * inv;
        gxhat[c] = gr[c] * gm[c];
        mean_g += gxhat[c];
        mean_gx += gxhat[c] * xhat[c];
      }
      mean_g /= static_cast<double>(d);
      mean_gx /= static_cast<double>(d);
      if (gx) {
        auto dst = gx->row(r);
        for (std::size_t c = 0; c < d; ++c) dst[c] += inv * (gxhat[c] - mean_g - xhat[c] * mean_gx);
      }
      if (gg)
        for (std::size_t c = 0; c < d; ++c) (*gg)[c] += gr[c] * xhat[c];
      if (gb)
        for (std::size_t c = 0; c < d; ++c) (*gb)[c] += gr[c];
    }
  });
}

Var attention(Tape& t, Var q, Var k, Var v, std::size_t heads, const Neighborhoods& nb) {
  auto probs = std::make_shared<std::vector<double>>();
  Tensor out = attention(t.value(q), t.value(k), t.value(v), heads, nb, probs.get());
  auto lists = std::make_shared<Neighborhoods>(nb);
  return t.record(std::move(out), {q, k, v}, [q, k, v, heads, probs, lists](Tape& tp, std::uint32_t self) {
    const Tensor& g = tp.grad_of(self);
    const Tensor& qv = tp.value(q);
    const Tensor& kv = tp.value(k);
    const Tensor& vv = tp.value(v);
    const std::size_t n = qv.rows(), d = qv.cols(), dh = d / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    Tensor& gq = tp.grad_buffer(q.id);
    Tensor& gk = tp.grad_buffer(k.id);
    Tensor& gv = tp.grad_buffer(v.id);
    std::vector<double> ds;
    for (std::size_t i = 0; i < n; ++i) {
      const auto keys = lists->of(i);
      if (keys.empty()) continue;
      ds.resize(keys.size());
      for (std::size_t h = 0; h < heads; ++h) {
        const double* p = probs->data() + lists->offsets[i] * heads + h * keys.size();
        const auto gout = g.row(i).subspan(h * dh, dh);
        const auto qi = qv.row(i).subspan(h * dh, dh);
        double s = 0;
        for (std::size_t tk = 0; tk < keys.size(); ++tk) {
          const std::uint32_t j = keys[tk];
          const double dp = kernels::dot(gout, vv.row(j).subspan(h * dh, dh));
          kernels::axpy(p[tk], gout, gv.row(j).subspan(h * dh, dh));
          ds[tk] = dp;
          s += p[tk] * dp;
        }
        auto gqi = gq.row(i).subspan(h * dh, dh);
        for (std::size_t tk = 0; tk < keys.size(); ++tk) {
          const std::uint32_t j = keys[tk];
          const double dsc = p[tk] * (ds[tk] - s) * scale;
          kernels::axpy(dsc, kv.row(j).subspan(h * dh, dh), gqi);
          kernels::axpy(dsc, qi, gk.row(j).subspan(h * dh, dh));
        }
      }
    }
  });
}

Var gather_rows(Tape& t, Var x, std::vector<std::int64_t> index) {
  Tensor out = gather_rows(t.value(x), index);
  auto idx = std::make_shared<std::vector<std::int64_t>>(std::move(index));
  return t.record(std::move(out), {x}, [x, idx](Tape& tp, std::uint32_t self) {
    const Tensor& g = tp.grad_of(self);
    Tensor& gx = tp.grad_buffer(x.id);
    for (std::size_t r = 0; r < idx->size(); ++r)
      if ((*idx)[r] >= 0) kernels::axpy(1.0, g.row(r), gx.row(static_cast<std::size_t>((*idx)[r])));
  });
}

Var concat_rows(Tape& t, std::span<const Var> parts) {
  std::vector<const Tensor*> ptrs;
  ptrs.reserve(parts.size());
  for (Var p : parts) ptrs.push_back(&t.value(p));
  Tensor out = concat_rows(ptrs);
  std::vector<Var> inputs(parts.begin(), parts.end());
  return t.record(std::move(out), parts, [inputs](Tape& tp, std::uint32_t self) {
    const Tensor& g = tp.grad_of(self);
    std::size_t offset = 0;
    for (Var p : inputs) {
      const std::size_t count = tp.value(p).size();
      if (tp.needs(p)) {
        Tensor& gp = tp.grad_buffer(p.id);
        for (std::size_t i = 0; i < count; ++i) gp[i] += g[offset + i];
      }
      offset += count;
    }
  });
}

Var concat_cols(Tape& t, Var a, Var b) {
  Tensor out = concat_cols(t.value(a), t.value(b));
  return t.record(std::move(out), {a, b}, [a, b](Tape& tp, std::uint32_t self) {
    const Tensor& g = tp.grad_of(self);
    const std::size_t da = tp.value(a).cols(), db = tp.value(b).cols();
    for (std::size_t r = 0; r < g.rows(); ++r) {
      auto gr = g.row(r);
      if (tp.needs(a)) kernels::axpy(1.0, gr.subspan(0, da), tp.grad_buffer(a.id).row(r));
      if (tp.needs(b)) kernels::axpy(1.0, gr.subspan(da, db), tp.grad_buffer(b.id).row(r));
    }
  });
}

Var slice_rows(Tape& t, Var x, std::size_t begin, std::size_t count) {
  Tensor out = slice_rows(t.value(x), begin, count);
  return t.record(std::move(out), {x}, [x, begin](Tape& tp, std::uint32_t self) {
    const Tensor& g = tp.grad_of(self);
    Tensor& gx = tp.grad_buffer(x.id);
    const std::size_t d = gx.cols();
    for (std::size_t i = 0; i < g.size(); ++i) gx[begin * d + i] += g[i];
  });
}

Var scale(Tape& t, Var x, double factor) {
  Tensor out = t.value(x);
  for (double& v : out.data()) v *= factor;
  return t.record(std::move(out), {x}, [x, factor](Tape& tp, std::uint32_t self) {
    kernels::axpy(factor, tp.grad_of(self).data(), tp.grad_buffer(x.id).data());
  });
}

Var sum(Tape& t, Var x) {
  double s = 0;
  for (double v : t.value(x).data()) s += v;
  return t.record(Tensor::scalar(s), {x}, [x](Tape& tp, std::uint32_t self) {
    const double g = tp.grad_of(self)[0];
    for (double& v : tp.grad_buffer(x.id).data()) v += g;
  });
}

Var sum_squares(Tape& t, Var x) {
  double s = 0;
  for (double v : t.value(x).data()) s += v * v;
  return t.record(Tensor::scalar(s), {x}, [x](Tape& tp, std::uint32_t self) {
    const double g = tp.grad_of(self)[0];
    kernels::axpy(2.0 * g, tp.value(x).data(), tp.grad_buffer(x.id).data());
  });
}

Var add_scalars(Tape& t, Var a, Var b) {
  return t.record(Tensor::scalar(t.value(a).item() + t.value(b).item()), {a, b},
                  [a, b](Tape& tp, std::uint32_t self) {
                    const double g = tp.grad_of(self)[0];
                    if (tp.needs(a)) tp.grad_buffer(a.id)[0] += g;
                    if (tp.needs(b)) tp.grad_buffer(b.id)[0] += g;
                  });
}

Var masked_mse(Tape& t, Var pred, std::span<const double> target,
               std::span<const std::uint8_t> mask) {
  const Tensor& p = t.value(pred);
  if (p.size() != target.size() || p.size() != mask.size())
    throw DimensionError("masked_mse: prediction, target and mask lengths differ");
  std::size_t valid = 0;
  double s = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (!mask[i]) continue;
    ++valid;
    s += (p[i] - target[i]) * (p[i] - target[i]);
  }
  const double inv = valid ? 1.0 / static_cast<double>(valid) : 0.0;
  auto tgt = std::make_shared<std::vector<double>>(target.begin(), target.end());
  auto msk = std::make_shared<std::vector<std::uint8_t>>(mask.begin(), mask.end());
  return t.record(Tensor::scalar(s * inv), {pred}, [pred, tgt, msk, inv](Tape& tp, std::uint32_t self) {
    const double g = tp.grad_of(self)[0];
    const Tensor& pv = tp.value(pred);
    Tensor& gp = tp.grad_buffer(pred.id);
    for (std::size_t i = 0; i < pv.size(); ++i)
      if ((*msk)[i]) gp[i] += g * 2.0 * (pv[i] - (*tgt)[i]) * inv;
  });
}

Var cross_entropy(Tape& t, Var logits, std::span<const std::int32_t> labels) {
  const Tensor& z = t.value(logits);
  if (z.rows() != labels.size()) throw DimensionError("cross_entropy: label count differs from rows");
  const std::size_t c = z.cols();
  auto softmax = std::make_shared<Tensor>(Tensor::matrix(z.rows(), c));
  std::size_t valid = 0;
  double loss = 0;
  for (std::size_t r = 0; r < z.rows(); ++r) {
    if (labels[r] < 0) continue;
    if (static_cast<std::size_t>(labels[r]) >= c) throw DimensionError("cross_entropy: label out of range");
    ++valid;
    auto zr = z.row(r);
    const double mx = *std::max_element(zr.begin(), zr.end());
    double s = 0;
    for (std::size_t j = 0; j < c; ++j) s += std::exp(zr[j] - mx);
    const double lse = mx + std::log(s);
    loss += lse - zr[static_cast<std::size_t>(labels[r])];
    for (std::size_t j = 0; j < c; ++j) softmax->at(r, j) = std::exp(zr[j] - lse);
  }
  const double inv = valid ? 1.0 / static_cast<double>(valid) : 0.0;
  auto lab = std::make_shared<std::vector<std::int32_t>>(labels.begin(), labels.end());
  return t.record(Tensor::scalar(loss * inv), {logits}, [logits, softmax, lab, inv](Tape& tp, std::uint32_t self) {
    const double g = tp.grad_of(self)[0] * inv;
    Tensor& gz = tp.grad_buffer(logits.id);
    for (std::size_t r = 0; r < lab->size(); ++r) {
      if ((*lab)[r] < 0) continue;
      auto dst = gz.row(r);
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += g * softmax->at(r, j);
      dst[static_cast<std::size_t>((*lab)[r])] -= g;
    }
  });
}

}  // namespace ops

}  // namespace arta
