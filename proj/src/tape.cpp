#include "polyadapt/tape.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "polyadapt/error.hpp"

namespace polyadapt {

const Tensor& Var::value() const { return tape_->value_of(id_); }
bool Var::tracked() const { return tape_->needs_grad(id_); }

Var Tape::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Var Tape::leaf(Tensor value) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = true;
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Var Tape::param(const Parameter& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return {this, it->second};
  Node n;
  n.value = p.value;
  n.needs_grad = p.trainable;
  n.param = p.trainable ? &p : nullptr;
  nodes_.push_back(std::move(n));
  param_nodes_.emplace(&p, nodes_.size() - 1);
  return {this, nodes_.size() - 1};
}

Var Tape::record(Tensor value, std::span<const Var> inputs, BackwardFn fn) {
  Node n;
  n.value = std::move(value);
  for (const Var& v : inputs) {
    if (v.tape() != this) throw Error("op mixes variables from different tapes");
    n.needs_grad = n.needs_grad || nodes_[v.id()].needs_grad;
  }
  if (n.needs_grad) n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return {this, nodes_.size() - 1};
}

Tensor& Tape::grad_buffer(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.needs_grad) throw Error("gradient requested for untracked node");
  if (!n.has_grad) {
    n.grad = Tensor(n.value.shape());
    n.has_grad = true;
  }
  return n.grad;
}

void Tape::backward(Var loss, double seed) {
  if (loss.tape() != this) throw Error("backward on a variable from another tape");
  if (backward_done_) throw Error("backward already run on this tape");
  const Tensor& lv = nodes_[loss.id()].value;
  if (lv.size() != 1) throw Error("loss is not a scalar: shape " + shape_string(lv.shape()));
  backward_done_ = true;
  if (!nodes_[loss.id()].needs_grad) return;
  grad_buffer(loss.id())[0] = seed;
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.has_grad && n.backward) n.backward(*this, i);
  }
}

Tensor Tape::grad(Var v) const {
  const Node& n = nodes_[v.id()];
  if (n.has_grad) return n.grad;
  return Tensor(n.value.shape());
}

ParamGrads Tape::param_grads() const {
  ParamGrads out;
  for (const Node& n : nodes_) {
    if (n.param != nullptr && n.has_grad) out.emplace_back(n.param, n.grad);
  }
  return out;
}

std::size_t Tape::allocated_grads() const {
  return static_cast<std::size_t>(
      std::count_if(nodes_.begin(), nodes_.end(), [](const Node& n) { return n.has_grad; }));
}

namespace ad {

namespace {

void accumulate(Tensor& dst, const Tensor& src) {
  auto d = dst.data();
  auto s = src.data();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw Error(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                shape_string(b.shape()));
  }
}

Tensor as_matrix(Tensor t) {
  if (t.ndim() == 2) return t;
  const std::size_t r = t.rows(), c = t.cols();
  return Tensor({r, c}, std::move(t.storage()));
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& tape = *a.tape();
  const Var in[] = {a, b};
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(polyadapt::matmul(a.value(), b.value()), in, [ia, ib](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_out(self);
    if (t.needs_grad(ia)) accumulate(t.grad_buffer(ia), matmul_transposed_b(g, t.value_of(ib)));
    if (t.needs_grad(ib)) accumulate(t.grad_buffer(ib), matmul_transposed_a(t.value_of(ia), g));
  });
}

Var matmul_bt(Var a, Var b) {
  Tape& tape = *a.tape();
  const Var in[] = {a, b};
  const std::size_t ia = a.id(), ib = b.id();
  return tape.record(matmul_transposed_b(a.value(), b.value()), in, [ia, ib](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_out(self);
    if (t.needs_grad(ia)) accumulate(t.grad_buffer(ia), polyadapt::matmul(g, t.value_of(ib)));
    if (t.needs_grad(ib)) accumulate(t.grad_buffer(ib), matmul_transposed_a(g, t.value_of(ia)));
  });
}

Var add(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "add");
  Tensor out = as_matrix(a.value());
  auto o = out.data();
  auto bv = b.value().data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += bv[i];
  const Var in[] = {a, b};
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape()->record(std::move(out), in, [ia, ib](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_out(self);
    if (t.needs_grad(ia)) accumulate(t.grad_buffer(ia), g);
    if (t.needs_grad(ib)) accumulate(t.grad_buffer(ib), g);
  });
}

Var sub(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "sub");
  Tensor out = as_matrix(a.value());
  auto o = out.data();
  auto bv = b.value().data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] -= bv[i];
  const Var in[] = {a, b};
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape()->record(std::move(out), in, [ia, ib](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_out(self);
    if (t.needs_grad(ia)) accumulate(t.grad_buffer(ia), g);
    if (t.needs_grad(ib)) {
      auto d = t.grad_buffer(ib).data();
      auto gs = g.data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] -= gs[i];
    }
  });
}

Var mul(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "mul");
  Tensor out = as_matrix(a.value());
  auto o = out.data();
  auto bv = b.value().data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] *= bv[i];
  const Var in[] = {a, b};
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape()->record(std::move(out), in, [ia, ib](Tape& t, std::size_t self) {
    auto g = t.grad_out(self).data();
    if (t.needs_grad(ia)) {
      auto d = t.grad_buffer(ia).data();
      auto v = t.value_of(ib).data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * v[i];
    }
    if (t.needs_grad(ib)) {
      auto d = t.grad_buffer(ib).data();
      auto v = t.value_of(ia).data();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i] * v[i];
    }
  });
}

Var scale(Var a, double c) {
  Tensor out = as_matrix(a.value());
  for (double& v : out.data()) v *= c;
  const Var in[] = {a};
  const std::size_t ia = a.id();
  return a.tape()->record(std::move(out), in, [ia, c](Tape& t, std::size_t self) {
    auto g = t.grad_out(self).data();
    auto d = t.grad_buffer(ia).data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += c * g[i];
  });
}

Var add_bias(Var x, Var bias) {
  const std::size_t m = x.rows(), n = x.cols();
  if (bias.value().size() != n) {
    throw Error("add_bias: bias of shape " + shape_string(bias.value().shape()) + " for " +
                std::to_string(n) + " columns");
  }
  Tensor out = as_matrix(x.value());
  auto bv = bias.value().data();
  for (std::size_t i = 0; i < m; ++i) {
    auto r = out.row_span(i);
    for (std::size_t j = 0; j < n; ++j) r[j] += bv[j];
  }
  const Var in[] = {x, bias};
  const std::size_t ix = x.id(), ibias = bias.id();
  return x.tape()->record(std::move(out), in, [ix, ibias, m, n](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_out(self);
    if (t.needs_grad(ix)) accumulate(t.grad_buffer(ix), g);
    if (t.needs_grad(ibias)) {
      auto d = t.grad_buffer(ibias).data();
      for (std::size_t i = 0; i < m; ++i) {
        auto r = g.row_span(i);
        for (std::size_t j = 0; j < n; ++j) d[j] += r[j];
      }
    }
  });
}

Var mul_col(Var x, Var col) {
  const std::size_t m = x.rows(), n = x.cols();
  if (col.rows() != m || col.cols() != 1) {
    throw Error("mul_col: column of shape " + shape_string(col.value().shape()) + " for " +
                std::to_string(m) + " rows");
  }
  Tensor out = as_matrix(x.value());
  for (std::size_t i = 0; i < m; ++i) {
    const double c = col.value()[i];
    for (double& v : out.row_span(i)) v *= c;
  }
  const Var in[] = {x, col};
  const std::size_t ix = x.id(), ic = col.id();
  return x.tape()->record(std::move(out), in, [ix, ic, m, n](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_out(self);
    if (t.needs_grad(ix)) {
      Tensor& d = t.grad_buffer(ix);
      const Tensor& c = t.value_of(ic);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) d.at(i, j) += g.at(i, j) * c[i];
    }
    if (t.needs_grad(ic)) {
      Tensor& d = t.grad_buffer(ic);
      const Tensor& xv = t.value_of(ix);
      for (std::size_t i = 0; i < m; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += g.at(i, j) * xv.at(i, j);
        d[i] += s;
      }
    }
  });
}

Var repeat_rows(Var row, std::size_t m) {
  if (row.rows() != 1) throw Error("repeat_rows expects a single row");
  const std::size_t n = row.cols();
  Tensor out = Tensor::zeros(m, n);
  for (std::size_t i = 0; i < m; ++i) std::copy_n(row.value().data().begin(), n, out.row_span(i).begin());
  const Var in[] = {row};
  const std::size_t ir = row.id();
  return row.tape()->record(std::move(out), in, [ir, m, n](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_out(self);
    auto d = t.grad_buffer(ir).data();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) d[j] += g.at(i, j);
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw Error("concat_cols of nothing");
  const std::size_t m = parts[0].rows();
  std::vector<std::size_t> widths, ids;
  std::size_t total = 0;
  for (const Var& p : parts) {
    if (p.rows() != m) throw Error("concat_cols: row count mismatch");
    widths.push_back(p.cols());
    ids.push_back(p.id());
    total += p.cols();
  }
  Tensor out = Tensor::zeros(m, total);
  std::size_t off = 0;
  for (const Var& p : parts) {
    const std::size_t w = p.cols();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < w; ++j) out.at(i, off + j) = p.value().at(i, j);
    off += w;
  }
  return parts[0].tape()->record(
      std::move(out), parts, [widths, ids, m](Tape& t, std::size_t self) {
        const Tensor& g = t.grad_out(self);
        std::size_t off = 0;
        for (std::size_t k = 0; k < ids.size(); ++k) {
          if (t.needs_grad(ids[k])) {
            Tensor& d = t.grad_buffer(ids[k]);
            for (std::size_t i = 0; i < m; ++i)
              for (std::size_t j = 0; j < widths[k]; ++j) d.at(i, j) += g.at(i, off + j);
          }
          off += widths[k];
        }
      });
}

Var slice_cols(Var x, std::size_t start, std::size_t len) {
  const std::size_t m = x.rows(), n = x.cols();
  if (start + len > n) throw Error("slice_cols out of range");
  Tensor out = Tensor::zeros(m, len);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < len; ++j) out.at(i, j) = x.value().at(i, start + j);
  const Var in[] = {x};
  const std::size_t ix = x.id();
  return x.tape()->record(std::move(out), in, [ix, start, len, m](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_out(self);
    Tensor& d = t.grad_buffer(ix);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < len; ++j) d.at(i, start + j) += g.at(i, j);
  });
}

Var rowdot(Var a, Var b) {
  require_same_shape(a.value(), b.value(), "rowdot");
  const std::size_t m = a.rows(), n = a.cols();
  Tensor out = Tensor::zeros(m, 1);
  for (std::size_t i = 0; i < m; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += a.value().at(i, j) * b.value().at(i, j);
    out[i] = s;
  }
  const Var in[] = {a, b};
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape()->record(std::move(out), in, [ia, ib, m, n](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_out(self);
    if (t.needs_grad(ia)) {
      Tensor& d = t.grad_buffer(ia);
      const Tensor& bv = t.value_of(ib);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) d.at(i, j) += g[i] * bv.at(i, j);
    }
    if (t.needs_grad(ib)) {
      Tensor& d = t.grad_buffer(ib);
      const Tensor& av = t.value_of(ia);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) d.at(i, j) += g[i] * av.at(i, j);
    }
  });
}

Var transpose(Var a) {
  const Var in[] = {a};
  const std::size_t ia = a.id();
  return a.tape()->record(polyadapt::transpose(a.value()), in, [ia](Tape& t, std::size_t self) {
    accumulate(t.grad_buffer(ia), polyadapt::transpose(t.grad_out(self)));
  });
}

Var gelu(Var x) {
  Tensor out = as_matrix(x.value());
  for (double& v : out.data()) v = 0.5 * v * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
  const Var in[] = {x};
  const std::size_t ix = x.id();
  return x.tape()->record(std::move(out), in, [ix](Tape& t, std::size_t self) {
    auto g = t.grad_out(self).data();
    auto xv = t.value_of(ix).data();
    auto d = t.grad_buffer(ix).data();
    constexpr double inv_sqrt_2pi = 0.3989422804014327;
    for (std::size_t i = 0; i < d.size(); ++i) {
      const double v = xv[i];
      const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
      const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
      d[i] += g[i] * (cdf + v * pdf);
    }
  });
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
  const std::size_t m = x.rows(), n = x.cols();
  if (gamma.value().size() != n || beta.value().size() != n) throw Error("layer_norm: gain/bias width mismatch");
  Tensor out = Tensor::zeros(m, n);
  Tensor xhat = Tensor::zeros(m, n);
  std::vector<double> inv_std(m);
  for (std::size_t i = 0; i < m; ++i) {
    auto r = x.value().row_span(i);
    double mu = 0.0;
    for (double v : r) mu += v;
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (double v : r) var += (v - mu) * (v - mu);
    var /= static_cast<double>(n);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      xhat.at(i, j) = (r[j] - mu) * inv_std[i];
      out.at(i, j) = gamma.value()[j] * xhat.at(i, j) + beta.value()[j];
    }
  }
  const Var in[] = {x, gamma, beta};
  const std::size_t ix = x.id(), ig = gamma.id(), ib = beta.id();
  return x.tape()->record(
      std::move(out), in,
      [ix, ig, ib, m, n, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& t, std::size_t self) {
        const Tensor& g = t.grad_out(self);
        if (t.needs_grad(ig)) {
          auto d = t.grad_buffer(ig).data();
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) d[j] += g.at(i, j) * xhat.at(i, j);
        }
        if (t.needs_grad(ib)) {
          auto d = t.grad_buffer(ib).data();
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) d[j] += g.at(i, j);
        }
        if (t.needs_grad(ix)) {
          Tensor& d = t.grad_buffer(ix);
          const Tensor& gam = t.value_of(ig);
          const double nn = static_cast<double>(n);
          std::vector<double> dxhat(n);
          for (std::size_t i = 0; i < m; ++i) {
            double s1 = 0.0, s2 = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
              dxhat[j] = g.at(i, j) * gam[j];
              s1 += dxhat[j];
              s2 += dxhat[j] * xhat.at(i, j);
            }
            for (std::size_t j = 0; j < n; ++j) {
              d.at(i, j) += inv_std[i] / nn * (nn * dxhat[j] - s1 - xhat.at(i, j) * s2);
            }
          }
        }
      });
}

Var softmax_rows(Var x) {
  const std::size_t m = x.rows(), n = x.cols();
  Tensor out = Tensor::zeros(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    const auto p = softmax_stable(x.value().row_span(i));
    std::copy(p.begin(), p.end(), out.row_span(i).begin());
  }
  const Var in[] = {x};
  const std::size_t ix = x.id();
  return x.tape()->record(std::move(out), in, [ix, m, n](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_out(self);
    const Tensor& y = t.value_of(self);
    Tensor& d = t.grad_buffer(ix);
    for (std::size_t i = 0; i < m; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += g.at(i, j) * y.at(i, j);
      for (std::size_t j = 0; j < n; ++j) d.at(i, j) += y.at(i, j) * (g.at(i, j) - dot);
    }
  });
}

Var gather_rows(Var table, std::span<const int> ids) {
  const std::size_t vocab = table.rows(), n = table.cols();
  std::vector<int> idv(ids.begin(), ids.end());
  Tensor out = Tensor::zeros(idv.size(), n);
  for (std::size_t i = 0; i < idv.size(); ++i) {
    if (idv[i] < 0 || static_cast<std::size_t>(idv[i]) >= vocab) {
      throw Error("gather_rows: id " + std::to_string(idv[i]) + " out of range [0, " +
                  std::to_string(vocab) + ")");
    }
    auto src = table.value().row_span(static_cast<std::size_t>(idv[i]));
    std::copy(src.begin(), src.end(), out.row_span(i).begin());
  }
  const Var in[] = {table};
  const std::size_t it = table.id();
  return table.tape()->record(std::move(out), in, [it, idv = std::move(idv), n](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_out(self);
    Tensor& d = t.grad_buffer(it);
    for (std::size_t i = 0; i < idv.size(); ++i) {
      auto dst = d.row_span(static_cast<std::size_t>(idv[i]));
      auto src = g.row_span(i);
      for (std::size_t j = 0; j < n; ++j) dst[j] += src[j];
    }
  });
}

Var sum(Var x) {
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  const Var in[] = {x};
  const std::size_t ix = x.id();
  return x.tape()->record(Tensor::scalar(s), in, [ix](Tape& t, std::size_t self) {
    const double g = t.grad_out(self)[0];
    for (double& v : t.grad_buffer(ix).data()) v += g;
  });
}

Var mean(Var x) {
  const std::size_t n = x.value().size();
  if (n == 0) throw Error("mean of empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(n));
}

Var linear(Var x, Var w, Var b) { return add_bias(matmul(x, w), b); }

Var cross_entropy(Var logits, std::span<const int> gold, const std::vector<bool>& mask) {
  const double loss = polyadapt::cross_entropy(logits.value(), gold, mask);
  std::vector<int> g(gold.begin(), gold.end());
  std::vector<bool> mk(mask.begin(), mask.end());
  const Var in[] = {logits};
  const std::size_t il = logits.id();
  return logits.tape()->record(
      Tensor::scalar(loss), in, [il, g = std::move(g), mk = std::move(mk)](Tape& t, std::size_t self) {
        const double seed = t.grad_out(self)[0];
        const Tensor& z = t.value_of(il);
        Tensor& d = t.grad_buffer(il);
        std::size_t count = 0;
        for (bool b : mk) count += b ? 1 : 0;
        const double w = seed / static_cast<double>(count);
        for (std::size_t i = 0; i < z.rows(); ++i) {
          if (!mk[i]) continue;
          const auto p = softmax_stable(z.row_span(i));
          auto dr = d.row_span(i);
          for (std::size_t j = 0; j < p.size(); ++j) dr[j] += w * p[j];
          dr[static_cast<std::size_t>(g[i])] -= w;
        }
      });
}

Var mean_row_entropy(Var logits) {
  const std::size_t m = logits.rows(), n = logits.cols();
  if (m == 0 || n == 0) throw Error("entropy of empty logits");
  Tensor probs = Tensor::zeros(m, n), logp = Tensor::zeros(m, n);
  std::vector<double> row_h(m);
  double total = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const auto lp = log_softmax_stable(logits.value().row_span(i));
    double h = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      logp.at(i, j) = lp[j];
      probs.at(i, j) = std::exp(lp[j]);
      h -= probs.at(i, j) * lp[j];
    }
    row_h[i] = h;
    total += h;
  }
  const Var in[] = {logits};
  const std::size_t il = logits.id();
  return logits.tape()->record(
      Tensor::scalar(total / static_cast<double>(m)), in,
      [il, m, n, probs = std::move(probs), logp = std::move(logp), row_h = std::move(row_h)](Tape& t,
                                                                                              std::size_t self) {
        const double w = t.grad_out(self)[0] / static_cast<double>(m);
        Tensor& d = t.grad_buffer(il);
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j)
            d.at(i, j) -= w * probs.at(i, j) * (logp.at(i, j) + row_h[i]);
      });
}

}  // namespace ad

}  // namespace polyadapt
