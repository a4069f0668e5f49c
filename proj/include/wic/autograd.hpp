#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "wic/error.hpp"
#include "wic/tensor.hpp"

namespace wic::numgrad {

class Tape;

/// Handle to a value recorded on a Tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

/// Reverse-mode tape. Nodes are appended in evaluation order, so a reverse
/// sweep over the node list is a valid topological order for backprop.
/// Parameter nodes accumulate straight into Parameter::grad.
class Tape {
 public:
  using Backward = std::function<void(Tape&, std::size_t self)>;

  Tape() { nodes_.reserve(256); }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value) {
    Node n;
    n.owned = std::move(value);
    return push(std::move(n));
  }

  // Non-owning constant; `value` must outlive the tape.
  Var frozen(const Tensor& value) {
    Node n;
    n.ref = &value;
    return push(std::move(n));
  }

  Var param(Parameter& p) {
    Node n;
    n.ref = &p.value;
    n.param = &p;
    n.requires_grad = true;
    return push(std::move(n));
  }

  Var record(Tensor value, bool requires_grad, Backward backward) {
    Node n;
    n.owned = std::move(value);
    n.requires_grad = requires_grad;
    if (requires_grad) n.backward = std::move(backward);
    return push(std::move(n));
  }

  const Tensor& value(std::size_t id) const {
    const Node& n = nodes_[id];
    return n.ref ? *n.ref : n.owned;
  }

  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  Tensor& grad(std::size_t id) {
    Node& n = nodes_[id];
    if (n.param) return n.param->grad;
    if (n.grad.empty()) n.grad = Tensor(value(id).shape());
    return n.grad;
  }

  bool has_grad(std::size_t id) const {
    const Node& n = nodes_[id];
    return n.param != nullptr || !n.grad.empty();
  }

  std::size_t size() const { return nodes_.size(); }

  /// Backpropagates from a single-element root. Gradients add onto whatever
  /// parameters already hold; callers zero them once per batch.
  void backward(Var root) {
    if (root.tape != this) throw Error("backward: variable from another tape");
    if (value(root.id).size() != 1) {
      throw DimensionError("backward: root must hold exactly one value, got " +
                           shape_string(value(root.id).shape()));
    }
    if (!nodes_[root.id].requires_grad) return;
    grad(root.id)[0] += 1.0;
    for (std::size_t i = root.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.requires_grad || !n.backward || n.grad.empty()) continue;
      n.backward(*this, i);
    }
  }

 private:
  struct Node {
    Tensor owned;
    const Tensor* ref = nullptr;
    Parameter* param = nullptr;
    bool requires_grad = false;
    Tensor grad;
    Backward backward;
  };

  Var push(Node n) {
    nodes_.push_back(std::move(n));
    return Var{this, nodes_.size() - 1};
  }

  std::vector<Node> nodes_;
};

inline const Tensor& Var::value() const { return tape->value(id); }

namespace detail {

inline Tape& same_tape(std::initializer_list<Var> vars) {
  Tape* t = vars.begin()->tape;
  for (const Var& v : vars) {
    if (v.tape != t || t == nullptr) {
      throw Error("operands recorded on different tapes");
    }
  }
  return *t;
}

inline void require_rank(const Tensor& t, std::size_t r, const char* op) {
  if (t.rank() != r) {
    throw DimensionError(std::string(op) + ": expected rank " +
                         std::to_string(r) + ", got shape " +
                         shape_string(t.shape()));
  }
}

inline void require_same_shape(const Tensor& a, const Tensor& b,
                               const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

inline double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + exp(z)) without overflow.
inline double softplus(double z) {
  return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)));
}

}  // namespace detail

/// a[m×k] · b[k×n]
inline Var matmul(Var a, Var b) {
  Tape& t = detail::same_tape({a, b});
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  detail::require_rank(av, 2, "matmul");
  detail::require_rank(bv, 2, "matmul");
  if (av.cols() != bv.rows()) {
    throw DimensionError("matmul: inner dimensions differ (" +
                         shape_string(av.shape()) + " · " +
                         shape_string(bv.shape()) + ")");
  }
  Tensor out = numgrad::matmul(av, bv);
  const bool rg = t.requires_grad(a.id) || t.requires_grad(b.id);
  return t.record(std::move(out), rg, [ai = a.id, bi = b.id](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& av = t.value(ai);
    const Tensor& bv = t.value(bi);
    const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
    if (t.requires_grad(ai)) {
      Tensor& ga = t.grad(ai);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double s = 0.0;
          for (std::size_t j = 0; j < n; ++j) s += g.at(i, j) * bv.at(p, j);
          ga.at(i, p) += s;
        }
    }
    if (t.requires_grad(bi)) {
      Tensor& gb = t.grad(bi);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double a_ip = av.at(i, p);
          for (std::size_t j = 0; j < n; ++j) gb.at(p, j) += a_ip * g.at(i, j);
        }
    }
  });
}

/// Fully-connected layer: x[B×in] · w[out×in]ᵀ + b[out] → [B×out].
inline Var linear(Var x, Var w, Var b) {
  Tape& t = detail::same_tape({x, w, b});
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  const Tensor& bv = b.value();
  detail::require_rank(xv, 2, "linear");
  detail::require_rank(wv, 2, "linear");
  detail::require_rank(bv, 1, "linear");
  if (xv.cols() != wv.cols() || bv.size() != wv.rows()) {
    throw DimensionError("linear: input " + shape_string(xv.shape()) +
                         " incompatible with weight " +
                         shape_string(wv.shape()) + " and bias " +
                         shape_string(bv.shape()));
  }
  const std::size_t batch = xv.rows(), in = xv.cols(), out = wv.rows();
  Tensor y({batch, out});
  for (std::size_t r = 0; r < batch; ++r) {
    const auto xr = xv.row(r);
    for (std::size_t o = 0; o < out; ++o) {
      const auto wr = wv.row(o);
      double s = bv[o];
      for (std::size_t i = 0; i < in; ++i) s += xr[i] * wr[i];
      y.at(r, o) = s;
    }
  }
  const bool rg = t.requires_grad(x.id) || t.requires_grad(w.id) ||
                  t.requires_grad(b.id);
  return t.record(std::move(y), rg,
                  [xi = x.id, wi = w.id, bi = b.id](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& xv = t.value(xi);
    const Tensor& wv = t.value(wi);
    const std::size_t batch = xv.rows(), in = xv.cols(), out = wv.rows();
    if (t.requires_grad(xi)) {
      Tensor& gx = t.grad(xi);
      for (std::size_t r = 0; r < batch; ++r)
        for (std::size_t o = 0; o < out; ++o) {
          const double go = g.at(r, o);
          if (go == 0.0) continue;
          const auto wr = wv.row(o);
          auto gxr = gx.row(r);
          for (std::size_t i = 0; i < in; ++i) gxr[i] += go * wr[i];
        }
    }
    if (t.requires_grad(wi)) {
      Tensor& gw = t.grad(wi);
      for (std::size_t r = 0; r < batch; ++r) {
        const auto xr = xv.row(r);
        for (std::size_t o = 0; o < out; ++o) {
          const double go = g.at(r, o);
          if (go == 0.0) continue;
          auto gwr = gw.row(o);
          for (std::size_t i = 0; i < in; ++i) gwr[i] += go * xr[i];
        }
      }
    }
    if (t.requires_grad(bi)) {
      Tensor& gb = t.grad(bi);
      for (std::size_t r = 0; r < batch; ++r)
        for (std::size_t o = 0; o < out; ++o) gb[o] += g.at(r, o);
    }
  });
}

inline Var add(Var a, Var b) {
  Tape& t = detail::same_tape({a, b});
  detail::require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  const bool rg = t.requires_grad(a.id) || t.requires_grad(b.id);
  return t.record(std::move(out), rg, [ai = a.id, bi = b.id](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    for (std::size_t in : {ai, bi}) {
      if (!t.requires_grad(in)) continue;
      Tensor& gi = t.grad(in);
      for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
    }
  });
}

/// x[m×n] + b[n], broadcast over rows.
inline Var add_bias(Var x, Var b) {
  Tape& t = detail::same_tape({x, b});
  const Tensor& xv = x.value();
  const Tensor& bv = b.value();
  detail::require_rank(xv, 2, "add_bias");
  if (bv.rank() != 1 || bv.size() != xv.cols()) {
    throw DimensionError("add_bias: bias " + shape_string(bv.shape()) +
                         " does not match " + shape_string(xv.shape()));
  }
  Tensor out = xv;
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c) out.at(r, c) += bv[c];
  const bool rg = t.requires_grad(x.id) || t.requires_grad(b.id);
  return t.record(std::move(out), rg, [xi = x.id, bi = b.id](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    if (t.requires_grad(xi)) {
      Tensor& gx = t.grad(xi);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    }
    if (t.requires_grad(bi)) {
      Tensor& gb = t.grad(bi);
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < g.cols(); ++c) gb[c] += g.at(r, c);
    }
  });
}

/// x + s for a one-element s, broadcast to every entry.
inline Var add_scalar(Var x, Var s) {
  Tape& t = detail::same_tape({x, s});
  if (s.value().size() != 1) {
    throw DimensionError("add_scalar: expected a single value, got " +
                         shape_string(s.shape()));
  }
  Tensor out = x.value();
  const double sv = s.value()[0];
  for (double& v : out.values()) v += sv;
  const bool rg = t.requires_grad(x.id) || t.requires_grad(s.id);
  return t.record(std::move(out), rg, [xi = x.id, si = s.id](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    if (t.requires_grad(xi)) {
      Tensor& gx = t.grad(xi);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    }
    if (t.requires_grad(si)) {
      double s = 0.0;
      for (double v : g.values()) s += v;
      t.grad(si)[0] += s;
    }
  });
}

/// Elementwise product.
inline Var mul(Var a, Var b) {
  Tape& t = detail::same_tape({a, b});
  detail::require_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  const Tensor& bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  const bool rg = t.requires_grad(a.id) || t.requires_grad(b.id);
  return t.record(std::move(out), rg, [ai = a.id, bi = b.id](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    if (t.requires_grad(ai)) {
      Tensor& ga = t.grad(ai);
      const Tensor& bv = t.value(bi);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (t.requires_grad(bi)) {
      Tensor& gb = t.grad(bi);
      const Tensor& av = t.value(ai);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

inline Var scale(Var x, double c) {
  Tape& t = *x.tape;
  Tensor out = x.value();
  for (double& v : out.values()) v *= c;
  return t.record(std::move(out), t.requires_grad(x.id), [xi = x.id, c](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& gx = t.grad(xi);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += c * g[i];
  });
}

inline Var relu(Var x) {
  Tape& t = *x.tape;
  Tensor out = x.value();
  for (double& v : out.values()) v = numgrad::relu(v);
  return t.record(std::move(out), t.requires_grad(x.id), [xi = x.id](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& xv = t.value(xi);
    Tensor& gx = t.grad(xi);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (xv[i] > 0.0) gx[i] += g[i];
  });
}

/// Softmax over a rank-1 tensor.
inline Var softmax(Var x) {
  Tape& t = *x.tape;
  detail::require_rank(x.value(), 1, "softmax");
  Tensor out = numgrad::softmax(x.value());
  return t.record(std::move(out), t.requires_grad(x.id), [xi = x.id](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& y = t.value(self);
    double dot = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) dot += g[i] * y[i];
    Tensor& gx = t.grad(xi);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += y[i] * (g[i] - dot);
  });
}

/// Independent softmax for each row of a rank-2 tensor.
inline Var softmax_rows(Var x) {
  Tape& t = *x.tape;
  const Tensor& xv = x.value();
  detail::require_rank(xv, 2, "softmax_rows");
  Tensor out(xv.shape());
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    const auto y = numgrad::softmax(xv.row(r));
    std::copy(y.begin(), y.end(), out.row(r).begin());
  }
  return t.record(std::move(out), t.requires_grad(x.id), [xi = x.id](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& y = t.value(self);
    Tensor& gx = t.grad(xi);
    for (std::size_t r = 0; r < y.rows(); ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < y.cols(); ++c) dot += g.at(r, c) * y.at(r, c);
      for (std::size_t c = 0; c < y.cols(); ++c)
        gx.at(r, c) += y.at(r, c) * (g.at(r, c) - dot);
    }
  });
}

/// Mean negative log-likelihood of `golds` under row-wise softmax of
/// logits[B×C]. Returns a one-element tensor.
inline Var cross_entropy_rows(Var logits, std::span<const std::size_t> golds) {
  Tape& t = *logits.tape;
  const Tensor& lv = logits.value();
  detail::require_rank(lv, 2, "cross_entropy");
  if (golds.size() != lv.rows()) {
    throw DimensionError("cross_entropy: " + std::to_string(golds.size()) +
                         " labels for " + std::to_string(lv.rows()) + " rows");
  }
  lv.require_finite("cross_entropy logits");
  Tensor probs(lv.shape());
  double loss = 0.0;
  for (std::size_t r = 0; r < lv.rows(); ++r) {
    if (golds[r] >= lv.cols()) {
      throw LabelError("cross_entropy: label " + std::to_string(golds[r]) +
                       " outside [0, " + std::to_string(lv.cols()) + ")");
    }
    const auto row = lv.row(r);
    const double mx = *std::max_element(row.begin(), row.end());
    double z = 0.0;
    for (double v : row) z += std::exp(v - mx);
    const double log_z = mx + std::log(z);
    loss += log_z - row[golds[r]];
    for (std::size_t c = 0; c < lv.cols(); ++c)
      probs.at(r, c) = std::exp(row[c] - log_z);
  }
  const double batch = static_cast<double>(lv.rows());
  std::vector<std::size_t> labels(golds.begin(), golds.end());
  return t.record(Tensor::scalar(loss / batch), t.requires_grad(logits.id),
                  [li = logits.id, probs = std::move(probs), labels = std::move(labels),
                   batch](Tape& t, std::size_t self) {
    const double g = t.grad(self)[0] / batch;
    Tensor& gl = t.grad(li);
    for (std::size_t r = 0; r < probs.rows(); ++r)
      for (std::size_t c = 0; c < probs.cols(); ++c)
        gl.at(r, c) += g * (probs.at(r, c) - (c == labels[r] ? 1.0 : 0.0));
  });
}

/// Negative log-likelihood of one gold class under softmax(logits).
inline Var cross_entropy(Var logits, std::size_t gold) {
  detail::require_rank(logits.value(), 1, "cross_entropy");
  const std::size_t n = logits.value().size();
  Tape& t = *logits.tape;
  // Row view of the same values; gradient flows back through reshape.
  Var as_row = t.record(logits.value().reshaped({1, n}), t.requires_grad(logits.id),
                        [li = logits.id](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& gl = t.grad(li);
    for (std::size_t i = 0; i < g.size(); ++i) gl[i] += g[i];
  });
  const std::size_t labels[1] = {gold};
  return cross_entropy_rows(as_row, labels);
}

/// Mean binary cross-entropy of sigmoid(z) against 0/1 labels; z is any
/// tensor with one value per label.
inline Var bce_with_logits(Var z, std::span<const std::size_t> labels) {
  Tape& t = *z.tape;
  const Tensor& zv = z.value();
  if (zv.size() != labels.size()) {
    throw DimensionError("bce_with_logits: " + std::to_string(labels.size()) +
                         " labels for " + std::to_string(zv.size()) + " logits");
  }
  zv.require_finite("bce logits");
  double loss = 0.0;
  for (std::size_t i = 0; i < zv.size(); ++i) {
    if (labels[i] > 1) {
      throw LabelError("bce_with_logits: label must be 0 or 1, got " +
                       std::to_string(labels[i]));
    }
    loss += detail::softplus(zv[i]) - static_cast<double>(labels[i]) * zv[i];
  }
  const double n = static_cast<double>(zv.size());
  std::vector<std::size_t> ys(labels.begin(), labels.end());
  return t.record(Tensor::scalar(loss / n), t.requires_grad(z.id),
                  [zi = z.id, ys = std::move(ys), n](Tape& t, std::size_t self) {
    const double g = t.grad(self)[0] / n;
    const Tensor& zv = t.value(zi);
    Tensor& gz = t.grad(zi);
    for (std::size_t i = 0; i < zv.size(); ++i)
      gz[i] += g * (detail::sigmoid(zv[i]) - static_cast<double>(ys[i]));
  });
}

inline Var sum(Var x) {
  Tape& t = *x.tape;
  double s = 0.0;
  for (double v : x.value().values()) s += v;
  return t.record(Tensor::scalar(s), t.requires_grad(x.id), [xi = x.id](Tape& t, std::size_t self) {
    const double g = t.grad(self)[0];
    for (double& v : t.grad(xi).values()) v += g;
  });
}

/// Rows of x[m×n] at `indices`, in order → [k×n]. Doubles as embedding lookup.
inline Var gather_rows(Var x, std::span<const std::size_t> indices) {
  Tape& t = *x.tape;
  const Tensor& xv = x.value();
  detail::require_rank(xv, 2, "gather_rows");
  if (indices.empty()) throw DimensionError("gather_rows: no indices");
  Tensor out({indices.size(), xv.cols()});
  for (std::size_t k = 0; k < indices.size(); ++k) {
    if (indices[k] >= xv.rows()) {
      throw DimensionError("gather_rows: index " + std::to_string(indices[k]) +
                           " out of range for " + std::to_string(xv.rows()) +
                           " rows");
    }
    const auto src = xv.row(indices[k]);
    std::copy(src.begin(), src.end(), out.row(k).begin());
  }
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  return t.record(std::move(out), t.requires_grad(x.id),
                  [xi = x.id, idx = std::move(idx)](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& gx = t.grad(xi);
    for (std::size_t k = 0; k < idx.size(); ++k) {
      auto dst = gx.row(idx[k]);
      const auto src = g.row(k);
      for (std::size_t c = 0; c < src.size(); ++c) dst[c] += src[c];
    }
  });
}

/// Columns [start, start+len) of x[m×n].
inline Var slice_cols(Var x, std::size_t start, std::size_t len) {
  Tape& t = *x.tape;
  const Tensor& xv = x.value();
  detail::require_rank(xv, 2, "slice_cols");
  if (len == 0 || start + len > xv.cols()) {
    throw DimensionError("slice_cols: range out of bounds");
  }
  Tensor out({xv.rows(), len});
  for (std::size_t r = 0; r < xv.rows(); ++r)
    for (std::size_t c = 0; c < len; ++c) out.at(r, c) = xv.at(r, start + c);
  return t.record(std::move(out), t.requires_grad(x.id),
                  [xi = x.id, start](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& gx = t.grad(xi);
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t c = 0; c < g.cols(); ++c) gx.at(r, start + c) += g.at(r, c);
  });
}

/// Side-by-side concatenation of rank-2 tensors with equal row counts.
inline Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat_cols: nothing to concatenate");
  Tape& t = *parts[0].tape;
  const std::size_t rows = parts[0].value().rows();
  std::size_t cols = 0;
  bool rg = false;
  for (const Var& p : parts) {
    if (p.tape != &t) throw Error("operands recorded on different tapes");
    detail::require_rank(p.value(), 2, "concat_cols");
    if (p.value().rows() != rows) throw DimensionError("concat_cols: row counts differ");
    cols += p.value().cols();
    rg = rg || t.requires_grad(p.id);
  }
  Tensor out({rows, cols});
  std::vector<std::size_t> ids;
  std::size_t at = 0;
  for (const Var& p : parts) {
    const Tensor& pv = p.value();
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < pv.cols(); ++c) out.at(r, at + c) = pv.at(r, c);
    at += pv.cols();
    ids.push_back(p.id);
  }
  return t.record(std::move(out), rg, [ids = std::move(ids)](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    std::size_t at = 0;
    for (std::size_t id : ids) {
      const std::size_t w = t.value(id).cols();
      if (t.requires_grad(id)) {
        Tensor& gi = t.grad(id);
        for (std::size_t r = 0; r < g.rows(); ++r)
          for (std::size_t c = 0; c < w; ++c) gi.at(r, c) += g.at(r, at + c);
      }
      at += w;
    }
  });
}

/// Concatenation of rank-1 tensors.
inline Var concat(std::span<const Var> parts) {
  if (parts.empty()) throw DimensionError("concat: nothing to concatenate");
  Tape& t = *parts[0].tape;
  std::vector<double> out;
  std::vector<std::size_t> ids;
  bool rg = false;
  for (const Var& p : parts) {
    if (p.tape != &t) throw Error("operands recorded on different tapes");
    detail::require_rank(p.value(), 1, "concat");
    const auto& v = p.value().values();
    out.insert(out.end(), v.begin(), v.end());
    ids.push_back(p.id);
    rg = rg || t.requires_grad(p.id);
  }
  return t.record(Tensor::vector(std::move(out)), rg,
                  [ids = std::move(ids)](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    std::size_t at = 0;
    for (std::size_t id : ids) {
      const std::size_t n = t.value(id).size();
      if (t.requires_grad(id)) {
        Tensor& gi = t.grad(id);
        for (std::size_t i = 0; i < n; ++i) gi[i] += g[at + i];
      }
      at += n;
    }
  });
}

inline Var concat(std::initializer_list<Var> parts) {
  return concat(std::span<const Var>(parts.begin(), parts.size()));
}

inline Var reshape(Var x, Shape shape) {
  Tape& t = *x.tape;
  Tensor out = x.value().reshaped(std::move(shape));
  return t.record(std::move(out), t.requires_grad(x.id), [xi = x.id](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& gx = t.grad(xi);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

inline Var transpose(Var x) {
  Tape& t = *x.tape;
  const Tensor& xv = x.value();
  detail::require_rank(xv, 2, "transpose");
  Tensor out({xv.cols(), xv.rows()});
  for (std::size_t r = 0; r < xv.rows(); ++r)
    for (std::size_t c = 0; c < xv.cols(); ++c) out.at(c, r) = xv.at(r, c);
  return t.record(std::move(out), t.requires_grad(x.id), [xi = x.id](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    Tensor& gx = t.grad(xi);
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t c = 0; c < g.cols(); ++c) gx.at(c, r) += g.at(r, c);
  });
}

/// Per-row layer normalization with learned gain and bias, both [n].
inline Var layer_norm_rows(Var x, Var gain, Var bias, double eps = 1e-5) {
  Tape& t = detail::same_tape({x, gain, bias});
  const Tensor& xv = x.value();
  detail::require_rank(xv, 2, "layer_norm");
  const std::size_t n = xv.cols();
  if (gain.value().size() != n || bias.value().size() != n) {
    throw DimensionError("layer_norm: gain/bias do not match width " +
                         std::to_string(n));
  }
  Tensor normalized(xv.shape());
  std::vector<double> inv_std(xv.rows());
  Tensor out(xv.shape());
  const Tensor& gv = gain.value();
  const Tensor& bv = bias.value();
  for (std::size_t r = 0; r < xv.rows(); ++r) {
    const auto row = xv.row(r);
    double mean = 0.0;
    for (double v : row) mean += v;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double v : row) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < n; ++c) {
      normalized.at(r, c) = (row[c] - mean) * inv_std[r];
      out.at(r, c) = normalized.at(r, c) * gv[c] + bv[c];
    }
  }
  const bool rg = t.requires_grad(x.id) || t.requires_grad(gain.id) ||
                  t.requires_grad(bias.id);
  return t.record(std::move(out), rg,
                  [xi = x.id, gi = gain.id, bi = bias.id,
                   normalized = std::move(normalized),
                   inv_std = std::move(inv_std)](Tape& t, std::size_t self) {
    const Tensor& g = t.grad(self);
    const Tensor& gv = t.value(gi);
    const std::size_t rows = g.rows(), n = g.cols();
    if (t.requires_grad(gi)) {
      Tensor& gg = t.grad(gi);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < n; ++c) gg[c] += g.at(r, c) * normalized.at(r, c);
    }
    if (t.requires_grad(bi)) {
      Tensor& gb = t.grad(bi);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < n; ++c) gb[c] += g.at(r, c);
    }
    if (t.requires_grad(xi)) {
      Tensor& gx = t.grad(xi);
      const double nn = static_cast<double>(n);
      for (std::size_t r = 0; r < rows; ++r) {
        double sum_d = 0.0, sum_dx = 0.0;
        for (std::size_t c = 0; c < n; ++c) {
          const double d = g.at(r, c) * gv[c];
          sum_d += d;
          sum_dx += d * normalized.at(r, c);
        }
        for (std::size_t c = 0; c < n; ++c) {
          const double d = g.at(r, c) * gv[c];
          gx.at(r, c) += inv_std[r] / nn *
                         (nn * d - sum_d - normalized.at(r, c) * sum_dx);
        }
      }
    }
  });
}

/// Inverted dropout: zeroes entries with probability `rate` and rescales the
/// survivors. The mask is drawn from `rng`, so a fixed seed fixes the mask.
inline Var dropout(Var x, double rate, std::mt19937_64& rng) {
  if (rate <= 0.0) return x;
  if (rate >= 1.0) throw Error("dropout rate must be below 1");
  Tensor mask(x.shape());
  std::bernoulli_distribution keep(1.0 - rate);
  const double s = 1.0 / (1.0 - rate);
  for (double& m : mask.values()) m = keep(rng) ? s : 0.0;
  return mul(x, x.tape->constant(std::move(mask)));
}

}  // namespace wic::numgrad
