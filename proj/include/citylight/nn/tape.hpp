#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "citylight/nn/param_store.hpp"
#include "citylight/nn/tensor.hpp"

namespace citylight::nn {

class Tape;

/// Handle to a value recorded on a Tape.
struct Var {
  Tape* tape = nullptr;
  int id = -1;
  const Tensor& value() const;
  long rows() const { return value().rows(); }
  long cols() const { return value().cols(); }
};

/// Reverse-mode autodiff over 2-D tensors. Nodes are appended in evaluation
/// order; backward() walks them in reverse.
class Tape {
 public:
  struct Node {
    Tensor value;
    Tensor grad;  // allocated lazily by backward()
    std::function<void(Tape&, int)> back;
    Parameter* param = nullptr;
    bool is_constant = false;  // constants never receive gradients
  };

  Var constant(Tensor t) {
    Var v = push(std::move(t), {});
    nodes_.back().is_constant = true;
    return v;
  }

  /// Leaf whose gradient is kept on the tape (read with grad()).
  Var variable(Tensor t) { return push(std::move(t), {}); }

  /// Leaf bound to a parameter; backward() accumulates into Parameter::grad.
  Var param(Parameter& p) {
    Var v = push(p.value, {});
    nodes_[static_cast<std::size_t>(v.id)].param = &p;
    return v;
  }

  Var push(Tensor value, std::function<void(Tape&, int)> back) {
    // a sum is finite only if every entry is (overflow also counts as failure)
    if (check_finite_ && value.size() > 0 && !std::isfinite(value.sum())) {
      throw NumericError("non-finite value produced on tape");
    }
    if (nodes_.capacity() == nodes_.size()) nodes_.reserve(std::max<std::size_t>(256, 2 * nodes_.size()));
    nodes_.push_back({std::move(value), Tensor(), std::move(back), nullptr});
    return {this, static_cast<int>(nodes_.size()) - 1};
  }

  const Tensor& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  const Tensor& value(Var v) const { return value(v.id); }

  /// Gradient of the last backward() target with respect to `v`.
  const Tensor& grad(Var v) {
    Node& n = nodes_[static_cast<std::size_t>(v.id)];
    if (n.grad.size() == 0) n.grad = Tensor::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }

  /// Accumulates `g` into the gradient slot of node `id`.
  Tensor& grad_slot(int id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.size() == 0) n.grad = Tensor::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }

  /// Adds `e` to the gradient of node `id`; the first write assigns.
  template <class Expr>
  void accumulate(int id, const Expr& e) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.is_constant) return;
    if (n.grad.size() == 0) {
      n.grad.noalias() = e;
    } else {
      n.grad.noalias() += e;
    }
  }

  bool is_constant(int id) const { return nodes_[static_cast<std::size_t>(id)].is_constant; }

  /// Seeds d(target)/d(target) = 1 and propagates. Target must be 1×1.
  void backward(Var target) {
    if (value(target).size() != 1) throw ShapeError("backward: target must be a scalar, got " + shape_str(value(target)));
    for (auto& n : nodes_) n.grad.resize(0, 0);
    grad_slot(target.id)(0, 0) = 1.0;
    for (int i = target.id; i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      if (n.grad.size() == 0) continue;
      if (n.back) n.back(*this, i);
      if (n.param) n.param->grad += n.grad;
    }
  }

  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }
  void set_check_finite(bool on) { check_finite_ = on; }

 private:
  std::vector<Node> nodes_;
  bool check_finite_ = true;
};

inline const Tensor& Var::value() const { return tape->value(id); }

namespace detail {
inline Tape& same_tape(Var a, Var b) {
  if (a.tape != b.tape) throw std::invalid_argument("operands recorded on different tapes");
  return *a.tape;
}
}  // namespace detail

// ---- dense algebra -----------------------------------------------------------

inline Var matmul(Var a, Var b) {
  Tape& t = detail::same_tape(a, b);
  require_shape(a.cols() == b.rows(), "matmul", a.value(), b.value());
  Tensor y = a.value() * b.value();
  return t.push(std::move(y), [a, b](Tape& tp, int self) {
    const Tensor& g = tp.grad_slot(self);
    tp.accumulate(a.id, g * tp.value(b).transpose());
    tp.accumulate(b.id, tp.value(a).transpose() * g);
  });
}

/// Adds a 1×n row to every row of an m×n input.
inline Var add_row(Var a, Var row) {
  Tape& t = detail::same_tape(a, row);
  require_shape(row.rows() == 1 && row.cols() == a.cols(), "add_row", a.value(), row.value());
  Tensor y = a.value().rowwise() + row.value().row(0);
  return t.push(std::move(y), [a, row](Tape& tp, int self) {
    const Tensor& g = tp.grad_slot(self);
    tp.accumulate(a.id, g);
    tp.accumulate(row.id, g.colwise().sum());
  });
}

/// y = xW + b with x: m×in, W: in×out, b: 1×out.
inline Var linear(Var x, Var W, Var b) { return add_row(matmul(x, W), b); }

inline Var add(Var a, Var b) {
  Tape& t = detail::same_tape(a, b);
  require_shape(a.rows() == b.rows() && a.cols() == b.cols(), "add", a.value(), b.value());
  return t.push(a.value() + b.value(), [a, b](Tape& tp, int self) {
    const Tensor& g = tp.grad_slot(self);
    tp.accumulate(a.id, g);
    tp.accumulate(b.id, g);
  });
}

inline Var sub(Var a, Var b) {
  Tape& t = detail::same_tape(a, b);
  require_shape(a.rows() == b.rows() && a.cols() == b.cols(), "sub", a.value(), b.value());
  return t.push(a.value() - b.value(), [a, b](Tape& tp, int self) {
    const Tensor& g = tp.grad_slot(self);
    tp.accumulate(a.id, g);
    tp.accumulate(b.id, -g);
  });
}

/// Elementwise product.
inline Var mul(Var a, Var b) {
  Tape& t = detail::same_tape(a, b);
  require_shape(a.rows() == b.rows() && a.cols() == b.cols(), "mul", a.value(), b.value());
  return t.push(a.value().cwiseProduct(b.value()), [a, b](Tape& tp, int self) {
    const Tensor& g = tp.grad_slot(self);
    tp.accumulate(a.id, g.cwiseProduct(tp.value(b)));
    tp.accumulate(b.id, g.cwiseProduct(tp.value(a)));
  });
}

/// Multiplies row r of `a` by the scalar in row r of the m×1 column `s`.
inline Var mul_col(Var a, Var s) {
  Tape& t = detail::same_tape(a, s);
  require_shape(s.cols() == 1 && s.rows() == a.rows(), "mul_col", a.value(), s.value());
  Tensor y = a.value().array().colwise() * s.value().col(0).array();
  return t.push(std::move(y), [a, s](Tape& tp, int self) {
    const Tensor& g = tp.grad_slot(self);
    tp.accumulate(a.id, (g.array().colwise() * tp.value(s).col(0).array()).matrix());
    tp.accumulate(s.id, g.cwiseProduct(tp.value(a)).rowwise().sum());
  });
}

inline Var scale(Var a, double s) {
  return a.tape->push(a.value() * s, [a, s](Tape& tp, int self) { tp.accumulate(a.id, s * tp.grad_slot(self)); });
}

inline Var tanh(Var a) {
  Tensor y = a.value().array().tanh().matrix();
  return a.tape->push(std::move(y), [a](Tape& tp, int self) {
    const Tensor& y = tp.value(self);
    tp.accumulate(a.id, tp.grad_slot(self).cwiseProduct((1.0 - y.array().square()).matrix()));
  });
}

inline Var exp(Var a) {
  Tensor y = a.value().array().exp().matrix();
  return a.tape->push(std::move(y), [a](Tape& tp, int self) {
    tp.accumulate(a.id, tp.grad_slot(self).cwiseProduct(tp.value(self)));
  });
}

/// Elementwise clamp; gradient passes only where lo < x < hi.
inline Var clamp(Var a, double lo, double hi) {
  Tensor y = a.value().cwiseMax(lo).cwiseMin(hi);
  return a.tape->push(std::move(y), [a, lo, hi](Tape& tp, int self) {
    const Tensor& x = tp.value(a);
    const Tensor& g = tp.grad_slot(self);
    Tensor& ga = tp.grad_slot(a.id);
    for (long i = 0; i < x.size(); ++i) {
      if (x.data()[i] > lo && x.data()[i] < hi) ga.data()[i] += g.data()[i];
    }
  });
}

/// Elementwise minimum; ties route the gradient to `a`.
inline Var minimum(Var a, Var b) {
  Tape& t = detail::same_tape(a, b);
  require_shape(a.rows() == b.rows() && a.cols() == b.cols(), "minimum", a.value(), b.value());
  return t.push(a.value().cwiseMin(b.value()), [a, b](Tape& tp, int self) {
    const Tensor& x = tp.value(a);
    const Tensor& z = tp.value(b);
    const Tensor& g = tp.grad_slot(self);
    Tensor& ga = tp.grad_slot(a.id);
    Tensor& gb = tp.grad_slot(b.id);
    for (long i = 0; i < x.size(); ++i) (x.data()[i] <= z.data()[i] ? ga : gb).data()[i] += g.data()[i];
  });
}

inline Var sum(Var a) {
  Tensor y(1, 1);
  y(0, 0) = a.value().sum();
  return a.tape->push(std::move(y), [a](Tape& tp, int self) { tp.grad_slot(a.id).array() += tp.grad_slot(self)(0, 0); });
}

inline Var mean(Var a) {
  const double n = static_cast<double>(a.value().size());
  return scale(sum(a), 1.0 / n);
}

/// m×n → m×1 row sums.
inline Var row_sum(Var a) {
  Tensor y = a.value().rowwise().sum();
  return a.tape->push(std::move(y), [a](Tape& tp, int self) {
    tp.grad_slot(a.id).colwise() += tp.grad_slot(self).col(0);
  });
}

/// Horizontal concatenation of inputs with equal row counts.
inline Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const long rows = parts[0].rows();
  long cols = 0;
  for (Var p : parts) {
    require_shape(p.rows() == rows, "concat_cols", parts[0].value(), p.value());
    if (p.tape != parts[0].tape) throw std::invalid_argument("operands recorded on different tapes");
    cols += p.cols();
  }
  Tensor y(rows, cols);
  long c = 0;
  for (Var p : parts) {
    y.middleCols(c, p.cols()) = p.value();
    c += p.cols();
  }
  std::vector<Var> ins(parts.begin(), parts.end());
  return parts[0].tape->push(std::move(y), [ins](Tape& tp, int self) {
    long c = 0;
    for (Var p : ins) {
      const long w = tp.value(p).cols();
      tp.grad_slot(p.id) += tp.grad_slot(self).middleCols(c, w);
      c += w;
    }
  });
}

inline Var concat_cols(std::initializer_list<Var> parts) {
  return concat_cols(std::span<const Var>(parts.begin(), parts.size()));
}

/// Mean over consecutive blocks of `block` rows: (B·block)×n → B×n.
inline Var block_mean_rows(Var a, long block) {
  if (block <= 0 || a.rows() % block != 0) throw ShapeError("block_mean_rows: rows not divisible by block");
  const long B = a.rows() / block;
  Tensor y = Tensor::Zero(B, a.cols());
  const Tensor& x = a.value();
  for (long b = 0; b < B; ++b) y.row(b) = x.middleRows(b * block, block).colwise().mean();
  return a.tape->push(std::move(y), [a, block, B](Tape& tp, int self) {
    const Tensor& g = tp.grad_slot(self);
    Tensor& ga = tp.grad_slot(a.id);
    for (long b = 0; b < B; ++b) ga.middleRows(b * block, block).rowwise() += g.row(b) / static_cast<double>(block);
  });
}

/// Repeats each row `times` times consecutively: B×n → (B·times)×n.
inline Var repeat_rows(Var a, long times) {
  const long B = a.rows();
  Tensor y(B * times, a.cols());
  for (long b = 0; b < B; ++b) y.middleRows(b * times, times).rowwise() = a.value().row(b);
  return a.tape->push(std::move(y), [a, times, B](Tape& tp, int self) {
    const Tensor& g = tp.grad_slot(self);
    Tensor& ga = tp.grad_slot(a.id);
    for (long b = 0; b < B; ++b) ga.row(b) += g.middleRows(b * times, times).colwise().sum();
  });
}

/// Interleaves rows of equally shaped B×n inputs: row b·P+s of the result is
/// row b of parts[s].
inline Var interleave_rows(std::span<const Var> parts) {
  if (parts.empty()) throw ShapeError("interleave_rows: no inputs");
  const long P = static_cast<long>(parts.size());
  const long B = parts[0].rows(), n = parts[0].cols();
  for (Var p : parts) {
    require_shape(p.rows() == B && p.cols() == n, "interleave_rows", parts[0].value(), p.value());
    if (p.tape != parts[0].tape) throw std::invalid_argument("operands recorded on different tapes");
  }
  Tensor y(B * P, n);
  for (long s = 0; s < P; ++s) {
    for (long b = 0; b < B; ++b) y.row(b * P + s) = parts[static_cast<std::size_t>(s)].value().row(b);
  }
  std::vector<Var> ins(parts.begin(), parts.end());
  return parts[0].tape->push(std::move(y), [ins, B, P](Tape& tp, int self) {
    const Tensor& g = tp.grad_slot(self);
    for (long s = 0; s < P; ++s) {
      Tensor& gs = tp.grad_slot(ins[static_cast<std::size_t>(s)].id);
      for (long b = 0; b < B; ++b) gs.row(b) += g.row(b * P + s);
    }
  });
}

/// Folds groups of G consecutive rows into one row: (B·G)×n → B×(G·n).
inline Var fold_rows(Var a, long G) {
  if (G <= 0 || a.rows() % G != 0) throw ShapeError("fold_rows: rows not divisible by group");
  const long B = a.rows() / G, n = a.cols();
  Tensor y(B, G * n);
  for (long b = 0; b < B; ++b) {
    for (long j = 0; j < G; ++j) y.block(b, j * n, 1, n) = a.value().row(b * G + j);
  }
  return a.tape->push(std::move(y), [a, B, G, n](Tape& tp, int self) {
    const Tensor& g = tp.grad_slot(self);
    Tensor& ga = tp.grad_slot(a.id);
    for (long b = 0; b < B; ++b) {
      for (long j = 0; j < G; ++j) ga.row(b * G + j) += g.block(b, j * n, 1, n);
    }
  });
}

/// Multiplies every entry of `a` by the 1×1 value `c`.
inline Var mul_scalar(Var a, Var c) {
  Tape& t = detail::same_tape(a, c);
  if (c.value().size() != 1) throw ShapeError("mul_scalar: scale must be 1x1, got " + shape_str(c.value()));
  return t.push(a.value() * c.value()(0, 0), [a, c](Tape& tp, int self) {
    const Tensor& g = tp.grad_slot(self);
    tp.accumulate(a.id, g * tp.value(c)(0, 0));
    tp.grad_slot(c.id)(0, 0) += g.cwiseProduct(tp.value(a)).sum();
  });
}

// ---- attention -----------------------------------------------------------------

/// Row-wise softmax of a plain tensor (no tape).
inline Tensor softmax_rows(const Tensor& s) {
  Tensor p(s.rows(), s.cols());
  for (long r = 0; r < s.rows(); ++r) {
    const double mx = s.row(r).maxCoeff();
    p.row(r) = (s.row(r).array() - mx).exp().matrix();
    p.row(r) /= p.row(r).sum();
  }
  return p;
}

/// Scaled dot-product attention applied independently to B blocks:
/// Q: (B·nq)×d, K: (B·nk)×d, V: (B·nk)×dv → (B·nq)×dv, each block computing
/// softmax(Q_b K_bᵀ / √d) V_b. `weights` (if given) receives the (B·nq)×nk
/// softmax matrix.
inline Var block_attention(Var Q, Var K, Var V, long nq, long nk, Tensor* weights = nullptr) {
  Tape& t = detail::same_tape(Q, K);
  detail::same_tape(K, V);
  require_shape(Q.cols() == K.cols(), "block_attention(Q,K)", Q.value(), K.value());
  require_shape(K.rows() == V.rows(), "block_attention(K,V)", K.value(), V.value());
  if (nq <= 0 || nk <= 0 || Q.rows() % nq != 0 || K.rows() % nk != 0 || Q.rows() / nq != K.rows() / nk) {
    throw ShapeError("block_attention: block sizes do not tile the inputs");
  }
  const long B = Q.rows() / nq;
  const double inv = 1.0 / std::sqrt(static_cast<double>(Q.cols()));
  // Blocks are tiny, so the loops below work on rows (dot products and axpys)
  // instead of dispatching a GEMM per block.
  const Tensor& qv = Q.value();
  const Tensor& kv = K.value();
  const Tensor& vv = V.value();
  Tensor P(B * nq, nk);
  Tensor y = Tensor::Zero(B * nq, V.cols());
  for (long b = 0; b < B; ++b) {
    for (long r = b * nq; r < (b + 1) * nq; ++r) {
      for (long j = 0; j < nk; ++j) P(r, j) = qv.row(r).dot(kv.row(b * nk + j)) * inv;
      const double mx = P.row(r).maxCoeff();
      double z = 0.0;
      for (long j = 0; j < nk; ++j) z += (P(r, j) = std::exp(P(r, j) - mx));
      for (long j = 0; j < nk; ++j) {
        P(r, j) /= z;
        y.row(r) += P(r, j) * vv.row(b * nk + j);
      }
    }
  }
  if (weights) *weights = P;
  return t.push(std::move(y), [Q, K, V, nq, nk, B, inv, P = std::move(P)](Tape& tp, int self) {
    const Tensor& g = tp.grad_slot(self);
    const bool need_q = !tp.is_constant(Q.id), need_k = !tp.is_constant(K.id), need_v = !tp.is_constant(V.id);
    Tensor* gq = need_q ? &tp.grad_slot(Q.id) : nullptr;
    Tensor* gk = need_k ? &tp.grad_slot(K.id) : nullptr;
    Tensor* gv = need_v ? &tp.grad_slot(V.id) : nullptr;
    const Tensor& q = tp.value(Q);
    const Tensor& k = tp.value(K);
    const Tensor& v = tp.value(V);
    std::vector<double> ds(static_cast<std::size_t>(nk));
    for (long b = 0; b < B; ++b) {
      for (long r = b * nq; r < (b + 1) * nq; ++r) {
        double dot = 0.0;
        for (long j = 0; j < nk; ++j) {
          const long kr = b * nk + j;
          if (need_v) gv->row(kr) += P(r, j) * g.row(r);
          ds[static_cast<std::size_t>(j)] = g.row(r).dot(v.row(kr));
          dot += P(r, j) * ds[static_cast<std::size_t>(j)];
        }
        if (!need_q && !need_k) continue;
        for (long j = 0; j < nk; ++j) {
          const long kr = b * nk + j;
          const double d = P(r, j) * (ds[static_cast<std::size_t>(j)] - dot) * inv;
          if (need_q) gq->row(r) += d * k.row(kr);
          if (need_k) gk->row(kr) += d * q.row(r);
        }
      }
    }
  });
}

/// Plain single-block attention. No keys yields a zero context.
inline Var attention(Var Q, Var K, Var V, Tensor* weights = nullptr) {
  if (K.rows() == 0 && V.rows() == 0) {
    detail::same_tape(Q, K);
    if (weights) *weights = Tensor(Q.rows(), 0);
    return Q.tape->push(Tensor::Zero(Q.rows(), V.cols()), {});
  }
  return block_attention(Q, K, V, Q.rows(), K.rows(), weights);
}

// ---- masked distributions and group pooling ---------------------------------

/// Log-softmax over the unmasked entries of each row. Masked entries are 0 in
/// the output and receive no gradient; their probability is exactly 0.
inline Var masked_log_softmax(Var logits, const std::vector<std::uint8_t>& mask) {
  const Tensor& x = logits.value();
  if (static_cast<long>(mask.size()) != x.size()) throw ShapeError("masked_log_softmax: mask size mismatch");
  Tensor y = Tensor::Zero(x.rows(), x.cols());
  Tensor p = Tensor::Zero(x.rows(), x.cols());
  for (long r = 0; r < x.rows(); ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (long c = 0; c < x.cols(); ++c) {
      if (mask[static_cast<std::size_t>(r * x.cols() + c)]) mx = std::max(mx, x(r, c));
    }
    if (!std::isfinite(mx)) throw std::invalid_argument("masked_log_softmax: every entry of a row is masked");
    double z = 0.0;
    for (long c = 0; c < x.cols(); ++c) {
      if (mask[static_cast<std::size_t>(r * x.cols() + c)]) z += std::exp(x(r, c) - mx);
    }
    const double lz = mx + std::log(z);
    for (long c = 0; c < x.cols(); ++c) {
      if (!mask[static_cast<std::size_t>(r * x.cols() + c)]) continue;
      y(r, c) = x(r, c) - lz;
      p(r, c) = std::exp(y(r, c));
    }
  }
  return logits.tape->push(std::move(y), [logits, mask, p = std::move(p)](Tape& tp, int self) {
    const Tensor& g = tp.grad_slot(self);
    Tensor& gx = tp.grad_slot(logits.id);
    for (long r = 0; r < g.rows(); ++r) {
      double gs = 0.0;
      for (long c = 0; c < g.cols(); ++c) {
        if (mask[static_cast<std::size_t>(r * g.cols() + c)]) gs += g(r, c);
      }
      for (long c = 0; c < g.cols(); ++c) {
        if (mask[static_cast<std::size_t>(r * g.cols() + c)]) gx(r, c) += g(r, c) - p(r, c) * gs;
      }
    }
  });
}

/// Picks one column per row: m×n, idx[m] → m×1.
inline Var gather_cols(Var a, const std::vector<int>& idx) {
  if (static_cast<long>(idx.size()) != a.rows()) throw ShapeError("gather_cols: index count mismatch");
  Tensor y(a.rows(), 1);
  for (long r = 0; r < a.rows(); ++r) {
    const int c = idx[static_cast<std::size_t>(r)];
    if (c < 0 || c >= a.cols()) throw ShapeError("gather_cols: index out of range");
    y(r, 0) = a.value()(r, c);
  }
  return a.tape->push(std::move(y), [a, idx](Tape& tp, int self) {
    const Tensor& g = tp.grad_slot(self);
    Tensor& ga = tp.grad_slot(a.id);
    for (long r = 0; r < g.rows(); ++r) ga(r, idx[static_cast<std::size_t>(r)]) += g(r, 0);
  });
}

/// Attentive pooling over groups of G consecutive member rows.
/// members: (B·G)×k, scores: (B·G)×1, present[B·G]. Each group returns
/// Σ_j s_j·member_j with s = softmax of the present scores; a group with no
/// present member returns zeros. `weights` (if given) receives s as (B·G)×1.
inline Var group_aggregate(Var members, Var scores, const std::vector<std::uint8_t>& present, long G,
                           Tensor* weights = nullptr) {
  Tape& t = detail::same_tape(members, scores);
  const long rows = members.rows();
  if (G <= 0 || rows % G != 0 || scores.rows() != rows || scores.cols() != 1 ||
      static_cast<long>(present.size()) != rows) {
    throw ShapeError("group_aggregate: inconsistent shapes");
  }
  const long B = rows / G;
  const Tensor& sv = scores.value();
  const Tensor& mv = members.value();
  Tensor s = Tensor::Zero(rows, 1);
  Tensor y = Tensor::Zero(B, members.cols());
  std::vector<long> order;
  for (long b = 0; b < B; ++b) {
    // Canonical summation order (score, then row contents) makes the result
    // bitwise independent of member order despite FMA rounding.
    order.clear();
    for (long j = 0; j < G; ++j) {
      if (present[static_cast<std::size_t>(b * G + j)]) order.push_back(b * G + j);
    }
    if (order.empty()) continue;
    std::sort(order.begin(), order.end(), [&](long x, long z) {
      if (sv(x, 0) != sv(z, 0)) return sv(x, 0) < sv(z, 0);
      return std::lexicographical_compare(mv.row(x).begin(), mv.row(x).end(), mv.row(z).begin(), mv.row(z).end());
    });
    const double mx = sv(order.back(), 0);
    double z = 0.0;
    for (long r : order) z += std::exp(sv(r, 0) - mx);
    for (long r : order) {
      s(r, 0) = std::exp(sv(r, 0) - mx) / z;
      y.row(b) += s(r, 0) * mv.row(r);
    }
  }
  if (weights) *weights = s;
  return t.push(std::move(y), [members, scores, G, B, s = std::move(s)](Tape& tp, int self) {
    const Tensor& g = tp.grad_slot(self);
    const Tensor& m = tp.value(members);
    Tensor& gm = tp.grad_slot(members.id);
    Tensor& ga = tp.grad_slot(scores.id);
    for (long b = 0; b < B; ++b) {
      double dot_sum = 0.0;
      for (long j = 0; j < G; ++j) {
        const long r = b * G + j;
        if (s(r, 0) == 0.0) continue;
        gm.row(r) += s(r, 0) * g.row(b);
        dot_sum += s(r, 0) * g.row(b).dot(m.row(r));
      }
      for (long j = 0; j < G; ++j) {
        const long r = b * G + j;
        if (s(r, 0) == 0.0) continue;
        ga(r, 0) += s(r, 0) * (g.row(b).dot(m.row(r)) - dot_sum);
      }
    }
  });
}

/// Unweighted mean over the present rows of each group of G; empty groups
/// return zeros.
inline Var group_mean(Var members, const std::vector<std::uint8_t>& present, long G) {
  const long rows = members.rows();
  if (G <= 0 || rows % G != 0 || static_cast<long>(present.size()) != rows) {
    throw ShapeError("group_mean: inconsistent shapes");
  }
  const long B = rows / G;
  Tensor w = Tensor::Zero(rows, 1);
  for (long b = 0; b < B; ++b) {
    long n = 0;
    for (long j = 0; j < G; ++j) n += present[static_cast<std::size_t>(b * G + j)] ? 1 : 0;
    for (long j = 0; j < G; ++j) {
      if (present[static_cast<std::size_t>(b * G + j)]) w(b * G + j, 0) = 1.0 / static_cast<double>(n);
    }
  }
  Tensor y = Tensor::Zero(B, members.cols());
  for (long r = 0; r < rows; ++r) y.row(r / G) += w(r, 0) * members.value().row(r);
  return members.tape->push(std::move(y), [members, G, rows, w = std::move(w)](Tape& tp, int self) {
    const Tensor& g = tp.grad_slot(self);
    Tensor& gm = tp.grad_slot(members.id);
    for (long r = 0; r < rows; ++r) gm.row(r) += w(r, 0) * g.row(r / G);
  });
}

}  // namespace citylight::nn
