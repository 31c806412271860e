/* Copyright 2026 The MLN Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License. */

#ifndef MLN_AUTODIFF_HPP_
#define MLN_AUTODIFF_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mln/error.hpp"
#include "mln/linalg.hpp"
#include "mln/matrix.hpp"

// Tape-based reverse-mode differentiation over Matrix values.
//
// Every operation appends one node to the tape, so tape order is a
// topological order of the graph and the backward pass is a single reverse
// scan that visits each node at most once. Each primitive carries a closed-
// form adjoint; there is no support for higher-order derivatives.
namespace mln::ad {

class Tape;

class Var {
 public:
  Var() = default;
  Tape& tape() const { return *tape_; }
  std::size_t id() const noexcept { return id_; }
  const Matrix& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }

 private:
  friend class Tape;
  Var(Tape* t, std::size_t id) : tape_(t), id_(id) {}
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  // Adjoint rule: receives the gradient of the node's output and must
  // accumulate into its parents via accumulate().
  using Adjoint = std::function<void(Tape&, const Matrix& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(Matrix value) { return push(std::move(value), true, {}); }
  Var constant(Matrix value) { return push(std::move(value), false, {}); }

  Var push(Matrix value, bool requires_grad, Adjoint adjoint) {
    check_finite(value, "autodiff");
    nodes_.push_back(Node{std::move(value), requires_grad, std::move(adjoint)});
    return Var(this, nodes_.size() - 1);
  }

  bool requires_grad(Var v) const { return nodes_[v.id()].requires_grad; }
  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  std::size_t size() const noexcept { return nodes_.size(); }

  void accumulate(std::size_t id, const Matrix& g) {
    Matrix& dst = grads_[id];
    if (dst.empty()) {
      dst = g;
    } else {
      for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
    }
  }

  // Populates gradients of root with respect to every node. root must be 1x1.
  void backward(Var root) {
    const Matrix& rv = root.value();
    if (rv.rows() != 1 || rv.cols() != 1) {
      throw DimensionError("backward: root must be scalar, got " +
                           shape_str(rv));
    }
    grads_.assign(nodes_.size(), Matrix());
    grads_[root.id()] = Matrix(1, 1, 1.0);
    for (std::size_t i = root.id() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.requires_grad || !n.adjoint || grads_[i].empty()) continue;
      n.adjoint(*this, grads_[i]);
    }
  }

  // Gradient of the last backward() root w.r.t. v; zeros if v was not on any
  // path to the root.
  Matrix grad(Var v) const {
    if (v.id() < grads_.size() && !grads_[v.id()].empty())
      return grads_[v.id()];
    const Matrix& val = nodes_[v.id()].value;
    return Matrix(val.rows(), val.cols());
  }

 private:
  struct Node {
    Matrix value;
    bool requires_grad;
    Adjoint adjoint;
  };
  std::vector<Node> nodes_;
  std::vector<Matrix> grads_;
};

inline const Matrix& Var::value() const { return tape_->value(id_); }

namespace detail {

inline bool any_grad(std::initializer_list<Var> vs) {
  for (const Var& v : vs)
    if (v.tape().requires_grad(v)) return true;
  return false;
}

inline void same_tape(const Var& a, const Var& b) {
  if (&a.tape() != &b.tape()) throw DimensionError("vars on different tapes");
}

}  // namespace detail

inline Var stop_gradient(Var a) { return a.tape().constant(a.value()); }

inline Var matmul(Var a, Var b) {
  detail::same_tape(a, b);
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().push(
      mln::matmul(a.value(), b.value()), detail::any_grad({a, b}),
      [ia, ib](Tape& t, const Matrix& g) {
        t.accumulate(ia, mln::matmul(g, transpose(t.value(ib))));
        t.accumulate(ib, mln::matmul(transpose(t.value(ia)), g));
      });
}

inline Var transpose(Var a) {
  const std::size_t ia = a.id();
  return a.tape().push(mln::transpose(a.value()), detail::any_grad({a}),
                       [ia](Tape& t, const Matrix& g) {
                         t.accumulate(ia, mln::transpose(g));
                       });
}

inline Var add(Var a, Var b) {
  detail::same_tape(a, b);
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().push(mln::add(a.value(), b.value()), detail::any_grad({a, b}),
                       [ia, ib](Tape& t, const Matrix& g) {
                         t.accumulate(ia, g);
                         t.accumulate(ib, g);
                       });
}

inline Var sub(Var a, Var b) {
  detail::same_tape(a, b);
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().push(mln::sub(a.value(), b.value()), detail::any_grad({a, b}),
                       [ia, ib](Tape& t, const Matrix& g) {
                         t.accumulate(ia, g);
                         t.accumulate(ib, mln::scale(g, -1.0));
                       });
}

inline Var scale(Var a, double s) {
  const std::size_t ia = a.id();
  return a.tape().push(mln::scale(a.value(), s), detail::any_grad({a}),
                       [ia, s](Tape& t, const Matrix& g) {
                         t.accumulate(ia, mln::scale(g, s));
                       });
}

inline Var hadamard(Var a, Var b) {
  detail::same_tape(a, b);
  const std::size_t ia = a.id(), ib = b.id();
  return a.tape().push(mln::hadamard(a.value(), b.value()),
                       detail::any_grad({a, b}),
                       [ia, ib](Tape& t, const Matrix& g) {
                         t.accumulate(ia, mln::hadamard(g, t.value(ib)));
                         t.accumulate(ib, mln::hadamard(g, t.value(ia)));
                       });
}

// m (R x C) + r (1 x C) added to every row.
inline Var add_row_broadcast(Var m, Var r) {
  detail::same_tape(m, r);
  const Matrix& mv = m.value();
  const Matrix& rv = r.value();
  if (rv.rows() != 1 || rv.cols() != mv.cols()) {
    throw DimensionError("add_row_broadcast: " + shape_str(mv) + " + " +
                         shape_str(rv));
  }
  Matrix out = mv;
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += rv[j];
  const std::size_t im = m.id(), ir = r.id();
  return m.tape().push(std::move(out), detail::any_grad({m, r}),
                       [im, ir](Tape& t, const Matrix& g) {
                         t.accumulate(im, g);
                         Matrix gr(1, g.cols());
                         for (std::size_t i = 0; i < g.rows(); ++i)
                           for (std::size_t j = 0; j < g.cols(); ++j)
                             gr[j] += g(i, j);
                         t.accumulate(ir, gr);
                       });
}

// m (R x C) + c (R x 1) added to every column.
inline Var add_col_broadcast(Var m, Var c) {
  detail::same_tape(m, c);
  const Matrix& mv = m.value();
  const Matrix& cv = c.value();
  if (cv.cols() != 1 || cv.rows() != mv.rows()) {
    throw DimensionError("add_col_broadcast: " + shape_str(mv) + " + " +
                         shape_str(cv));
  }
  Matrix out = mv;
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += cv[i];
  const std::size_t im = m.id(), ic = c.id();
  return m.tape().push(std::move(out), detail::any_grad({m, c}),
                       [im, ic](Tape& t, const Matrix& g) {
                         t.accumulate(im, g);
                         Matrix gc(g.rows(), 1);
                         for (std::size_t i = 0; i < g.rows(); ++i)
                           for (std::size_t j = 0; j < g.cols(); ++j)
                             gc[i] += g(i, j);
                         t.accumulate(ic, gc);
                       });
}

inline Var relu(Var a) {
  const std::size_t ia = a.id();
  return a.tape().push(mln::relu(a.value()), detail::any_grad({a}),
                       [ia](Tape& t, const Matrix& g) {
                         const Matrix& x = t.value(ia);
                         Matrix ga = g;
                         for (std::size_t i = 0; i < ga.size(); ++i)
                           if (!(x[i] > 0.0)) ga[i] = 0.0;
                         t.accumulate(ia, ga);
                       });
}

// Row-wise sums: R x C -> R x 1.
inline Var row_sums(Var a) {
  const Matrix& av = a.value();
  Matrix out(av.rows(), 1);
  for (std::size_t i = 0; i < av.rows(); ++i)
    for (std::size_t j = 0; j < av.cols(); ++j) out[i] += av(i, j);
  const std::size_t ia = a.id();
  const std::size_t cols = av.cols();
  return a.tape().push(std::move(out), detail::any_grad({a}),
                       [ia, cols](Tape& t, const Matrix& g) {
                         Matrix ga(g.rows(), cols);
                         for (std::size_t i = 0; i < g.rows(); ++i)
                           for (std::size_t j = 0; j < cols; ++j)
                             ga(i, j) = g[i];
                         t.accumulate(ia, ga);
                       });
}

inline Var sum(Var a) {
  double s = 0.0;
  for (double x : a.value().data()) s += x;
  const std::size_t ia = a.id();
  const std::size_t r = a.rows(), c = a.cols();
  return a.tape().push(Matrix(1, 1, s), detail::any_grad({a}),
                       [ia, r, c](Tape& t, const Matrix& g) {
                         t.accumulate(ia, Matrix(r, c, g[0]));
                       });
}

// Rows of a picked by index; repeated indices accumulate on the way back.
inline Var gather_rows(Var a, std::vector<std::size_t> indices) {
  const Matrix& av = a.value();
  Matrix out(indices.size(), av.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= av.rows())
      throw DimensionError("gather_rows: index out of range");
    std::copy(av.row(indices[i]).begin(), av.row(indices[i]).end(),
              out.row(i).begin());
  }
  const std::size_t ia = a.id();
  const std::size_t rows = av.rows();
  return a.tape().push(
      std::move(out), detail::any_grad({a}),
      [ia, rows, idx = std::move(indices)](Tape& t, const Matrix& g) {
        Matrix ga(rows, g.cols());
        for (std::size_t i = 0; i < idx.size(); ++i)
          for (std::size_t j = 0; j < g.cols(); ++j) ga(idx[i], j) += g(i, j);
        t.accumulate(ia, ga);
      });
}

// Each row scaled to unit L2 norm. Adjoint: (g - y (y.g)) / ||x|| per row.
inline Var normalize_rows(Var a, double eps = kDefaultNormEps) {
  const Matrix& av = a.value();
  Matrix y = mln::normalize_rows(av, eps);
  Vector norms(av.rows());
  for (std::size_t i = 0; i < av.rows(); ++i) norms[i] = norm2(av.row(i));
  const std::size_t ia = a.id();
  Matrix yc = y;
  return a.tape().push(
      std::move(y), detail::any_grad({a}),
      [ia, yc = std::move(yc), norms = std::move(norms)](Tape& t,
                                                         const Matrix& g) {
        Matrix ga(g.rows(), g.cols());
        for (std::size_t i = 0; i < g.rows(); ++i) {
          const double yg = dot(yc.row(i), g.row(i));
          for (std::size_t j = 0; j < g.cols(); ++j)
            ga(i, j) = (g(i, j) - yc(i, j) * yg) / norms[i];
        }
        t.accumulate(ia, ga);
      });
}

// Mean over rows of softmax cross-entropy(logits row i, labels[i]); 1 x 1.
inline Var mean_softmax_cross_entropy(Var logits,
                                      std::vector<std::size_t> labels) {
  const Matrix& z = logits.value();
  if (labels.size() != z.rows() || z.rows() == 0) {
    throw DimensionError("mean_softmax_cross_entropy: " +
                         std::to_string(labels.size()) + " labels for " +
                         shape_str(z) + " logits");
  }
  Matrix probs(z.rows(), z.cols());
  double loss = 0.0;
  for (std::size_t i = 0; i < z.rows(); ++i) {
    loss += softmax_cross_entropy(z.row(i), labels[i]);
    const double m = *std::max_element(z.row(i).begin(), z.row(i).end());
    double s = 0.0;
    for (std::size_t j = 0; j < z.cols(); ++j) s += std::exp(z(i, j) - m);
    for (std::size_t j = 0; j < z.cols(); ++j)
      probs(i, j) = std::exp(z(i, j) - m) / s;
  }
  const double n = static_cast<double>(z.rows());
  const std::size_t iz = logits.id();
  return logits.tape().push(
      Matrix(1, 1, loss / n), detail::any_grad({logits}),
      [iz, n, p = std::move(probs), lab = std::move(labels)](Tape& t,
                                                             const Matrix& g) {
        Matrix gz = p;
        for (std::size_t i = 0; i < lab.size(); ++i) gz(i, lab[i]) -= 1.0;
        t.accumulate(iz, mln::scale(gz, g[0] / n));
      });
}

// Orthogonal projector onto the complement of the row space of e (rows are
// the vectors to annihilate): P = I - e^T (e e^T)^+ e = I - e^+ e.
// Adjoint, valid where e has full row rank: de = -(e^+)^T (G + G^T) P.
inline Var complement_projector(Var e, double tol = kDefaultRankTol) {
  const Matrix& ev = e.value();
  const Matrix e_pinv = pseudo_inverse(ev, tol);  // D x N
  Matrix p = Matrix::identity(ev.cols());
  const Matrix q = mln::matmul(e_pinv, ev);
  for (std::size_t i = 0; i < p.size(); ++i) p[i] -= q[i];
  const std::size_t ie = e.id();
  Matrix pc = p;
  return e.tape().push(
      std::move(p), detail::any_grad({e}),
      [ie, pc = std::move(pc), e_pinv](Tape& t, const Matrix& g) {
        const Matrix gs = mln::add(g, mln::transpose(g));
        t.accumulate(ie, mln::scale(mln::matmul(mln::matmul(
                                                    mln::transpose(e_pinv), gs),
                                                pc),
                                    -1.0));
      });
}

}  // namespace mln::ad

#endif  // MLN_AUTODIFF_HPP_
