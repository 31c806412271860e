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

#ifndef MLN_NULLING_HEAD_HPP_
#define MLN_NULLING_HEAD_HPP_

#include <cstddef>
#include <iostream>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mln/autodiff.hpp"
#include "mln/error.hpp"
#include "mln/linalg.hpp"
#include "mln/matrix.hpp"
#include "mln/rng.hpp"

namespace mln {

enum class LogitMode {
  kProjectedEuclidean,     // score_k = -(r_k - g)^T P (r_k - g)
  kProjectedInnerProduct,  // score_k = r_k P g^T
};

enum class GradientMode {
  kStopGradientProjector,   // P is an episode constant during backprop
  kDifferentiateProjector,  // gradients flow through P = I - V V^+
};

struct HeadConfig {
  std::size_t dim = 64;       // D
  std::size_t num_refs = 20;  // N_ref
  LogitMode logit_mode = LogitMode::kProjectedEuclidean;
  GradientMode gradient_mode = GradientMode::kStopGradientProjector;
  // Unit-normalize references and prototypes before building the projector
  // and normalize the references used in logits. Queries are never
  // normalized.
  bool normalize = true;
  double rank_tol = kDefaultRankTol;
  double norm_eps = kDefaultNormEps;

  friend bool operator==(const HeadConfig&, const HeadConfig&) = default;
};

// Learned reference vectors, one row per label. Row k always carries label k.
struct ReferenceBank {
  Matrix refs;  // N_ref x D
  std::vector<std::size_t> labels;

  std::size_t size() const noexcept { return refs.rows(); }
  std::size_t dim() const noexcept { return refs.cols(); }

  // Rows drawn uniformly on the unit sphere.
  static ReferenceBank random_unit(std::size_t n_ref, std::size_t dim,
                                   RngStream& rng) {
    ReferenceBank bank{Matrix(n_ref, dim), {}};
    for (std::size_t k = 0; k < n_ref; ++k) {
      Vector g(dim);
      double n = 0.0;
      do {
        for (double& x : g) x = rng.normal();
        n = norm2(g);
      } while (n < 1e-6);
      for (std::size_t j = 0; j < dim; ++j) bank.refs(k, j) = g[j] / n;
      bank.labels.push_back(k);
    }
    return bank;
  }

  Matrix rows(std::span<const std::size_t> idx) const {
    Matrix out(idx.size(), dim());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      if (idx[i] >= size()) throw DimensionError("reference row out of range");
      std::copy(refs.row(idx[i]).begin(), refs.row(idx[i]).end(),
                out.row(i).begin());
    }
    return out;
  }

  friend bool operator==(const ReferenceBank&, const ReferenceBank&) = default;
};

// Per-class mean embeddings; row k belongs to episode slot k.
struct PrototypeSet {
  Matrix protos;  // N_c x D
  std::vector<std::size_t> slots;

  std::size_t way() const noexcept { return protos.rows(); }
};

// Columns are the error vectors v_k.
struct ErrorMatrix {
  Matrix errs;  // D x N_c
};

struct NullProjector {
  Matrix projector;             // D x D
  std::optional<Matrix> basis;  // D x (D - rank), orthonormal columns
  std::size_t nulled_rank = 0;  // rank of the error matrix
  bool existence_guaranteed = true;  // D > N_c held at construction

  std::size_t dim() const noexcept { return projector.rows(); }
};

// Row k of the result is the mean of the embeddings whose slot is k.
inline PrototypeSet class_averages(const Matrix& embeddings,
                                   std::span<const std::size_t> slots,
                                   std::size_t way) {
  if (slots.size() != embeddings.rows()) {
    throw DimensionError("class_averages: " + std::to_string(slots.size()) +
                         " slots for " + std::to_string(embeddings.rows()) +
                         " embeddings");
  }
  PrototypeSet out{Matrix(way, embeddings.cols()), {}};
  std::vector<std::size_t> counts(way, 0);
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (slots[i] >= way) throw DimensionError("class_averages: slot out of range");
    ++counts[slots[i]];
    for (std::size_t j = 0; j < embeddings.cols(); ++j)
      out.protos(slots[i], j) += embeddings(i, j);
  }
  for (std::size_t k = 0; k < way; ++k) {
    if (counts[k] == 0) {
      throw DegenerateInputError("class_averages: slot " + std::to_string(k) +
                                 " has no support embeddings");
    }
    for (std::size_t j = 0; j < embeddings.cols(); ++j)
      out.protos(k, j) /= static_cast<double>(counts[k]);
    out.slots.push_back(k);
  }
  return out;
}

// Rows w_k = (N_c - 1) r_k - sum_{l != k} r_l.
inline Matrix reference_combination(const Matrix& refs) {
  const std::size_t n = refs.rows();
  Matrix w(n, refs.cols());
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t j = 0; j < refs.cols(); ++j) {
      double others = 0.0;
      for (std::size_t l = 0; l < n; ++l)
        if (l != k) others += refs(l, j);
      w(k, j) = static_cast<double>(n - 1) * refs(k, j) - others;
    }
  }
  return w;
}

// Column k = (N_c - 1) r_k - sum_{l != k} r_l - g_k, on unit-normalized
// copies of refs and protos when normalize is set.
inline ErrorMatrix error_vectors(const Matrix& episode_refs,
                                 const PrototypeSet& protos,
                                 bool normalize = true,
                                 double eps = kDefaultNormEps) {
  if (episode_refs.rows() != protos.way() ||
      episode_refs.cols() != protos.protos.cols()) {
    throw DimensionError("error_vectors: refs " + shape_str(episode_refs) +
                         " vs prototypes " + shape_str(protos.protos));
  }
  const Matrix r = normalize ? normalize_rows(episode_refs, eps) : episode_refs;
  const Matrix g = normalize ? normalize_rows(protos.protos, eps) : protos.protos;
  return ErrorMatrix{transpose(sub(reference_combination(r), g))};
}

// P = I - V V^+ (equivalently I - V (V^T V)^+ V^T), the orthogonal projector
// onto null(V^T).
inline NullProjector build_projector(const ErrorMatrix& errs,
                                     double tol = kDefaultRankTol,
                                     bool with_basis = false) {
  const Matrix& v = errs.errs;
  NullProjector out;
  out.existence_guaranteed = v.rows() > v.cols();
  if (!out.existence_guaranteed) {
    std::clog << "mln: warning: embedding dimension " << v.rows()
              << " does not exceed way " << v.cols()
              << "; the null space may be trivial\n";
  }
  out.projector = complement_projector(v, tol);
  out.nulled_rank = matrix_rank(v, tol);
  if (with_basis) out.basis = nullspace_basis(v, tol);
  return out;
}

// Scores of one unnormalized query against every episode reference, measured
// under the projector. References are normalized iff normalize is set.
inline Vector nulled_logits(std::span<const double> query,
                            const Matrix& episode_refs,
                            const NullProjector& proj, LogitMode mode,
                            bool normalize = true,
                            double eps = kDefaultNormEps) {
  const std::size_t d = proj.dim();
  if (query.size() != d || episode_refs.cols() != d) {
    throw DimensionError("nulled_logits: query length " +
                         std::to_string(query.size()) + ", refs " +
                         shape_str(episode_refs) + ", projector dim " +
                         std::to_string(d));
  }
  const Matrix r = normalize ? normalize_rows(episode_refs, eps) : episode_refs;
  const Matrix& p = proj.projector;
  Vector scores(r.rows());
  Vector diff(d), pd(d);
  for (std::size_t k = 0; k < r.rows(); ++k) {
    if (mode == LogitMode::kProjectedEuclidean) {
      for (std::size_t j = 0; j < d; ++j) diff[j] = r(k, j) - query[j];
    } else {
      std::copy(query.begin(), query.end(), diff.begin());
    }
    for (std::size_t i = 0; i < d; ++i) pd[i] = dot(p.row(i), diff);
    scores[k] = mode == LogitMode::kProjectedEuclidean ? -dot(diff, pd)
                                                       : dot(r.row(k), pd);
  }
  return scores;
}

// Delta_k = [(N_c - 1) r_k - sum_{l != k} r_l] P g_k^T on the same
// normalization state used to build the projector. Diagnostic only.
inline Vector alignment_score(const Matrix& episode_refs,
                              const PrototypeSet& protos,
                              const NullProjector& proj, bool normalize = true,
                              double eps = kDefaultNormEps) {
  const Matrix r = normalize ? normalize_rows(episode_refs, eps) : episode_refs;
  const Matrix g = normalize ? normalize_rows(protos.protos, eps) : protos.protos;
  const Matrix w = reference_combination(r);
  const Matrix gp = matmul(g, proj.projector);  // rows g_k P (P symmetric)
  Vector delta(w.rows());
  for (std::size_t k = 0; k < w.rows(); ++k) delta[k] = dot(w.row(k), gp.row(k));
  return delta;
}

namespace ad {

// Differentiable counterparts used by the trainer.

// Rows v_k^T = (N_c - 1) r_k - sum_{l != k} r_l - g_k, i.e. (N_c I - 1 1^T) R - G.
inline Var error_rows(Var refs, Var protos) {
  const std::size_t n = refs.rows();
  Matrix c(n, n, -1.0);
  for (std::size_t k = 0; k < n; ++k) c(k, k) = static_cast<double>(n) - 1.0;
  return sub(matmul(refs.tape().constant(std::move(c)), refs), protos);
}

// Q x N score matrix for query rows against reference rows under a symmetric
// projector p.
inline Var nulled_logits(Var queries, Var refs, Var p, LogitMode mode) {
  const Var qp = matmul(queries, p);
  const Var cross = matmul(qp, transpose(refs));  // q_i P r_k
  if (mode == LogitMode::kProjectedInnerProduct) return cross;
  const Var qq = row_sums(hadamard(qp, queries));                    // Q x 1
  const Var rr = transpose(row_sums(hadamard(matmul(refs, p), refs)));  // 1 x N
  // -(q P q - 2 q P r + r P r)
  return add_col_broadcast(add_row_broadcast(scale(cross, 2.0), scale(rr, -1.0)),
                           scale(qq, -1.0));
}

}  // namespace ad

}  // namespace mln

#endif  // MLN_NULLING_HEAD_HPP_
