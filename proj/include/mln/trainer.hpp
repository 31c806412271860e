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

#ifndef MLN_TRAINER_HPP_
#define MLN_TRAINER_HPP_

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <numeric>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "mln/adam.hpp"
#include "mln/autodiff.hpp"
#include "mln/embedding.hpp"
#include "mln/episodes.hpp"
#include "mln/error.hpp"
#include "mln/model.hpp"
#include "mln/nulling_head.hpp"

namespace mln {

struct EpisodeLoss {
  double loss = 0.0;
  Matrix logits;  // queries x way
  double accuracy = 0.0;
  NullProjector projector;  // the projector the logits were scored under
  // Filled when gradients were requested.
  std::vector<Matrix> weight_grads;
  std::vector<Matrix> bias_grads;
  Matrix bank_grad;  // N_ref x D; rows >= way are zero
};

// Averaging operator A (way x n) with A(k, i) = 1/|S_k| for support row i in
// slot k, so A * embeddings gives the prototypes.
inline Matrix averaging_matrix(std::span<const std::size_t> slots,
                               std::size_t way) {
  std::vector<std::size_t> counts(way, 0);
  for (std::size_t s : slots) {
    if (s >= way) throw DimensionError("averaging_matrix: slot out of range");
    ++counts[s];
  }
  Matrix a(way, slots.size());
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (counts[slots[i]] == 0) continue;
    a(slots[i], i) = 1.0 / static_cast<double>(counts[slots[i]]);
  }
  for (std::size_t k = 0; k < way; ++k)
    if (counts[k] == 0)
      throw DegenerateInputError("slot " + std::to_string(k) + " has no support");
  return a;
}

// Mean softmax cross-entropy of nulled logits over the episode's queries.
// Episode slot k is bound to reference row k. The projector is built once
// from the support prototypes unless fixed_projector is given, in which case
// that matrix is used as-is (for gradient checks with P held constant).
inline EpisodeLoss episode_loss(const EmbeddingParams& params,
                                const ReferenceBank& bank, const Episode& ep,
                                const HeadConfig& head, bool with_grads = true,
                                const Matrix* fixed_projector = nullptr) {
  if (ep.way > bank.size()) {
    throw DimensionError("episode way " + std::to_string(ep.way) +
                         " exceeds reference count " +
                         std::to_string(bank.size()));
  }
  if (bank.dim() != params.output_dim())
    throw DimensionError("reference dimension differs from embedding output");

  ad::Tape tape;
  const ad::EmbeddingVars vars = ad::register_params(tape, params, with_grads);
  const ad::Var phi = with_grads ? tape.leaf(bank.refs) : tape.constant(bank.refs);

  std::vector<std::size_t> slots_idx(ep.way);
  std::iota(slots_idx.begin(), slots_idx.end(), std::size_t{0});
  const ad::Var refs = ad::gather_rows(phi, slots_idx);
  const ad::Var refs_hat =
      head.normalize ? ad::normalize_rows(refs, head.norm_eps) : refs;

  const ad::Var support = ad::embed(vars, tape.constant(ep.support));
  const ad::Var protos =
      ad::matmul(tape.constant(averaging_matrix(ep.support_slots, ep.way)), support);

  EpisodeLoss out;
  ad::Var p;
  if (fixed_projector != nullptr) {
    p = tape.constant(*fixed_projector);
    out.projector.projector = *fixed_projector;
  } else if (head.gradient_mode == GradientMode::kDifferentiateProjector) {
    const ad::Var protos_hat =
        head.normalize ? ad::normalize_rows(protos, head.norm_eps) : protos;
    const ad::Var errs = ad::error_rows(refs_hat, protos_hat);
    p = ad::complement_projector(errs, head.rank_tol);
    out.projector.projector = p.value();
    out.projector.nulled_rank = matrix_rank(errs.value(), head.rank_tol);
    out.projector.existence_guaranteed = head.dim > ep.way;
  } else {
    const PrototypeSet ps{protos.value(), slots_idx};
    out.projector = build_projector(
        error_vectors(refs.value(), ps, head.normalize, head.norm_eps),
        head.rank_tol);
    p = tape.constant(out.projector.projector);
  }

  const ad::Var queries = ad::embed(vars, tape.constant(ep.queries));
  const ad::Var logits = ad::nulled_logits(queries, refs_hat, p, head.logit_mode);
  const ad::Var loss = ad::mean_softmax_cross_entropy(logits, ep.query_slots);

  out.loss = loss.value()[0];
  out.logits = logits.value();
  std::size_t correct = 0;
  for (std::size_t i = 0; i < out.logits.rows(); ++i)
    if (argmax(out.logits.row(i)) == ep.query_slots[i]) ++correct;
  out.accuracy = out.logits.rows() == 0
                     ? 0.0
                     : static_cast<double>(correct) / out.logits.rows();

  if (with_grads) {
    tape.backward(loss);
    for (std::size_t l = 0; l < vars.weights.size(); ++l) {
      out.weight_grads.push_back(tape.grad(vars.weights[l]));
      out.bias_grads.push_back(tape.grad(vars.biases[l]));
    }
    out.bank_grad = tape.grad(phi);
  }
  return out;
}

struct EpisodeMetrics {
  std::uint64_t episode = 0;
  double loss = 0.0;
  double train_acc = 0.0;
  double lr = 0.0;
};

inline std::string metrics_csv_header() { return "episode,loss,train_acc,lr"; }

inline std::string metrics_csv_row(const EpisodeMetrics& m) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "%llu,%.17g,%.17g,%.17g",
                static_cast<unsigned long long>(m.episode), m.loss, m.train_acc,
                m.lr);
  return buf;
}

using MetricsSink = std::function<void(const EpisodeMetrics&)>;

// Parameters in optimizer order: every weight and bias of the embedding
// (layer-major), then the reference bank.
inline ParamRefs trainable_params(Checkpoint& cp) {
  ParamRefs out;
  for (std::size_t l = 0; l < cp.params.num_layers(); ++l) {
    out.emplace_back(cp.params.weights[l]);
    out.emplace_back(cp.params.biases[l]);
  }
  out.emplace_back(cp.bank.refs);
  return out;
}

// Runs the remaining cp.train.episodes - cp.episode episodes in place.
// Episode i samples from a stream seeded with train.seed + i.
inline void continue_training(Checkpoint& cp, const Dataset& ds,
                              const MetricsSink& sink = {}) {
  const TrainConfig& tc = cp.train;
  validate(cp.embedding, tc);
  if (ds.dim != cp.embedding.input_dim) {
    throw ConfigError("dataset dimension " + std::to_string(ds.dim) +
                      " differs from embedding input " +
                      std::to_string(cp.embedding.input_dim));
  }
  for (; cp.episode < tc.episodes; ++cp.episode) {
    RngStream rng(tc.seed + cp.episode);
    const Episode ep =
        sample_episode(ds, Split::kTrain, tc.way, tc.shots, tc.queries, rng);
    EpisodeLoss res;
    try {
      res = episode_loss(cp.params, cp.bank, ep, tc.head);
    } catch (const NonFiniteError& e) {
      throw DivergenceError("episode " + std::to_string(cp.episode) + ": " +
                            e.what());
    }
    if (!std::isfinite(res.loss)) {
      throw DivergenceError("episode " + std::to_string(cp.episode) +
                            ": loss is not finite");
    }
    std::vector<Matrix> grads;
    for (std::size_t l = 0; l < res.weight_grads.size(); ++l) {
      grads.push_back(std::move(res.weight_grads[l]));
      grads.push_back(std::move(res.bias_grads[l]));
    }
    grads.push_back(std::move(res.bank_grad));
    const double lr = tc.lr_at(cp.episode);
    adam_update(cp.adam, trainable_params(cp), grads, lr);
    for (const Matrix& m : trainable_params(cp))
      if (!m.all_finite())
        throw DivergenceError("episode " + std::to_string(cp.episode) +
                              ": parameters became non-finite");
    if (sink) sink(EpisodeMetrics{cp.episode, res.loss, res.accuracy, lr});
  }
}

inline Checkpoint train_loop(const TrainConfig& tc, const EmbeddingConfig& ec,
                             const Dataset& ds, const MetricsSink& sink = {}) {
  Checkpoint cp = initial_checkpoint(ec, tc);
  continue_training(cp, ds, sink);
  return cp;
}

}  // namespace mln

#endif  // MLN_TRAINER_HPP_
