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

#ifndef MLN_EVALUATOR_HPP_
#define MLN_EVALUATOR_HPP_

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <limits>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "mln/embedding.hpp"
#include "mln/episodes.hpp"
#include "mln/error.hpp"
#include "mln/model.hpp"
#include "mln/nulling_head.hpp"

namespace mln {

struct ReferenceSelection {
  Matrix refs;                    // way x D, row k bound to episode slot k
  std::vector<std::size_t> rows;  // bank row chosen for each slot
};

// Greedy relabeling: prototypes are visited in ascending slot order and each
// takes the unused bank row nearest in Euclidean distance. Distances are taken
// between unit-normalized copies when normalize is set. Ties go to the lower
// row index.
inline ReferenceSelection select_references(const ReferenceBank& bank,
                                            const PrototypeSet& protos,
                                            bool normalize = true,
                                            double eps = kDefaultNormEps) {
  const std::size_t way = protos.way();
  if (bank.size() < way) {
    throw DimensionError("select_references: bank has " +
                         std::to_string(bank.size()) + " references, episode way " +
                         std::to_string(way));
  }
  if (bank.dim() != protos.protos.cols())
    throw DimensionError("select_references: dimension mismatch");
  const Matrix r = normalize ? normalize_rows(bank.refs, eps) : bank.refs;
  const Matrix g = normalize ? normalize_rows(protos.protos, eps) : protos.protos;

  std::vector<bool> used(bank.size(), false);
  ReferenceSelection out{Matrix(way, bank.dim()), {}};
  for (std::size_t k = 0; k < way; ++k) {
    std::size_t best = bank.size();
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < bank.size(); ++j) {
      if (used[j]) continue;
      double d = 0.0;
      for (std::size_t c = 0; c < bank.dim(); ++c) {
        const double diff = r(j, c) - g(k, c);
        d += diff * diff;
      }
      if (d < best_d || best == bank.size()) {
        best = j;
        best_d = d;
      }
    }
    used[best] = true;
    out.rows.push_back(best);
    std::copy(bank.refs.row(best).begin(), bank.refs.row(best).end(),
              out.refs.row(k).begin());
  }
  return out;
}

// Test-time classification of one episode: embed, average, relabel, null,
// score. Returns the predicted slot of every query.
struct EpisodePrediction {
  std::vector<std::size_t> predicted;
  double accuracy = 0.0;
  ReferenceSelection selection;
  NullProjector projector;
  PrototypeSet protos;
};

inline EpisodePrediction classify_episode(const Checkpoint& model,
                                          const Episode& ep) {
  const HeadConfig& head = model.train.head;
  EpisodePrediction out;
  out.protos = class_averages(embed_batch(model.params, ep.support),
                              ep.support_slots, ep.way);
  out.selection = select_references(model.bank, out.protos, head.normalize,
                                    head.norm_eps);
  out.projector = build_projector(
      error_vectors(out.selection.refs, out.protos, head.normalize, head.norm_eps),
      head.rank_tol);
  const Matrix q = embed_batch(model.params, ep.queries);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < q.rows(); ++i) {
    const Vector s = nulled_logits(q.row(i), out.selection.refs, out.projector,
                                   head.logit_mode, head.normalize, head.norm_eps);
    out.predicted.push_back(argmax(s));
    if (out.predicted.back() == ep.query_slots[i]) ++correct;
  }
  out.accuracy = q.rows() == 0 ? 0.0 : static_cast<double>(correct) / q.rows();
  return out;
}

struct EvalReport {
  std::size_t episodes = 0;
  std::size_t way = 0;
  std::size_t shots = 0;
  std::size_t queries = 0;
  double mean_accuracy = 0.0;
  double ci95 = 0.0;  // half-width
  std::vector<double> episode_accuracies;
  std::string config_echo;
  double wall_seconds = 0.0;
};

struct AccuracySummary {
  double mean = 0.0;
  double ci95 = 0.0;
};

// Mean and normal-approximation 95% half-width 1.96 s / sqrt(n), s being the
// sample (n - 1) standard deviation. n < 2 gives a zero half-width.
inline AccuracySummary summarize_accuracies(std::span<const double> acc) {
  AccuracySummary out;
  const std::size_t n = acc.size();
  if (n == 0) return out;
  double sum = 0.0;
  for (double a : acc) sum += a;
  out.mean = sum / static_cast<double>(n);
  if (n < 2) return out;
  double ss = 0.0;
  for (double a : acc) ss += (a - out.mean) * (a - out.mean);
  const double s = std::sqrt(ss / static_cast<double>(n - 1));
  out.ci95 = 1.96 * s / std::sqrt(static_cast<double>(n));
  return out;
}

struct EvalOptions {
  std::size_t way = 5;
  std::size_t shots = 1;
  std::size_t queries = 15;
  std::size_t episodes = 1000;
  std::uint64_t seed = 1;
  Split split = Split::kTest;
  unsigned threads = 1;
};

// Episode i draws from a stream seeded with seed + i; results are reduced in
// episode order, so the report does not depend on the thread count.
inline EvalReport evaluate(const Checkpoint& model, const Dataset& ds,
                           const EvalOptions& opt) {
  if (ds.dim != model.embedding.input_dim) {
    throw DatasetError("dataset dimension " + std::to_string(ds.dim) +
                       " differs from model input " +
                       std::to_string(model.embedding.input_dim));
  }
  if (ds.split(opt.split).size() < opt.way) {
    throw DatasetError(std::string(split_name(opt.split)) + " split has " +
                       std::to_string(ds.split(opt.split).size()) +
                       " classes, evaluation needs " + std::to_string(opt.way));
  }
  const auto start = std::chrono::steady_clock::now();
  EvalReport rep;
  rep.episodes = opt.episodes;
  rep.way = opt.way;
  rep.shots = opt.shots;
  rep.queries = opt.queries;
  rep.episode_accuracies.assign(opt.episodes, 0.0);

  auto run = [&](std::size_t i) {
    RngStream rng(opt.seed + i);
    const Episode ep =
        sample_episode(ds, opt.split, opt.way, opt.shots, opt.queries, rng);
    rep.episode_accuracies[i] = classify_episode(model, ep).accuracy;
  };
  const unsigned threads = std::max(1u, opt.threads);
  if (threads == 1) {
    for (std::size_t i = 0; i < opt.episodes; ++i) run(i);
  } else {
    std::vector<std::exception_ptr> errors(threads);
    {
      std::vector<std::jthread> pool;
      for (unsigned t = 0; t < threads; ++t) {
        pool.emplace_back([&, t] {
          try {
            for (std::size_t i = t; i < opt.episodes; i += threads) run(i);
          } catch (...) {
            errors[t] = std::current_exception();
          }
        });
      }
    }
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }

  const AccuracySummary s = summarize_accuracies(rep.episode_accuracies);
  rep.mean_accuracy = s.mean;
  rep.ci95 = s.ci95;
  std::ostringstream echo;
  echo << "split=" << split_name(opt.split) << " way=" << opt.way
       << " shots=" << opt.shots << " queries=" << opt.queries
       << " episodes=" << opt.episodes << " seed=" << opt.seed
       << " logit_mode="
       << (model.train.head.logit_mode == LogitMode::kProjectedEuclidean
               ? "euclidean"
               : "inner")
       << " normalize=" << (model.train.head.normalize ? "true" : "false");
  rep.config_echo = echo.str();
  rep.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  return rep;
}

inline std::string report_csv_header() { return "way,shots,episodes,mean_acc,ci95"; }

inline std::string report_csv_row(const EvalReport& r) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%zu,%zu,%zu,%.6f,%.6f", r.way, r.shots,
                r.episodes, r.mean_accuracy, r.ci95);
  return buf;
}

// Nulling diagnostics for one episode under the test-time pipeline.
struct ProjectorDiagnostics {
  std::size_t dim = 0;
  std::size_t way = 0;
  std::vector<double> residual_norms;  // ||P v_k||
  std::vector<double> alignment;       // Delta_k
  double trace = 0.0;
  std::size_t rank = 0;                // rank of the error matrix
  Matrix ref_distances;                // ||P (r_i - r_j)|| on normalized refs
  std::vector<std::size_t> selected_rows;
};

inline ProjectorDiagnostics inspect_projector(const Checkpoint& model,
                                              const Episode& ep) {
  const HeadConfig& head = model.train.head;
  const PrototypeSet protos = class_averages(
      embed_batch(model.params, ep.support), ep.support_slots, ep.way);
  const ReferenceSelection sel =
      select_references(model.bank, protos, head.normalize, head.norm_eps);
  const ErrorMatrix errs =
      error_vectors(sel.refs, protos, head.normalize, head.norm_eps);
  const NullProjector proj = build_projector(errs, head.rank_tol);

  ProjectorDiagnostics d;
  d.dim = proj.dim();
  d.way = ep.way;
  d.selected_rows = sel.rows;
  const Matrix pv = matmul(proj.projector, errs.errs);
  for (std::size_t k = 0; k < ep.way; ++k) d.residual_norms.push_back(norm2(pv.column(k)));
  d.alignment = alignment_score(sel.refs, protos, proj, head.normalize, head.norm_eps);
  d.trace = trace(proj.projector);
  d.rank = proj.nulled_rank;
  const Matrix r = head.normalize ? normalize_rows(sel.refs, head.norm_eps) : sel.refs;
  const Matrix rp = matmul(r, proj.projector);
  d.ref_distances = Matrix(ep.way, ep.way);
  for (std::size_t i = 0; i < ep.way; ++i)
    for (std::size_t j = 0; j < ep.way; ++j) {
      Vector diff(d.dim);
      for (std::size_t c = 0; c < d.dim; ++c) diff[c] = rp(i, c) - rp(j, c);
      d.ref_distances(i, j) = norm2(diff);
    }
  return d;
}

// CSV with header quantity,i,j,value; unused index columns are empty.
inline std::string diagnostics_csv(const ProjectorDiagnostics& d) {
  std::ostringstream os;
  os.precision(17);
  os << "quantity,i,j,value\n";
  os << "dim,,," << d.dim << "\n";
  os << "way,,," << d.way << "\n";
  os << "trace,,," << d.trace << "\n";
  os << "rank,,," << d.rank << "\n";
  for (std::size_t k = 0; k < d.way; ++k)
    os << "selected_row," << k << ",," << d.selected_rows[k] << "\n";
  for (std::size_t k = 0; k < d.way; ++k)
    os << "residual_norm," << k << ",," << d.residual_norms[k] << "\n";
  for (std::size_t k = 0; k < d.way; ++k)
    os << "alignment," << k << ",," << d.alignment[k] << "\n";
  for (std::size_t i = 0; i < d.way; ++i)
    for (std::size_t j = i + 1; j < d.way; ++j)
      os << "ref_distance," << i << "," << j << "," << d.ref_distances(i, j) << "\n";
  return os.str();
}

}  // namespace mln

#endif  // MLN_EVALUATOR_HPP_
