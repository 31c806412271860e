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

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <numbers>
#include <string>
#include <vector>

#include "mln/checkpoint.hpp"
#include "mln/evaluator.hpp"
#include "mln/trainer.hpp"
#include "oracles.hpp"

namespace mln {
namespace {

struct SmallModel {
  EmbeddingParams params;
  ReferenceBank bank;
  HeadConfig head;
};

// Two-layer embedding 4 -> 6 -> 8 with random biases and a 5-row bank.
SmallModel small_model(std::uint64_t seed,
                       GradientMode mode = GradientMode::kStopGradientProjector) {
  RngStream rng(seed);
  SmallModel m;
  m.params = init_params(EmbeddingConfig{4, {6, 8}, seed});
  for (Matrix& b : m.params.biases) b = oracle::random_matrix(rng, 1, b.cols(), -0.2, 0.2);
  m.bank = ReferenceBank::random_unit(5, 8, rng);
  m.head.dim = 8;
  m.head.num_refs = 5;
  m.head.gradient_mode = mode;
  return m;
}

Episode small_episode(std::uint64_t seed, std::size_t way = 3) {
  RngStream rng(seed);
  return gen_gaussian_episode(way, 2, 3, 4, 0.4, rng);
}

// Every intermediate formed explicitly from scalar loops and Gram-Schmidt.
struct OracleLoss {
  double loss;
  Matrix logits;
};

OracleLoss oracle_episode_loss(const SmallModel& m, const Episode& ep) {
  const Matrix s = oracle::naive_embed(m.params, ep.support);
  const Matrix q = oracle::naive_embed(m.params, ep.queries);
  const std::size_t d = s.cols();
  Matrix protos(ep.way, d);
  std::vector<double> count(ep.way, 0.0);
  for (std::size_t i = 0; i < s.rows(); ++i) {
    count[ep.support_slots[i]] += 1.0;
    for (std::size_t c = 0; c < d; ++c) protos(ep.support_slots[i], c) += s(i, c);
  }
  for (std::size_t k = 0; k < ep.way; ++k)
    for (std::size_t c = 0; c < d; ++c) protos(k, c) /= count[k];
  Matrix refs(ep.way, d);
  for (std::size_t k = 0; k < ep.way; ++k)
    for (std::size_t c = 0; c < d; ++c) refs(k, c) = m.bank.refs(k, c);
  const Matrix rh = oracle::unit_rows(refs);
  const Matrix v = oracle::error_columns(rh, oracle::unit_rows(protos));
  const Matrix p = oracle::basis_projector(oracle::mgs_null_basis(v));

  OracleLoss out{0.0, Matrix(q.rows(), ep.way)};
  long double total = 0.0L;
  for (std::size_t i = 0; i < q.rows(); ++i) {
    for (std::size_t k = 0; k < ep.way; ++k) {
      std::vector<double> diff(d);
      for (std::size_t c = 0; c < d; ++c) diff[c] = rh(k, c) - q(i, c);
      double z = 0.0;
      for (std::size_t a = 0; a < d; ++a)
        for (std::size_t b = 0; b < d; ++b) z += diff[a] * p(a, b) * diff[b];
      out.logits(i, k) = -z;
    }
    total += oracle::softmax_ce_extended(out.logits.row(i), ep.query_slots[i]);
  }
  out.loss = static_cast<double>(total / q.rows());
  return out;
}

TEST(EpisodeLoss, MatchesStepByStepOracle) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const SmallModel m = small_model(seed);
    const Episode ep = small_episode(100 + seed);
    const EpisodeLoss res = episode_loss(m.params, m.bank, ep, m.head, false);
    const OracleLoss o = oracle_episode_loss(m, ep);
    EXPECT_NEAR(res.loss, o.loss, 1e-10 * std::max(1.0, o.loss)) << seed;
    EXPECT_LT(oracle::abs_diff_max(res.logits, o.logits), 1e-10) << seed;
  }
}

TEST(EpisodeLoss, DifferentiableModeHasTheSameValue) {
  const SmallModel a = small_model(3);
  const SmallModel b = small_model(3, GradientMode::kDifferentiateProjector);
  const Episode ep = small_episode(33);
  EXPECT_NEAR(episode_loss(a.params, a.bank, ep, a.head).loss,
              episode_loss(b.params, b.bank, ep, b.head).loss, 1e-10);
}

TEST(EpisodeLoss, DuplicatedReferencesGiveLnTwo) {
  // Identical references make both logits of every query equal.
  SmallModel m = small_model(4);
  for (std::size_t c = 0; c < 8; ++c) m.bank.refs(1, c) = m.bank.refs(0, c);
  const Episode ep = small_episode(44, 2);
  const EpisodeLoss res = episode_loss(m.params, m.bank, ep, m.head);
  EXPECT_NEAR(res.loss, std::numbers::ln2, 1e-12);
  for (std::size_t i = 0; i < res.logits.rows(); ++i)
    EXPECT_EQ(res.logits(i, 0), res.logits(i, 1));
}

TEST(EpisodeLoss, TrueLabelsBeatShuffledControl) {
  // Zero spread: every query coincides with its class prototype.
  int wins = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    SmallModel m = small_model(seed);
    RngStream rng(500 + seed);
    Episode ep = gen_gaussian_episode(3, 1, 2, 4, 0.0, rng);
    const double truth = episode_loss(m.params, m.bank, ep, m.head, false).loss;
    for (std::size_t& s : ep.query_slots) s = (s + 1) % 3;
    const double shuffled = episode_loss(m.params, m.bank, ep, m.head, false).loss;
    wins += truth < shuffled;
  }
  EXPECT_EQ(wins, 20);
}

TEST(EpisodeLoss, WayAboveBankSizeThrows) {
  const SmallModel m = small_model(5);
  EXPECT_THROW(episode_loss(m.params, m.bank, small_episode(55, 6), m.head),
               DimensionError);
}

Matrix& slot(SmallModel& m, std::size_t i) {
  const std::size_t layers = m.params.num_layers();
  if (i < 2 * layers) return i % 2 == 0 ? m.params.weights[i / 2] : m.params.biases[i / 2];
  return m.bank.refs;
}

const Matrix& grad_slot(const EpisodeLoss& r, std::size_t i) {
  const std::size_t layers = r.weight_grads.size();
  if (i < 2 * layers) return i % 2 == 0 ? r.weight_grads[i / 2] : r.bias_grads[i / 2];
  return r.bank_grad;
}

TEST(EpisodeLoss, StopGradientMatchesFiniteDifferencesWithFixedProjector) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    SmallModel m = small_model(seed);
    const Episode ep = small_episode(200 + seed);
    const EpisodeLoss res = episode_loss(m.params, m.bank, ep, m.head);
    const Matrix p = res.projector.projector;
    for (std::size_t i = 0; i < 5; ++i) {
      const Matrix fd = oracle::finite_difference(
          [&](const Matrix& x) {
            SmallModel c = m;
            slot(c, i) = x;
            return episode_loss(c.params, c.bank, ep, c.head, false, &p).loss;
          },
          slot(m, i));
      EXPECT_LT(oracle::rel_error(grad_slot(res, i), fd), 1e-4)
          << "seed " << seed << " param " << i;
    }
    // Unused bank rows receive no gradient.
    for (std::size_t r = 3; r < 5; ++r)
      for (std::size_t c = 0; c < 8; ++c) EXPECT_EQ(res.bank_grad(r, c), 0.0);
  }
}

TEST(EpisodeLoss, DifferentiableProjectorMatchesFiniteDifferences) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    SmallModel m = small_model(seed, GradientMode::kDifferentiateProjector);
    const Episode ep = small_episode(300 + seed);
    const EpisodeLoss res = episode_loss(m.params, m.bank, ep, m.head);
    for (std::size_t i = 0; i < 5; ++i) {
      const Matrix fd = oracle::finite_difference(
          [&](const Matrix& x) {
            SmallModel c = m;
            slot(c, i) = x;
            return episode_loss(c.params, c.bank, ep, c.head, false).loss;
          },
          slot(m, i));
      EXPECT_LT(oracle::rel_error(grad_slot(res, i), fd), 1e-4)
          << "seed " << seed << " param " << i;
    }
  }
}

TEST(Adam, ZeroGradientLeavesParametersAndAdvancesStep) {
  Matrix w{{1.0, -2.0}, {0.5, 3.0}};
  const Matrix before = w;
  AdamState st;
  adam_update(st, {w}, {Matrix(2, 2)}, 0.1);
  EXPECT_EQ(w, before);
  EXPECT_EQ(st.step, 1u);
  adam_update(st, {w}, {Matrix(2, 2)}, 0.1);
  EXPECT_EQ(st.step, 2u);
}

TEST(Adam, FirstStepMovesByLearningRateTimesSign) {
  Matrix w{{1.0, -2.0, 0.0}};
  const Matrix before = w;
  AdamState st;
  const double lr = 0.01;
  adam_update(st, {w}, {Matrix{{0.3, -7.0, 1e-3}}}, lr);
  EXPECT_NEAR(w[0], before[0] - lr, 1e-7 * lr);
  EXPECT_NEAR(w[1], before[1] + lr, 1e-7 * lr);
  EXPECT_NEAR(w[2], before[2] - lr, 1e-4 * lr);
}

TEST(Adam, TenStepsMatchScalarLoop) {
  RngStream rng(61);
  Matrix a = oracle::gaussian_matrix(rng, 2, 3);
  Matrix b = oracle::gaussian_matrix(rng, 1, 4);
  std::vector<double> ref(a.data());
  ref.insert(ref.end(), b.data().begin(), b.data().end());
  std::vector<double> m1(ref.size(), 0.0), m2(ref.size(), 0.0);
  AdamState st;
  for (int t = 1; t <= 10; ++t) {
    const Matrix ga = oracle::gaussian_matrix(rng, 2, 3);
    const Matrix gb = oracle::gaussian_matrix(rng, 1, 4);
    const double lr = 0.05 / t;
    adam_update(st, {a, b}, {ga, gb}, lr);
    std::vector<double> g(ga.data());
    g.insert(g.end(), gb.data().begin(), gb.data().end());
    for (std::size_t i = 0; i < ref.size(); ++i) {
      m1[i] = 0.9 * m1[i] + 0.1 * g[i];
      m2[i] = 0.999 * m2[i] + 0.001 * g[i] * g[i];
      const double mh = m1[i] / (1.0 - std::pow(0.9, t));
      const double vh = m2[i] / (1.0 - std::pow(0.999, t));
      ref[i] -= lr * mh / (std::sqrt(vh) + 1e-8);
    }
  }
  for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR(a[i], ref[i], 1e-12);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(b[i], ref[6 + i], 1e-12);
  EXPECT_EQ(st.step, 10u);
}

TEST(Adam, ShapeMismatchThrows) {
  Matrix w(2, 2);
  AdamState st;
  EXPECT_THROW(adam_update(st, {w}, {Matrix(2, 3)}, 0.1), DimensionError);
  EXPECT_THROW(adam_update(st, {w}, {}, 0.1), DimensionError);
}

TEST(LrSchedule, StepDecay) {
  EXPECT_EQ(lr_schedule(0, 0.01, 0.5, 2000), 0.01);
  EXPECT_EQ(lr_schedule(1999, 0.01, 0.5, 2000), 0.01);
  EXPECT_EQ(lr_schedule(2000, 0.01, 0.5, 2000), 0.005);
  EXPECT_DOUBLE_EQ(lr_schedule(6000, 0.01, 0.5, 2000), 0.01 * 0.125);
  EXPECT_EQ(TrainConfig{}.lr_at(0), TrainConfig{}.base_lr);
}

struct TinySetup {
  EmbeddingConfig ec{6, {16, 12}, 3};
  TrainConfig tc;
  Dataset ds;

  explicit TinySetup(std::uint64_t episodes) {
    tc.episodes = episodes;
    tc.way = 5;
    tc.queries = 3;
    tc.head.dim = 12;
    tc.head.num_refs = 8;
    DatasetSpec spec;
    spec.dim = 6;
    spec.train_classes = 40;
    spec.val_classes = 0;
    spec.test_classes = 10;
    ds = make_dataset(spec);
  }
};

TEST(TrainLoop, ZeroEpisodesReturnsInitialization) {
  TinySetup s(0);
  int calls = 0;
  const Checkpoint cp = train_loop(s.tc, s.ec, s.ds, [&](const EpisodeMetrics&) { ++calls; });
  EXPECT_EQ(cp, initial_checkpoint(s.ec, s.tc));
  EXPECT_EQ(calls, 0);
  for (std::size_t r = 0; r < cp.bank.size(); ++r)
    EXPECT_NEAR(norm2(cp.bank.refs.row(r)), 1.0, 1e-12);
}

TEST(TrainLoop, SameSeedSameMetricsAndCheckpoint) {
  TinySetup s(40);
  std::vector<std::string> a, b;
  const Checkpoint x = train_loop(s.tc, s.ec, s.ds,
                                  [&](const EpisodeMetrics& m) { a.push_back(metrics_csv_row(m)); });
  const Checkpoint y = train_loop(s.tc, s.ec, s.ds,
                                  [&](const EpisodeMetrics& m) { b.push_back(metrics_csv_row(m)); });
  ASSERT_EQ(a.size(), 40u);
  EXPECT_EQ(a, b);
  EXPECT_EQ(encode_checkpoint(x), encode_checkpoint(y));
  EXPECT_EQ(x.episode, 40u);
  EXPECT_EQ(x.adam.step, 40u);
}

TEST(TrainLoop, ResumingMatchesUninterruptedRun) {
  TinySetup s(30);
  const Checkpoint full = train_loop(s.tc, s.ec, s.ds);
  TinySetup half(15);
  Checkpoint cp = train_loop(half.tc, half.ec, half.ds);
  cp.train.episodes = 30;
  cp = decode_checkpoint(encode_checkpoint(cp));
  continue_training(cp, s.ds);
  EXPECT_EQ(cp, full);
}

TEST(TrainLoop, OnlyTrainableStateChangesAndUnboundRowsStay) {
  TinySetup s(25);
  const Checkpoint init = initial_checkpoint(s.ec, s.tc);
  const Checkpoint cp = train_loop(s.tc, s.ec, s.ds);
  EXPECT_EQ(cp.embedding, init.embedding);
  EXPECT_EQ(cp.train, init.train);
  EXPECT_EQ(cp.version, init.version);
  EXPECT_EQ(cp.bank.labels, init.bank.labels);
  EXPECT_NE(cp.params, init.params);
  // Rows bound to a slot move; rows beyond the training way never do.
  for (std::size_t r = 0; r < s.tc.way; ++r)
    EXPECT_GT(max_abs_diff(Matrix::row_vector(cp.bank.refs.row(r)),
                           Matrix::row_vector(init.bank.refs.row(r))),
              0.0);
  for (std::size_t r = s.tc.way; r < cp.bank.size(); ++r)
    EXPECT_EQ(Matrix::row_vector(cp.bank.refs.row(r)),
              Matrix::row_vector(init.bank.refs.row(r)));
}

TEST(TrainLoop, NonFiniteParametersAbort) {
  TinySetup s(5);
  Checkpoint cp = initial_checkpoint(s.ec, s.tc);
  cp.params.weights[0](0, 0) = std::nan("");
  EXPECT_THROW(continue_training(cp, s.ds), DivergenceError);
}

TEST(TrainLoop, ConfigValidation) {
  TinySetup s(1);
  TrainConfig tc = s.tc;
  tc.way = 12;  // not below the embedding dimension
  tc.head.num_refs = 12;
  EXPECT_THROW(initial_checkpoint(s.ec, tc), ConfigError);
  tc = s.tc;
  tc.head.num_refs = 4;
  EXPECT_THROW(initial_checkpoint(s.ec, tc), ConfigError);
  tc = s.tc;
  tc.head.dim = 10;
  EXPECT_THROW(initial_checkpoint(s.ec, tc), ConfigError);
  DatasetSpec wrong;
  wrong.dim = 7;
  wrong.train_classes = 10;
  EXPECT_THROW(train_loop(s.tc, s.ec, make_dataset(wrong)), ConfigError);
}

TEST(TrainLoop, TrainingAccuracyImproves) {
  EmbeddingConfig ec{16, {64, 16}, 1};
  TrainConfig tc;
  tc.episodes = 2000;
  tc.way = 5;
  tc.head.dim = 16;
  tc.head.num_refs = 5;
  DatasetSpec spec;
  const Dataset ds = make_dataset(spec);
  std::vector<double> acc;
  train_loop(tc, ec, ds, [&](const EpisodeMetrics& m) { acc.push_back(m.train_acc); });
  ASSERT_EQ(acc.size(), 2000u);
  double first = 0.0, last = 0.0;
  for (std::size_t i = 0; i < 500; ++i) {
    first += acc[i];
    last += acc[1500 + i];
  }
  EXPECT_GT(last / 500.0, first / 500.0);
}

TEST(Checkpoint, RoundtripIsBitExact) {
  TinySetup s(10);
  const Checkpoint cp = train_loop(s.tc, s.ec, s.ds);
  const auto bytes = encode_checkpoint(cp);
  const Checkpoint back = decode_checkpoint(bytes);
  EXPECT_EQ(back, cp);
  EXPECT_EQ(encode_checkpoint(back), bytes);

  const auto dir = std::filesystem::temp_directory_path() / "mln_ckpt_roundtrip";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "m.ckpt").string();
  save_checkpoint(cp, path);
  EXPECT_EQ(load_checkpoint(path), cp);
  std::filesystem::remove_all(dir);
}

TEST(Checkpoint, CorruptionIsDetected) {
  TinySetup s(2);
  const auto bytes = encode_checkpoint(train_loop(s.tc, s.ec, s.ds));
  for (std::size_t pos : {std::size_t{0}, std::size_t{9}, bytes.size() / 2, bytes.size() - 1}) {
    auto bad = bytes;
    bad[pos] ^= 0x10;
    EXPECT_THROW(decode_checkpoint(bad), ChecksumError) << pos;
  }
  EXPECT_THROW(decode_checkpoint(std::span(bytes).first(3)), FormatError);
}

TEST(Checkpoint, OtherVersionIsRejected) {
  TinySetup s(0);
  Checkpoint cp = train_loop(s.tc, s.ec, s.ds);
  cp.version = Checkpoint::kFormatVersion + 1;
  EXPECT_THROW(decode_checkpoint(encode_checkpoint(cp)), VersionError);
}

TEST(Checkpoint, MissingFileIsError) {
  EXPECT_THROW(load_checkpoint("/nonexistent/dir/m.ckpt"), Error);
}

TEST(Checkpoint, LoadedModelScoresIdentically) {
  TinySetup s(20);
  const Checkpoint cp = train_loop(s.tc, s.ec, s.ds);
  const Checkpoint back = decode_checkpoint(encode_checkpoint(cp));
  RngStream rng(71);
  const Episode ep = sample_episode(s.ds, Split::kTest, 5, 1, 4, rng);
  const EpisodePrediction a = classify_episode(cp, ep);
  const EpisodePrediction b = classify_episode(back, ep);
  EXPECT_EQ(a.predicted, b.predicted);
  EXPECT_EQ(a.projector.projector, b.projector.projector);
  EXPECT_EQ(episode_loss(cp.params, cp.bank, ep, cp.train.head, false).logits,
            episode_loss(back.params, back.bank, ep, back.train.head, false).logits);
}

}  // namespace
}  // namespace mln
