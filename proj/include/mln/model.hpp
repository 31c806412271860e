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

#ifndef MLN_MODEL_HPP_
#define MLN_MODEL_HPP_

#include <cstddef>
#include <cstdint>
#include <string>

#include "mln/adam.hpp"
#include "mln/embedding.hpp"
#include "mln/error.hpp"
#include "mln/nulling_head.hpp"

namespace mln {

struct TrainConfig {
  std::uint64_t episodes = 2000;  // N_E
  std::size_t way = 20;           // training way; slot k trains reference k
  std::size_t shots = 1;
  // Queries per class while training. An assumption; test episodes commonly
  // use 5 or 15.
  std::size_t queries = 5;
  double base_lr = 3e-3;
  double decay_factor = 0.5;
  std::uint64_t decay_interval = 2000;
  std::uint64_t seed = 1;
  HeadConfig head;

  double lr_at(std::uint64_t step) const {
    return lr_schedule(step, base_lr, decay_factor, decay_interval);
  }

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

// Everything needed to resume training or to evaluate.
struct Checkpoint {
  static constexpr std::uint32_t kFormatVersion = 1;

  std::uint32_t version = kFormatVersion;
  EmbeddingConfig embedding;
  EmbeddingParams params;
  ReferenceBank bank;
  AdamState adam;
  TrainConfig train;
  std::uint64_t episode = 0;  // episodes completed

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

inline void validate(const EmbeddingConfig& ec, const TrainConfig& tc) {
  ec.validate();
  if (ec.output_dim() != tc.head.dim) {
    throw ConfigError("embedding output dimension " +
                      std::to_string(ec.output_dim()) +
                      " differs from head dimension " +
                      std::to_string(tc.head.dim));
  }
  if (tc.way < 2) throw ConfigError("training way must be at least 2");
  if (tc.shots < 1) throw ConfigError("training shots must be at least 1");
  if (tc.queries < 1) throw ConfigError("training queries must be at least 1");
  if (tc.way > tc.head.num_refs) {
    throw ConfigError("training way " + std::to_string(tc.way) +
                      " exceeds reference count " +
                      std::to_string(tc.head.num_refs));
  }
  if (tc.head.dim <= tc.way) {
    throw ConfigError("embedding dimension " + std::to_string(tc.head.dim) +
                      " must exceed training way " + std::to_string(tc.way) +
                      " for the null space to exist");
  }
  if (!(tc.base_lr > 0.0)) throw ConfigError("learning rate must be positive");
}

// Fresh model: parameters from the embedding init seed, references as random
// unit rows drawn from a stream derived from the training seed.
inline Checkpoint initial_checkpoint(const EmbeddingConfig& ec,
                                     const TrainConfig& tc) {
  validate(ec, tc);
  Checkpoint cp;
  cp.embedding = ec;
  cp.params = init_params(ec);
  RngStream ref_rng(tc.seed ^ 0x9E3779B97F4A7C15ull);
  cp.bank = ReferenceBank::random_unit(tc.head.num_refs, tc.head.dim, ref_rng);
  cp.train = tc;
  return cp;
}

}  // namespace mln

#endif  // MLN_MODEL_HPP_
