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

#ifndef MLN_EMBEDDING_HPP_
#define MLN_EMBEDDING_HPP_

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "mln/autodiff.hpp"
#include "mln/error.hpp"
#include "mln/matrix.hpp"
#include "mln/rng.hpp"

namespace mln {

// Affine+ReLU stack; widths lists the output width of each layer and the last
// entry is the embedding dimension D. No ReLU after the final layer.
struct EmbeddingConfig {
  std::size_t input_dim = 16;
  std::vector<std::size_t> widths{128, 64};
  std::uint64_t init_seed = 1;

  std::size_t output_dim() const { return widths.empty() ? 0 : widths.back(); }

  void validate() const {
    if (input_dim == 0) throw ConfigError("embedding input dimension is zero");
    if (widths.empty()) throw ConfigError("embedding needs at least one layer");
    for (std::size_t w : widths)
      if (w == 0) throw ConfigError("embedding layer width is zero");
  }

  friend bool operator==(const EmbeddingConfig&, const EmbeddingConfig&) = default;
};

struct EmbeddingParams {
  std::vector<Matrix> weights;  // layer l: fan_in x fan_out
  std::vector<Matrix> biases;   // layer l: 1 x fan_out

  std::size_t num_layers() const noexcept { return weights.size(); }
  std::size_t input_dim() const { return weights.front().rows(); }
  std::size_t output_dim() const { return weights.back().cols(); }

  friend bool operator==(const EmbeddingParams&, const EmbeddingParams&) = default;
};

// Weights ~ U(-b, b) with b = sqrt(6 / (fan_in + fan_out)); biases zero.
inline EmbeddingParams init_params(const EmbeddingConfig& config,
                                   RngStream& rng) {
  config.validate();
  EmbeddingParams p;
  std::size_t fan_in = config.input_dim;
  for (std::size_t fan_out : config.widths) {
    const double bound =
        std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Matrix w(fan_in, fan_out);
    for (double& x : w.data()) x = rng.uniform(-bound, bound);
    p.weights.push_back(std::move(w));
    p.biases.emplace_back(1, fan_out);
    fan_in = fan_out;
  }
  return p;
}

inline EmbeddingParams init_params(const EmbeddingConfig& config) {
  RngStream rng(config.init_seed);
  return init_params(config, rng);
}

inline Matrix embed_batch(const EmbeddingParams& params, const Matrix& inputs) {
  if (params.weights.empty()) throw DimensionError("embed_batch: no layers");
  if (inputs.cols() != params.input_dim()) {
    throw DimensionError("embed_batch: input width " +
                         std::to_string(inputs.cols()) + ", expected " +
                         std::to_string(params.input_dim()));
  }
  Matrix h = inputs;
  for (std::size_t l = 0; l < params.num_layers(); ++l) {
    h = matmul(h, params.weights[l]);
    const Matrix& b = params.biases[l];
    for (std::size_t i = 0; i < h.rows(); ++i)
      for (std::size_t j = 0; j < h.cols(); ++j) h(i, j) += b[j];
    if (l + 1 < params.num_layers()) h = relu(h);
  }
  check_finite(h, "embed_batch");
  return h;
}

namespace ad {

// Parameters registered on a tape, in the same layer order as EmbeddingParams.
struct EmbeddingVars {
  std::vector<Var> weights;
  std::vector<Var> biases;
};

inline EmbeddingVars register_params(Tape& tape, const EmbeddingParams& params,
                                     bool requires_grad = true) {
  EmbeddingVars v;
  for (std::size_t l = 0; l < params.num_layers(); ++l) {
    v.weights.push_back(requires_grad ? tape.leaf(params.weights[l])
                                      : tape.constant(params.weights[l]));
    v.biases.push_back(requires_grad ? tape.leaf(params.biases[l])
                                     : tape.constant(params.biases[l]));
  }
  return v;
}

inline Var embed(const EmbeddingVars& vars, Var inputs) {
  if (vars.weights.empty()) throw DimensionError("embed: no layers");
  Var h = inputs;
  for (std::size_t l = 0; l < vars.weights.size(); ++l) {
    h = add_row_broadcast(matmul(h, vars.weights[l]), vars.biases[l]);
    if (l + 1 < vars.weights.size()) h = relu(h);
  }
  return h;
}

}  // namespace ad

}  // namespace mln

#endif  // MLN_EMBEDDING_HPP_
