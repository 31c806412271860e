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

#ifndef MLN_CHECKPOINT_HPP_
#define MLN_CHECKPOINT_HPP_

#include <zlib.h>

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mln/binary_io.hpp"
#include "mln/error.hpp"
#include "mln/model.hpp"

// Checkpoint file layout (little-endian):
//
//   "MLNCKPT1"  u32 version  u64 episode
//   embedding:  u32 input_dim  u32 layers  u32 width[layers]  u64 init_seed
//   train:      u64 episodes  u32 way  u32 shots  u32 queries  f64 base_lr
//               f64 decay_factor  u64 decay_interval  u64 seed
//   head:       u32 dim  u32 num_refs  u32 logit_mode  u32 gradient_mode
//               u32 normalize  f64 rank_tol  f64 norm_eps
//   params:     per layer: tensor weight, tensor bias
//   bank:       tensor refs  u32 count  u32 label[count]
//   adam:       f64 beta1  f64 beta2  f64 eps  u64 step  u32 count
//               tensor first[count]  tensor second[count]
//   u32 CRC-32 of every preceding byte
//
// tensor = u32 rank (2)  u32 rows  u32 cols  f64 data[rows*cols] row-major
namespace mln {

inline constexpr std::string_view kCheckpointMagic = "MLNCKPT1";

namespace detail {

inline void put_tensor(io::ByteWriter& w, const Matrix& m) {
  w.u32(2);
  w.u32(static_cast<std::uint32_t>(m.rows()));
  w.u32(static_cast<std::uint32_t>(m.cols()));
  for (double x : m.data()) w.f64(x);
}

inline Matrix get_tensor(io::ByteReader& r) {
  const std::uint32_t rank = r.u32();
  if (rank != 2) throw FormatError("checkpoint: unsupported tensor rank " +
                                   std::to_string(rank));
  const std::uint32_t rows = r.u32();
  const std::uint32_t cols = r.u32();
  if (std::uint64_t{rows} * cols * 8 > r.remaining())
    throw FormatError("checkpoint: tensor larger than remaining data");
  Matrix m(rows, cols);
  for (double& x : m.data()) x = r.f64();
  return m;
}

inline std::uint32_t crc32_of(std::span<const std::uint8_t> data) {
  uLong crc = ::crc32(0L, Z_NULL, 0);
  crc = ::crc32(crc, data.data(), static_cast<uInt>(data.size()));
  return static_cast<std::uint32_t>(crc);
}

template <class E>
E get_enum(io::ByteReader& r, std::uint32_t max_value, const char* what) {
  const std::uint32_t v = r.u32();
  if (v > max_value) throw FormatError(std::string("checkpoint: bad ") + what);
  return static_cast<E>(v);
}

}  // namespace detail

inline std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& cp) {
  io::ByteWriter w;
  w.tag(kCheckpointMagic);
  w.u32(cp.version);
  w.u64(cp.episode);

  w.u32(static_cast<std::uint32_t>(cp.embedding.input_dim));
  w.u32(static_cast<std::uint32_t>(cp.embedding.widths.size()));
  for (std::size_t width : cp.embedding.widths) w.u32(static_cast<std::uint32_t>(width));
  w.u64(cp.embedding.init_seed);

  const TrainConfig& t = cp.train;
  w.u64(t.episodes);
  w.u32(static_cast<std::uint32_t>(t.way));
  w.u32(static_cast<std::uint32_t>(t.shots));
  w.u32(static_cast<std::uint32_t>(t.queries));
  w.f64(t.base_lr);
  w.f64(t.decay_factor);
  w.u64(t.decay_interval);
  w.u64(t.seed);
  w.u32(static_cast<std::uint32_t>(t.head.dim));
  w.u32(static_cast<std::uint32_t>(t.head.num_refs));
  w.u32(static_cast<std::uint32_t>(t.head.logit_mode));
  w.u32(static_cast<std::uint32_t>(t.head.gradient_mode));
  w.u32(t.head.normalize ? 1 : 0);
  w.f64(t.head.rank_tol);
  w.f64(t.head.norm_eps);

  if (cp.params.weights.size() != cp.embedding.widths.size())
    throw FormatError("checkpoint: parameter layers disagree with config");
  for (std::size_t l = 0; l < cp.params.num_layers(); ++l) {
    detail::put_tensor(w, cp.params.weights[l]);
    detail::put_tensor(w, cp.params.biases[l]);
  }

  detail::put_tensor(w, cp.bank.refs);
  w.u32(static_cast<std::uint32_t>(cp.bank.labels.size()));
  for (std::size_t label : cp.bank.labels) w.u32(static_cast<std::uint32_t>(label));

  w.f64(cp.adam.beta1);
  w.f64(cp.adam.beta2);
  w.f64(cp.adam.eps);
  w.u64(cp.adam.step);
  w.u32(static_cast<std::uint32_t>(cp.adam.first_moment.size()));
  for (const Matrix& m : cp.adam.first_moment) detail::put_tensor(w, m);
  for (const Matrix& m : cp.adam.second_moment) detail::put_tensor(w, m);

  w.u32(detail::crc32_of(w.buffer()));
  return std::move(w.buffer());
}

inline Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kCheckpointMagic.size() + 8)
    throw FormatError("checkpoint: file too short");
  const auto body = bytes.first(bytes.size() - 4);
  io::ByteReader trailer(bytes.last(4));
  if (detail::crc32_of(body) != trailer.u32())
    throw ChecksumError("checkpoint: CRC-32 mismatch");

  io::ByteReader r(body);
  if (r.tag(kCheckpointMagic.size()) != kCheckpointMagic)
    throw FormatError("checkpoint: bad magic");
  Checkpoint cp;
  cp.version = r.u32();
  if (cp.version != Checkpoint::kFormatVersion) {
    throw VersionError("checkpoint: version " + std::to_string(cp.version) +
                       ", this build reads version " +
                       std::to_string(Checkpoint::kFormatVersion));
  }
  cp.episode = r.u64();

  cp.embedding.input_dim = r.u32();
  const std::uint32_t layers = r.u32();
  if (layers > r.remaining()) throw FormatError("checkpoint: bad layer count");
  cp.embedding.widths.clear();
  for (std::uint32_t l = 0; l < layers; ++l) cp.embedding.widths.push_back(r.u32());
  cp.embedding.init_seed = r.u64();

  TrainConfig& t = cp.train;
  t.episodes = r.u64();
  t.way = r.u32();
  t.shots = r.u32();
  t.queries = r.u32();
  t.base_lr = r.f64();
  t.decay_factor = r.f64();
  t.decay_interval = r.u64();
  t.seed = r.u64();
  t.head.dim = r.u32();
  t.head.num_refs = r.u32();
  t.head.logit_mode = detail::get_enum<LogitMode>(r, 1, "logit mode");
  t.head.gradient_mode = detail::get_enum<GradientMode>(r, 1, "gradient mode");
  t.head.normalize = r.u32() != 0;
  t.head.rank_tol = r.f64();
  t.head.norm_eps = r.f64();

  for (std::uint32_t l = 0; l < layers; ++l) {
    cp.params.weights.push_back(detail::get_tensor(r));
    cp.params.biases.push_back(detail::get_tensor(r));
  }

  cp.bank.refs = detail::get_tensor(r);
  const std::uint32_t nlabels = r.u32();
  if (nlabels != cp.bank.refs.rows())
    throw FormatError("checkpoint: label count disagrees with reference rows");
  for (std::uint32_t i = 0; i < nlabels; ++i) cp.bank.labels.push_back(r.u32());

  cp.adam.beta1 = r.f64();
  cp.adam.beta2 = r.f64();
  cp.adam.eps = r.f64();
  cp.adam.step = r.u64();
  const std::uint32_t moments = r.u32();
  if (moments > r.remaining()) throw FormatError("checkpoint: bad moment count");
  for (std::uint32_t i = 0; i < moments; ++i)
    cp.adam.first_moment.push_back(detail::get_tensor(r));
  for (std::uint32_t i = 0; i < moments; ++i)
    cp.adam.second_moment.push_back(detail::get_tensor(r));

  if (r.remaining() != 0) throw FormatError("checkpoint: trailing bytes");
  return cp;
}

inline void save_checkpoint(const Checkpoint& cp, const std::string& path) {
  io::write_file(path, encode_checkpoint(cp));
}

inline Checkpoint load_checkpoint(const std::string& path) {
  return decode_checkpoint(io::read_file(path));
}

}  // namespace mln

#endif  // MLN_CHECKPOINT_HPP_
