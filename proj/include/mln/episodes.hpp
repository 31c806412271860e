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

#ifndef MLN_EPISODES_HPP_
#define MLN_EPISODES_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mln/binary_io.hpp"
#include "mln/error.hpp"
#include "mln/matrix.hpp"
#include "mln/rng.hpp"

namespace mln {

// Identity of a sampled item: source class id and index within that class.
struct ItemId {
  std::size_t class_id = 0;
  std::size_t item = 0;
  friend bool operator==(const ItemId&, const ItemId&) = default;
  friend auto operator<=>(const ItemId&, const ItemId&) = default;
};

// One few-shot task. Support rows are class-major (all shots of slot 0, then
// slot 1, ...); likewise queries. Slots are always 0..way-1.
struct Episode {
  std::size_t way = 0;
  std::size_t shots = 0;
  std::size_t queries_per_class = 0;
  std::vector<std::size_t> class_ids;  // source class bound to each slot

  Matrix support;
  std::vector<std::size_t> support_slots;
  std::vector<ItemId> support_ids;

  Matrix queries;
  std::vector<std::size_t> query_slots;
  std::vector<ItemId> query_ids;

  std::size_t input_dim() const noexcept { return support.cols(); }
};

namespace detail {

inline Episode empty_episode(std::size_t way, std::size_t shots,
                             std::size_t queries, std::size_t dim) {
  Episode ep;
  ep.way = way;
  ep.shots = shots;
  ep.queries_per_class = queries;
  ep.support = Matrix(way * shots, dim);
  ep.queries = Matrix(way * queries, dim);
  return ep;
}

}  // namespace detail

// Fresh class means uniform in [-1, 1]^dim; items are mean + N(0, sigma^2).
inline Episode gen_gaussian_episode(std::size_t way, std::size_t shots,
                                    std::size_t queries, std::size_t dim,
                                    double sigma, RngStream& rng) {
  if (way < 2) throw DatasetError("gaussian episode needs way >= 2");
  if (dim < 1) throw DatasetError("gaussian episode needs dim >= 1");
  if (shots < 1) throw DatasetError("gaussian episode needs shots >= 1");
  if (!(sigma >= 0.0)) throw DatasetError("gaussian spread must be >= 0");
  Episode ep = detail::empty_episode(way, shots, queries, dim);
  Matrix means(way, dim);
  for (double& x : means.data()) x = rng.uniform(-1.0, 1.0);
  for (std::size_t k = 0; k < way; ++k) {
    ep.class_ids.push_back(k);
    for (std::size_t n = 0; n < shots + queries; ++n) {
      const bool is_support = n < shots;
      Matrix& dst = is_support ? ep.support : ep.queries;
      const std::size_t row = is_support ? k * shots + n : k * queries + (n - shots);
      for (std::size_t j = 0; j < dim; ++j)
        dst(row, j) = means(k, j) + sigma * rng.normal();
      (is_support ? ep.support_slots : ep.query_slots).push_back(k);
      (is_support ? ep.support_ids : ep.query_ids).push_back(ItemId{k, n});
    }
  }
  return ep;
}

// ---------------------------------------------------------------------------
// Class pools and datasets.

// One matrix per class; each row is a flattened item.
using ClassPools = std::vector<Matrix>;

// Square raster rotated 90 degrees clockwise: out(i, j) = in(n - 1 - j, i).
inline Vector rotate90(std::span<const double> image, std::size_t side) {
  if (image.size() != side * side)
    throw DimensionError("rotate90: image is not " + std::to_string(side) +
                         "x" + std::to_string(side));
  Vector out(image.size());
  for (std::size_t i = 0; i < side; ++i)
    for (std::size_t j = 0; j < side; ++j)
      out[i * side + j] = image[(side - 1 - j) * side + i];
  return out;
}

// Each class spawns four classes (0, 90, 180, 270 degrees), emitted
// consecutively in that order.
inline ClassPools augment_rotations(const ClassPools& pools, std::size_t height,
                                    std::size_t width) {
  if (height != width) {
    throw DimensionError("augment_rotations: non-square images " +
                         std::to_string(height) + "x" + std::to_string(width));
  }
  ClassPools out;
  out.reserve(pools.size() * 4);
  for (const Matrix& cls : pools) {
    if (cls.cols() != height * width)
      throw DimensionError("augment_rotations: item size mismatch");
    Matrix cur = cls;
    for (int r = 0; r < 4; ++r) {
      out.push_back(cur);
      for (std::size_t i = 0; i < cur.rows(); ++i) {
        const Vector rot = rotate90(cur.row(i), height);
        std::copy(rot.begin(), rot.end(), cur.row(i).begin());
      }
    }
  }
  return out;
}

enum class Split { kTrain, kVal, kTest };

inline const char* split_name(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "?";
}

struct Dataset {
  std::size_t dim = 0;
  std::size_t height = 0;  // 0 for non-raster sources
  std::size_t width = 0;
  ClassPools classes;
  std::vector<std::size_t> train, val, test;

  const std::vector<std::size_t>& split(Split s) const {
    switch (s) {
      case Split::kTrain: return train;
      case Split::kVal: return val;
      case Split::kTest: return test;
    }
    return train;
  }
};

enum class DataSource { kGaussianSynthetic, kImageDirectory, kFlatBinary };

struct DatasetSpec {
  DataSource source = DataSource::kGaussianSynthetic;
  std::string path;  // file or directory for loaded sources

  // Class partition. For loaded sources the first train_classes base classes
  // (in file or directory order) form the training split, the next
  // val_classes the validation split, and the rest the test split.
  std::size_t train_classes = 1000;
  std::size_t val_classes = 100;
  std::size_t test_classes = 200;  // synthetic only

  // Synthetic source.
  std::size_t dim = 16;
  double sigma = 0.3;
  std::size_t items_per_class = 20;
  std::uint64_t seed = 7;

  // Raster sources. height/width of 0 infer a square shape (directory only).
  std::size_t height = 0;
  std::size_t width = 0;
  bool augment_rotations = false;
};

// ---------------------------------------------------------------------------
// Flat-binary format: "MLNDS1\0\0", u32 classes, u32 items per class,
// u32 height, u32 width, then class-major u8 rasters. Little-endian.

inline constexpr std::string_view kFlatMagic{"MLNDS1\0\0", 8};

struct RasterPools {
  std::size_t height = 0;
  std::size_t width = 0;
  ClassPools pools;  // pixel values in [0, 1]
};

inline RasterPools parse_flat_binary(std::span<const std::uint8_t> bytes) {
  io::ByteReader in(bytes);
  if (bytes.size() < kFlatMagic.size() || in.tag(kFlatMagic.size()) != kFlatMagic)
    throw FormatError("flat dataset: bad magic");
  const std::uint32_t classes = in.u32();
  const std::uint32_t items = in.u32();
  const std::uint32_t h = in.u32();
  const std::uint32_t w = in.u32();
  if (classes == 0 || items == 0 || h == 0 || w == 0)
    throw FormatError("flat dataset: zero dimension in header");
  const std::uint64_t expected = std::uint64_t{classes} * items * h * w;
  if (in.remaining() != expected) {
    throw FormatError("flat dataset: header promises " +
                      std::to_string(expected) + " pixel bytes, file has " +
                      std::to_string(in.remaining()));
  }
  RasterPools out{h, w, {}};
  for (std::uint32_t c = 0; c < classes; ++c) {
    Matrix m(items, std::size_t{h} * w);
    auto px = in.bytes(m.size());
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = px[i] / 255.0;
    out.pools.push_back(std::move(m));
  }
  return out;
}

inline RasterPools load_flat_binary(const std::string& path) {
  return parse_flat_binary(io::read_file(path));
}

// Pixels are quantized as round(255 x) clamped to [0, 255]. Every class must
// hold the same number of items.
inline std::vector<std::uint8_t> encode_flat_binary(const RasterPools& data) {
  if (data.pools.empty()) throw FormatError("flat dataset: no classes");
  const std::size_t items = data.pools.front().rows();
  io::ByteWriter out;
  out.tag(kFlatMagic);
  out.u32(static_cast<std::uint32_t>(data.pools.size()));
  out.u32(static_cast<std::uint32_t>(items));
  out.u32(static_cast<std::uint32_t>(data.height));
  out.u32(static_cast<std::uint32_t>(data.width));
  for (const Matrix& cls : data.pools) {
    if (cls.rows() != items || cls.cols() != data.height * data.width)
      throw FormatError("flat dataset: inconsistent class shape");
    for (double x : cls.data()) {
      const double q = std::round(std::clamp(x, 0.0, 1.0) * 255.0);
      out.u8(static_cast<std::uint8_t>(q));
    }
  }
  return std::move(out.buffer());
}

inline void write_flat_binary(const std::string& path, const RasterPools& data) {
  io::write_file(path, encode_flat_binary(data));
}

// Directory of per-class subdirectories, each holding raw u8 raster files.
// Classes and items are taken in lexicographic name order.
inline RasterPools load_image_directory(const std::string& path,
                                        std::size_t height, std::size_t width) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(path)) throw DatasetError("not a directory: " + path);
  std::vector<fs::path> class_dirs;
  for (const auto& e : fs::directory_iterator(path))
    if (e.is_directory()) class_dirs.push_back(e.path());
  std::sort(class_dirs.begin(), class_dirs.end());
  if (class_dirs.empty()) throw DatasetError("no class directories in " + path);

  RasterPools out{height, width, {}};
  for (const fs::path& dir : class_dirs) {
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(dir))
      if (e.is_regular_file()) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    if (files.empty()) throw DatasetError("empty class directory " + dir.string());
    std::vector<std::vector<std::uint8_t>> rasters;
    for (const fs::path& f : files) {
      rasters.push_back(io::read_file(f.string()));
      const std::size_t n = rasters.back().size();
      if (out.height == 0 && out.width == 0) {
        const auto side = static_cast<std::size_t>(std::llround(std::sqrt(double(n))));
        if (side * side != n)
          throw FormatError("cannot infer square shape for " + f.string());
        out.height = out.width = side;
      }
      if (n != out.height * out.width) {
        throw FormatError("raster " + f.string() + " has " + std::to_string(n) +
                          " bytes, expected " +
                          std::to_string(out.height * out.width));
      }
    }
    Matrix m(rasters.size(), out.height * out.width);
    for (std::size_t i = 0; i < rasters.size(); ++i)
      for (std::size_t j = 0; j < m.cols(); ++j) m(i, j) = rasters[i][j] / 255.0;
    out.pools.push_back(std::move(m));
  }
  return out;
}

namespace detail {

// Splits base classes in order and augments within each split, so rotated
// variants of one base class never straddle a partition boundary.
inline Dataset partition(RasterPools raw, const DatasetSpec& spec) {
  const std::size_t n = raw.pools.size();
  if (spec.train_classes + spec.val_classes > n) {
    throw DatasetError("split needs " +
                       std::to_string(spec.train_classes + spec.val_classes) +
                       " classes for train+val, dataset has " +
                       std::to_string(n));
  }
  Dataset ds;
  ds.height = raw.height;
  ds.width = raw.width;
  ds.dim = raw.height * raw.width;
  const std::size_t bounds[4] = {0, spec.train_classes,
                                 spec.train_classes + spec.val_classes, n};
  std::vector<std::size_t>* lists[3] = {&ds.train, &ds.val, &ds.test};
  for (int s = 0; s < 3; ++s) {
    ClassPools part(raw.pools.begin() + static_cast<std::ptrdiff_t>(bounds[s]),
                    raw.pools.begin() + static_cast<std::ptrdiff_t>(bounds[s + 1]));
    if (spec.augment_rotations) part = augment_rotations(part, ds.height, ds.width);
    for (Matrix& m : part) {
      lists[s]->push_back(ds.classes.size());
      ds.classes.push_back(std::move(m));
    }
  }
  return ds;
}

}  // namespace detail

inline Dataset make_gaussian_dataset(const DatasetSpec& spec) {
  if (spec.dim < 1) throw DatasetError("synthetic dataset needs dim >= 1");
  if (spec.items_per_class < 1)
    throw DatasetError("synthetic dataset needs items_per_class >= 1");
  RngStream rng(spec.seed);
  Dataset ds;
  ds.dim = spec.dim;
  const std::size_t counts[3] = {spec.train_classes, spec.val_classes,
                                 spec.test_classes};
  std::vector<std::size_t>* lists[3] = {&ds.train, &ds.val, &ds.test};
  for (int s = 0; s < 3; ++s) {
    for (std::size_t c = 0; c < counts[s]; ++c) {
      Vector mean(spec.dim);
      for (double& x : mean) x = rng.uniform(-1.0, 1.0);
      Matrix items(spec.items_per_class, spec.dim);
      for (std::size_t i = 0; i < items.rows(); ++i)
        for (std::size_t j = 0; j < spec.dim; ++j)
          items(i, j) = mean[j] + spec.sigma * rng.normal();
      lists[s]->push_back(ds.classes.size());
      ds.classes.push_back(std::move(items));
    }
  }
  return ds;
}

inline Dataset make_dataset(const DatasetSpec& spec) {
  switch (spec.source) {
    case DataSource::kGaussianSynthetic:
      return make_gaussian_dataset(spec);
    case DataSource::kFlatBinary:
      return detail::partition(load_flat_binary(spec.path), spec);
    case DataSource::kImageDirectory:
      return detail::partition(
          load_image_directory(spec.path, spec.height, spec.width), spec);
  }
  throw DatasetError("unknown data source");
}

// Samples `way` classes of the split without replacement, then
// shots + queries items per class without replacement; the first `shots`
// become support.
inline Episode sample_episode(const Dataset& ds, Split split, std::size_t way,
                              std::size_t shots, std::size_t queries,
                              RngStream& rng) {
  const auto& pool = ds.split(split);
  if (way == 0 || shots == 0) throw DatasetError("episode needs way, shots >= 1");
  if (pool.size() < way) {
    throw DatasetError(std::string(split_name(split)) + " split has " +
                       std::to_string(pool.size()) + " classes, episode needs " +
                       std::to_string(way));
  }
  Episode ep = detail::empty_episode(way, shots, queries, ds.dim);
  const auto picked = rng.sample_without_replacement(pool.size(), way);
  for (std::size_t k = 0; k < way; ++k) {
    const std::size_t cid = pool[picked[k]];
    const Matrix& items = ds.classes[cid];
    if (items.rows() < shots + queries) {
      throw DatasetError("class " + std::to_string(cid) + " has " +
                         std::to_string(items.rows()) + " items, episode needs " +
                         std::to_string(shots + queries));
    }
    ep.class_ids.push_back(cid);
    const auto chosen = rng.sample_without_replacement(items.rows(), shots + queries);
    for (std::size_t n = 0; n < chosen.size(); ++n) {
      const bool is_support = n < shots;
      Matrix& dst = is_support ? ep.support : ep.queries;
      const std::size_t row = is_support ? k * shots + n : k * queries + (n - shots);
      std::copy(items.row(chosen[n]).begin(), items.row(chosen[n]).end(),
                dst.row(row).begin());
      (is_support ? ep.support_slots : ep.query_slots).push_back(k);
      (is_support ? ep.support_ids : ep.query_ids).push_back(ItemId{cid, chosen[n]});
    }
  }
  return ep;
}

}  // namespace mln

#endif  // MLN_EPISODES_HPP_
