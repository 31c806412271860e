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

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "mln/episodes.hpp"
#include "oracles.hpp"

namespace mln {
namespace {

namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() /
            ("mln_test_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
             "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  std::string file(const std::string& name) const { return (path_ / name).string(); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

void expect_episode_shape(const Episode& ep, std::size_t way, std::size_t shots,
                          std::size_t queries, std::size_t dim) {
  EXPECT_EQ(ep.support.rows(), way * shots);
  EXPECT_EQ(ep.queries.rows(), way * queries);
  EXPECT_EQ(ep.support.cols(), dim);
  std::vector<std::size_t> s(way, 0), q(way, 0);
  for (std::size_t x : ep.support_slots) ++s.at(x);
  for (std::size_t x : ep.query_slots) ++q.at(x);
  for (std::size_t k = 0; k < way; ++k) {
    EXPECT_EQ(s[k], shots);
    EXPECT_EQ(q[k], queries);
  }
}

TEST(GaussianEpisode, Deterministic) {
  RngStream a(5), b(5);
  const Episode x = gen_gaussian_episode(5, 2, 3, 8, 0.3, a);
  const Episode y = gen_gaussian_episode(5, 2, 3, 8, 0.3, b);
  EXPECT_EQ(x.support, y.support);
  EXPECT_EQ(x.queries, y.queries);
}

TEST(GaussianEpisode, ZeroSpreadCollapsesClasses) {
  RngStream rng(6);
  const Episode ep = gen_gaussian_episode(4, 3, 2, 5, 0.0, rng);
  for (std::size_t k = 0; k < 4; ++k) {
    const auto first = ep.support.row(k * 3);
    for (std::size_t i = 0; i < 3; ++i) {
      const auto r = ep.support.row(k * 3 + i);
      EXPECT_TRUE(std::equal(r.begin(), r.end(), first.begin()));
    }
    for (std::size_t i = 0; i < 2; ++i) {
      const auto r = ep.queries.row(k * 2 + i);
      EXPECT_TRUE(std::equal(r.begin(), r.end(), first.begin()));
    }
    for (double x : first) {
      EXPECT_GE(x, -1.0);
      EXPECT_LT(x, 1.0);
    }
  }
}

TEST(GaussianEpisode, ShapeLaw) {
  RngStream rng(7);
  const Episode ep = gen_gaussian_episode(5, 1, 15, 16, 0.3, rng);
  expect_episode_shape(ep, 5, 1, 15, 16);
  EXPECT_EQ(ep.support.rows(), 5u);
  EXPECT_EQ(ep.queries.rows(), 75u);
}

TEST(GaussianEpisode, InvalidSizes) {
  RngStream rng(8);
  EXPECT_THROW(gen_gaussian_episode(1, 1, 1, 4, 0.1, rng), DatasetError);
  EXPECT_THROW(gen_gaussian_episode(3, 1, 1, 0, 0.1, rng), DatasetError);
}

TEST(Rotation, FourQuarterTurnsIsIdentity) {
  RngStream rng(9);
  Vector img(25);
  for (double& x : img) x = rng.uniform();
  Vector r = img;
  for (int i = 0; i < 4; ++i) r = rotate90(r, 5);
  EXPECT_EQ(r, img);
  EXPECT_NE(rotate90(img, 5), img);
}

TEST(Rotation, TwoByTwoIndexPermutation) {
  // [[a,b],[c,d]] -> [[c,a],[d,b]]
  const Vector img{1, 2, 3, 4};
  EXPECT_EQ(rotate90(img, 2), (Vector{3, 1, 4, 2}));
}

TEST(Rotation, AugmentationQuadruplesClasses) {
  ClassPools pools(3, Matrix(2, 9));
  RngStream rng(10);
  for (Matrix& m : pools) m = oracle::random_matrix(rng, 2, 9, 0, 1);
  const ClassPools aug = augment_rotations(pools, 3, 3);
  ASSERT_EQ(aug.size(), 12u);
  EXPECT_EQ(aug[0], pools[0]);
  EXPECT_EQ(aug[4], pools[1]);
  const Vector once = rotate90(pools[2].row(1), 3);
  EXPECT_TRUE(std::equal(once.begin(), once.end(), aug[9].row(1).begin()));
}

TEST(Rotation, NonSquareRejected) {
  EXPECT_THROW(augment_rotations(ClassPools{Matrix(1, 6)}, 2, 3), DimensionError);
}

Dataset small_dataset(std::size_t classes, std::size_t items, std::size_t dim) {
  DatasetSpec spec;
  spec.train_classes = classes;
  spec.val_classes = 0;
  spec.test_classes = 0;
  spec.items_per_class = items;
  spec.dim = dim;
  return make_dataset(spec);
}

TEST(SampleEpisode, ForcedSelectionUsesEveryClass) {
  const Dataset ds = small_dataset(4, 6, 3);
  RngStream rng(11);
  const Episode ep = sample_episode(ds, Split::kTrain, 4, 2, 1, rng);
  std::set<std::size_t> ids(ep.class_ids.begin(), ep.class_ids.end());
  EXPECT_EQ(ids, (std::set<std::size_t>{0, 1, 2, 3}));
  expect_episode_shape(ep, 4, 2, 1, 3);
}

TEST(SampleEpisode, ExhaustionUsesEveryItemOnce) {
  const Dataset ds = small_dataset(3, 5, 2);
  RngStream rng(12);
  const Episode ep = sample_episode(ds, Split::kTrain, 3, 2, 3, rng);
  std::set<ItemId> seen;
  for (const ItemId& id : ep.support_ids) seen.insert(id);
  for (const ItemId& id : ep.query_ids) seen.insert(id);
  EXPECT_EQ(seen.size(), 15u);
  // Rows carry the data of the recorded items.
  for (std::size_t i = 0; i < ep.query_ids.size(); ++i) {
    const auto src = ds.classes[ep.query_ids[i].class_id].row(ep.query_ids[i].item);
    EXPECT_TRUE(std::equal(src.begin(), src.end(), ep.queries.row(i).begin()));
  }
}

TEST(SampleEpisode, SupportAndQueryNeverOverlap) {
  const Dataset ds = small_dataset(30, 8, 2);
  RngStream rng(13);
  for (int t = 0; t < 1000; ++t) {
    const Episode ep = sample_episode(ds, Split::kTrain, 5, 3, 4, rng);
    std::set<ItemId> support(ep.support_ids.begin(), ep.support_ids.end());
    ASSERT_EQ(support.size(), ep.support_ids.size());
    for (const ItemId& q : ep.query_ids) ASSERT_FALSE(support.contains(q));
    std::set<ItemId> queries(ep.query_ids.begin(), ep.query_ids.end());
    ASSERT_EQ(queries.size(), ep.query_ids.size());
    for (std::size_t s : ep.support_slots) ASSERT_LT(s, 5u);
  }
}

TEST(SampleEpisode, InsufficientClassesOrItems) {
  const Dataset ds = small_dataset(3, 4, 2);
  RngStream rng(14);
  EXPECT_THROW(sample_episode(ds, Split::kTrain, 4, 1, 1, rng), DatasetError);
  EXPECT_THROW(sample_episode(ds, Split::kTrain, 2, 3, 2, rng), DatasetError);
  EXPECT_THROW(sample_episode(ds, Split::kTest, 2, 1, 1, rng), DatasetError);
}

TEST(SampleEpisode, ReproducibleFromSeed) {
  const Dataset ds = small_dataset(10, 6, 3);
  RngStream a(77), b(77);
  const Episode x = sample_episode(ds, Split::kTrain, 4, 2, 2, a);
  const Episode y = sample_episode(ds, Split::kTrain, 4, 2, 2, b);
  EXPECT_EQ(x.support_ids, y.support_ids);
  EXPECT_EQ(x.query_ids, y.query_ids);
}

TEST(GaussianDataset, SplitsAreDisjointAndDeterministic) {
  DatasetSpec spec;
  spec.train_classes = 10;
  spec.val_classes = 3;
  spec.test_classes = 4;
  const Dataset a = make_dataset(spec);
  const Dataset b = make_dataset(spec);
  EXPECT_EQ(a.classes, b.classes);
  std::set<std::size_t> all;
  for (auto s : {Split::kTrain, Split::kVal, Split::kTest})
    for (std::size_t c : a.split(s)) EXPECT_TRUE(all.insert(c).second);
  EXPECT_EQ(all.size(), 17u);
}

RasterPools quantized_pools(std::size_t classes, std::size_t items,
                            std::size_t h, std::size_t w, std::uint64_t seed) {
  RngStream rng(seed);
  RasterPools p{h, w, {}};
  for (std::size_t c = 0; c < classes; ++c) {
    Matrix m(items, h * w);
    for (double& x : m.data()) x = static_cast<double>(rng.below(256)) / 255.0;
    p.pools.push_back(std::move(m));
  }
  return p;
}

TEST(FlatBinary, WriteThenReadRoundtrip) {
  TempDir dir;
  const RasterPools p = quantized_pools(2, 3, 4, 4, 15);
  write_flat_binary(dir.file("d.bin"), p);
  const RasterPools back = load_flat_binary(dir.file("d.bin"));
  EXPECT_EQ(back.height, 4u);
  EXPECT_EQ(back.width, 4u);
  ASSERT_EQ(back.pools.size(), 2u);
  EXPECT_EQ(back.pools[0].rows(), 3u);
  EXPECT_EQ(back.pools[1].rows(), 3u);
  EXPECT_EQ(back.pools[0].cols(), 16u);
  EXPECT_EQ(back.pools, p.pools);
}

TEST(FlatBinary, HeaderLayoutIsLittleEndian) {
  const auto bytes = encode_flat_binary(quantized_pools(2, 3, 4, 4, 16));
  ASSERT_EQ(bytes.size(), 8u + 16u + 2u * 3u * 16u);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 8), std::string("MLNDS1\0\0", 8));
  EXPECT_EQ(bytes[8], 2);
  EXPECT_EQ(bytes[12], 3);
  EXPECT_EQ(bytes[16], 4);
  EXPECT_EQ(bytes[20], 4);
  EXPECT_EQ(bytes[9] | bytes[10] | bytes[11], 0);
}

TEST(FlatBinary, TruncatedFileIsFormatError) {
  auto bytes = encode_flat_binary(quantized_pools(2, 3, 4, 4, 17));
  bytes.pop_back();
  EXPECT_THROW(parse_flat_binary(bytes), FormatError);
  EXPECT_THROW(parse_flat_binary(std::span(bytes).first(10)), FormatError);
}

TEST(FlatBinary, BadMagicIsFormatError) {
  auto bytes = encode_flat_binary(quantized_pools(1, 1, 2, 2, 18));
  bytes[0] = 'X';
  EXPECT_THROW(parse_flat_binary(bytes), FormatError);
}

TEST(FlatBinary, InconsistentDimensionsAreFormatError) {
  auto bytes = encode_flat_binary(quantized_pools(1, 2, 2, 2, 19));
  bytes[16] = 3;  // height now disagrees with payload size
  EXPECT_THROW(parse_flat_binary(bytes), FormatError);
  bytes[16] = 0;
  EXPECT_THROW(parse_flat_binary(bytes), FormatError);
}

TEST(FlatBinary, DatasetAugmentsWithinSplits) {
  TempDir dir;
  write_flat_binary(dir.file("d.bin"), quantized_pools(5, 4, 3, 3, 20));
  DatasetSpec spec;
  spec.source = DataSource::kFlatBinary;
  spec.path = dir.file("d.bin");
  spec.train_classes = 3;
  spec.val_classes = 0;
  spec.augment_rotations = true;
  const Dataset ds = make_dataset(spec);
  EXPECT_EQ(ds.dim, 9u);
  EXPECT_EQ(ds.train.size(), 12u);
  EXPECT_TRUE(ds.val.empty());
  EXPECT_EQ(ds.test.size(), 8u);
  // Each block of four consecutive classes is one base class's rotations, and
  // every block lies entirely on one side of the split.
  for (std::size_t c : ds.train) EXPECT_LT(c, 12u);
  for (std::size_t c : ds.test) EXPECT_GE(c, 12u);
  const Vector r = rotate90(ds.classes[ds.test[0]].row(0), 3);
  EXPECT_TRUE(std::equal(r.begin(), r.end(), ds.classes[ds.test[1]].row(0).begin()));
}

TEST(ImageDirectory, LoadsPerClassRasters) {
  TempDir dir;
  for (int c = 0; c < 3; ++c) {
    fs::create_directories(dir.path() / ("class" + std::to_string(c)));
    for (int i = 0; i < 2; ++i) {
      std::ofstream f(dir.path() / ("class" + std::to_string(c)) /
                          ("item" + std::to_string(i) + ".raw"),
                      std::ios::binary);
      for (int p = 0; p < 4; ++p) f.put(static_cast<char>(c * 10 + i * 2 + p));
    }
  }
  const RasterPools p = load_image_directory(dir.path().string(), 0, 0);
  EXPECT_EQ(p.height, 2u);
  ASSERT_EQ(p.pools.size(), 3u);
  EXPECT_DOUBLE_EQ(p.pools[2](1, 3), (20 + 2 + 3) / 255.0);

  fs::create_directories(dir.path() / "class3");
  std::ofstream(dir.path() / "class3" / "bad.raw") << "abc";
  EXPECT_THROW(load_image_directory(dir.path().string(), 0, 0), FormatError);
}

}  // namespace
}  // namespace mln
