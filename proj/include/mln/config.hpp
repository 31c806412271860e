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

#ifndef MLN_CONFIG_HPP_
#define MLN_CONFIG_HPP_

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include "mln/embedding.hpp"
#include "mln/episodes.hpp"
#include "mln/error.hpp"
#include "mln/evaluator.hpp"
#include "mln/model.hpp"

// Plain-text run configuration: `key = value` lines grouped under [dataset],
// [model], [train] and [eval] sections. Lines starting with ';' are comments.
//
//   [dataset]  source (gaussian | flat | directory), path, dim, sigma,
//              items_per_class, train_classes, val_classes, test_classes,
//              seed, height, width, augment (for file sources the test
//              split is every class after train and val)
//   [model]    widths (comma list; last entry is the embedding dimension),
//              init_seed, num_refs, logit_mode (euclidean | inner),
//              gradient_mode (stop | differentiate), normalize, rank_tol
//   [train]    episodes, way, shots, queries, lr, decay_factor,
//              decay_interval, seed
//   [eval]     way, shots, queries, episodes, seed, split, threads
namespace mln {

struct RunConfig {
  DatasetSpec dataset;
  EmbeddingConfig embedding;
  TrainConfig train;
  EvalOptions eval;
};

namespace detail {

namespace pt = boost::property_tree;

inline const std::map<std::string, std::set<std::string>>& known_keys() {
  static const std::map<std::string, std::set<std::string>> keys = {
      {"dataset",
       {"source", "path", "dim", "sigma", "items_per_class", "train_classes",
        "val_classes", "test_classes", "seed", "height", "width", "augment"}},
      {"model",
       {"widths", "init_seed", "num_refs", "logit_mode", "gradient_mode",
        "normalize", "rank_tol"}},
      {"train",
       {"episodes", "way", "shots", "queries", "lr", "decay_factor",
        "decay_interval", "seed"}},
      {"eval", {"way", "shots", "queries", "episodes", "seed", "split", "threads"}},
  };
  return keys;
}

template <class T>
void read_key(const pt::ptree& sec, const char* key, T& dst,
              const std::string& section) {
  if (auto v = sec.get_optional<std::string>(key)) {
    if constexpr (std::is_unsigned_v<T>) {
      if (v->find('-') != std::string::npos)
        throw ConfigError("[" + section + "] " + key + ": must be non-negative");
    }
    std::istringstream is(*v);
    T parsed{};
    if (!(is >> parsed) || !(is >> std::ws).eof())
      throw ConfigError("[" + section + "] " + key + ": cannot parse '" + *v + "'");
    dst = parsed;
  }
}

inline void read_bool(const pt::ptree& sec, const char* key, bool& dst,
                      const std::string& section) {
  if (auto v = sec.get_optional<std::string>(key)) {
    if (*v == "true" || *v == "1" || *v == "yes") {
      dst = true;
    } else if (*v == "false" || *v == "0" || *v == "no") {
      dst = false;
    } else {
      throw ConfigError("[" + section + "] " + key + ": expected a boolean");
    }
  }
}

inline std::vector<std::size_t> parse_widths(const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::istringstream is(item);
    std::size_t w = 0;
    if (item.find('-') != std::string::npos || !(is >> w) ||
        !(is >> std::ws).eof() || w == 0)
      throw ConfigError("[model] widths: bad entry '" + item + "'");
    out.push_back(w);
  }
  if (out.empty()) throw ConfigError("[model] widths: empty list");
  return out;
}

inline Split parse_split(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "val") return Split::kVal;
  if (s == "test") return Split::kTest;
  throw ConfigError("unknown split '" + s + "'");
}

}  // namespace detail

inline RunConfig parse_config(std::istream& in) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  const auto& known = detail::known_keys();
  for (const auto& [section, body] : tree) {
    auto it = known.find(section);
    if (it == known.end()) throw ConfigError("unknown config section [" + section + "]");
    for (const auto& [key, value] : body)
      if (!it->second.contains(key))
        throw ConfigError("unknown key '" + key + "' in [" + section + "]");
  }

  RunConfig rc;
  const pt::ptree empty;
  const pt::ptree& ds = tree.get_child("dataset", empty);
  if (auto src = ds.get_optional<std::string>("source")) {
    if (*src == "gaussian") {
      rc.dataset.source = DataSource::kGaussianSynthetic;
    } else if (*src == "flat") {
      rc.dataset.source = DataSource::kFlatBinary;
    } else if (*src == "directory") {
      rc.dataset.source = DataSource::kImageDirectory;
    } else {
      throw ConfigError("[dataset] source: unknown '" + *src + "'");
    }
  }
  rc.dataset.path = ds.get<std::string>("path", "");
  detail::read_key(ds, "dim", rc.dataset.dim, "dataset");
  detail::read_key(ds, "sigma", rc.dataset.sigma, "dataset");
  detail::read_key(ds, "items_per_class", rc.dataset.items_per_class, "dataset");
  detail::read_key(ds, "train_classes", rc.dataset.train_classes, "dataset");
  detail::read_key(ds, "val_classes", rc.dataset.val_classes, "dataset");
  detail::read_key(ds, "test_classes", rc.dataset.test_classes, "dataset");
  detail::read_key(ds, "seed", rc.dataset.seed, "dataset");
  detail::read_key(ds, "height", rc.dataset.height, "dataset");
  detail::read_key(ds, "width", rc.dataset.width, "dataset");
  detail::read_bool(ds, "augment", rc.dataset.augment_rotations, "dataset");

  const pt::ptree& md = tree.get_child("model", empty);
  if (auto w = md.get_optional<std::string>("widths"))
    rc.embedding.widths = detail::parse_widths(*w);
  detail::read_key(md, "init_seed", rc.embedding.init_seed, "model");
  HeadConfig& head = rc.train.head;
  head.num_refs = rc.train.way;
  detail::read_key(md, "num_refs", head.num_refs, "model");
  if (auto m = md.get_optional<std::string>("logit_mode")) {
    if (*m == "euclidean") {
      head.logit_mode = LogitMode::kProjectedEuclidean;
    } else if (*m == "inner") {
      head.logit_mode = LogitMode::kProjectedInnerProduct;
    } else {
      throw ConfigError("[model] logit_mode: unknown '" + *m + "'");
    }
  }
  if (auto m = md.get_optional<std::string>("gradient_mode")) {
    if (*m == "stop") {
      head.gradient_mode = GradientMode::kStopGradientProjector;
    } else if (*m == "differentiate") {
      head.gradient_mode = GradientMode::kDifferentiateProjector;
    } else {
      throw ConfigError("[model] gradient_mode: unknown '" + *m + "'");
    }
  }
  detail::read_bool(md, "normalize", head.normalize, "model");
  detail::read_key(md, "rank_tol", head.rank_tol, "model");

  const pt::ptree& tr = tree.get_child("train", empty);
  detail::read_key(tr, "episodes", rc.train.episodes, "train");
  detail::read_key(tr, "way", rc.train.way, "train");
  detail::read_key(tr, "shots", rc.train.shots, "train");
  detail::read_key(tr, "queries", rc.train.queries, "train");
  detail::read_key(tr, "lr", rc.train.base_lr, "train");
  detail::read_key(tr, "decay_factor", rc.train.decay_factor, "train");
  detail::read_key(tr, "decay_interval", rc.train.decay_interval, "train");
  detail::read_key(tr, "seed", rc.train.seed, "train");
  if (!md.get_optional<std::string>("num_refs")) head.num_refs = rc.train.way;

  const pt::ptree& ev = tree.get_child("eval", empty);
  detail::read_key(ev, "way", rc.eval.way, "eval");
  detail::read_key(ev, "shots", rc.eval.shots, "eval");
  detail::read_key(ev, "queries", rc.eval.queries, "eval");
  detail::read_key(ev, "episodes", rc.eval.episodes, "eval");
  detail::read_key(ev, "seed", rc.eval.seed, "eval");
  detail::read_key(ev, "threads", rc.eval.threads, "eval");
  if (auto s = ev.get_optional<std::string>("split"))
    rc.eval.split = detail::parse_split(*s);

  rc.embedding.input_dim = rc.dataset.dim;
  head.dim = rc.embedding.output_dim();
  return rc;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path);
  return parse_config(in);
}

// MLN_SEED, when set, replaces both the training and evaluation seeds.
inline void apply_env_overrides(RunConfig& rc) {
  const char* s = std::getenv("MLN_SEED");
  if (s == nullptr) return;
  char* end = nullptr;
  const unsigned long long v = std::strtoull(s, &end, 10);
  if (end == s || *end != '\0')
    throw ConfigError(std::string("MLN_SEED is not an integer: ") + s);
  rc.train.seed = v;
  rc.eval.seed = v;
}

}  // namespace mln

#endif  // MLN_CONFIG_HPP_
