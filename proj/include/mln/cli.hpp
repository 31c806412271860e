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

#ifndef MLN_CLI_HPP_
#define MLN_CLI_HPP_

#include <CLI11.hpp>

#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <ostream>
#include <string>

#include "mln/checkpoint.hpp"
#include "mln/config.hpp"
#include "mln/episodes.hpp"
#include "mln/error.hpp"
#include "mln/evaluator.hpp"
#include "mln/trainer.hpp"

// Command-line front end:
//
//   mln train   --config FILE --out CKPT [--metrics CSV] [--episodes N]
//   mln eval    --ckpt CKPT [--config FILE] [--way N] [--shots N]
//               [--queries N] [--episodes N] [--seed S] [--split NAME]
//               [--threads N] [--report CSV]
//   mln inspect --ckpt CKPT [--config FILE] [--way N] [--shots N]
//               [--seed S] [--split NAME] [--out CSV]
//
// Exit status: 0 on success, 2 on usage errors, 1 on runtime errors. Errors
// print one line `error: <kind>: <message>` to the error stream.
namespace mln {

namespace detail {

inline RunConfig resolve_config(const std::string& path) {
  RunConfig rc = path.empty() ? RunConfig{} : load_config(path);
  if (path.empty()) {
    rc.train.head.num_refs = rc.train.way;
    rc.embedding.input_dim = rc.dataset.dim;
    rc.train.head.dim = rc.embedding.output_dim();
  }
  apply_env_overrides(rc);
  return rc;
}

inline void append_report(const std::string& path, const EvalReport& rep) {
  const bool fresh = !std::filesystem::exists(path) ||
                     std::filesystem::file_size(path) == 0;
  std::ofstream out(path, std::ios::app);
  if (!out) throw FormatError("cannot open report " + path);
  if (fresh) out << report_csv_header() << "\n";
  out << report_csv_row(rep) << "\n";
}

inline int cmd_train(const std::string& config_path, const std::string& out_path,
                     std::string metrics_path,
                     std::optional<std::uint64_t> episodes, std::ostream& out) {
  RunConfig rc = resolve_config(config_path);
  if (episodes) rc.train.episodes = *episodes;
  const Dataset ds = make_dataset(rc.dataset);
  rc.embedding.input_dim = ds.dim;
  if (metrics_path.empty()) metrics_path = out_path + ".metrics.csv";

  std::ofstream metrics(metrics_path, std::ios::trunc);
  if (!metrics) throw FormatError("cannot open metrics file " + metrics_path);
  metrics << metrics_csv_header() << "\n";
  const Checkpoint cp =
      train_loop(rc.train, rc.embedding, ds, [&](const EpisodeMetrics& m) {
        metrics << metrics_csv_row(m) << "\n";
      });
  metrics.flush();
  save_checkpoint(cp, out_path);
  out << "trained " << cp.episode << " episodes; checkpoint " << out_path
      << "; metrics " << metrics_path << "\n";
  return 0;
}

}  // namespace detail

inline int run_cli(int argc, const char* const* argv, std::ostream& out,
                   std::ostream& err) {
  CLI::App app{"Few-shot meta-learning with null-space projection", "mln"};
  app.require_subcommand(1);

  std::string config_path, out_path, metrics_path, ckpt_path, report_path,
      split_name_arg;
  std::optional<std::uint64_t> train_episodes;

  auto* train = app.add_subcommand("train", "Episodic meta-training");
  train->add_option("--config", config_path, "Run configuration file");
  train->add_option("--out", out_path, "Checkpoint output path")->required();
  train->add_option("--metrics", metrics_path,
                    "Metrics CSV path (default: <out>.metrics.csv)");
  train->add_option("--episodes", train_episodes, "Override training episodes");

  std::optional<std::size_t> way, shots, queries, eval_episodes;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;

  auto* eval = app.add_subcommand("eval", "Few-shot evaluation");
  eval->add_option("--ckpt", ckpt_path, "Checkpoint to evaluate")->required();
  eval->add_option("--config", config_path, "Run configuration file");
  eval->add_option("--way", way, "Classes per episode");
  eval->add_option("--shots", shots, "Support items per class");
  eval->add_option("--queries", queries, "Query items per class");
  eval->add_option("--episodes", eval_episodes, "Evaluation episodes");
  eval->add_option("--seed", seed, "Episode seed");
  eval->add_option("--split", split_name_arg, "train | val | test");
  eval->add_option("--threads", threads, "Worker threads");
  eval->add_option("--report", report_path,
                   "Report CSV, appended (default: <ckpt>.eval.csv)");

  auto* inspect = app.add_subcommand("inspect", "Projector diagnostics as CSV");
  inspect->add_option("--ckpt", ckpt_path, "Checkpoint to inspect")->required();
  inspect->add_option("--config", config_path, "Run configuration file");
  inspect->add_option("--way", way, "Classes per episode");
  inspect->add_option("--shots", shots, "Support items per class");
  inspect->add_option("--seed", seed, "Episode seed");
  inspect->add_option("--split", split_name_arg, "train | val | test");
  inspect->add_option("--out", out_path, "Also write the CSV here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: usage: " << e.what() << "\n" << app.help();
    return 2;
  }

  try {
    if (*train) {
      return detail::cmd_train(config_path, out_path, metrics_path,
                               train_episodes, out);
    }

    RunConfig rc = detail::resolve_config(config_path);
    if (!split_name_arg.empty()) rc.eval.split = detail::parse_split(split_name_arg);
    if (way) rc.eval.way = *way;
    if (shots) rc.eval.shots = *shots;
    if (queries) rc.eval.queries = *queries;
    if (eval_episodes) rc.eval.episodes = *eval_episodes;
    if (seed) rc.eval.seed = *seed;
    if (threads) rc.eval.threads = *threads;
    const Checkpoint cp = load_checkpoint(ckpt_path);
    const Dataset ds = make_dataset(rc.dataset);

    if (*eval) {
      const EvalReport rep = evaluate(cp, ds, rc.eval);
      out << "episodes " << rep.episodes << ", " << rep.way << "-way "
          << rep.shots << "-shot, " << rep.queries << " queries/class\n"
          << "mean_acc " << rep.mean_accuracy << " +/- " << rep.ci95
          << " (95% CI), " << rep.wall_seconds << " s\n"
          << report_csv_header() << "\n"
          << report_csv_row(rep) << "\n";
      detail::append_report(report_path.empty() ? ckpt_path + ".eval.csv"
                                                : report_path,
                            rep);
      return 0;
    }

    RngStream rng(rc.eval.seed);
    const Episode ep = sample_episode(ds, rc.eval.split, rc.eval.way,
                                      rc.eval.shots, rc.eval.queries, rng);
    const std::string csv = diagnostics_csv(inspect_projector(cp, ep));
    out << csv;
    if (!out_path.empty()) {
      std::ofstream f(out_path, std::ios::trunc);
      if (!f) throw FormatError("cannot open " + out_path);
      f << csv;
    }
    return 0;
  } catch (const Error& e) {
    err << "error: " << e.kind() << ": " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: internal: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace mln

#endif  // MLN_CLI_HPP_
