// Copyright 2026 The SOMNet Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

/**
 * @file cli.hpp
 * @brief The `somnet` command line: gen, train, eval, suite, inspect and
 * export-heatmap.
 *
 * Every subcommand takes `--config <file> --out <dir>` plus an optional
 * `--seed` override. Exit codes: 0 success, 1 usage or configuration
 * error, 2 data that cannot be used (malformed input, missing geometry).
 */

#pragma once

#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "somnet/config.hpp"
#include "somnet/dataset_io.hpp"
#include "somnet/eval.hpp"
#include "somnet/inspect.hpp"
#include "somnet/trainer.hpp"

namespace somnet {

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitData = 2 };

struct CliArgs {
  std::string command;
  std::filesystem::path config;
  std::filesystem::path out;
  std::optional<std::uint64_t> seed;
  std::string ablation = "full";
  int category = -1;
  int k = 5;
  int bag = 0;
};

namespace cli {

namespace fs = std::filesystem;

inline void write_json(const fs::path& path, const nlohmann::json& j) { detail::write_file(path, j.dump(2) + "\n"); }

inline nlohmann::json read_json(const fs::path& path) {
  try {
    return nlohmann::json::parse(detail::read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError("'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

inline RunConfig resolve_config(const CliArgs& a) {
  RunConfig c = load_config(a.config);
  if (a.seed) c.set_seed(*a.seed);
  c.train = apply_ablation(c.train, a.ablation);
  c.validate();
  return c;
}

inline void prepare_out(const fs::path& out) {
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec || !fs::is_directory(out)) throw ConfigError("output directory '" + out.string() + "' is not writable");
}

inline int cmd_gen(const CliArgs& a, std::ostream& os) {
  const RunConfig c = resolve_config(a);
  prepare_out(a.out);
  const Dataset ds = synth_generate(c.synth);
  detail::write_file(a.out / "train.jsonl", train_jsonl(ds));
  detail::write_file(a.out / "test.jsonl", test_jsonl(ds));
  detail::write_file(a.out / "flags.jsonl", flags_jsonl(ds));

  std::size_t images = 0, proposals = 0, label_noise = 0, background = 0;
  for (const auto& groups : ds.groups_by_class)
    for (const auto& g : groups) {
      ++images;
      if (g.image.noise == NoiseFlag::LabelNoise) ++label_noise;
      for (const auto& p : g.proposals) {
        ++proposals;
        if (p.noise == NoiseFlag::BackgroundNoise) ++background;
      }
    }
  const double img_frac = images ? static_cast<double>(label_noise) / static_cast<double>(images) : 0.0;
  const double bg_frac = proposals ? static_cast<double>(background) / static_cast<double>(proposals) : 0.0;
  const nlohmann::json summary = {{"seed", c.seed()},
                                  {"images", images},
                                  {"proposals", proposals},
                                  {"test_images", ds.test_images.size()},
                                  {"bags", ds.bags.size()},
                                  {"label_noise_images", label_noise},
                                  {"label_noise_fraction", img_frac},
                                  {"background_proposals", background},
                                  {"background_fraction", bg_frac},
                                  {"config", to_json(c)}};
  write_json(a.out / "gen_summary.json", summary);
  os << "images=" << images << " proposals=" << proposals << " test=" << ds.test_images.size()
     << " bags=" << ds.bags.size() << " label_noise=" << 100.0 * img_frac << "% background=" << 100.0 * bg_frac
     << "% seed=" << c.seed() << "\n";
  return kExitOk;
}

inline std::string weights_jsonl(const std::vector<Bag>& bags) {
  std::string out;
  for (std::size_t b = 0; b < bags.size(); ++b) {
    const auto& bag = bags[b];
    for (std::size_t i = 0; i < bag.size(); ++i) {
      const auto& inst = bag.instances[i];
      nlohmann::json j = {{"bag", b},
                          {"label", bag.label},
                          {"id", inst.id},
                          {"kind", to_string(inst.kind)},
                          {"weight", bag.weights(static_cast<Eigen::Index>(i))},
                          {"noise", inst.noise ? nlohmann::json(to_string(*inst.noise)) : nlohmann::json(nullptr)}};
      out += j.dump() + "\n";
    }
  }
  return out;
}

inline int cmd_train(const CliArgs& a, std::ostream& os) {
  const RunConfig c = resolve_config(a);
  prepare_out(a.out);
  const Dataset ds = load_dataset(c);
  auto result = train(ds, c.train);
  result.report.variant = a.ablation;
  write_json(a.out / "model.json", to_json(result.state.classifier));
  write_json(a.out / "memory.json", to_json(result.state.memory));
  write_json(a.out / "run_report.json", to_json(result.report));
  write_json(a.out / "config.json", to_json(c));
  detail::write_file(a.out / "weights.jsonl", weights_jsonl(result.state.bags));
  os << "run_id=" << result.report.run_id << " variant=" << a.ablation << " seed=" << c.seed();
  if (result.report.test_accuracy) os << " top1=" << *result.report.test_accuracy;
  if (result.report.noise_auc) os << " noise_auc=" << *result.report.noise_auc;
  if (result.report.dead_key_fraction) os << " dead_keys=" << *result.report.dead_key_fraction;
  os << "\n";
  return kExitOk;
}

/// Predicts the test split from model.json alone; memory.json is never read.
inline int cmd_eval(const CliArgs& a, std::ostream& os) {
  const RunConfig c = resolve_config(a);
  const Dataset ds = load_dataset(c);
  if (ds.test_images.empty()) throw DataError("dataset has no test split");
  const ClassifierState classifier = classifier_from_json(read_json(a.out / "model.json"));
  if (classifier.input_dim() != ds.feature_dim)
    throw DataError(detail::concat("model expects ", classifier.input_dim(), " features, dataset has ", ds.feature_dim));
  const auto preds = predict(classifier, ds.test_images);
  std::vector<int> labels;
  std::string csv = "id,label,pred\n";
  for (std::size_t i = 0; i < ds.test_images.size(); ++i) {
    labels.push_back(ds.test_images[i].label);
    csv += ds.test_images[i].id + "," + std::to_string(ds.test_images[i].label) + "," + std::to_string(preds[i]) + "\n";
  }
  nlohmann::json report = {{"seed", c.seed()},
                           {"variant", a.ablation},
                           {"top1", accuracy(preds, labels)},
                           {"per_class_accuracy", per_class_accuracy(preds, labels, ds.num_classes)},
                           {"noise_auc", nullptr},
                           {"dead_key_fraction", nullptr},
                           {"run_id", nullptr}};
  if (fs::exists(a.out / "run_report.json")) {
    const auto run = read_json(a.out / "run_report.json");
    report["run_id"] = run.value("run_id", "");
    report["variant"] = run.value("variant", a.ablation);
    if (run.contains("metrics")) {
      report["noise_auc"] = run["metrics"].value("noise_auc", nlohmann::json(nullptr));
      report["dead_key_fraction"] = run["metrics"].value("dead_key_fraction", nlohmann::json(nullptr));
    }
  }
  write_json(a.out / "eval_report.json", report);
  detail::write_file(a.out / "predictions.csv", csv);
  os << "top1=" << report["top1"].get<double>() << " seed=" << c.seed() << "\n";
  return kExitOk;
}

inline int cmd_suite(const CliArgs& a, std::ostream& os) {
  if (a.ablation != "full") throw ConfigError("suite runs every ablation; --ablation is not accepted");
  const RunConfig c = resolve_config(a);
  prepare_out(a.out);
  const Dataset ds = load_dataset(c);
  const auto rows = run_suite(ds, c.train, c.threads);
  const std::string csv = suite_csv(rows);
  detail::write_file(a.out / "suite.csv", csv);
  write_json(a.out / "suite.json", suite_json(rows));
  os << csv;
  return kExitOk;
}

inline int cmd_inspect(const CliArgs& a, std::ostream& os, std::ostream& es) {
  if (a.category < 0) throw ConfigError("inspect needs --category <index>");
  const RunConfig c = resolve_config(a);
  const MemoryState memory = memory_from_json(read_json(a.out / "memory.json"));
  const Dataset ds = load_dataset(c);
  std::optional<ClassifierState> classifier;
  if (fs::exists(a.out / "model.json")) classifier = classifier_from_json(read_json(a.out / "model.json"));
  const auto rois = training_rois(ds);
  const ModelParams* enc = classifier && classifier->params.has_encoder() ? &classifier->params : nullptr;
  if (!enc && !rois.empty() && rois.front().feature.size() != memory.dim())
    throw DataError("memory key dimension differs from the dataset features");
  const InspectResult result = inspect_memory(memory, a.category, a.k, rois, enc);
  for (const auto& w : result.warnings) es << "warning: " << w << "\n";
  nlohmann::json j = to_json(result);
  j["seed"] = c.seed();
  write_json(a.out / detail::concat("inspect_c", a.category, ".json"), j);
  os << j.dump(2) << "\n";
  return kExitOk;
}

inline int cmd_export_heatmap(const CliArgs& a, std::ostream& os) {
  const RunConfig c = resolve_config(a);
  const Dataset ds = load_dataset(c);
  std::unordered_map<std::string, const Instance*> by_id;
  bool geometry = false;
  for (const auto& bag : ds.bags)
    for (const auto& inst : bag.instances) {
      by_id.emplace(inst.id, &inst);
      if (inst.kind == RoiKind::Proposal && inst.bbox) geometry = true;
    }
  if (!geometry) throw UnsupportedDataError("synthetic data has no geometry: no ROI carries a bbox");

  Bag bag;
  std::vector<double> weights;
  {
    std::istringstream in(detail::read_file(a.out / "weights.jsonl"));
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const auto j = nlohmann::json::parse(line, nullptr, false);
      if (j.is_discarded() || !j.contains("bag") || !j.contains("id") || !j.contains("weight"))
        throw DataError("malformed line in weights.jsonl");
      if (j["bag"].get<int>() != a.bag) continue;
      const auto it = by_id.find(j["id"].get<std::string>());
      if (it == by_id.end()) throw DataError("weights.jsonl names ROI '" + j["id"].get<std::string>() + "' not in the dataset");
      bag.instances.push_back(*it->second);
      bag.label = j.value("label", 0);
      weights.push_back(j["weight"].get<double>());
    }
  }
  if (bag.instances.empty()) throw DataError(detail::concat("no bag with index ", a.bag, " in weights.jsonl"));
  const Eigen::VectorXd w = Eigen::Map<const Eigen::VectorXd>(weights.data(), static_cast<Eigen::Index>(weights.size()));
  const auto maps = bag_heatmaps(bag, w, c.heatmap_resolution);
  const auto hist = weight_histogram(weights, c.histogram_bins);

  std::string csv = "image_id,row,col,value\n";
  for (const auto& h : maps)
    for (Eigen::Index r = 0; r < h.cells.rows(); ++r)
      for (Eigen::Index col = 0; col < h.cells.cols(); ++col)
        csv += h.image_id + "," + std::to_string(r) + "," + std::to_string(col) + "," +
               detail::csv_number(h.cells(r, col)) + "\n";
  std::string hist_csv = "bin_lo,bin_hi,count\n";
  for (int b = 0; b < c.histogram_bins; ++b)
    hist_csv += detail::csv_number(static_cast<double>(b) / c.histogram_bins) + "," +
                detail::csv_number(static_cast<double>(b + 1) / c.histogram_bins) + "," +
                std::to_string(hist[static_cast<std::size_t>(b)]) + "\n";
  const std::string stem = detail::concat("heatmap_bag", a.bag);
  detail::write_file(a.out / (stem + ".csv"), csv);
  detail::write_file(a.out / (stem + "_histogram.csv"), hist_csv);
  nlohmann::json meta = {{"seed", c.seed()}, {"bag", a.bag}, {"resolution", c.heatmap_resolution}, {"images", nlohmann::json::array()}};
  for (const auto& h : maps) meta["images"].push_back({{"id", h.image_id}, {"canvas", h.canvas}});
  write_json(a.out / (stem + ".json"), meta);
  os << "wrote " << maps.size() << " heatmaps for bag " << a.bag << "\n";
  return kExitOk;
}

}  // namespace cli

/// Parses argv and runs one subcommand; never throws.
inline int run_cli(int argc, const char* const* argv, std::ostream& os = std::cout, std::ostream& es = std::cerr) {
  CLI::App app{"somnet: multi-instance denoising with a self-organizing memory"};
  app.require_subcommand(1, 1);
  CliArgs args;
  std::uint64_t seed = 0;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", args.config, "flat JSON config file")->required();
    sub->add_option("--out", args.out, "output (or run) directory")->required();
    sub->add_option("--seed", seed, "override the config seed");
    sub->add_option("--ablation", args.ablation, "variant name (full, wo_d, wo_r, wo_a, wo_som, wo_roi, fixed_p40, uniform, kmeans)");
  };
  std::map<std::string, CLI::App*> subs;
  for (const char* name : {"gen", "train", "eval", "suite", "inspect", "export-heatmap"}) {
    subs[name] = app.add_subcommand(name);
    add_common(subs[name]);
  }
  subs["gen"]->description("write a synthetic train/test split with ground-truth noise flags");
  subs["train"]->description("warm up and train; write checkpoints, run report and ROI weights");
  subs["eval"]->description("evaluate model.json on the test split (memory is not read)");
  subs["suite"]->description("run every ablation variant and write suite.csv / suite.json");
  subs["inspect"]->description("top-k memory slots of a category");
  subs["inspect"]->add_option("--category", args.category, "category index")->required();
  subs["inspect"]->add_option("--k", args.k, "number of slots");
  subs["export-heatmap"]->description("ROI weight heatmaps for one bag (needs bbox data)");
  subs["export-heatmap"]->add_option("--bag", args.bag, "bag index in weights.jsonl");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    os << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    es << "usage error: " << e.what() << "\n" << app.help();
    return kExitUsage;
  }
  for (const auto& [name, sub] : subs)
    if (sub->parsed()) {
      args.command = name;
      if (sub->count("--seed")) args.seed = seed;
    }

  try {
    if (args.command == "gen") return cli::cmd_gen(args, os);
    if (args.command == "train") return cli::cmd_train(args, os);
    if (args.command == "eval") return cli::cmd_eval(args, os);
    if (args.command == "suite") return cli::cmd_suite(args, os);
    if (args.command == "inspect") return cli::cmd_inspect(args, os, es);
    return cli::cmd_export_heatmap(args, os);
  } catch (const ConfigError& e) {
    es << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const UnsupportedDataError& e) {
    es << "unsupported data: " << e.what() << "\n";
    return kExitData;
  } catch (const DataError& e) {
    es << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    es << "error: " << e.what() << "\n";
    return kExitUsage;
  }
}

}  // namespace somnet
