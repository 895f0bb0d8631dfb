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
 * @file config.hpp
 * @brief Flat JSON run configuration shared by every CLI subcommand.
 *
 * One object holds generator keys, training keys and a few I/O keys. Any
 * key not listed here is rejected, and all unknown keys are reported at once.
 */

#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "somnet/data_model.hpp"
#include "somnet/dataset_io.hpp"
#include "somnet/error.hpp"
#include "somnet/trainer.hpp"

namespace somnet {

struct RunConfig {
  SynthConfig synth;
  TrainConfig train;
  /// Directory holding train.jsonl (and optionally test.jsonl, flags.jsonl).
  /// Empty means: generate the synthetic benchmark from `synth`.
  std::string data_dir;
  int threads = 1;
  int heatmap_resolution = 32;
  int histogram_bins = 20;
  /// Keys present in the source file.
  std::set<std::string> explicit_keys;

  std::uint64_t seed() const { return train.seed; }

  void set_seed(std::uint64_t seed) {
    synth.seed = seed;
    train.seed = seed;
  }

  void validate() const {
    synth.validate();
    train.validate();
    if (threads < 1) throw ConfigError("threads must be >= 1");
    if (heatmap_resolution < 1) throw ConfigError("heatmap_resolution must be >= 1");
    if (histogram_bins < 1) throw ConfigError("histogram_bins must be >= 1");
  }
};

namespace detail {

inline std::string type_error(const std::string& key, const char* expected) {
  return "config key '" + key + "': expected " + expected;
}

inline int config_int(const nlohmann::json& v, const std::string& key) {
  if (!v.is_number_integer()) throw ConfigError(type_error(key, "an integer"));
  return v.get<int>();
}

inline std::uint64_t config_u64(const nlohmann::json& v, const std::string& key) {
  if (!v.is_number_integer() || v.get<std::int64_t>() < 0)
    throw ConfigError(type_error(key, "a nonnegative integer"));
  return v.get<std::uint64_t>();
}

inline double config_double(const nlohmann::json& v, const std::string& key) {
  if (!v.is_number()) throw ConfigError(type_error(key, "a number"));
  return v.get<double>();
}

inline bool config_bool(const nlohmann::json& v, const std::string& key) {
  if (!v.is_boolean()) throw ConfigError(type_error(key, "true or false"));
  return v.get<bool>();
}

inline std::string config_string(const nlohmann::json& v, const std::string& key) {
  if (!v.is_string()) throw ConfigError(type_error(key, "a string"));
  return v.get<std::string>();
}

using Setter = std::function<void(RunConfig&, const nlohmann::json&, const std::string&)>;

inline const std::map<std::string, Setter>& config_setters() {
  static const std::map<std::string, Setter> setters = [] {
    std::map<std::string, Setter> s;
    auto i = [&](const char* key, auto member) {
      s[key] = [member](RunConfig& c, const nlohmann::json& v, const std::string& k) {
        member(c) = config_int(v, k);
      };
    };
    auto f = [&](const char* key, auto member) {
      s[key] = [member](RunConfig& c, const nlohmann::json& v, const std::string& k) {
        member(c) = config_double(v, k);
      };
    };
    auto b = [&](const char* key, auto member) {
      s[key] = [member](RunConfig& c, const nlohmann::json& v, const std::string& k) {
        member(c) = config_bool(v, k);
      };
    };
    // Generator and ingestion shape.
    i("num_classes", [](RunConfig& c) -> int& { return c.synth.num_classes; });
    i("feature_dim", [](RunConfig& c) -> int& { return c.synth.feature_dim; });
    i("images_per_class", [](RunConfig& c) -> int& { return c.synth.images_per_class; });
    i("test_images_per_class", [](RunConfig& c) -> int& { return c.synth.test_images_per_class; });
    i("n_g", [](RunConfig& c) -> int& { return c.synth.n_g; });
    i("n_p", [](RunConfig& c) -> int& { return c.synth.n_p; });
    f("label_noise_rate", [](RunConfig& c) -> double& { return c.synth.label_noise_rate; });
    f("background_proposal_rate", [](RunConfig& c) -> double& { return c.synth.background_proposal_rate; });
    f("class_separation", [](RunConfig& c) -> double& { return c.synth.class_separation; });
    f("proposal_jitter", [](RunConfig& c) -> double& { return c.synth.proposal_jitter; });
    f("background_area_bias", [](RunConfig& c) -> double& { return c.synth.background_area_bias; });
    i("background_modes", [](RunConfig& c) -> int& { return c.synth.background_modes; });
    s["seed"] = [](RunConfig& c, const nlohmann::json& v, const std::string& k) { c.set_seed(config_u64(v, k)); };
    // Training.
    i("grid_w", [](RunConfig& c) -> int& { return c.train.grid_w; });
    i("radius", [](RunConfig& c) -> int& { return c.train.radius; });
    f("p_start", [](RunConfig& c) -> double& { return c.train.p_start; });
    f("p_step", [](RunConfig& c) -> double& { return c.train.p_step; });
    f("p_end", [](RunConfig& c) -> double& { return c.train.p_end; });
    i("warmup_epochs_cls", [](RunConfig& c) -> int& { return c.train.warmup_epochs_cls; });
    i("warmup_epochs_mem", [](RunConfig& c) -> int& { return c.train.warmup_epochs_mem; });
    i("epochs_per_stage", [](RunConfig& c) -> int& { return c.train.epochs_per_stage; });
    i("batch_size", [](RunConfig& c) -> int& { return c.train.batch_size; });
    f("lr_cls", [](RunConfig& c) -> double& { return c.train.lr_cls; });
    f("momentum", [](RunConfig& c) -> double& { return c.train.momentum; });
    f("lr_key", [](RunConfig& c) -> double& { return c.train.lr_key; });
    f("lr_value", [](RunConfig& c) -> double& { return c.train.lr_value; });
    f("lr_decay", [](RunConfig& c) -> double& { return c.train.lr_decay; });
    b("use_d_score", [](RunConfig& c) -> bool& { return c.train.use_d_score; });
    b("use_r_score", [](RunConfig& c) -> bool& { return c.train.use_r_score; });
    b("use_a_score", [](RunConfig& c) -> bool& { return c.train.use_a_score; });
    b("use_som", [](RunConfig& c) -> bool& { return c.train.use_som; });
    b("use_proposals", [](RunConfig& c) -> bool& { return c.train.use_proposals; });
    b("repartition_bags", [](RunConfig& c) -> bool& { return c.train.repartition_bags; });
    i("kmeans_iters", [](RunConfig& c) -> int& { return c.train.kmeans_iters; });
    i("encoder_dim", [](RunConfig& c) -> int& { return c.train.encoder_dim; });
    s["weighting"] = [](RunConfig& c, const nlohmann::json& v, const std::string& k) {
      c.train.weighting = weighting_from_string(config_string(v, k));
    };
    s["key_init"] = [](RunConfig& c, const nlohmann::json& v, const std::string& k) {
      c.train.key_init = key_init_from_string(config_string(v, k));
    };
    // I/O.
    s["data_dir"] = [](RunConfig& c, const nlohmann::json& v, const std::string& k) {
      c.data_dir = config_string(v, k);
    };
    i("threads", [](RunConfig& c) -> int& { return c.threads; });
    i("heatmap_resolution", [](RunConfig& c) -> int& { return c.heatmap_resolution; });
    i("histogram_bins", [](RunConfig& c) -> int& { return c.histogram_bins; });
    return s;
  }();
  return setters;
}

}  // namespace detail

inline std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& [k, _] : detail::config_setters()) keys.push_back(k);
  return keys;
}

/// Parses a flat JSON object; unknown keys and type mismatches throw.
inline RunConfig parse_config(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config must be a flat JSON object");
  const auto& setters = detail::config_setters();
  std::vector<std::string> unknown;
  for (const auto& [key, _] : j.items())
    if (!setters.count(key)) unknown.push_back(key);
  if (!unknown.empty()) {
    std::string list;
    for (const auto& k : unknown) list += (list.empty() ? "" : ", ") + k;
    throw ConfigError("unknown config keys: " + list);
  }
  RunConfig c;
  c.train.seed = c.synth.seed;
  for (const auto& [key, value] : j.items()) {
    if (value.is_object() || value.is_array()) throw ConfigError("config key '" + key + "': nested values are not allowed");
    setters.at(key)(c, value, key);
    c.explicit_keys.insert(key);
  }
  // Ingested features get a trainable encoder unless the file says otherwise.
  if (!c.data_dir.empty() && !c.explicit_keys.count("encoder_dim")) c.train.encoder_dim = 64;
  c.validate();
  return c;
}

inline RunConfig parse_config_text(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return parse_config(j);
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = detail::read_file(path);
  } catch (const DataError&) {
    throw ConfigError("cannot read config '" + path.string() + "'");
  }
  return parse_config_text(text);
}

inline nlohmann::json to_json(const RunConfig& c) {
  const auto& s = c.synth;
  nlohmann::json j = to_json(c.train);
  j["num_classes"] = s.num_classes;
  j["feature_dim"] = s.feature_dim;
  j["images_per_class"] = s.images_per_class;
  j["test_images_per_class"] = s.test_images_per_class;
  j["n_g"] = s.n_g;
  j["n_p"] = s.n_p;
  j["label_noise_rate"] = s.label_noise_rate;
  j["background_proposal_rate"] = s.background_proposal_rate;
  j["class_separation"] = s.class_separation;
  j["proposal_jitter"] = s.proposal_jitter;
  j["background_area_bias"] = s.background_area_bias;
  j["background_modes"] = s.background_modes;
  j["data_dir"] = c.data_dir;
  j["threads"] = c.threads;
  j["heatmap_resolution"] = c.heatmap_resolution;
  j["histogram_bins"] = c.histogram_bins;
  return j;
}

/// Dataset named by the config: ingested from data_dir, or generated.
inline Dataset load_dataset(const RunConfig& c) {
  if (c.data_dir.empty()) return synth_generate(c.synth);
  const std::filesystem::path dir(c.data_dir);
  IngestOptions opts;
  opts.n_g = c.synth.n_g;
  opts.n_p = c.synth.n_p;
  opts.seed = c.synth.seed;
  opts.num_classes = c.explicit_keys.count("num_classes") ? c.synth.num_classes : 0;
  Dataset ds = ingest_jsonl(dir / "train.jsonl", opts);
  if (std::filesystem::exists(dir / "test.jsonl")) {
    ds.test_images = ingest_test_jsonl(dir / "test.jsonl");
    for (const auto& t : ds.test_images) {
      if (t.label >= ds.num_classes)
        throw DataError("test image '" + t.id + "' has a label outside the training classes");
      if (t.feature.size() != ds.feature_dim)
        throw DataError("test image '" + t.id + "' has a different feature length");
    }
  }
  if (std::filesystem::exists(dir / "flags.jsonl")) attach_flags(ds, read_flags_jsonl(dir / "flags.jsonl"));
  return ds;
}

}  // namespace somnet
