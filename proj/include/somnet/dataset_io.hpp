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

// JSONL reading and writing for datasets.
//
// Record schema, one per line:
//   {"id": str, "kind": "image"|"proposal", "parent": str|null, "label": int,
//    "area": float|null, "feature": [float], "bbox": [x,y,w,h]|null}
// Ground-truth flags live in a separate file: {"id": str, "noise": str}.

#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "somnet/data_model.hpp"

namespace somnet {

struct IngestOptions {
  int n_g = 2;
  int n_p = 20;
  std::uint64_t seed = 0;
  /// 0 means infer from the largest label seen.
  int num_classes = 0;
};

namespace detail {

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << text;
}

struct ParsedRecord {
  Instance instance;
  int label = 0;
  std::size_t line = 0;
};

inline ParsedRecord parse_record(const std::string& text, std::size_t line) {
  static const char* const kKeys[] = {"id", "kind", "parent", "label", "area", "feature", "bbox"};
  auto fail = [line](const std::string& why) -> DataError {
    return DataError(concat("line ", line, ": ", why));
  };
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw fail(std::string("malformed JSON: ") + e.what());
  }
  if (!j.is_object()) throw fail("record is not an object");
  for (const auto& [key, _] : j.items()) {
    if (std::find(std::begin(kKeys), std::end(kKeys), key) == std::end(kKeys))
      throw fail("unknown field '" + key + "'");
  }
  ParsedRecord rec;
  rec.line = line;
  auto& inst = rec.instance;
  if (!j.contains("id") || !j["id"].is_string()) throw fail("missing string field 'id'");
  inst.id = j["id"].get<std::string>();
  if (!j.contains("kind") || !j["kind"].is_string()) throw fail("missing field 'kind'");
  const auto kind = j["kind"].get<std::string>();
  if (kind == "image") {
    inst.kind = RoiKind::Image;
  } else if (kind == "proposal") {
    inst.kind = RoiKind::Proposal;
  } else {
    throw fail("kind must be 'image' or 'proposal'");
  }
  if (!j.contains("label") || !j["label"].is_number_integer()) throw fail("missing integer field 'label'");
  rec.label = j["label"].get<int>();
  if (rec.label < 0) throw fail("negative label");
  if (!j.contains("feature") || !j["feature"].is_array() || j["feature"].empty())
    throw fail("missing non-empty array field 'feature'");
  const auto& f = j["feature"];
  inst.feature.resize(static_cast<Eigen::Index>(f.size()));
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (!f[i].is_number()) throw fail("feature entries must be numbers");
    inst.feature(static_cast<Eigen::Index>(i)) = f[i].get<double>();
  }
  if (!inst.feature.allFinite()) throw fail("feature has non-finite entries");
  if (j.contains("parent") && !j["parent"].is_null()) {
    if (!j["parent"].is_string()) throw fail("'parent' must be a string or null");
    inst.parent_image_id = j["parent"].get<std::string>();
  }
  if (j.contains("area") && !j["area"].is_null()) {
    if (!j["area"].is_number()) throw fail("'area' must be a number or null");
    const double a = j["area"].get<double>();
    if (!(a >= 0.0)) throw fail("'area' must be nonnegative");
    inst.area = a;
  }
  if (j.contains("bbox") && !j["bbox"].is_null()) {
    const auto& b = j["bbox"];
    if (!b.is_array() || b.size() != 4) throw fail("'bbox' must be [x,y,w,h] or null");
    Box box{};
    for (std::size_t i = 0; i < 4; ++i) {
      if (!b[i].is_number()) throw fail("'bbox' entries must be numbers");
      box[i] = b[i].get<double>();
    }
    inst.bbox = box;
  }
  if (inst.kind == RoiKind::Proposal) {
    if (inst.parent_image_id.empty()) throw fail("proposal without 'parent'");
    if (!inst.area) throw fail("proposal without 'area'");
  }
  return rec;
}

inline std::vector<ParsedRecord> parse_jsonl(const std::filesystem::path& path) {
  std::istringstream in(read_file(path));
  std::vector<ParsedRecord> records;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    records.push_back(parse_record(line, lineno));
    const auto d0 = records.front().instance.feature.size();
    if (records.back().instance.feature.size() != d0)
      throw DataError(concat("line ", lineno, ": feature length ", records.back().instance.feature.size(),
                             " differs from ", d0));
  }
  if (records.empty()) throw DataError("no records in '" + path.string() + "'");
  return records;
}

inline nlohmann::json instance_record(const Instance& inst, int label) {
  nlohmann::json j;
  j["id"] = inst.id;
  j["kind"] = to_string(inst.kind);
  j["parent"] = inst.parent_image_id.empty() ? nlohmann::json(nullptr) : nlohmann::json(inst.parent_image_id);
  j["label"] = label;
  j["area"] = inst.area ? nlohmann::json(*inst.area) : nlohmann::json(nullptr);
  j["feature"] = std::vector<double>(inst.feature.data(), inst.feature.data() + inst.feature.size());
  j["bbox"] = inst.bbox ? nlohmann::json(*inst.bbox) : nlohmann::json(nullptr);
  return j;
}

}  // namespace detail

/// Reads ground-truth noise flags ({"id", "noise"} per line) keyed by id.
inline std::unordered_map<std::string, NoiseFlag> read_flags_jsonl(const std::filesystem::path& path) {
  std::istringstream in(detail::read_file(path));
  std::unordered_map<std::string, NoiseFlag> flags;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      flags[j.at("id").get<std::string>()] = noise_flag_from_string(j.at("noise").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
      throw DataError(detail::concat("line ", lineno, ": ", e.what()));
    }
  }
  return flags;
}

/// Loads a training split, groups proposals with their images and bags them.
inline Dataset ingest_jsonl(const std::filesystem::path& path, const IngestOptions& opts = {}) {
  const auto records = detail::parse_jsonl(path);
  Dataset ds;
  ds.feature_dim = static_cast<int>(records.front().instance.feature.size());
  ds.n_g = opts.n_g;
  ds.n_p = opts.n_p;

  int max_label = 0;
  std::map<std::string, std::pair<int, std::size_t>> image_slot;  // id -> (class, index)
  for (const auto& rec : records) max_label = std::max(max_label, rec.label);
  ds.num_classes = opts.num_classes > 0 ? opts.num_classes : max_label + 1;
  if (max_label >= ds.num_classes)
    throw DataError(detail::concat("label ", max_label, " outside [0, ", ds.num_classes, ")"));
  ds.groups_by_class.resize(static_cast<std::size_t>(ds.num_classes));

  for (const auto& rec : records) {
    if (rec.instance.kind != RoiKind::Image) continue;
    if (image_slot.count(rec.instance.id))
      throw DataError(detail::concat("line ", rec.line, ": duplicate image id '", rec.instance.id, "'"));
    auto& groups = ds.groups_by_class[static_cast<std::size_t>(rec.label)];
    image_slot[rec.instance.id] = {rec.label, groups.size()};
    ImageGroup g;
    g.image = rec.instance;
    g.label = rec.label;
    groups.push_back(std::move(g));
  }
  for (const auto& rec : records) {
    if (rec.instance.kind != RoiKind::Proposal) continue;
    const auto it = image_slot.find(rec.instance.parent_image_id);
    if (it == image_slot.end())
      throw DataError(detail::concat("line ", rec.line, ": proposal references unknown image '",
                                     rec.instance.parent_image_id, "'"));
    const auto [label, index] = it->second;
    if (label != rec.label)
      throw DataError(detail::concat("line ", rec.line, ": proposal label differs from its image"));
    ds.groups_by_class[static_cast<std::size_t>(label)][index].proposals.push_back(rec.instance);
  }
  ds.bags = build_bags(ds.groups_by_class, ds.n_g, ds.n_p, opts.seed);
  ds.metadata = {{"source", "jsonl"},
                 {"path", path.string()},
                 {"digest", detail::concat(std::hex, fnv1a64(detail::read_file(path)))}};
  return ds;
}

/// Loads a test split (images only).
inline std::vector<TestImage> ingest_test_jsonl(const std::filesystem::path& path) {
  const auto records = detail::parse_jsonl(path);
  std::vector<TestImage> out;
  for (const auto& rec : records) {
    if (rec.instance.kind != RoiKind::Image)
      throw DataError(detail::concat("line ", rec.line, ": test split holds images only"));
    out.push_back({rec.instance.id, rec.instance.feature, rec.label});
  }
  return out;
}

/// Attaches ground-truth noise flags to every instance with a known id.
inline void attach_flags(Dataset& ds, const std::unordered_map<std::string, NoiseFlag>& flags) {
  auto tag = [&](Instance& inst) {
    const auto it = flags.find(inst.id);
    if (it != flags.end()) inst.noise = it->second;
  };
  for (auto& groups : ds.groups_by_class)
    for (auto& g : groups) {
      tag(g.image);
      for (auto& p : g.proposals) tag(p);
    }
  for (auto& bag : ds.bags)
    for (auto& inst : bag.instances) {
      // Padded duplicates carry the flag of their source proposal.
      const auto hash = inst.id.find("#dup");
      const auto it = flags.find(hash == std::string::npos ? inst.id : inst.id.substr(0, hash));
      if (it != flags.end()) inst.noise = it->second;
    }
}

/// Writes every image and proposal of the dataset's groups in class order.
inline std::string train_jsonl(const Dataset& ds) {
  std::string out;
  for (const auto& groups : ds.groups_by_class)
    for (const auto& g : groups) {
      out += detail::instance_record(g.image, g.label).dump() + "\n";
      for (const auto& p : g.proposals) out += detail::instance_record(p, g.label).dump() + "\n";
    }
  return out;
}

inline std::string test_jsonl(const Dataset& ds) {
  std::string out;
  for (const auto& t : ds.test_images) {
    Instance inst;
    inst.id = t.id;
    inst.feature = t.feature;
    out += detail::instance_record(inst, t.label).dump() + "\n";
  }
  return out;
}

inline std::string flags_jsonl(const Dataset& ds) {
  std::string out;
  auto emit = [&](const Instance& inst) {
    if (!inst.noise) return;
    nlohmann::json j = {{"id", inst.id}, {"noise", to_string(*inst.noise)}};
    out += j.dump() + "\n";
  };
  for (const auto& groups : ds.groups_by_class)
    for (const auto& g : groups) {
      emit(g.image);
      for (const auto& p : g.proposals) emit(p);
    }
  return out;
}

}  // namespace somnet
