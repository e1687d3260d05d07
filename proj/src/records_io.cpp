/*
 * Copyright 2026 The cfdebug Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "cfdebug/records_io.hpp"

#include <fstream>
#include <string>

#include <fmt/format.h>

#include "cfdebug/errors.hpp"

namespace cfdebug {

using nlohmann::json;

json record_to_json(const PredictionRecord& r) {
  json j;
  j["record_version"] = kRecordVersion;
  j["image_id"] = r.image_id;
  j["inferred_class"] = r.inferred_class;
  j["confidence"] = r.confidence;
  j["true_class"] = r.true_class ? json(*r.true_class) : json(nullptr);
  j["gap_features"] = r.gap_features;
  j["activation_map"] = r.activation_map.bits();
  return j;
}

PredictionRecord record_from_json(const json& j) {
  try {
    const int version = j.at("record_version").get<int>();
    if (version != kRecordVersion) throw FormatError(fmt::format("unsupported record_version {}", version));
    PredictionRecord r;
    r.image_id = j.at("image_id").get<std::string>();
    r.inferred_class = j.at("inferred_class").get<int>();
    r.confidence = j.at("confidence").get<double>();
    if (!j.at("true_class").is_null()) r.true_class = j.at("true_class").get<int>();
    r.gap_features = j.at("gap_features").get<std::vector<double>>();
    r.activation_map = FilterActivationMap(j.at("activation_map").get<std::vector<std::uint8_t>>());
    if (r.activation_map.size() != r.gap_features.size()) throw FormatError("activation map length differs from gap_features");
    if (r.confidence < 0.0 || r.confidence > 1.0) throw FormatError("confidence outside [0, 1]");
    return r;
  } catch (const json::exception& e) {
    throw FormatError(fmt::format("malformed prediction record: {}", e.what()));
  } catch (const UsageError& e) {
    throw FormatError(fmt::format("malformed prediction record: {}", e.what()));
  }
}

json mc_set_to_json(const MCFilterSet& s) {
  json j;
  j["image_id"] = s.image_id;
  j["class_label"] = s.class_label;
  j["n"] = s.n;
  j["indices"] = s.indices;
  json mags = json::object();
  for (std::size_t i = 0; i < s.indices.size(); ++i) mags[std::to_string(s.indices[i])] = s.magnitudes[i];
  j["magnitudes"] = mags;
  j["degenerate"] = s.degenerate;
  return j;
}

MCFilterSet mc_set_from_json(const json& j) {
  try {
    MCFilterSet s;
    s.image_id = j.value("image_id", std::string{});
    s.class_label = j.at("class_label").get<int>();
    s.n = j.at("n").get<int>();
    s.indices = j.at("indices").get<std::vector<int>>();
    const auto& mags = j.at("magnitudes");
    for (int k : s.indices) {
      if (k < 0 || k >= s.n) throw FormatError(fmt::format("filter index {} outside [0, {})", k, s.n));
      s.magnitudes.push_back(mags.at(std::to_string(k)).get<double>());
    }
    s.degenerate = j.value("degenerate", false);
    return s;
  } catch (const json::exception& e) {
    throw FormatError(fmt::format("malformed MC set: {}", e.what()));
  }
}

void write_json_lines(const std::filesystem::path& path, const std::vector<json>& lines) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw FormatError(fmt::format("cannot write {}", path.string()));
  for (const auto& line : lines) os << line.dump() << '\n';
  if (!os) throw FormatError(fmt::format("failed writing {}", path.string()));
}

std::vector<json> read_json_lines(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw FormatError(fmt::format("cannot open {}", path.string()));
  std::vector<json> lines;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      lines.push_back(json::parse(line));
    } catch (const json::parse_error& e) {
      throw FormatError(fmt::format("{}:{}: {}", path.string(), lineno, e.what()));
    }
  }
  return lines;
}

void write_records(const std::filesystem::path& path, const std::vector<PredictionRecord>& records) {
  std::vector<json> lines;
  lines.reserve(records.size());
  for (const auto& r : records) lines.push_back(record_to_json(r));
  write_json_lines(path, lines);
}

std::vector<PredictionRecord> read_records(const std::filesystem::path& path) {
  std::vector<PredictionRecord> out;
  for (const auto& j : read_json_lines(path)) out.push_back(record_from_json(j));
  return out;
}

void write_mc_sets(const std::filesystem::path& path, const std::vector<MCFilterSet>& sets) {
  std::vector<json> lines;
  lines.reserve(sets.size());
  for (const auto& s : sets) lines.push_back(mc_set_to_json(s));
  write_json_lines(path, lines);
}

std::vector<MCFilterSet> read_mc_sets(const std::filesystem::path& path) {
  std::vector<MCFilterSet> out;
  for (const auto& j : read_json_lines(path)) out.push_back(mc_set_from_json(j));
  return out;
}

}  // namespace cfdebug
