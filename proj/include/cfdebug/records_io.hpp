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

// JSON-lines persistence for prediction records and MC filter sets.
//
// Prediction record line (record_version 1):
//   {"record_version":1,"image_id":"ring/00003.pgm","inferred_class":5,
//    "confidence":0.97,"true_class":5,"gap_features":[...],"activation_map":[0,1,...]}
// true_class is null when the label is unknown.
//
// MC set line:
//   {"image_id":"...","class_label":5,"n":32,"indices":[1,7],
//    "magnitudes":{"1":0.42,"7":0.13},"degenerate":false}

#ifndef CFDEBUG_RECORDS_IO_HPP
#define CFDEBUG_RECORDS_IO_HPP

#include <filesystem>
#include <vector>

#include "json.hpp"

#include "cfdebug/cfe.hpp"
#include "cfdebug/model.hpp"

namespace cfdebug {

inline constexpr int kRecordVersion = 1;

nlohmann::json record_to_json(const PredictionRecord& record);
PredictionRecord record_from_json(const nlohmann::json& j);
nlohmann::json mc_set_to_json(const MCFilterSet& set);
MCFilterSet mc_set_from_json(const nlohmann::json& j);

void write_records(const std::filesystem::path& path, const std::vector<PredictionRecord>& records);
std::vector<PredictionRecord> read_records(const std::filesystem::path& path);
void write_mc_sets(const std::filesystem::path& path, const std::vector<MCFilterSet>& sets);
std::vector<MCFilterSet> read_mc_sets(const std::filesystem::path& path);

// Shared helpers for the other JSON-lines artifacts.
void write_json_lines(const std::filesystem::path& path, const std::vector<nlohmann::json>& lines);
std::vector<nlohmann::json> read_json_lines(const std::filesystem::path& path);

}  // namespace cfdebug

#endif  // CFDEBUG_RECORDS_IO_HPP
