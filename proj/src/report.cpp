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

#include "cfdebug/report.hpp"

#include <algorithm>
#include <map>

#include <fmt/format.h>

#include "cfdebug/csv.hpp"
#include "cfdebug/errors.hpp"

namespace cfdebug {

std::vector<ClassRecallDelta> class_recall_delta(const std::vector<PredictionRecord>& base,
                                                 const std::vector<PredictionRecord>& debugged,
                                                 const std::vector<std::string>& class_names) {
  std::map<std::string, const PredictionRecord*> base_by_id;
  for (const auto& r : base) {
    if (!r.true_class) throw UsageError(fmt::format("record {} has no true class", r.image_id));
    base_by_id[r.image_id] = &r;
  }
  if (base_by_id.size() != debugged.size()) {
    throw UsageError(fmt::format("result sets cover {} and {} images", base_by_id.size(), debugged.size()));
  }
  struct Tally {
    std::size_t support = 0, before = 0, after = 0;
  };
  std::map<int, Tally> tally;
  for (const auto& r : debugged) {
    auto it = base_by_id.find(r.image_id);
    if (it == base_by_id.end()) throw UsageError(fmt::format("image {} missing from base results", r.image_id));
    if (r.true_class != it->second->true_class) {
      throw UsageError(fmt::format("image {} has different labels in the two result sets", r.image_id));
    }
    auto& t = tally[*r.true_class];
    ++t.support;
    t.before += it->second->correct();
    t.after += r.correct();
  }
  std::vector<ClassRecallDelta> out;
  for (const auto& [label, t] : tally) {
    ClassRecallDelta d;
    d.class_label = label;
    d.name = label < static_cast<int>(class_names.size()) ? class_names[label] : std::to_string(label);
    d.support = t.support;
    d.before = static_cast<double>(t.before) / static_cast<double>(t.support);
    d.after = static_cast<double>(t.after) / static_cast<double>(t.support);
    d.delta = d.after - d.before;
    out.push_back(d);
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.delta > b.delta; });
  return out;
}

void write_recall_delta_csv(const std::filesystem::path& path, const std::vector<ClassRecallDelta>& ranked,
                            std::size_t top_k) {
  std::vector<CsvRow> rows;
  auto row = [](const char* section, const ClassRecallDelta& d) {
    return CsvRow{section, d.name, fmt::format("{:.2f}", d.before), fmt::format("{:.2f}", d.after),
                  fmt::format("{:.2f}", d.delta)};
  };
  for (std::size_t i = 0; i < ranked.size() && i < top_k && ranked[i].delta > 0.0; ++i) {
    rows.push_back(row("improved", ranked[i]));
  }
  for (std::size_t i = 0; i < ranked.size() && i < top_k && ranked[ranked.size() - 1 - i].delta < 0.0; ++i) {
    rows.push_back(row("decreased", ranked[ranked.size() - 1 - i]));
  }
  for (const auto& d : ranked) rows.push_back(row("all", d));
  write_csv(path, {"Section", "Class", "Original recall", "Debugged recall", "Change"}, rows);
}

}  // namespace cfdebug
