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

#ifndef CFDEBUG_REPORT_HPP
#define CFDEBUG_REPORT_HPP

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "cfdebug/model.hpp"

namespace cfdebug {

struct ClassRecallDelta {
  int class_label = 0;
  std::string name;
  std::size_t support = 0;
  double before = 0.0;
  double after = 0.0;
  double delta = 0.0;
};

// Per-class recall of two prediction sets over the same labeled test set,
// ranked by delta (descending, ties by class label). UsageError when the two
// sets do not cover the same images with the same labels.
std::vector<ClassRecallDelta> class_recall_delta(const std::vector<PredictionRecord>& base,
                                                 const std::vector<PredictionRecord>& debugged,
                                                 const std::vector<std::string>& class_names = {});

// Section,Class,Original recall,Debugged recall,Change
// Sections: "improved" (top_k positive deltas), "decreased" (top_k negative
// deltas, most negative first), then "all" with the full ranking.
void write_recall_delta_csv(const std::filesystem::path& path, const std::vector<ClassRecallDelta>& ranked,
                            std::size_t top_k);

}  // namespace cfdebug

#endif  // CFDEBUG_REPORT_HPP
