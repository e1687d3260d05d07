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

// Misclassification flagging by agreement between a prediction's local
// filters and the global MC set of its inferred class.

#ifndef CFDEBUG_DETECTOR_HPP
#define CFDEBUG_DETECTOR_HPP

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "cfdebug/cfe.hpp"
#include "cfdebug/model.hpp"
#include "cfdebug/profile.hpp"

namespace cfdebug {

enum class Metric { avg_recall, avg_f1, recall_floor };
Metric parse_metric(const std::string& name);  // UsageError on unknown names
std::string to_string(Metric metric);
// Display label: "Avg. Recall", "Avg. F1 score", "Recall < 0.3".
std::string display_name(Metric metric, double recall_floor);

enum class LocalSource { mc_filters, activation_map };
enum class ThresholdPopulation { per_class, global };

struct DetectionConfig {
  // Predictions with confidence above this are never flagged; 0 disables skipping.
  double skip_threshold = 0.90;
  double freq_threshold = 0.15;
  Metric metric = Metric::avg_recall;
  double recall_floor = 0.3;
  ThresholdPopulation population = ThresholdPopulation::per_class;
  LocalSource local = LocalSource::mc_filters;

  void validate() const;
};

enum class FlagReason { below_class_mean, below_recall_floor, skipped_high_confidence, not_flagged };
std::string to_string(FlagReason reason);
FlagReason parse_flag_reason(const std::string& name);

struct DetectionResult {
  std::string image_id;
  int inferred_class = 0;
  std::optional<int> true_class;
  double confidence = 0.0;
  double agreement_score = 0.0;
  bool flagged = false;
  FlagReason reason = FlagReason::not_flagged;

  bool operator==(const DetectionResult&) const = default;
};

nlohmann::json result_to_json(const DetectionResult& r);
DetectionResult result_from_json(const nlohmann::json& j);

// |local & global| / |global|. UsageError if global is empty or n differs.
double agreement_recall(const FilterActivationMap& local, const GlobalFilterSet& global);
// Harmonic mean of precision and recall; 0 when either set or the
// intersection is empty.
double agreement_f1(const FilterActivationMap& local, const GlobalFilterSet& global);
double agreement_score(Metric metric, const FilterActivationMap& local, const GlobalFilterSet& global);

struct ScoreLogEntry {
  std::string image_id;
  int true_class = 0;
  double score = 0.0;
};

struct Calibration {
  std::map<int, double> thresholds;  // class -> mean training score
  std::vector<ScoreLogEntry> scores;
};

// Scores every labeled training record against the global set of its true
// class and averages per class (or over all records for the global
// population, the same value then applies to every class).
Calibration calibrate_class_thresholds(const std::vector<PredictionRecord>& records,
                                       const std::vector<MCFilterSet>& mc_sets, const GlobalSets& globals,
                                       const DetectionConfig& config);
// Recomputes per-class means from a score log.
std::map<int, double> thresholds_from_scores(const std::vector<ScoreLogEntry>& scores);

DetectionResult flag(const PredictionRecord& record, const MCFilterSet* mc, const GlobalSets& globals,
                     const std::map<int, double>& thresholds, const DetectionConfig& config);

std::vector<DetectionResult> detect_all(const std::vector<PredictionRecord>& records,
                                        const std::vector<MCFilterSet>& mc_sets, const GlobalSets& globals,
                                        const std::map<int, double>& thresholds, const DetectionConfig& config);

struct DetectionSummary {
  std::string model;
  std::size_t predictions = 0;
  std::size_t total_errors = 0;
  std::size_t flagged = 0;
  std::size_t errors_detected = 0;
  std::size_t new_errors = 0;
  double skip_threshold = 0.0;
  double freq_threshold = 0.0;
  Metric metric = Metric::avg_recall;
  double recall_floor = 0.3;

  double detected_fraction() const;
  // errors_detected / flagged; 0 when nothing is flagged.
  double flag_precision() const;
  double error_rate() const;
};

// Every result must carry a true class.
DetectionSummary detection_report(const std::vector<DetectionResult>& results, const DetectionConfig& config,
                                  const std::string& model);

// Model,Total errors,Skip threshold,Freq. threshold,Metric,Errors detected,New errors
void write_detection_csv(const std::filesystem::path& path, const std::vector<DetectionSummary>& rows);

}  // namespace cfdebug

#endif  // CFDEBUG_DETECTOR_HPP
