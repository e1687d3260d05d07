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

#include "cfdebug/detector.hpp"

#include <cmath>
#include <unordered_map>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "cfdebug/csv.hpp"
#include "cfdebug/errors.hpp"

namespace cfdebug {

using nlohmann::json;

namespace {

struct Overlap {
  std::size_t local = 0, global = 0, both = 0;
};

Overlap overlap(const FilterActivationMap& local, const GlobalFilterSet& global) {
  if (local.size() != global.bits.size()) {
    throw UsageError(fmt::format("local map has {} filters, global set has {}", local.size(), global.bits.size()));
  }
  Overlap o;
  for (std::size_t k = 0; k < local.size(); ++k) {
    const bool l = local[k], g = global.bits[k] != 0;
    o.local += l;
    o.global += g;
    o.both += l && g;
  }
  return o;
}

FilterActivationMap local_filters(const PredictionRecord& record, const MCFilterSet* mc, LocalSource source) {
  if (source == LocalSource::activation_map) return record.activation_map;
  if (!mc) throw UsageError(fmt::format("no MC set for {}", record.image_id));
  return mc->as_bits();
}

std::string percent(double fraction) {
  return fmt::format("{:g}%", fraction * 100.0);
}

}  // namespace

Metric parse_metric(const std::string& name) {
  if (name == "avg_recall") return Metric::avg_recall;
  if (name == "avg_f1") return Metric::avg_f1;
  if (name == "recall_floor") return Metric::recall_floor;
  throw UsageError(fmt::format("unknown metric '{}' (expected avg_recall, avg_f1 or recall_floor)", name));
}

std::string to_string(Metric metric) {
  switch (metric) {
    case Metric::avg_recall: return "avg_recall";
    case Metric::avg_f1: return "avg_f1";
    case Metric::recall_floor: return "recall_floor";
  }
  return "unknown";
}

std::string display_name(Metric metric, double recall_floor) {
  switch (metric) {
    case Metric::avg_recall: return "Avg. Recall";
    case Metric::avg_f1: return "Avg. F1 score";
    case Metric::recall_floor: return fmt::format("Recall < {:g}", recall_floor);
  }
  return "unknown";
}

std::string to_string(FlagReason reason) {
  switch (reason) {
    case FlagReason::below_class_mean: return "below_class_mean";
    case FlagReason::below_recall_floor: return "below_recall_floor";
    case FlagReason::skipped_high_confidence: return "skipped_high_confidence";
    case FlagReason::not_flagged: return "not_flagged";
  }
  return "unknown";
}

FlagReason parse_flag_reason(const std::string& name) {
  for (auto r : {FlagReason::below_class_mean, FlagReason::below_recall_floor, FlagReason::skipped_high_confidence,
                 FlagReason::not_flagged}) {
    if (to_string(r) == name) return r;
  }
  throw FormatError(fmt::format("unknown flag reason '{}'", name));
}

void DetectionConfig::validate() const {
  if (!(skip_threshold >= 0.0 && skip_threshold <= 1.0)) throw UsageError("skip threshold must lie in [0, 1]");
  if (!(freq_threshold >= 0.0 && freq_threshold <= 1.0)) throw UsageError("frequency threshold must lie in [0, 1]");
  if (!(recall_floor >= 0.0 && recall_floor <= 1.0)) throw UsageError("recall floor must lie in [0, 1]");
}

json result_to_json(const DetectionResult& r) {
  return {{"image_id", r.image_id},
          {"inferred_class", r.inferred_class},
          {"true_class", r.true_class ? json(*r.true_class) : json(nullptr)},
          {"confidence", r.confidence},
          {"agreement_score", r.agreement_score},
          {"flagged", r.flagged},
          {"reason", to_string(r.reason)}};
}

DetectionResult result_from_json(const json& j) {
  try {
    DetectionResult r;
    r.image_id = j.at("image_id").get<std::string>();
    r.inferred_class = j.at("inferred_class").get<int>();
    if (!j.at("true_class").is_null()) r.true_class = j.at("true_class").get<int>();
    r.confidence = j.at("confidence").get<double>();
    r.agreement_score = j.at("agreement_score").get<double>();
    r.flagged = j.at("flagged").get<bool>();
    r.reason = parse_flag_reason(j.at("reason").get<std::string>());
    return r;
  } catch (const json::exception& e) {
    throw FormatError(fmt::format("malformed detection result: {}", e.what()));
  }
}

double agreement_recall(const FilterActivationMap& local, const GlobalFilterSet& global) {
  const auto o = overlap(local, global);
  if (o.global == 0) throw UsageError(fmt::format("global set of class {} is empty", global.class_label));
  return static_cast<double>(o.both) / static_cast<double>(o.global);
}

double agreement_f1(const FilterActivationMap& local, const GlobalFilterSet& global) {
  const auto o = overlap(local, global);
  if (o.local == 0 || o.global == 0 || o.both == 0) return 0.0;
  const double precision = static_cast<double>(o.both) / static_cast<double>(o.local);
  const double recall = static_cast<double>(o.both) / static_cast<double>(o.global);
  return 2.0 * precision * recall / (precision + recall);
}

double agreement_score(Metric metric, const FilterActivationMap& local, const GlobalFilterSet& global) {
  return metric == Metric::avg_f1 ? agreement_f1(local, global) : agreement_recall(local, global);
}

Calibration calibrate_class_thresholds(const std::vector<PredictionRecord>& records,
                                       const std::vector<MCFilterSet>& mc_sets, const GlobalSets& globals,
                                       const DetectionConfig& config) {
  config.validate();
  std::unordered_map<std::string, const MCFilterSet*> by_id;
  for (const auto& s : mc_sets) by_id[s.image_id] = &s;

  Calibration cal;
  for (const auto& r : records) {
    if (!r.true_class) continue;
    auto git = globals.find(*r.true_class);
    if (git == globals.end()) continue;
    auto mit = by_id.find(r.image_id);
    const MCFilterSet* mc = mit == by_id.end() ? nullptr : mit->second;
    const auto local = local_filters(r, mc, config.local);
    cal.scores.push_back({r.image_id, *r.true_class, agreement_score(config.metric, local, git->second)});
  }
  cal.thresholds = thresholds_from_scores(cal.scores);
  for (const auto& [label, g] : globals) {
    if (!cal.thresholds.contains(label)) spdlog::warn("class {} has no training records; excluded from calibration", label);
  }
  if (config.population == ThresholdPopulation::global && !cal.scores.empty()) {
    double sum = 0.0;
    for (const auto& s : cal.scores) sum += s.score;
    const double mean = sum / static_cast<double>(cal.scores.size());
    for (auto& [label, t] : cal.thresholds) t = mean;
  }
  return cal;
}

std::map<int, double> thresholds_from_scores(const std::vector<ScoreLogEntry>& scores) {
  std::map<int, std::pair<double, std::size_t>> acc;
  for (const auto& s : scores) {
    auto& [sum, count] = acc[s.true_class];
    sum += s.score;
    ++count;
  }
  std::map<int, double> out;
  for (const auto& [label, sc] : acc) out[label] = sc.first / static_cast<double>(sc.second);
  return out;
}

DetectionResult flag(const PredictionRecord& record, const MCFilterSet* mc, const GlobalSets& globals,
                     const std::map<int, double>& thresholds, const DetectionConfig& config) {
  auto git = globals.find(record.inferred_class);
  if (git == globals.end()) {
    throw UsageError(fmt::format("no global MC set for inferred class {}", record.inferred_class));
  }
  DetectionResult res;
  res.image_id = record.image_id;
  res.inferred_class = record.inferred_class;
  res.true_class = record.true_class;
  res.confidence = record.confidence;
  if (mc && mc->class_label != record.inferred_class) {
    throw UsageError(fmt::format("MC set for {} targets class {}, not the inferred class", record.image_id,
                                 mc->class_label));
  }
  const auto local = local_filters(record, mc, config.local);
  res.agreement_score = agreement_score(config.metric, local, git->second);

  if (config.skip_threshold > 0.0 && record.confidence > config.skip_threshold) {
    res.reason = FlagReason::skipped_high_confidence;
    return res;
  }
  if (config.metric == Metric::recall_floor) {
    res.flagged = res.agreement_score < config.recall_floor;
    res.reason = res.flagged ? FlagReason::below_recall_floor : FlagReason::not_flagged;
    return res;
  }
  auto tit = thresholds.find(record.inferred_class);
  if (tit == thresholds.end()) {
    throw UsageError(fmt::format("no calibrated threshold for class {}", record.inferred_class));
  }
  res.flagged = res.agreement_score < tit->second;
  res.reason = res.flagged ? FlagReason::below_class_mean : FlagReason::not_flagged;
  return res;
}

std::vector<DetectionResult> detect_all(const std::vector<PredictionRecord>& records,
                                        const std::vector<MCFilterSet>& mc_sets, const GlobalSets& globals,
                                        const std::map<int, double>& thresholds, const DetectionConfig& config) {
  config.validate();
  std::unordered_map<std::string, const MCFilterSet*> by_id;
  for (const auto& s : mc_sets) by_id[s.image_id] = &s;
  std::vector<DetectionResult> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    auto it = by_id.find(r.image_id);
    out.push_back(flag(r, it == by_id.end() ? nullptr : it->second, globals, thresholds, config));
  }
  return out;
}

double DetectionSummary::detected_fraction() const {
  return total_errors == 0 ? 0.0 : static_cast<double>(errors_detected) / static_cast<double>(total_errors);
}

double DetectionSummary::flag_precision() const {
  return flagged == 0 ? 0.0 : static_cast<double>(errors_detected) / static_cast<double>(flagged);
}

double DetectionSummary::error_rate() const {
  return predictions == 0 ? 0.0 : static_cast<double>(total_errors) / static_cast<double>(predictions);
}

DetectionSummary detection_report(const std::vector<DetectionResult>& results, const DetectionConfig& config,
                                  const std::string& model) {
  DetectionSummary s;
  s.model = model;
  s.skip_threshold = config.skip_threshold;
  s.freq_threshold = config.freq_threshold;
  s.metric = config.metric;
  s.recall_floor = config.recall_floor;
  for (const auto& r : results) {
    if (!r.true_class) throw UsageError(fmt::format("result {} has no ground truth", r.image_id));
    const bool wrong = *r.true_class != r.inferred_class;
    ++s.predictions;
    s.total_errors += wrong;
    s.flagged += r.flagged;
    s.errors_detected += r.flagged && wrong;
    s.new_errors += r.flagged && !wrong;
  }
  return s;
}

void write_detection_csv(const std::filesystem::path& path, const std::vector<DetectionSummary>& rows) {
  std::vector<CsvRow> out;
  for (const auto& s : rows) {
    out.push_back({s.model, std::to_string(s.total_errors), percent(s.skip_threshold), percent(s.freq_threshold),
                   display_name(s.metric, s.recall_floor),
                   fmt::format("{} ({}%)", s.errors_detected, std::lround(s.detected_fraction() * 100.0)),
                   std::to_string(s.new_errors)});
  }
  write_csv(path,
            {"Model", "Total errors", "Skip threshold", "Freq. threshold", "Metric", "Errors detected", "New errors"},
            out);
}

}  // namespace cfdebug
