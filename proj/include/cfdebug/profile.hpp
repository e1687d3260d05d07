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

// Per-class accumulation of MC filter statistics over confident, correct
// predictions, and the frequency-thresholded global MC set derived from it.

#ifndef CFDEBUG_PROFILE_HPP
#define CFDEBUG_PROFILE_HPP

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "cfdebug/cfe.hpp"
#include "cfdebug/model.hpp"

namespace cfdebug {

inline constexpr int kProfileVersion = 1;

// Magnitudes are summed in fixed point (units of 2^-32) so accumulation and
// merging are exactly associative and order-independent. Exact round trips
// through the JSON file hold while a class's magnitude sum stays below 2^21.
class ClassFilterProfile {
 public:
  static constexpr double kMagnitudeScale = 4294967296.0;  // 2^32

  ClassFilterProfile() = default;
  ClassFilterProfile(int class_label, int n);

  int class_label() const { return class_label_; }
  int n() const { return static_cast<int>(counts_.size()); }
  const std::vector<std::uint64_t>& counts() const { return counts_; }
  std::uint64_t samples_accumulated() const { return samples_; }
  double magnitude_sum(int k) const { return static_cast<double>(magnitude_fixed_[k]) / kMagnitudeScale; }
  std::vector<double> magnitude_sums() const;
  // magnitude_sum / count, 0 for filters never seen.
  double normalized_magnitude(int k) const;

  // Adds one MC set unconditionally; accumulate() applies the gating rule.
  void add(const MCFilterSet& mc);
  void merge_from(const ClassFilterProfile& other);

  static ClassFilterProfile from_parts(int class_label, std::vector<std::uint64_t> counts,
                                       const std::vector<double>& magnitude_sums, std::uint64_t samples);

  bool operator==(const ClassFilterProfile&) const = default;

 private:
  int class_label_ = 0;
  std::vector<std::uint64_t> counts_;
  std::vector<std::int64_t> magnitude_fixed_;
  std::uint64_t samples_ = 0;
};

using ProfileSet = std::map<int, ClassFilterProfile>;

struct GlobalFilterSet {
  int class_label = 0;
  std::vector<std::uint8_t> bits;
  std::vector<double> normalized_freq;

  int n() const { return static_cast<int>(bits.size()); }
  std::size_t count() const;
  FilterActivationMap as_map() const { return FilterActivationMap(bits); }
};

using GlobalSets = std::map<int, GlobalFilterSet>;

enum class AccumulateOutcome { accumulated, skipped_misclassified, skipped_low_confidence };
const char* to_string(AccumulateOutcome outcome);

// Adds `mc` iff the record is correct and its confidence is strictly above
// tau. Requires a labeled record whose inferred class matches both the
// profile and the MC set.
AccumulateOutcome accumulate(ClassFilterProfile& profile, const PredictionRecord& record,
                             const MCFilterSet& mc, double tau);

struct SkippedRecord {
  std::string image_id;
  AccumulateOutcome reason;
};

// Pairs records with MC sets by image_id and routes each to the profile of
// its inferred class. Skips are logged and returned.
ProfileSet accumulate_all(const std::vector<PredictionRecord>& records, const std::vector<MCFilterSet>& mc_sets,
                          double tau, std::vector<SkippedRecord>* skipped = nullptr);

// normalized_freq[k] = counts[k] / max_j counts[j]; bit set iff >= threshold.
GlobalFilterSet derive_global_set(const ClassFilterProfile& profile, double freq_threshold);
GlobalSets derive_global_sets(const ProfileSet& profiles, double freq_threshold);

ClassFilterProfile merge(const ClassFilterProfile& a, const ClassFilterProfile& b);

void save_profiles(const std::filesystem::path& path, const ProfileSet& profiles);
ProfileSet load_profiles(const std::filesystem::path& path);

}  // namespace cfdebug

#endif  // CFDEBUG_PROFILE_HPP
