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

#include "cfdebug/profile.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_map>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "json.hpp"

#include "cfdebug/errors.hpp"

namespace cfdebug {

using nlohmann::json;

namespace {

std::int64_t to_fixed(double magnitude) {
  if (!std::isfinite(magnitude) || magnitude < 0.0) {
    throw UsageError(fmt::format("filter magnitude {} must be finite and non-negative", magnitude));
  }
  return std::llround(magnitude * ClassFilterProfile::kMagnitudeScale);
}

}  // namespace

ClassFilterProfile::ClassFilterProfile(int class_label, int n)
    : class_label_(class_label), counts_(n, 0), magnitude_fixed_(n, 0) {
  if (n < 1) throw UsageError("profile needs at least one filter");
}

std::vector<double> ClassFilterProfile::magnitude_sums() const {
  std::vector<double> out(counts_.size());
  for (int k = 0; k < n(); ++k) out[k] = magnitude_sum(k);
  return out;
}

double ClassFilterProfile::normalized_magnitude(int k) const {
  return counts_[k] == 0 ? 0.0 : magnitude_sum(k) / static_cast<double>(counts_[k]);
}

void ClassFilterProfile::add(const MCFilterSet& mc) {
  if (mc.n != n()) throw UsageError(fmt::format("MC set has n={}, profile has n={}", mc.n, n()));
  for (std::size_t i = 0; i < mc.indices.size(); ++i) {
    const int k = mc.indices[i];
    if (k < 0 || k >= n()) throw UsageError(fmt::format("filter index {} out of range", k));
    counts_[k] += 1;
    magnitude_fixed_[k] += to_fixed(mc.magnitudes[i]);
  }
  samples_ += 1;
}

void ClassFilterProfile::merge_from(const ClassFilterProfile& other) {
  if (other.class_label_ != class_label_ || other.n() != n()) {
    throw UsageError(fmt::format("cannot merge profile of class {} (n={}) into class {} (n={})",
                                 other.class_label_, other.n(), class_label_, n()));
  }
  for (int k = 0; k < n(); ++k) {
    counts_[k] += other.counts_[k];
    magnitude_fixed_[k] += other.magnitude_fixed_[k];
  }
  samples_ += other.samples_;
}

ClassFilterProfile ClassFilterProfile::from_parts(int class_label, std::vector<std::uint64_t> counts,
                                                  const std::vector<double>& magnitude_sums,
                                                  std::uint64_t samples) {
  if (counts.size() != magnitude_sums.size()) throw FormatError("counts and magnitude_sums differ in length");
  ClassFilterProfile p(class_label, static_cast<int>(counts.size()));
  p.counts_ = std::move(counts);
  for (std::size_t k = 0; k < magnitude_sums.size(); ++k) {
    p.magnitude_fixed_[k] = to_fixed(magnitude_sums[k]);
    if (p.counts_[k] > samples) throw FormatError("filter count exceeds samples_accumulated");
    if (p.counts_[k] == 0 && p.magnitude_fixed_[k] != 0) throw FormatError("magnitude recorded for an unseen filter");
  }
  p.samples_ = samples;
  return p;
}

std::size_t GlobalFilterSet::count() const {
  return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), std::uint8_t{1}));
}

const char* to_string(AccumulateOutcome outcome) {
  switch (outcome) {
    case AccumulateOutcome::accumulated: return "accumulated";
    case AccumulateOutcome::skipped_misclassified: return "misclassified";
    case AccumulateOutcome::skipped_low_confidence: return "low_confidence";
  }
  return "unknown";
}

AccumulateOutcome accumulate(ClassFilterProfile& profile, const PredictionRecord& record,
                             const MCFilterSet& mc, double tau) {
  if (!record.true_class) throw UsageError(fmt::format("record {} has no true class", record.image_id));
  if (record.inferred_class != profile.class_label()) {
    throw UsageError(fmt::format("record {} inferred class {} does not match profile class {}",
                                 record.image_id, record.inferred_class, profile.class_label()));
  }
  if (mc.class_label != record.inferred_class) {
    throw UsageError(fmt::format("MC set class {} does not match inferred class {}", mc.class_label,
                                 record.inferred_class));
  }
  if (*record.true_class != record.inferred_class) return AccumulateOutcome::skipped_misclassified;
  if (!(record.confidence > tau)) return AccumulateOutcome::skipped_low_confidence;
  profile.add(mc);
  return AccumulateOutcome::accumulated;
}

ProfileSet accumulate_all(const std::vector<PredictionRecord>& records, const std::vector<MCFilterSet>& mc_sets,
                          double tau, std::vector<SkippedRecord>* skipped) {
  std::unordered_map<std::string, const MCFilterSet*> by_id;
  for (const auto& s : mc_sets) by_id[s.image_id] = &s;
  ProfileSet profiles;
  for (const auto& r : records) {
    auto it = by_id.find(r.image_id);
    if (it == by_id.end()) throw UsageError(fmt::format("no MC set for record {}", r.image_id));
    auto [pit, inserted] = profiles.try_emplace(r.inferred_class, r.inferred_class,
                                                static_cast<int>(r.gap_features.size()));
    const auto outcome = accumulate(pit->second, r, *it->second, tau);
    if (outcome != AccumulateOutcome::accumulated) {
      spdlog::debug("skipping {} for accumulation: {}", r.image_id, to_string(outcome));
      if (skipped) skipped->push_back({r.image_id, outcome});
    }
  }
  // Classes that only saw skipped records carry no information.
  std::erase_if(profiles, [](const auto& kv) { return kv.second.samples_accumulated() == 0; });
  return profiles;
}

GlobalFilterSet derive_global_set(const ClassFilterProfile& profile, double freq_threshold) {
  if (profile.samples_accumulated() == 0) {
    throw UsageError(fmt::format("profile of class {} is empty", profile.class_label()));
  }
  if (!(freq_threshold >= 0.0 && freq_threshold <= 1.0)) throw UsageError("frequency threshold must lie in [0, 1]");
  GlobalFilterSet g;
  g.class_label = profile.class_label();
  const auto& counts = profile.counts();
  const std::uint64_t mx = *std::max_element(counts.begin(), counts.end());
  g.normalized_freq.resize(counts.size(), 0.0);
  g.bits.resize(counts.size(), 0);
  for (std::size_t k = 0; k < counts.size(); ++k) {
    g.normalized_freq[k] = mx == 0 ? 0.0 : static_cast<double>(counts[k]) / static_cast<double>(mx);
    g.bits[k] = g.normalized_freq[k] >= freq_threshold ? 1 : 0;
  }
  return g;
}

GlobalSets derive_global_sets(const ProfileSet& profiles, double freq_threshold) {
  GlobalSets out;
  for (const auto& [label, profile] : profiles) out.emplace(label, derive_global_set(profile, freq_threshold));
  return out;
}

ClassFilterProfile merge(const ClassFilterProfile& a, const ClassFilterProfile& b) {
  ClassFilterProfile out = a;
  out.merge_from(b);
  return out;
}

void save_profiles(const std::filesystem::path& path, const ProfileSet& profiles) {
  json root = json::object();
  for (const auto& [label, p] : profiles) {
    root[std::to_string(label)] = {
        {"profile_version", kProfileVersion},
        {"n", p.n()},
        {"counts", p.counts()},
        {"magnitude_sums", p.magnitude_sums()},
        {"samples_accumulated", p.samples_accumulated()},
    };
  }
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw FormatError(fmt::format("cannot write {}", path.string()));
  os << root.dump(1) << '\n';
}

ProfileSet load_profiles(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw FormatError(fmt::format("cannot open profile file {}", path.string()));
  json root;
  try {
    root = json::parse(is);
  } catch (const json::parse_error& e) {
    throw FormatError(fmt::format("corrupt profile file {}: {}", path.string(), e.what()));
  }
  if (!root.is_object()) throw FormatError("profile file must hold a JSON object");
  ProfileSet out;
  try {
    for (const auto& [key, entry] : root.items()) {
      const int version = entry.value("profile_version", 0);
      if (version != kProfileVersion) {
        throw FormatError(fmt::format("unsupported profile_version {} for class {} (expected {})", version, key,
                                      kProfileVersion));
      }
      const int label = std::stoi(key);
      auto counts = entry.at("counts").get<std::vector<std::uint64_t>>();
      if (static_cast<int>(counts.size()) != entry.at("n").get<int>()) throw FormatError("counts length differs from n");
      out.emplace(label, ClassFilterProfile::from_parts(label, std::move(counts),
                                                        entry.at("magnitude_sums").get<std::vector<double>>(),
                                                        entry.at("samples_accumulated").get<std::uint64_t>()));
    }
  } catch (const json::exception& e) {
    throw FormatError(fmt::format("corrupt profile file {}: {}", path.string(), e.what()));
  } catch (const std::logic_error& e) {
    throw FormatError(fmt::format("corrupt profile file {}: {}", path.string(), e.what()));
  }
  return out;
}

}  // namespace cfdebug
