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

#include <algorithm>
#include <fstream>
#include <random>

#include "doctest.h"
#include "json.hpp"

#include "cfdebug/errors.hpp"
#include "cfdebug/profile.hpp"
#include "support.hpp"

using namespace cfdebug;

namespace {

PredictionRecord record(const std::string& id, int inferred, int truth, double confidence, int n = 6) {
  PredictionRecord r;
  r.image_id = id;
  r.inferred_class = inferred;
  r.true_class = truth;
  r.confidence = confidence;
  r.gap_features.assign(n, 0.0);
  r.activation_map = FilterActivationMap(std::vector<std::uint8_t>(n, 0));
  return r;
}

MCFilterSet mc_set(const std::string& id, int label, std::vector<int> indices, std::vector<double> mags, int n = 6) {
  MCFilterSet s;
  s.image_id = id;
  s.class_label = label;
  s.n = n;
  s.indices = std::move(indices);
  s.magnitudes = std::move(mags);
  return s;
}

// Random qualifying records for class 0 with MC sets over n filters.
void random_batch(std::mt19937_64& rng, int count, int n, std::vector<PredictionRecord>& recs,
                  std::vector<MCFilterSet>& sets) {
  std::uniform_real_distribution<double> u(0.0, 3.0), conf(0.5, 1.0);
  for (int i = 0; i < count; ++i) {
    const std::string id = "img" + std::to_string(recs.size());
    recs.push_back(record(id, 0, 0, conf(rng), n));
    std::vector<int> idx;
    std::vector<double> mags;
    for (int k = 0; k < n; ++k) {
      if (rng() % 3 == 0) {
        idx.push_back(k);
        mags.push_back(u(rng));
      }
    }
    sets.push_back(mc_set(id, 0, idx, mags, n));
  }
}

}  // namespace

TEST_SUITE("profile") {

TEST_CASE("accumulate gating") {
  ClassFilterProfile p(0, 6);
  const auto mc = mc_set("a", 0, {1, 3}, {0.5, 2.0});
  CHECK(accumulate(p, record("a", 0, 0, 0.89), mc, 0.90) == AccumulateOutcome::skipped_low_confidence);
  CHECK(accumulate(p, record("a", 0, 0, 0.90), mc, 0.90) == AccumulateOutcome::skipped_low_confidence);
  CHECK(accumulate(p, record("a", 0, 2, 0.99), mc, 0.90) == AccumulateOutcome::skipped_misclassified);
  CHECK(p.samples_accumulated() == 0);
  CHECK(accumulate(p, record("a", 0, 0, 0.95), mc, 0.90) == AccumulateOutcome::accumulated);
  CHECK(p.counts() == std::vector<std::uint64_t>{0, 1, 0, 1, 0, 0});
  CHECK(p.samples_accumulated() == 1);
  CHECK(p.magnitude_sum(3) == 2.0);
  CHECK(p.normalized_magnitude(1) == 0.5);
  CHECK(p.normalized_magnitude(0) == 0.0);

  auto unlabeled = record("b", 0, 0, 0.99);
  unlabeled.true_class.reset();
  CHECK_THROWS_AS(accumulate(p, unlabeled, mc, 0.9), UsageError);
  CHECK_THROWS_AS(accumulate(p, record("c", 1, 1, 0.99), mc_set("c", 1, {0}, {1.0}), 0.9), UsageError);
  CHECK_THROWS_AS(accumulate(p, record("d", 0, 0, 0.99), mc_set("d", 1, {0}, {1.0}), 0.9), UsageError);
}

TEST_CASE("derive global set") {
  const auto p = ClassFilterProfile::from_parts(0, {10, 5, 0}, {1.0, 1.0, 0.0}, 10);
  const auto g = derive_global_set(p, 0.15);
  CHECK(g.normalized_freq == std::vector<double>{1.0, 0.5, 0.0});
  CHECK(g.bits == std::vector<std::uint8_t>{1, 1, 0});
  CHECK(derive_global_set(p, 0.0).bits == std::vector<std::uint8_t>{1, 1, 1});
  CHECK(derive_global_set(p, 1.0).bits == std::vector<std::uint8_t>{1, 0, 0});
  CHECK(derive_global_set(p, 0.5).bits == std::vector<std::uint8_t>{1, 1, 0});
  CHECK_THROWS_AS(derive_global_set(ClassFilterProfile(0, 3), 0.15), UsageError);
  CHECK_THROWS_AS(derive_global_set(p, 1.5), UsageError);
}

TEST_CASE("from_parts validates invariants") {
  CHECK_THROWS_AS(ClassFilterProfile::from_parts(0, {3}, {1.0}, 2), FormatError);
  CHECK_THROWS_AS(ClassFilterProfile::from_parts(0, {0}, {1.0}, 2), FormatError);
}

TEST_CASE("merge identity, commutativity and replay equivalence") {
  std::mt19937_64 rng(3);
  std::vector<PredictionRecord> recs;
  std::vector<MCFilterSet> sets;
  random_batch(rng, 6, 6, recs, sets);
  for (auto& r : recs) r.confidence = 0.99;
  ClassFilterProfile all(0, 6), a(0, 6), b(0, 6);
  for (int i = 0; i < 6; ++i) accumulate(all, recs[i], sets[i], 0.9);
  for (int i = 0; i < 3; ++i) accumulate(a, recs[i], sets[i], 0.9);
  for (int i = 3; i < 6; ++i) accumulate(b, recs[i], sets[i], 0.9);
  CHECK(merge(a, b) == all);
  CHECK(merge(a, b) == merge(b, a));
  CHECK(merge(all, ClassFilterProfile(0, 6)) == all);
  CHECK_THROWS_AS(merge(a, ClassFilterProfile(1, 6)), UsageError);
  CHECK_THROWS_AS(merge(a, ClassFilterProfile(0, 5)), UsageError);
}

TEST_CASE("order independence over 100 permutations") {
  std::mt19937_64 rng(9);
  std::vector<PredictionRecord> recs;
  std::vector<MCFilterSet> sets;
  random_batch(rng, 40, 12, recs, sets);
  const auto reference = accumulate_all(recs, sets, 0.7);
  std::vector<std::size_t> order(recs.size());
  std::iota(order.begin(), order.end(), 0);
  for (int trial = 0; trial < 100; ++trial) {
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<PredictionRecord> r2;
    std::vector<MCFilterSet> s2;
    for (auto i : order) r2.push_back(recs[i]);
    std::vector<std::size_t> mc_order = order;
    std::shuffle(mc_order.begin(), mc_order.end(), rng);
    for (auto i : mc_order) s2.push_back(sets[i]);
    CHECK(accumulate_all(r2, s2, 0.7) == reference);
  }
}

TEST_CASE("merge associativity over 100 random splits") {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<PredictionRecord> recs;
    std::vector<MCFilterSet> sets;
    random_batch(rng, 9, 8, recs, sets);
    ClassFilterProfile p[3] = {ClassFilterProfile(0, 8), ClassFilterProfile(0, 8), ClassFilterProfile(0, 8)};
    for (int i = 0; i < 9; ++i) p[rng() % 3].add(sets[i]);
    CHECK(merge(merge(p[0], p[1]), p[2]) == merge(p[0], merge(p[1], p[2])));
  }
}

TEST_CASE("tau and frequency monotonicity") {
  std::mt19937_64 rng(12);
  std::vector<PredictionRecord> recs;
  std::vector<MCFilterSet> sets;
  random_batch(rng, 60, 10, recs, sets);
  std::uint64_t last = std::numeric_limits<std::uint64_t>::max();
  for (double tau = 0.0; tau < 1.0; tau += 0.05) {
    const auto profiles = accumulate_all(recs, sets, tau);
    const std::uint64_t samples = profiles.empty() ? 0 : profiles.at(0).samples_accumulated();
    CHECK(samples <= last);
    if (!profiles.empty()) {
      const auto lower = accumulate_all(recs, sets, std::max(0.0, tau - 0.05)).at(0);
      for (int k = 0; k < 10; ++k) CHECK(profiles.at(0).counts()[k] <= lower.counts()[k]);
    }
    last = samples;
  }
  const auto profile = accumulate_all(recs, sets, 0.0).at(0);
  auto prev = derive_global_set(profile, 0.0).bits;
  for (double f = 0.02; f <= 1.0; f += 0.02) {
    const auto bits = derive_global_set(profile, f).bits;
    for (std::size_t k = 0; k < bits.size(); ++k) CHECK(bits[k] <= prev[k]);
    prev = bits;
  }
}

TEST_CASE("accumulate_all routing and skip log") {
  std::vector<PredictionRecord> recs{record("a", 0, 0, 0.95), record("b", 1, 1, 0.95), record("c", 1, 0, 0.99),
                                     record("d", 0, 0, 0.5)};
  std::vector<MCFilterSet> sets{mc_set("a", 0, {1}, {1.0}), mc_set("b", 1, {2}, {1.0}), mc_set("c", 1, {0}, {1.0}),
                                mc_set("d", 0, {3}, {1.0})};
  std::vector<SkippedRecord> skipped;
  const auto p = accumulate_all(recs, sets, 0.9, &skipped);
  CHECK(p.size() == 2);
  CHECK(p.at(0).counts()[1] == 1);
  CHECK(p.at(1).counts()[2] == 1);
  REQUIRE(skipped.size() == 2);
  CHECK(skipped[0].image_id == "c");
  CHECK(skipped[0].reason == AccumulateOutcome::skipped_misclassified);
  CHECK(skipped[1].reason == AccumulateOutcome::skipped_low_confidence);
  sets.pop_back();
  CHECK_THROWS_AS(accumulate_all(recs, sets, 0.9), UsageError);
}

TEST_CASE("profile file round trip and errors") {
  const auto dir = testing::scratch_dir("profiles");
  std::mt19937_64 rng(13);
  std::vector<PredictionRecord> recs;
  std::vector<MCFilterSet> sets;
  random_batch(rng, 30, 7, recs, sets);
  const auto profiles = accumulate_all(recs, sets, 0.6);
  save_profiles(dir / "p.json", profiles);
  CHECK(load_profiles(dir / "p.json") == profiles);

  CHECK_THROWS_AS(load_profiles(dir / "missing.json"), FormatError);
  auto j = nlohmann::json::parse(std::ifstream(dir / "p.json"));
  j["0"]["profile_version"] = 0;
  std::ofstream(dir / "v0.json") << j.dump();
  CHECK_THROWS_WITH_AS(load_profiles(dir / "v0.json"), doctest::Contains("version"), FormatError);
  std::ofstream(dir / "corrupt.json") << "{\"0\": {";
  CHECK_THROWS_AS(load_profiles(dir / "corrupt.json"), FormatError);
}

}
