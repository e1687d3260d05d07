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

#include <random>
#include <vector>

#include "doctest.h"

#include "cfdebug/cfe.hpp"
#include "cfdebug/errors.hpp"
#include "support.hpp"

using namespace cfdebug;
using testing::fixed_gap_classifier;

namespace {

const std::vector<double> kImage2x2(4, 0.5);

bool sound(const Classifier& c, std::span<const double> image, const MCFilterSet& s) {
  return argmax(masked_logits(c, image, s.indicator())) == s.class_label;
}

}  // namespace

TEST_SUITE("cfe") {

TEST_CASE("head loading on exactly two filters") {
  // Class 0 needs both filters 2 and 5 to beat the constant bias of class 1.
  std::vector<double> w0(6, 0.0);
  w0[2] = w0[5] = 1.0;
  const auto c = fixed_gap_classifier(std::vector<double>(6, 1.0), {w0, std::vector<double>(6, 0.0)}, {0.0, 1.5});
  const auto oracle = brute_force_mc_oracle(c, kImage2x2, 0);
  CHECK(oracle.indices == std::vector<int>{2, 5});
  const auto mc = identify_mc_filters(c, kImage2x2, 0);
  CHECK(mc.indices == std::vector<int>{2, 5});
  CHECK(mc.magnitudes == std::vector<double>{1.0, 1.0});
  CHECK(mc.class_label == 0);
  CHECK(mc.n == 6);
}

TEST_CASE("a strict subset is returned when one suffices") {
  std::vector<double> w0(6, 0.0);
  w0[2] = w0[5] = 1.0;
  const auto c = fixed_gap_classifier(std::vector<double>(6, 1.0), {w0, std::vector<double>(6, 0.0)}, {0.0, 0.5});
  CHECK(brute_force_mc_oracle(c, kImage2x2, 0).indices == std::vector<int>{2});
  // Filters 2 and 5 are interchangeable, so the optimizer may keep both;
  // it must stay within one filter of the oracle and remain sound.
  const auto mc = identify_mc_filters(c, kImage2x2, 0);
  CHECK(mc.indices.size() <= 2);
  CHECK(sound(c, kImage2x2, mc));
}

TEST_CASE("all-zero GAP features") {
  const auto c = fixed_gap_classifier(std::vector<double>(4, 0.0), {std::vector<double>(4, 1.0), std::vector<double>(4, -1.0)},
                                      {1.0, 0.0});
  CHECK(brute_force_mc_oracle(c, kImage2x2, 0).indices.empty());
  const auto mc = identify_mc_filters(c, kImage2x2, 0);
  CHECK_FALSE(mc.indices.empty());
  CHECK(sound(c, kImage2x2, mc));
}

TEST_CASE("single filter that must stay on") {
  const auto c = fixed_gap_classifier({1.0}, {{1.0}, {0.0}}, {0.0, 0.5});
  CHECK(brute_force_mc_oracle(c, kImage2x2, 0).indices == std::vector<int>{0});
  CHECK(identify_mc_filters(c, kImage2x2, 0).indices == std::vector<int>{0});
}

TEST_CASE("without sparsity pressure the full active set is kept") {
  const std::vector<double> gap{0.7, 0.0, 1.2, 0.3, 0.0, 2.0};
  std::mt19937_64 rng(1);
  const auto c = fixed_gap_classifier(gap, {testing::random_vector(6, rng), testing::random_vector(6, rng)});
  const int target = argmax(c.forward(kImage2x2, 1).logits);
  CfeConfig cfg;
  cfg.sparsity_weight = 0.0;
  cfg.mask_init = 1.0;
  CHECK(identify_mc_filters(c, kImage2x2, target, cfg).indices == std::vector<int>{0, 2, 3, 5});
}

TEST_CASE("repair adds filters in non-increasing magnitude order") {
  std::mt19937_64 rng(17);
  int repaired = 0;
  for (int trial = 0; trial < 200; ++trial) {
    auto c = testing::tiny_random_classifier(10, 5, 1000 + trial);
    const auto img = testing::random_image(64, rng);
    const auto full = c.forward(img, 1);
    CfeConfig cfg;
    cfg.max_iterations = 20;  // stop early so repair has work to do
    CfeTrace trace;
    const auto mc = identify_mc_filters(c, img, argmax(full.logits), cfg, &trace);
    CHECK(sound(c, img, mc));
    for (std::size_t i = 1; i < trace.repair_added.size(); ++i) {
      CHECK(full.gap[trace.repair_added[i - 1]] >= full.gap[trace.repair_added[i]]);
    }
    repaired += !trace.repair_added.empty();
  }
  CHECK(repaired > 0);
}

TEST_CASE("soundness and oracle dominance on random tiny networks") {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 60; ++trial) {
    const int n = 2 + trial % 9;
    auto c = testing::tiny_random_classifier(n, 4, 500 + trial);
    const auto img = testing::random_image(64, rng);
    const int target = argmax(c.forward(img, 1).logits);
    const auto mc = identify_mc_filters(c, img, target);
    const auto oracle = brute_force_mc_oracle(c, img, target);
    CAPTURE(trial);
    CHECK(sound(c, img, mc));
    CHECK(sound(c, img, oracle));
    CHECK(mc.indices.size() >= oracle.indices.size());
    CHECK(std::is_sorted(mc.indices.begin(), mc.indices.end()));
    const auto gap = c.forward(img, 1).gap;
    for (std::size_t i = 0; i < mc.indices.size(); ++i) CHECK(mc.magnitudes[i] == gap[mc.indices[i]]);
  }
}

TEST_CASE("cross-entropy preservation mode is also sound") {
  std::mt19937_64 rng(29);
  CfeConfig cfg;
  cfg.logits_loss = false;
  for (int trial = 0; trial < 20; ++trial) {
    auto c = testing::tiny_random_classifier(8, 4, 900 + trial);
    const auto img = testing::random_image(64, rng);
    const int target = argmax(c.forward(img, 1).logits);
    CHECK(sound(c, img, identify_mc_filters(c, img, target, cfg)));
  }
}

TEST_CASE("errors") {
  const auto c = fixed_gap_classifier({1.0}, {{1.0}, {0.0}}, {0.0, 0.5});
  CHECK_THROWS_AS(identify_mc_filters(c, kImage2x2, 1), UsageError);
  CfeConfig bad;
  bad.max_iterations = 0;
  CHECK_THROWS_AS(identify_mc_filters(c, kImage2x2, 0, bad), UsageError);
  bad = CfeConfig{};
  bad.sparsity_weight = -1.0;
  CHECK_THROWS_AS(identify_mc_filters(c, kImage2x2, 0, bad), UsageError);
  const auto wide = fixed_gap_classifier(std::vector<double>(17, 1.0), {std::vector<double>(17, 1.0), std::vector<double>(17, 0.0)});
  CHECK_THROWS_AS(brute_force_mc_oracle(wide, kImage2x2, 0), UsageError);
}

}
