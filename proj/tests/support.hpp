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

// Shared fixtures for the unit and acceptance tests.

#ifndef CFDEBUG_TESTS_SUPPORT_HPP
#define CFDEBUG_TESTS_SUPPORT_HPP

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "cfdebug/dataset.hpp"
#include "cfdebug/model.hpp"

namespace cfdebug::testing {

// Single conv layer over a 2x2 input with zero weights, so every filter's
// GAP value equals its (non-negative) conv bias whatever the image. The
// head is set by hand. Lets tests pin GAP features and head weights exactly.
inline Classifier fixed_gap_classifier(const std::vector<double>& gap, const std::vector<std::vector<double>>& head,
                                       const std::vector<double>& head_bias = {}) {
  Architecture arch;
  arch.in_channels = 1;
  arch.height = 2;
  arch.width = 2;
  arch.conv_channels = {static_cast<int>(gap.size())};
  arch.label_count = static_cast<int>(head.size());
  Classifier c(arch, 1);
  for (double& w : c.conv_weight(0)) w = 0.0;
  for (std::size_t k = 0; k < gap.size(); ++k) c.conv_bias(0)[k] = gap[k];
  auto hw = c.head_weight();
  for (std::size_t j = 0; j < head.size(); ++j) {
    for (std::size_t k = 0; k < gap.size(); ++k) hw[j * gap.size() + k] = head[j][k];
  }
  auto hb = c.head_bias();
  for (std::size_t j = 0; j < hb.size(); ++j) hb[j] = head_bias.empty() ? 0.0 : head_bias[j];
  return c;
}

inline std::vector<double> random_image(std::size_t size, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> v(size);
  for (auto& x : v) x = u(rng);
  return v;
}

inline std::vector<double> random_vector(std::size_t size, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> d(0.0, scale);
  std::vector<double> v(size);
  for (auto& x : v) x = d(rng);
  return v;
}

// Small two-block network with random weights; n final filters.
inline Classifier tiny_random_classifier(int n, int labels, std::uint64_t seed, int size = 8) {
  Architecture arch;
  arch.in_channels = 1;
  arch.height = size;
  arch.width = size;
  arch.conv_channels = {4, n};
  arch.label_count = labels;
  return Classifier(arch, seed);
}

inline Dataset small_dataset(int per_class, std::uint64_t seed, int size = 16) {
  SyntheticConfig cfg;
  cfg.per_class = per_class;
  cfg.size = size;
  return generate_synthetic(cfg, seed);
}

// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("cfdebug_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace cfdebug::testing

#endif  // CFDEBUG_TESTS_SUPPORT_HPP
