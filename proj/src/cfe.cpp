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

#include "cfdebug/cfe.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <fmt/format.h>

#include "cfdebug/errors.hpp"

namespace cfdebug {
namespace {

std::vector<double> keep_only(std::span<const double> gap, std::span<const int> indices) {
  std::vector<double> kept(gap.size(), 0.0);
  for (int k : indices) kept[k] = gap[k];
  return kept;
}

MCFilterSet make_set(std::span<const double> gap, std::vector<int> indices, int target_class) {
  std::sort(indices.begin(), indices.end());
  MCFilterSet set;
  set.class_label = target_class;
  set.n = static_cast<int>(gap.size());
  set.indices = std::move(indices);
  for (int k : set.indices) set.magnitudes.push_back(gap[k]);
  return set;
}

// Gradient of the preservation term w.r.t. the relaxed mask.
std::vector<double> preservation_gradient(const Classifier& classifier, std::span<const double> gap,
                                          std::span<const double> mask, std::span<const double> reference,
                                          int target_class, bool logits_loss) {
  const int n = classifier.filter_count(), K = classifier.label_count();
  std::vector<double> masked(n);
  for (int k = 0; k < n; ++k) masked[k] = mask[k] * gap[k];
  const auto logits = head_logits(classifier, masked);
  std::vector<double> dlogits(K);
  if (logits_loss) {
    for (int j = 0; j < K; ++j) dlogits[j] = 2.0 * (logits[j] - reference[j]);
  } else {
    dlogits = softmax(logits);
    dlogits[target_class] -= 1.0;
  }
  const auto W = classifier.head_weight();
  std::vector<double> grad(n, 0.0);
  for (int k = 0; k < n; ++k) {
    double acc = 0.0;
    for (int j = 0; j < K; ++j) acc += W[static_cast<std::size_t>(j) * n + k] * dlogits[j];
    grad[k] = acc * gap[k];
  }
  return grad;
}

// Active filters ordered by decreasing magnitude, ties by index.
std::vector<int> by_magnitude_desc(std::span<const double> gap) {
  std::vector<int> order;
  for (int k = 0; k < static_cast<int>(gap.size()); ++k) {
    if (gap[k] > 0.0) order.push_back(k);
  }
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return gap[a] > gap[b]; });
  return order;
}

}  // namespace

FilterActivationMap MCFilterSet::as_bits() const {
  std::vector<std::uint8_t> bits(n, 0);
  for (int k : indices) bits[k] = 1;
  return FilterActivationMap(std::move(bits));
}

std::vector<double> MCFilterSet::indicator() const {
  std::vector<double> gate(n, 0.0);
  for (int k : indices) gate[k] = 1.0;
  return gate;
}

void CfeConfig::validate() const {
  if (!(sparsity_weight >= 0.0)) throw UsageError("sparsity weight must be non-negative");
  if (max_iterations < 1) throw UsageError("max_iterations must be at least 1");
  if (!(mask_init >= 0.0 && mask_init <= 1.0)) throw UsageError("mask_init must lie in [0, 1]");
  if (!(tolerance >= 0.0)) throw UsageError("tolerance must be non-negative");
  if (!(learning_rate > 0.0)) throw UsageError("learning rate must be positive");
}

bool preserves_class(const Classifier& classifier, std::span<const double> gap,
                     std::span<const int> indices, int target_class) {
  return argmax(head_logits(classifier, keep_only(gap, indices))) == target_class;
}

MCFilterSet identify_mc_filters(const Classifier& classifier, std::span<const double> image,
                                int target_class, const CfeConfig& config, CfeTrace* trace) {
  config.validate();
  const auto full = classifier.forward(image, 1);
  if (argmax(full.logits) != target_class) {
    throw UsageError(fmt::format("target class {} is not the inferred class {}", target_class, argmax(full.logits)));
  }
  const std::span<const double> gap = full.gap;
  const int n = classifier.filter_count();

  // Projected Adam on the relaxed mask.
  std::vector<double> mask(n, config.mask_init), m1(n, 0.0), m2(n, 0.0);
  constexpr double kBeta1 = 0.9, kBeta2 = 0.999, kEps = 1e-8;
  int iter = 0;
  for (; iter < config.max_iterations; ++iter) {
    auto grad = preservation_gradient(classifier, gap, mask, full.logits, target_class, config.logits_loss);
    double max_step = 0.0;
    const double c1 = 1.0 - std::pow(kBeta1, iter + 1), c2 = 1.0 - std::pow(kBeta2, iter + 1);
    for (int k = 0; k < n; ++k) {
      // Inactive filters do not influence the logits; leave them alone.
      if (gap[k] <= 0.0) continue;
      const double gk = grad[k] + config.sparsity_weight;
      m1[k] = kBeta1 * m1[k] + (1.0 - kBeta1) * gk;
      m2[k] = kBeta2 * m2[k] + (1.0 - kBeta2) * gk * gk;
      const double next = std::clamp(mask[k] - config.learning_rate * (m1[k] / c1) / (std::sqrt(m2[k] / c2) + kEps), 0.0, 1.0);
      max_step = std::max(max_step, std::abs(next - mask[k]));
      mask[k] = next;
    }
    if (max_step <= config.tolerance) {
      ++iter;
      break;
    }
  }

  std::vector<int> kept;
  for (int k = 0; k < n; ++k) {
    if (mask[k] > 0.5 && gap[k] > 0.0) kept.push_back(k);
  }
  if (trace) {
    trace->relaxed_mask = mask;
    trace->iterations = iter;
    trace->thresholded = kept;
  }

  bool degenerate = false;
  if (!preserves_class(classifier, gap, kept, target_class)) {
    for (int k : by_magnitude_desc(gap)) {
      if (std::find(kept.begin(), kept.end(), k) != kept.end()) continue;
      kept.push_back(k);
      if (trace) trace->repair_added.push_back(k);
      if (preserves_class(classifier, gap, kept, target_class)) break;
    }
    if (!preserves_class(classifier, gap, kept, target_class)) {
      degenerate = true;
      kept = by_magnitude_desc(gap);
    }
  }

  if (kept.empty()) {
    // Non-empty by contract: the strongest single filter that still
    // preserves the class, else the whole active set.
    const auto order = by_magnitude_desc(gap);
    if (order.empty()) {
      kept.push_back(0);
    } else {
      for (int k : order) {
        if (preserves_class(classifier, gap, std::span<const int>(&k, 1), target_class)) {
          kept.push_back(k);
          break;
        }
      }
      if (kept.empty()) kept = order;
    }
  }

  auto set = make_set(gap, std::move(kept), target_class);
  set.degenerate = degenerate;
  const auto check = masked_logits(classifier, image, set.indicator());
  if (argmax(check) != target_class) {
    throw std::logic_error("MC filter set failed masked verification");
  }
  return set;
}

MCFilterSet brute_force_mc_oracle(const Classifier& classifier, std::span<const double> image, int target_class) {
  const int n = classifier.filter_count();
  if (n > 16) throw UsageError(fmt::format("exhaustive MC search needs n <= 16, got {}", n));
  if (target_class < 0 || target_class >= classifier.label_count()) throw UsageError("target class out of range");
  const auto full = classifier.forward(image, 1);
  const std::span<const double> gap = full.gap;

  std::vector<int> combo;
  for (int size = 0; size <= n; ++size) {
    // Lexicographic enumeration of size-subsets of [0, n).
    combo.resize(size);
    std::iota(combo.begin(), combo.end(), 0);
    while (true) {
      if (preserves_class(classifier, gap, combo, target_class)) return make_set(gap, combo, target_class);
      int i = size - 1;
      while (i >= 0 && combo[i] == n - size + i) --i;
      if (i < 0) break;
      ++combo[i];
      for (int j = i + 1; j < size; ++j) combo[j] = combo[j - 1] + 1;
    }
  }
  throw UsageError(fmt::format("no filter subset yields class {}", target_class));
}

}  // namespace cfdebug
