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

// Minimum-correct (MC) filter identification: the smallest set of final-layer
// filters whose retention alone keeps the classifier's inferred class.

#ifndef CFDEBUG_CFE_HPP
#define CFDEBUG_CFE_HPP

#include <span>
#include <string>
#include <vector>

#include "cfdebug/model.hpp"

namespace cfdebug {

struct MCFilterSet {
  std::string image_id;
  int class_label = 0;
  int n = 0;                       // filter count of the classifier
  std::vector<int> indices;        // strictly increasing
  std::vector<double> magnitudes;  // GAP activation of each index, same order
  bool degenerate = false;         // repair needed the whole active set

  FilterActivationMap as_bits() const;
  // Gate vector: 1 at indices, 0 elsewhere.
  std::vector<double> indicator() const;

  bool operator==(const MCFilterSet&) const = default;
};

struct CfeConfig {
  double sparsity_weight = 2.0;
  bool logits_loss = true;  // preserve logits (else cross-entropy to target)
  int max_iterations = 300;
  double mask_init = 1.0;
  double tolerance = 1e-6;
  double learning_rate = 0.05;

  void validate() const;
};

// Intermediate state of one identify_mc_filters call.
struct CfeTrace {
  std::vector<double> relaxed_mask;
  int iterations = 0;
  std::vector<int> thresholded;   // indices surviving binarization
  std::vector<int> repair_added;  // in the order they were re-added
};

// Relaxed-mask optimization over m in [0, 1]^n of
//   preservation(m) + sparsity_weight * sum(m)
// followed by binarization at 0.5, a greedy repair that re-adds active
// filters by decreasing magnitude until the target class is preserved. The
// result is checked with one masked forward pass.
// Throws UsageError when target_class is not the inferred class.
MCFilterSet identify_mc_filters(const Classifier& classifier, std::span<const double> image,
                                int target_class, const CfeConfig& config = {},
                                CfeTrace* trace = nullptr);

// Exhaustive minimum-cardinality search; ties go to the lexicographically
// smallest index set. Requires n <= 16.
MCFilterSet brute_force_mc_oracle(const Classifier& classifier, std::span<const double> image,
                                  int target_class);

// True iff keeping only `indices` of `gap` leaves argmax at target_class.
bool preserves_class(const Classifier& classifier, std::span<const double> gap,
                     std::span<const int> indices, int target_class);

}  // namespace cfdebug

#endif  // CFDEBUG_CFE_HPP
