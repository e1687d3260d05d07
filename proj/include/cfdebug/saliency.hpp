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

#ifndef CFDEBUG_SALIENCY_HPP
#define CFDEBUG_SALIENCY_HPP

#include <filesystem>
#include <span>
#include <vector>

#include "cfdebug/model.hpp"

namespace cfdebug {

struct Heatmap {
  int width = 0;
  int height = 0;
  std::vector<double> values;  // row-major, each in [0, 1]
  bool uniform = false;        // gradient was zero everywhere
};

// Gradient-weighted class activation map over the final conv layer,
// bilinearly upsampled to the input size and scaled so its max is 1.
Heatmap grad_cam(const Classifier& classifier, std::span<const double> image, int class_index);

// Writes the heatmap alpha-blended over the input as a binary PPM.
Heatmap saliency_overlay(const Classifier& classifier, std::span<const double> image, int class_index,
                         const std::filesystem::path& out, double alpha = 0.5);

}  // namespace cfdebug

#endif  // CFDEBUG_SALIENCY_HPP
