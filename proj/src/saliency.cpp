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

#include "cfdebug/saliency.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "cfdebug/dataset.hpp"
#include "cfdebug/errors.hpp"

namespace cfdebug {
namespace {

double sample_bilinear(const std::vector<double>& map, int h, int w, double y, double x) {
  y = std::clamp(y, 0.0, h - 1.0);
  x = std::clamp(x, 0.0, w - 1.0);
  const int y0 = static_cast<int>(std::floor(y)), x0 = static_cast<int>(std::floor(x));
  const int y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
  const double fy = y - y0, fx = x - x0;
  const double top = map[y0 * w + x0] * (1 - fx) + map[y0 * w + x1] * fx;
  const double bottom = map[y1 * w + x0] * (1 - fx) + map[y1 * w + x1] * fx;
  return top * (1 - fy) + bottom * fy;
}

// Piecewise-linear "jet" colormap.
void jet(double v, double& r, double& g, double& b) {
  auto ramp = [](double x) { return std::clamp(1.5 - std::abs(x), 0.0, 1.0); };
  r = ramp(4.0 * v - 3.0);
  g = ramp(4.0 * v - 2.0);
  b = ramp(4.0 * v - 1.0);
}

}  // namespace

Heatmap grad_cam(const Classifier& classifier, std::span<const double> image, int class_index) {
  if (class_index < 0 || class_index >= classifier.label_count()) {
    throw UsageError(fmt::format("class {} out of range", class_index));
  }
  const auto& arch = classifier.architecture();
  const auto tr = classifier.forward(image, 1);
  const int n = classifier.filter_count();
  const auto W = classifier.head_weight();
  std::vector<double> dgap(n);
  for (int k = 0; k < n; ++k) dgap[k] = W[static_cast<std::size_t>(class_index) * n + k];
  const auto dmaps = classifier.final_maps_gradient(tr, dgap);

  const int pools = classifier.conv_layer_count() - 1;
  const int fh = arch.height >> pools, fw = arch.width >> pools;
  const std::size_t plane = static_cast<std::size_t>(fh) * fw;
  std::vector<double> cam(plane, 0.0);
  for (int k = 0; k < n; ++k) {
    double weight = 0.0;
    for (std::size_t i = 0; i < plane; ++i) weight += dmaps[k * plane + i];
    weight /= static_cast<double>(plane);
    for (std::size_t i = 0; i < plane; ++i) cam[i] += weight * tr.final_maps[k * plane + i];
  }
  for (double& v : cam) v = std::max(v, 0.0);

  Heatmap hm;
  hm.width = arch.width;
  hm.height = arch.height;
  hm.values.assign(static_cast<std::size_t>(hm.width) * hm.height, 0.0);
  const double sy = static_cast<double>(fh) / hm.height, sx = static_cast<double>(fw) / hm.width;
  for (int y = 0; y < hm.height; ++y) {
    for (int x = 0; x < hm.width; ++x) {
      hm.values[y * hm.width + x] = sample_bilinear(cam, fh, fw, (y + 0.5) * sy - 0.5, (x + 0.5) * sx - 0.5);
    }
  }
  const double mx = *std::max_element(hm.values.begin(), hm.values.end());
  if (!(mx > 0.0)) {
    spdlog::warn("class activation gradient is zero everywhere; emitting a uniform heatmap");
    std::fill(hm.values.begin(), hm.values.end(), 0.0);
    hm.uniform = true;
    return hm;
  }
  for (double& v : hm.values) v = std::clamp(v / mx, 0.0, 1.0);
  return hm;
}

Heatmap saliency_overlay(const Classifier& classifier, std::span<const double> image, int class_index,
                         const std::filesystem::path& out, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw UsageError("alpha must lie in [0, 1]");
  const auto hm = grad_cam(classifier, image, class_index);
  const auto& arch = classifier.architecture();
  const std::size_t plane = static_cast<std::size_t>(arch.height) * arch.width;
  std::vector<double> rgb(plane * 3);
  for (std::size_t i = 0; i < plane; ++i) {
    double base[3];
    if (arch.in_channels == 3) {
      for (int c = 0; c < 3; ++c) base[c] = image[c * plane + i];
    } else {
      double mean = 0.0;
      for (int c = 0; c < arch.in_channels; ++c) mean += image[c * plane + i];
      base[0] = base[1] = base[2] = mean / arch.in_channels;
    }
    double heat[3];
    jet(hm.values[i], heat[0], heat[1], heat[2]);
    for (int c = 0; c < 3; ++c) rgb[i * 3 + c] = (1.0 - alpha) * base[c] + alpha * heat[c];
  }
  write_ppm(out, rgb, arch.width, arch.height);
  return hm;
}

}  // namespace cfdebug
