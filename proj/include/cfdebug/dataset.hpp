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

#ifndef CFDEBUG_DATASET_HPP
#define CFDEBUG_DATASET_HPP

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace cfdebug {

// Labeled images stored contiguously as CHW doubles in [0, 1].
struct Dataset {
  int channels = 1;
  int height = 0;
  int width = 0;
  std::vector<std::string> class_names;
  std::vector<std::string> image_ids;
  std::vector<int> labels;
  std::vector<double> pixels;

  std::size_t size() const { return labels.size(); }
  std::size_t image_size() const { return static_cast<std::size_t>(channels) * height * width; }
  std::span<const double> image(std::size_t i) const {
    return std::span<const double>(pixels).subspan(i * image_size(), image_size());
  }
  std::span<const double> all_images() const { return pixels; }
};

// Procedural 10-class grayscale pattern dataset (stripes, rings, crosses ...)
// with position jitter, contrast jitter, additive noise and a faint distractor
// pattern from another class. Pixels are quantized to k/255 so the in-memory
// dataset equals what load_image_dir() reads back.
struct SyntheticConfig {
  int per_class = 100;
  int size = 16;
  double noise = 0.22;
  double distractor_alpha = 0.45;
  // Pattern amplitude is drawn from [min_contrast, max_contrast]; faint
  // images are the hard cases.
  double min_contrast = 0.1;
  double max_contrast = 0.9;
};

Dataset generate_synthetic(const SyntheticConfig& config, std::uint64_t seed);

// Class-per-subdirectory layout: root/<class_name>/<file>.pgm. Classes are
// ordered by name. Unreadable files are skipped with a warning; an empty
// dataset or an empty class directory is a UsageError.
Dataset load_image_dir(const std::filesystem::path& root);
void write_image_dir(const Dataset& dataset, const std::filesystem::path& root);

// Binary netpbm I/O. Pixel values are bytes mapped to [0, 1].
std::vector<double> read_pgm(const std::filesystem::path& path, int& width, int& height);
void write_pgm(const std::filesystem::path& path, std::span<const double> pixels, int width, int height);
// `rgb` is interleaved RGB in [0, 1].
void write_ppm(const std::filesystem::path& path, std::span<const double> rgb, int width, int height);

}  // namespace cfdebug

#endif  // CFDEBUG_DATASET_HPP
