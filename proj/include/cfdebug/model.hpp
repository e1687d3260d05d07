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

// Classifier wrapper: a small CNN whose final convolution layer is followed by
// ReLU, a per-filter multiplicative gate (the mask hook), global average
// pooling and a linear head. Everything else in the library talks to the
// network through this header.

#ifndef CFDEBUG_MODEL_HPP
#define CFDEBUG_MODEL_HPP

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace cfdebug {

// Conv blocks are conv3x3 -> ReLU -> maxpool2x2, except the last one, which
// is conv3x3 -> ReLU -> gate -> GAP. The last entry of conv_channels is the
// filter count n seen by every other module.
struct Architecture {
  int in_channels = 1;
  int height = 16;
  int width = 16;
  std::vector<int> conv_channels{8, 16, 32, 64};
  int label_count = 10;

  std::size_t input_size() const {
    return static_cast<std::size_t>(in_channels) * height * width;
  }
  int filter_count() const { return conv_channels.back(); }
  void validate() const;

  bool operator==(const Architecture&) const = default;
};

// Binary on/off state of the n final-layer filters for one prediction.
class FilterActivationMap {
 public:
  FilterActivationMap() = default;
  explicit FilterActivationMap(std::vector<std::uint8_t> bits);

  std::size_t size() const { return bits_.size(); }
  bool operator[](std::size_t k) const { return bits_[k] != 0; }
  const std::vector<std::uint8_t>& bits() const { return bits_; }
  std::size_t count() const;

  bool operator==(const FilterActivationMap&) const = default;

 private:
  std::vector<std::uint8_t> bits_;
};

struct PredictionRecord {
  std::string image_id;
  int inferred_class = 0;
  double confidence = 0.0;
  std::optional<int> true_class;
  std::vector<double> gap_features;
  FilterActivationMap activation_map;

  bool correct() const { return true_class && *true_class == inferred_class; }
  bool operator==(const PredictionRecord&) const = default;
};

// Intermediate tensors of one batched forward pass; consumed by backward().
struct ForwardTrace {
  int batch = 0;
  std::vector<std::vector<double>> conv_inputs;   // input of conv layer l
  std::vector<std::vector<double>> conv_outputs;  // pre-activation output of conv l
  std::vector<std::vector<long>> pool_argmax;     // one per pooled block
  std::vector<double> final_maps;  // ReLU(last conv), before the gate
  std::vector<double> gap;         // batch x n, gated
  std::vector<double> logits;      // batch x label_count
  std::vector<double> gate;        // empty when unmasked
};

class Classifier {
 public:
  Classifier(Architecture arch, std::uint64_t seed);

  const Architecture& architecture() const { return arch_; }
  int label_count() const { return arch_.label_count; }
  int filter_count() const { return arch_.filter_count(); }
  int conv_layer_count() const { return static_cast<int>(arch_.conv_channels.size()); }

  std::span<const double> parameters() const { return params_; }
  std::span<double> parameters() { return params_; }

  std::span<double> conv_weight(int layer);
  std::span<double> conv_bias(int layer);
  std::span<double> head_weight();
  std::span<double> head_bias();
  std::span<const double> head_weight() const;
  std::span<const double> head_bias() const;

  // `images` holds `batch` contiguous CHW images. `gate` is empty or has n
  // entries. Throws InputError on a size mismatch.
  ForwardTrace forward(std::span<const double> images, int batch,
                       std::span<const double> gate = {}) const;

  // Gradient of the loss w.r.t. all parameters, given dL/dlogits (batch x K)
  // and an optional extra dL/dgap (batch x n) for losses on GAP features.
  std::vector<double> backward(const ForwardTrace& trace,
                               std::span<const double> grad_logits,
                               std::span<const double> grad_gap = {}) const;

  // dL/d(final ReLU maps) for the given dL/dgap; used by saliency.
  std::vector<double> final_maps_gradient(const ForwardTrace& trace,
                                          std::span<const double> grad_gap) const;

  void save(const std::filesystem::path& path) const;
  static Classifier load(const std::filesystem::path& path);

 private:
  Classifier(Architecture arch, std::vector<double> params);
  std::size_t conv_offset(int layer) const { return offsets_[layer]; }

  Architecture arch_;
  std::vector<double> params_;
  std::vector<std::size_t> offsets_;  // start of each conv layer, then the head
};

// Smallest index wins ties.
int argmax(std::span<const double> values);
std::vector<double> softmax(std::span<const double> logits);
double sigmoid(double x);

// entry k is 1 iff sigmoid(g[k]) > t.
FilterActivationMap binary_activation_map(std::span<const double> gap, double t = 0.5);

// Linear head applied to a GAP vector.
std::vector<double> head_logits(const Classifier& classifier, std::span<const double> gap);

std::vector<double> masked_logits(const Classifier& classifier,
                                  std::span<const double> image,
                                  std::span<const double> mask);

PredictionRecord predict(const Classifier& classifier,
                         std::span<const double> image,
                         std::string image_id = {},
                         std::optional<int> true_class = std::nullopt,
                         double t = 0.5,
                         std::span<const double> mask = {});

// Forward pass over many images in chunks; returns one record per image.
std::vector<PredictionRecord> predict_batch(const Classifier& classifier,
                                            std::span<const double> images,
                                            std::span<const std::string> image_ids,
                                            std::span<const int> true_classes,
                                            double t = 0.5);

}  // namespace cfdebug

#endif  // CFDEBUG_MODEL_HPP
