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

// Dense NCHW kernels used by the classifier. Every kernel exists twice with
// identical signatures: `serial` is the plain reference and `omp` is the
// OpenMP-parallel version used in production. The parallel versions split
// work only over independent output elements and keep the reduction order of
// the serial loops, so both produce bit-identical results.

#ifndef CFDEBUG_KERNELS_HPP
#define CFDEBUG_KERNELS_HPP

#include <cstddef>
#include <span>

namespace cfdebug::kernels {

// 3x3 convolution, stride 1, zero padding 1 (output has the input's H and W).
struct ConvShape {
  int batch = 1;
  int in_channels = 1;
  int out_channels = 1;
  int height = 1;
  int width = 1;

  std::size_t input_size() const {
    return static_cast<std::size_t>(batch) * in_channels * height * width;
  }
  std::size_t output_size() const {
    return static_cast<std::size_t>(batch) * out_channels * height * width;
  }
  std::size_t weight_size() const {
    return static_cast<std::size_t>(out_channels) * in_channels * 9;
  }
};

// Plain per-channel spatial shape shared by pooling kernels.
struct MapShape {
  int batch = 1;
  int channels = 1;
  int height = 1;
  int width = 1;

  std::size_t size() const {
    return static_cast<std::size_t>(batch) * channels * height * width;
  }
};

#define CFDEBUG_KERNEL_DECLS                                                   \
  void conv3x3_forward(const ConvShape& s, std::span<const double> input,      \
                       std::span<const double> weight,                         \
                       std::span<const double> bias, std::span<double> output);\
  /* grad_input is overwritten. */                                             \
  void conv3x3_backward_input(const ConvShape& s,                              \
                              std::span<const double> grad_output,             \
                              std::span<const double> weight,                  \
                              std::span<double> grad_input);                   \
  /* grad_weight and grad_bias are overwritten. */                             \
  void conv3x3_backward_params(const ConvShape& s,                             \
                               std::span<const double> input,                  \
                               std::span<const double> grad_output,            \
                               std::span<double> grad_weight,                  \
                               std::span<double> grad_bias);                   \
  /* Fused ReLU + 2x2/2 max pool. `argmax` receives the flat input index of   \
     each pooled winner (or -1 when the window is all non-positive). */        \
  void relu_maxpool2x2_forward(const MapShape& in_shape,                       \
                               std::span<const double> input,                  \
                               std::span<double> output,                       \
                               std::span<long> argmax);                        \
  void relu_maxpool2x2_backward(const MapShape& in_shape,                      \
                                std::span<const double> grad_output,           \
                                std::span<const long> argmax,                  \
                                std::span<double> grad_input);                 \
  /* ReLU, then per-channel gate, then spatial mean. `gate` may be empty. */   \
  void relu_gate_gap_forward(const MapShape& s, std::span<const double> input, \
                             std::span<const double> gate,                     \
                             std::span<double> activated,                      \
                             std::span<double> pooled);                        \
  void relu_gate_gap_backward(const MapShape& s,                               \
                              std::span<const double> activated,               \
                              std::span<const double> gate,                    \
                              std::span<const double> grad_pooled,             \
                              std::span<double> grad_input);                   \
  /* y[b, o] = bias[o] + sum_i weight[o, i] * x[b, i] */                       \
  void linear_forward(int batch, int in_features, int out_features,            \
                      std::span<const double> x, std::span<const double> weight,\
                      std::span<const double> bias, std::span<double> y);     \
  void linear_backward(int batch, int in_features, int out_features,           \
                       std::span<const double> x,                              \
                       std::span<const double> weight,                         \
                       std::span<const double> grad_y,                         \
                       std::span<double> grad_x, std::span<double> grad_weight,\
                       std::span<double> grad_bias);

namespace serial {
CFDEBUG_KERNEL_DECLS
}  // namespace serial

namespace omp {
CFDEBUG_KERNEL_DECLS
}  // namespace omp

#undef CFDEBUG_KERNEL_DECLS

}  // namespace cfdebug::kernels

#endif  // CFDEBUG_KERNELS_HPP
