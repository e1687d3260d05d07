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
#include <cstddef>

#include "cfdebug/kernels.hpp"

namespace cfdebug::kernels::omp {

void conv3x3_forward(const ConvShape& s, std::span<const double> input,
                     std::span<const double> weight,
                     std::span<const double> bias, std::span<double> output) {
  const int H = s.height, W = s.width;
  const std::size_t plane = static_cast<std::size_t>(H) * W;
  #pragma omp parallel for collapse(2) schedule(static)
  for (int n = 0; n < s.batch; ++n) {
    for (int oc = 0; oc < s.out_channels; ++oc) {
      double* out = output.data() + (static_cast<std::size_t>(n) * s.out_channels + oc) * plane;
      std::fill(out, out + plane, bias[oc]);
      for (int ic = 0; ic < s.in_channels; ++ic) {
        const double* in = input.data() + (static_cast<std::size_t>(n) * s.in_channels + ic) * plane;
        const double* w = weight.data() + (static_cast<std::size_t>(oc) * s.in_channels + ic) * 9;
        for (int kh = 0; kh < 3; ++kh) {
          for (int kw = 0; kw < 3; ++kw) {
            const double wv = w[kh * 3 + kw];
            const int dh = kh - 1, dw = kw - 1;
            const int h0 = std::max(0, -dh), h1 = std::min(H, H - dh);
            const int w0 = std::max(0, -dw), w1 = std::min(W, W - dw);
            for (int h = h0; h < h1; ++h) {
              for (int x = w0; x < w1; ++x) {
                out[h * W + x] += wv * in[(h + dh) * W + (x + dw)];
              }
            }
          }
        }
      }
    }
  }
}

void conv3x3_backward_input(const ConvShape& s,
                            std::span<const double> grad_output,
                            std::span<const double> weight,
                            std::span<double> grad_input) {
  const int H = s.height, W = s.width;
  const std::size_t plane = static_cast<std::size_t>(H) * W;
  #pragma omp parallel for collapse(2) schedule(static)
  for (int n = 0; n < s.batch; ++n) {
    for (int ic = 0; ic < s.in_channels; ++ic) {
      double* gin = grad_input.data() + (static_cast<std::size_t>(n) * s.in_channels + ic) * plane;
      std::fill(gin, gin + plane, 0.0);
      for (int oc = 0; oc < s.out_channels; ++oc) {
        const double* gout = grad_output.data() + (static_cast<std::size_t>(n) * s.out_channels + oc) * plane;
        const double* w = weight.data() + (static_cast<std::size_t>(oc) * s.in_channels + ic) * 9;
        for (int kh = 0; kh < 3; ++kh) {
          for (int kw = 0; kw < 3; ++kw) {
            const double wv = w[kh * 3 + kw];
            const int dh = kh - 1, dw = kw - 1;
            const int h0 = std::max(0, -dh), h1 = std::min(H, H - dh);
            const int w0 = std::max(0, -dw), w1 = std::min(W, W - dw);
            for (int h = h0; h < h1; ++h) {
              for (int x = w0; x < w1; ++x) {
                gin[(h + dh) * W + (x + dw)] += wv * gout[h * W + x];
              }
            }
          }
        }
      }
    }
  }
}

void conv3x3_backward_params(const ConvShape& s, std::span<const double> input,
                             std::span<const double> grad_output,
                             std::span<double> grad_weight,
                             std::span<double> grad_bias) {
  const int H = s.height, W = s.width;
  const std::size_t plane = static_cast<std::size_t>(H) * W;
  #pragma omp parallel for schedule(static)
  for (int oc = 0; oc < s.out_channels; ++oc) {
    double bsum = 0.0;
    for (int n = 0; n < s.batch; ++n) {
      const double* gout = grad_output.data() + (static_cast<std::size_t>(n) * s.out_channels + oc) * plane;
      for (std::size_t i = 0; i < plane; ++i) bsum += gout[i];
    }
    grad_bias[oc] = bsum;
    for (int ic = 0; ic < s.in_channels; ++ic) {
      double* gw = grad_weight.data() + (static_cast<std::size_t>(oc) * s.in_channels + ic) * 9;
      for (int kh = 0; kh < 3; ++kh) {
        for (int kw = 0; kw < 3; ++kw) {
          const int dh = kh - 1, dw = kw - 1;
          const int h0 = std::max(0, -dh), h1 = std::min(H, H - dh);
          const int w0 = std::max(0, -dw), w1 = std::min(W, W - dw);
          double acc = 0.0;
          for (int n = 0; n < s.batch; ++n) {
            const double* gout = grad_output.data() + (static_cast<std::size_t>(n) * s.out_channels + oc) * plane;
            const double* in = input.data() + (static_cast<std::size_t>(n) * s.in_channels + ic) * plane;
            for (int h = h0; h < h1; ++h) {
              for (int x = w0; x < w1; ++x) {
                acc += gout[h * W + x] * in[(h + dh) * W + (x + dw)];
              }
            }
          }
          gw[kh * 3 + kw] = acc;
        }
      }
    }
  }
}

void relu_maxpool2x2_forward(const MapShape& s, std::span<const double> input,
                             std::span<double> output, std::span<long> argmax) {
  const int OH = s.height / 2, OW = s.width / 2;
  #pragma omp parallel for schedule(static)
  for (int nc = 0; nc < s.batch * s.channels; ++nc) {
    const std::size_t in_base = static_cast<std::size_t>(nc) * s.height * s.width;
    const std::size_t out_base = static_cast<std::size_t>(nc) * OH * OW;
    for (int oh = 0; oh < OH; ++oh) {
      for (int ow = 0; ow < OW; ++ow) {
        double best = 0.0;
        long best_idx = -1;
        for (int dh = 0; dh < 2; ++dh) {
          for (int dw = 0; dw < 2; ++dw) {
            const std::size_t idx = in_base + static_cast<std::size_t>(2 * oh + dh) * s.width + (2 * ow + dw);
            if (input[idx] > best) {
              best = input[idx];
              best_idx = static_cast<long>(idx);
            }
          }
        }
        output[out_base + oh * OW + ow] = best;
        argmax[out_base + oh * OW + ow] = best_idx;
      }
    }
  }
}

void relu_maxpool2x2_backward(const MapShape& s,
                              std::span<const double> grad_output,
                              std::span<const long> argmax,
                              std::span<double> grad_input) {
  const int OH = s.height / 2, OW = s.width / 2;
  std::fill(grad_input.begin(), grad_input.end(), 0.0);
  // Windows do not overlap, so each input element receives at most one write.
  #pragma omp parallel for schedule(static)
  for (std::size_t i = 0; i < static_cast<std::size_t>(s.batch) * s.channels * OH * OW; ++i) {
    if (argmax[i] >= 0) grad_input[static_cast<std::size_t>(argmax[i])] = grad_output[i];
  }
}

void relu_gate_gap_forward(const MapShape& s, std::span<const double> input,
                           std::span<const double> gate,
                           std::span<double> activated,
                           std::span<double> pooled) {
  const std::size_t plane = static_cast<std::size_t>(s.height) * s.width;
  #pragma omp parallel for collapse(2) schedule(static)
  for (int n = 0; n < s.batch; ++n) {
    for (int c = 0; c < s.channels; ++c) {
      const std::size_t base = (static_cast<std::size_t>(n) * s.channels + c) * plane;
      double sum = 0.0;
      for (std::size_t i = 0; i < plane; ++i) {
        const double v = input[base + i] > 0.0 ? input[base + i] : 0.0;
        activated[base + i] = v;
        sum += v;
      }
      const double g = gate.empty() ? 1.0 : gate[c];
      pooled[static_cast<std::size_t>(n) * s.channels + c] = g * (sum / static_cast<double>(plane));
    }
  }
}

void relu_gate_gap_backward(const MapShape& s,
                            std::span<const double> activated,
                            std::span<const double> gate,
                            std::span<const double> grad_pooled,
                            std::span<double> grad_input) {
  const std::size_t plane = static_cast<std::size_t>(s.height) * s.width;
  #pragma omp parallel for collapse(2) schedule(static)
  for (int n = 0; n < s.batch; ++n) {
    for (int c = 0; c < s.channels; ++c) {
      const std::size_t base = (static_cast<std::size_t>(n) * s.channels + c) * plane;
      const double g = gate.empty() ? 1.0 : gate[c];
      const double d = g * grad_pooled[static_cast<std::size_t>(n) * s.channels + c] / static_cast<double>(plane);
      for (std::size_t i = 0; i < plane; ++i) {
        grad_input[base + i] = activated[base + i] > 0.0 ? d : 0.0;
      }
    }
  }
}

void linear_forward(int batch, int in_features, int out_features,
                    std::span<const double> x, std::span<const double> weight,
                    std::span<const double> bias, std::span<double> y) {
  #pragma omp parallel for schedule(static)
  for (int b = 0; b < batch; ++b) {
    const double* xb = x.data() + static_cast<std::size_t>(b) * in_features;
    for (int o = 0; o < out_features; ++o) {
      const double* w = weight.data() + static_cast<std::size_t>(o) * in_features;
      double acc = bias[o];
      for (int i = 0; i < in_features; ++i) acc += w[i] * xb[i];
      y[static_cast<std::size_t>(b) * out_features + o] = acc;
    }
  }
}

void linear_backward(int batch, int in_features, int out_features,
                     std::span<const double> x, std::span<const double> weight,
                     std::span<const double> grad_y, std::span<double> grad_x,
                     std::span<double> grad_weight, std::span<double> grad_bias) {
  #pragma omp parallel for schedule(static)
  for (int b = 0; b < batch; ++b) {
    const double* gy = grad_y.data() + static_cast<std::size_t>(b) * out_features;
    for (int i = 0; i < in_features; ++i) {
      double acc = 0.0;
      for (int o = 0; o < out_features; ++o) acc += gy[o] * weight[static_cast<std::size_t>(o) * in_features + i];
      grad_x[static_cast<std::size_t>(b) * in_features + i] = acc;
    }
  }
  #pragma omp parallel for schedule(static)
  for (int o = 0; o < out_features; ++o) {
    double bacc = 0.0;
    for (int b = 0; b < batch; ++b) bacc += grad_y[static_cast<std::size_t>(b) * out_features + o];
    grad_bias[o] = bacc;
    for (int i = 0; i < in_features; ++i) {
      double acc = 0.0;
      for (int b = 0; b < batch; ++b) {
        acc += grad_y[static_cast<std::size_t>(b) * out_features + o] * x[static_cast<std::size_t>(b) * in_features + i];
      }
      grad_weight[static_cast<std::size_t>(o) * in_features + i] = acc;
    }
  }
}

}  // namespace cfdebug::kernels::omp
