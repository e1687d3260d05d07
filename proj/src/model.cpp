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

#include "cfdebug/model.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include <fmt/format.h>

#include "cfdebug/errors.hpp"
#include "cfdebug/kernels.hpp"

namespace cfdebug {
namespace {

constexpr std::array<char, 8> kCheckpointMagic{'C', 'F', 'D', 'B', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::size_t> layout(const Architecture& arch) {
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  int in = arch.in_channels;
  for (int out : arch.conv_channels) {
    offsets.push_back(off);
    off += static_cast<std::size_t>(out) * in * 9 + out;
    in = out;
  }
  offsets.push_back(off);
  off += static_cast<std::size_t>(arch.label_count) * arch.filter_count() + arch.label_count;
  offsets.push_back(off);
  return offsets;
}

void check_finite(std::span<const double> values, const char* what) {
  for (double v : values) {
    if (!std::isfinite(v)) throw NumericError(fmt::format("non-finite value in {}", what));
  }
}

template <typename T>
void write_pod(std::ostream& os, T value) {
  os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& is) {
  T value{};
  is.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!is) throw FormatError("truncated checkpoint");
  return value;
}

}  // namespace

void Architecture::validate() const {
  if (in_channels < 1 || height < 1 || width < 1 || label_count < 1 || conv_channels.empty()) {
    throw UsageError("architecture dimensions must be positive");
  }
  for (int c : conv_channels) {
    if (c < 1) throw UsageError("conv channel counts must be positive");
  }
  const int pools = static_cast<int>(conv_channels.size()) - 1;
  if (height % (1 << pools) != 0 || width % (1 << pools) != 0) {
    throw UsageError(fmt::format("input {}x{} is not divisible by 2^{}", height, width, pools));
  }
}

FilterActivationMap::FilterActivationMap(std::vector<std::uint8_t> bits) : bits_(std::move(bits)) {
  for (auto b : bits_) {
    if (b > 1) throw UsageError("activation map entries must be 0 or 1");
  }
}

std::size_t FilterActivationMap::count() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

Classifier::Classifier(Architecture arch, std::uint64_t seed) : arch_(std::move(arch)) {
  arch_.validate();
  offsets_ = layout(arch_);
  params_.assign(offsets_.back(), 0.0);
  std::mt19937_64 rng(seed);
  int in = arch_.in_channels;
  for (int l = 0; l < conv_layer_count(); ++l) {
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / (in * 9.0)));
    for (double& w : conv_weight(l)) w = dist(rng);
    for (double& b : conv_bias(l)) b = 0.01;
    in = arch_.conv_channels[l];
  }
  std::normal_distribution<double> head_dist(0.0, std::sqrt(1.0 / filter_count()));
  for (double& w : head_weight()) w = head_dist(rng);
}

Classifier::Classifier(Architecture arch, std::vector<double> params)
    : arch_(std::move(arch)), params_(std::move(params)) {
  arch_.validate();
  offsets_ = layout(arch_);
  if (params_.size() != offsets_.back()) throw FormatError("parameter count does not match architecture");
}

std::span<double> Classifier::conv_weight(int layer) {
  const int in = layer == 0 ? arch_.in_channels : arch_.conv_channels[layer - 1];
  const int out = arch_.conv_channels[layer];
  return std::span<double>(params_).subspan(offsets_[layer], static_cast<std::size_t>(out) * in * 9);
}

std::span<double> Classifier::conv_bias(int layer) {
  const int in = layer == 0 ? arch_.in_channels : arch_.conv_channels[layer - 1];
  const int out = arch_.conv_channels[layer];
  return std::span<double>(params_).subspan(offsets_[layer] + static_cast<std::size_t>(out) * in * 9, out);
}

std::span<double> Classifier::head_weight() {
  return std::span<double>(params_).subspan(offsets_[conv_layer_count()],
                                            static_cast<std::size_t>(label_count()) * filter_count());
}

std::span<double> Classifier::head_bias() {
  return std::span<double>(params_).subspan(
      offsets_[conv_layer_count()] + static_cast<std::size_t>(label_count()) * filter_count(), label_count());
}

std::span<const double> Classifier::head_weight() const {
  return const_cast<Classifier*>(this)->head_weight();
}

std::span<const double> Classifier::head_bias() const {
  return const_cast<Classifier*>(this)->head_bias();
}

ForwardTrace Classifier::forward(std::span<const double> images, int batch,
                                 std::span<const double> gate) const {
  namespace k = kernels::omp;
  if (batch < 1 || images.size() != arch_.input_size() * batch) {
    throw InputError(fmt::format("expected {} input values, got {}", arch_.input_size() * batch, images.size()));
  }
  if (!gate.empty() && gate.size() != static_cast<std::size_t>(filter_count())) {
    throw UsageError(fmt::format("mask has {} entries, expected {}", gate.size(), filter_count()));
  }
  auto* self = const_cast<Classifier*>(this);
  ForwardTrace tr;
  tr.batch = batch;
  tr.gate.assign(gate.begin(), gate.end());

  std::vector<double> x(images.begin(), images.end());
  int channels = arch_.in_channels, h = arch_.height, w = arch_.width;
  const int layers = conv_layer_count();
  for (int l = 0; l < layers; ++l) {
    kernels::ConvShape cs{batch, channels, arch_.conv_channels[l], h, w};
    std::vector<double> y(cs.output_size());
    k::conv3x3_forward(cs, x, self->conv_weight(l), self->conv_bias(l), y);
    tr.conv_inputs.push_back(std::move(x));
    channels = cs.out_channels;
    kernels::MapShape ms{batch, channels, h, w};
    if (l + 1 < layers) {
      std::vector<double> pooled(ms.size() / 4);
      std::vector<long> arg(pooled.size());
      k::relu_maxpool2x2_forward(ms, y, pooled, arg);
      tr.pool_argmax.push_back(std::move(arg));
      tr.conv_outputs.push_back(std::move(y));
      x = std::move(pooled);
      h /= 2;
      w /= 2;
    } else {
      tr.final_maps.resize(ms.size());
      tr.gap.resize(static_cast<std::size_t>(batch) * channels);
      k::relu_gate_gap_forward(ms, y, gate, tr.final_maps, tr.gap);
      tr.conv_outputs.push_back(std::move(y));
    }
  }
  tr.logits.resize(static_cast<std::size_t>(batch) * label_count());
  k::linear_forward(batch, filter_count(), label_count(), tr.gap, head_weight(), head_bias(), tr.logits);
  check_finite(tr.logits, "logits");
  return tr;
}

std::vector<double> Classifier::final_maps_gradient(const ForwardTrace& tr,
                                                    std::span<const double> grad_gap) const {
  const int layers = conv_layer_count();
  const int h = arch_.height >> (layers - 1), w = arch_.width >> (layers - 1);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  std::vector<double> grad(tr.final_maps.size());
  for (int n = 0; n < tr.batch; ++n) {
    for (int c = 0; c < filter_count(); ++c) {
      const double g = tr.gate.empty() ? 1.0 : tr.gate[c];
      const double d = g * grad_gap[static_cast<std::size_t>(n) * filter_count() + c] / static_cast<double>(plane);
      std::fill_n(grad.begin() + (static_cast<std::size_t>(n) * filter_count() + c) * plane, plane, d);
    }
  }
  return grad;
}

std::vector<double> Classifier::backward(const ForwardTrace& tr, std::span<const double> grad_logits,
                                         std::span<const double> grad_gap) const {
  namespace k = kernels::omp;
  const int batch = tr.batch;
  const int n = filter_count();
  const int K = label_count();
  auto* self = const_cast<Classifier*>(this);
  std::vector<double> grad(params_.size(), 0.0);
  auto gspan = std::span<double>(grad);

  const std::size_t head_off = offsets_[conv_layer_count()];
  std::vector<double> dgap(static_cast<std::size_t>(batch) * n);
  k::linear_backward(batch, n, K, tr.gap, head_weight(), grad_logits, dgap,
                     gspan.subspan(head_off, static_cast<std::size_t>(K) * n),
                     gspan.subspan(head_off + static_cast<std::size_t>(K) * n, K));
  if (!grad_gap.empty()) {
    for (std::size_t i = 0; i < dgap.size(); ++i) dgap[i] += grad_gap[i];
  }

  const int layers = conv_layer_count();
  int h = arch_.height >> (layers - 1), w = arch_.width >> (layers - 1);
  std::vector<double> dy(tr.final_maps.size());
  k::relu_gate_gap_backward({batch, n, h, w}, tr.final_maps, tr.gate, dgap, dy);

  for (int l = layers - 1; l >= 0; --l) {
    const int in = l == 0 ? arch_.in_channels : arch_.conv_channels[l - 1];
    kernels::ConvShape cs{batch, in, arch_.conv_channels[l], h, w};
    const std::size_t wsize = cs.weight_size();
    k::conv3x3_backward_params(cs, tr.conv_inputs[l], dy, gspan.subspan(offsets_[l], wsize),
                               gspan.subspan(offsets_[l] + wsize, cs.out_channels));
    if (l == 0) break;
    std::vector<double> dx(cs.input_size());
    k::conv3x3_backward_input(cs, dy, self->conv_weight(l), dx);
    // dx is the gradient w.r.t. the pooled output of block l-1.
    const int ph = h * 2, pw = w * 2;
    std::vector<double> dprev(static_cast<std::size_t>(batch) * in * ph * pw);
    k::relu_maxpool2x2_backward({batch, in, ph, pw}, dx, tr.pool_argmax[l - 1], dprev);
    dy = std::move(dprev);
    h = ph;
    w = pw;
  }
  return grad;
}

void Classifier::save(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw FormatError(fmt::format("cannot write checkpoint {}", path.string()));
  os.write(kCheckpointMagic.data(), kCheckpointMagic.size());
  write_pod<std::uint32_t>(os, kCheckpointVersion);
  write_pod<std::int32_t>(os, arch_.in_channels);
  write_pod<std::int32_t>(os, arch_.height);
  write_pod<std::int32_t>(os, arch_.width);
  write_pod<std::int32_t>(os, arch_.label_count);
  write_pod<std::int32_t>(os, static_cast<std::int32_t>(arch_.conv_channels.size()));
  for (int c : arch_.conv_channels) write_pod<std::int32_t>(os, c);
  write_pod<std::uint64_t>(os, params_.size());
  os.write(reinterpret_cast<const char*>(params_.data()),
           static_cast<std::streamsize>(params_.size() * sizeof(double)));
  if (!os) throw FormatError(fmt::format("failed writing checkpoint {}", path.string()));
}

Classifier Classifier::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError(fmt::format("cannot open checkpoint {}", path.string()));
  std::array<char, 8> magic{};
  is.read(magic.data(), magic.size());
  if (!is || magic != kCheckpointMagic) throw FormatError(fmt::format("{} is not a checkpoint", path.string()));
  const auto version = read_pod<std::uint32_t>(is);
  if (version != kCheckpointVersion) {
    throw FormatError(fmt::format("unsupported checkpoint version {}", version));
  }
  Architecture arch;
  arch.in_channels = read_pod<std::int32_t>(is);
  arch.height = read_pod<std::int32_t>(is);
  arch.width = read_pod<std::int32_t>(is);
  arch.label_count = read_pod<std::int32_t>(is);
  const auto layers = read_pod<std::int32_t>(is);
  if (layers < 1 || layers > 16) throw FormatError("corrupt checkpoint: bad layer count");
  arch.conv_channels.resize(layers);
  for (auto& c : arch.conv_channels) c = read_pod<std::int32_t>(is);
  const auto count = read_pod<std::uint64_t>(is);
  if (count > (1ull << 32)) throw FormatError("corrupt checkpoint: bad parameter count");
  std::vector<double> params(count);
  is.read(reinterpret_cast<char*>(params.data()), static_cast<std::streamsize>(count * sizeof(double)));
  if (!is) throw FormatError("truncated checkpoint");
  try {
    return Classifier(std::move(arch), std::move(params));
  } catch (const UsageError& e) {
    throw FormatError(fmt::format("corrupt checkpoint: {}", e.what()));
  }
}

int argmax(std::span<const double> values) {
  if (values.empty()) throw UsageError("argmax of an empty vector");
  int best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = static_cast<int>(i);
  }
  return best;
}

std::vector<double> softmax(std::span<const double> logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return p;
}

double sigmoid(double x) {
  return 1.0 / (1.0 + std::exp(-x));
}

FilterActivationMap binary_activation_map(std::span<const double> gap, double t) {
  if (!(t > 0.0 && t < 1.0)) throw UsageError("activation threshold must lie in (0, 1)");
  check_finite(gap, "GAP features");
  std::vector<std::uint8_t> bits(gap.size());
  for (std::size_t k = 0; k < gap.size(); ++k) bits[k] = sigmoid(gap[k]) > t ? 1 : 0;
  return FilterActivationMap(std::move(bits));
}

std::vector<double> head_logits(const Classifier& classifier, std::span<const double> gap) {
  if (gap.size() != static_cast<std::size_t>(classifier.filter_count())) {
    throw UsageError("GAP vector length does not match filter count");
  }
  std::vector<double> logits(classifier.label_count());
  kernels::serial::linear_forward(1, classifier.filter_count(), classifier.label_count(), gap,
                                  classifier.head_weight(), classifier.head_bias(), logits);
  return logits;
}

std::vector<double> masked_logits(const Classifier& classifier, std::span<const double> image,
                                  std::span<const double> mask) {
  if (mask.size() != static_cast<std::size_t>(classifier.filter_count())) {
    throw UsageError(fmt::format("mask has {} entries, expected {}", mask.size(), classifier.filter_count()));
  }
  return classifier.forward(image, 1, mask).logits;
}

namespace {

PredictionRecord make_record(const Classifier& classifier, std::span<const double> logits,
                             std::span<const double> gap, std::string image_id,
                             std::optional<int> true_class, double t) {
  if (true_class && (*true_class < 0 || *true_class >= classifier.label_count())) {
    throw UsageError(fmt::format("true class {} out of range", *true_class));
  }
  PredictionRecord rec;
  rec.image_id = std::move(image_id);
  const auto probs = softmax(logits);
  rec.inferred_class = argmax(logits);
  rec.confidence = probs[rec.inferred_class];
  rec.true_class = true_class;
  rec.gap_features.assign(gap.begin(), gap.end());
  rec.activation_map = binary_activation_map(gap, t);
  return rec;
}

}  // namespace

PredictionRecord predict(const Classifier& classifier, std::span<const double> image,
                         std::string image_id, std::optional<int> true_class, double t,
                         std::span<const double> mask) {
  const auto tr = classifier.forward(image, 1, mask);
  return make_record(classifier, tr.logits, tr.gap, std::move(image_id), true_class, t);
}

std::vector<PredictionRecord> predict_batch(const Classifier& classifier, std::span<const double> images,
                                            std::span<const std::string> image_ids,
                                            std::span<const int> true_classes, double t) {
  const std::size_t per = classifier.architecture().input_size();
  if (images.size() % per != 0) throw InputError("image buffer is not a whole number of images");
  const std::size_t count = images.size() / per;
  if (image_ids.size() != count || (!true_classes.empty() && true_classes.size() != count)) {
    throw UsageError("image ids / labels do not match image count");
  }
  constexpr std::size_t kChunk = 64;
  const int n = classifier.filter_count(), K = classifier.label_count();
  std::vector<PredictionRecord> out;
  out.reserve(count);
  for (std::size_t start = 0; start < count; start += kChunk) {
    const std::size_t len = std::min(kChunk, count - start);
    const auto tr = classifier.forward(images.subspan(start * per, len * per), static_cast<int>(len));
    for (std::size_t i = 0; i < len; ++i) {
      std::optional<int> truth;
      if (!true_classes.empty() && true_classes[start + i] >= 0) truth = true_classes[start + i];
      out.push_back(make_record(classifier, std::span(tr.logits).subspan(i * K, K),
                                std::span(tr.gap).subspan(i * n, n), image_ids[start + i], truth, t));
    }
  }
  return out;
}

}  // namespace cfdebug
