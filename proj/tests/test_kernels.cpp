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

#include <random>
#include <vector>

#include "doctest.h"

#include "cfdebug/kernels.hpp"
#include "cfdebug/model.hpp"
#include "support.hpp"

using namespace cfdebug;
namespace ks = cfdebug::kernels::serial;
namespace ko = cfdebug::kernels::omp;
using testing::random_vector;

TEST_SUITE("kernels") {

TEST_CASE("omp kernels are bit-identical to the serial reference") {
  std::mt19937_64 rng(11);
  for (auto s : {kernels::ConvShape{3, 2, 5, 6, 4}, kernels::ConvShape{1, 1, 1, 1, 1}, kernels::ConvShape{4, 8, 16, 8, 8}}) {
    CAPTURE(s.batch);
    const auto in = random_vector(s.input_size(), rng);
    const auto w = random_vector(s.weight_size(), rng);
    const auto b = random_vector(s.out_channels, rng);
    const auto gout = random_vector(s.output_size(), rng);
    std::vector<double> o1(s.output_size()), o2(s.output_size());
    ks::conv3x3_forward(s, in, w, b, o1);
    ko::conv3x3_forward(s, in, w, b, o2);
    CHECK(o1 == o2);
    std::vector<double> g1(s.input_size()), g2(s.input_size(), 7.0);
    ks::conv3x3_backward_input(s, gout, w, g1);
    ko::conv3x3_backward_input(s, gout, w, g2);
    CHECK(g1 == g2);
    std::vector<double> gw1(s.weight_size()), gw2(s.weight_size(), 3.0), gb1(s.out_channels), gb2(s.out_channels, 3.0);
    ks::conv3x3_backward_params(s, in, gout, gw1, gb1);
    ko::conv3x3_backward_params(s, in, gout, gw2, gb2);
    CHECK(gw1 == gw2);
    CHECK(gb1 == gb2);
  }

  const kernels::MapShape ms{3, 4, 6, 8};
  const auto x = random_vector(ms.size(), rng);
  std::vector<double> p1(ms.size() / 4), p2(ms.size() / 4);
  std::vector<long> a1(p1.size()), a2(p1.size());
  ks::relu_maxpool2x2_forward(ms, x, p1, a1);
  ko::relu_maxpool2x2_forward(ms, x, p2, a2);
  CHECK(p1 == p2);
  CHECK(a1 == a2);
  const auto gp = random_vector(p1.size(), rng);
  std::vector<double> gx1(ms.size()), gx2(ms.size(), 1.0);
  ks::relu_maxpool2x2_backward(ms, gp, a1, gx1);
  ko::relu_maxpool2x2_backward(ms, gp, a1, gx2);
  CHECK(gx1 == gx2);

  const auto gate = random_vector(ms.channels, rng);
  std::vector<double> act1(ms.size()), act2(ms.size()), gap1(ms.batch * ms.channels), gap2(gap1.size());
  ks::relu_gate_gap_forward(ms, x, gate, act1, gap1);
  ko::relu_gate_gap_forward(ms, x, gate, act2, gap2);
  CHECK(act1 == act2);
  CHECK(gap1 == gap2);
  const auto gg = random_vector(gap1.size(), rng);
  std::vector<double> gi1(ms.size()), gi2(ms.size());
  ks::relu_gate_gap_backward(ms, act1, gate, gg, gi1);
  ko::relu_gate_gap_backward(ms, act1, gate, gg, gi2);
  CHECK(gi1 == gi2);

  const int batch = 5, in_f = 7, out_f = 3;
  const auto lx = random_vector(batch * in_f, rng);
  const auto lw = random_vector(in_f * out_f, rng);
  const auto lb = random_vector(out_f, rng);
  std::vector<double> y1(batch * out_f), y2(batch * out_f);
  ks::linear_forward(batch, in_f, out_f, lx, lw, lb, y1);
  ko::linear_forward(batch, in_f, out_f, lx, lw, lb, y2);
  CHECK(y1 == y2);
  const auto gy = random_vector(batch * out_f, rng);
  std::vector<double> lgx1(lx.size()), lgx2(lx.size()), lgw1(lw.size()), lgw2(lw.size()), lgb1(out_f), lgb2(out_f);
  ks::linear_backward(batch, in_f, out_f, lx, lw, gy, lgx1, lgw1, lgb1);
  ko::linear_backward(batch, in_f, out_f, lx, lw, gy, lgx2, lgw2, lgb2);
  CHECK(lgx1 == lgx2);
  CHECK(lgw1 == lgw2);
  CHECK(lgb1 == lgb2);
}

TEST_CASE("conv forward matches a direct zero-padded sum") {
  std::mt19937_64 rng(3);
  const kernels::ConvShape s{2, 3, 2, 5, 4};
  const auto in = random_vector(s.input_size(), rng);
  const auto w = random_vector(s.weight_size(), rng);
  const auto b = random_vector(s.out_channels, rng);
  std::vector<double> out(s.output_size());
  ks::conv3x3_forward(s, in, w, b, out);
  for (int n = 0; n < s.batch; ++n)
    for (int o = 0; o < s.out_channels; ++o)
      for (int h = 0; h < s.height; ++h)
        for (int x = 0; x < s.width; ++x) {
          double acc = b[o];
          for (int c = 0; c < s.in_channels; ++c)
            for (int kh = 0; kh < 3; ++kh)
              for (int kw = 0; kw < 3; ++kw) {
                const int ih = h + kh - 1, iw = x + kw - 1;
                if (ih < 0 || iw < 0 || ih >= s.height || iw >= s.width) continue;
                acc += w[((o * s.in_channels + c) * 3 + kh) * 3 + kw] *
                       in[((n * s.in_channels + c) * s.height + ih) * s.width + iw];
              }
          CHECK(out[((n * s.out_channels + o) * s.height + h) * s.width + x] == doctest::Approx(acc).epsilon(1e-12));
        }
}

TEST_CASE("relu max pool keeps the window maximum and -1 for dead windows") {
  const kernels::MapShape s{1, 1, 2, 4};
  const std::vector<double> x{-1, -2, 0.5, 3, -3, -4, 2, 1};
  std::vector<double> out(2);
  std::vector<long> arg(2);
  ks::relu_maxpool2x2_forward(s, x, out, arg);
  CHECK(out[0] == 0.0);
  CHECK(arg[0] == -1);
  CHECK(out[1] == 3.0);
  CHECK(arg[1] == 3);
}

TEST_CASE("classifier backward matches central finite differences") {
  std::mt19937_64 rng(5);
  Architecture arch;
  arch.height = arch.width = 8;
  arch.conv_channels = {3, 4, 5};
  arch.label_count = 4;
  Classifier c(arch, 9);
  const int batch = 2;
  const auto images = testing::random_image(arch.input_size() * batch, rng);
  const auto wl = random_vector(batch * arch.label_count, rng);
  const auto wg = random_vector(batch * arch.filter_count(), rng);
  auto objective = [&](const Classifier& m) {
    const auto tr = m.forward(images, batch);
    double v = 0.0;
    for (std::size_t i = 0; i < wl.size(); ++i) v += wl[i] * tr.logits[i];
    for (std::size_t i = 0; i < wg.size(); ++i) v += wg[i] * tr.gap[i];
    return v;
  };
  const auto grad = c.backward(c.forward(images, batch), wl, wg);
  REQUIRE(grad.size() == c.parameters().size());
  const double h = 1e-6;
  int checked = 0;
  for (std::size_t p = 0; p < grad.size(); p += 7) {
    Classifier plus = c, minus = c;
    plus.parameters()[p] += h;
    minus.parameters()[p] -= h;
    const double fd = (objective(plus) - objective(minus)) / (2 * h);
    CAPTURE(p);
    CHECK(grad[p] == doctest::Approx(fd).epsilon(1e-5).scale(1.0));
    ++checked;
  }
  CHECK(checked > 20);
}

}
