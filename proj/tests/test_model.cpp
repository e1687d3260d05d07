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

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "doctest.h"
#include "json.hpp"

#include "cfdebug/errors.hpp"
#include "cfdebug/model.hpp"
#include "cfdebug/records_io.hpp"
#include "support.hpp"

using namespace cfdebug;

TEST_SUITE("model") {

TEST_CASE("argmax breaks ties toward the smallest index") {
  const std::vector<double> v{1.0, 3.0, 3.0, 2.0};
  CHECK(argmax(v) == 1);
  const std::vector<double> all{0.5, 0.5, 0.5};
  CHECK(argmax(all) == 0);
}

TEST_CASE("binary activation map") {
  CHECK(binary_activation_map(std::vector<double>(4, 0.0)).count() == 0);
  CHECK(binary_activation_map(std::vector<double>{10.0, 0.0, 0.0}).bits() == std::vector<std::uint8_t>{1, 0, 0});

  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 3.0), tu(0.05, 0.95);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> g(17);
    for (auto& x : g) x = u(rng) * (trial % 3 == 0 ? 0.0 : 1.0);
    const double t = tu(rng);
    const auto map = binary_activation_map(g, t);
    for (std::size_t k = 0; k < g.size(); ++k) CHECK(map[k] == (1.0 / (1.0 + std::exp(-g[k])) > t));
  }

  CHECK_THROWS_AS(binary_activation_map(std::vector<double>{NAN}), NumericError);
  CHECK_THROWS_AS(binary_activation_map(std::vector<double>{1.0}, 0.0), UsageError);
  CHECK_THROWS_AS(binary_activation_map(std::vector<double>{1.0}, 1.0), UsageError);
}

TEST_CASE("activation map is invariant to side-preserving monotone rescaling") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 4.0);
  std::vector<double> g(32);
  for (auto& x : g) x = rng() % 3 == 0 ? 0.0 : u(rng);
  std::vector<double> scaled(g.size());
  for (std::size_t k = 0; k < g.size(); ++k) scaled[k] = 5.0 * g[k] * g[k] + g[k];
  CHECK(binary_activation_map(g) == binary_activation_map(scaled));
}

TEST_CASE("masked logits: identity and zero masks") {
  std::mt19937_64 rng(4);
  Architecture arch;
  arch.height = arch.width = 8;
  arch.conv_channels = {4, 6};
  arch.label_count = 5;
  Classifier c(arch, 3);
  const auto img = testing::random_image(arch.input_size(), rng);
  const auto plain = c.forward(img, 1).logits;
  CHECK(masked_logits(c, img, std::vector<double>(6, 1.0)) == plain);
  const auto zero = masked_logits(c, img, std::vector<double>(6, 0.0));
  CHECK(zero == head_logits(c, std::vector<double>(6, 0.0)));
  const auto hb = c.head_bias();
  CHECK(zero == std::vector<double>(hb.begin(), hb.end()));
  CHECK_THROWS_AS(masked_logits(c, img, std::vector<double>(5, 1.0)), UsageError);
  CHECK_THROWS_AS(c.forward(std::vector<double>(3, 0.0), 1), InputError);
}

TEST_CASE("masked logits equal the head applied to the gated GAP vector") {
  std::mt19937_64 rng(6);
  Architecture arch;
  arch.height = arch.width = 8;
  arch.conv_channels = {4, 6};
  arch.label_count = 3;
  Classifier c(arch, 5);
  const auto img = testing::random_image(arch.input_size(), rng);
  const auto gap = c.forward(img, 1).gap;
  std::vector<double> mask{1, 0, 0.5, 1, 0, 0.25}, gated(6);
  for (int k = 0; k < 6; ++k) gated[k] = gap[k] * mask[k];
  const auto a = masked_logits(c, img, mask);
  const auto b = head_logits(c, gated);
  for (int j = 0; j < 3; ++j) CHECK(a[j] == doctest::Approx(b[j]).epsilon(1e-14));
}

TEST_CASE("masked-out channels do not influence masked logits") {
  // Perturb the conv weights feeding a masked-out final channel.
  std::mt19937_64 rng(10);
  Architecture arch;
  arch.height = arch.width = 8;
  arch.conv_channels = {4, 6};
  arch.label_count = 3;
  Classifier c(arch, 12);
  const auto img = testing::random_image(arch.input_size(), rng);
  std::vector<double> mask{1, 1, 0, 1, 0, 1};
  const auto before = masked_logits(c, img, mask);
  Classifier d = c;
  auto w = d.conv_weight(1);
  for (int k : {2, 4}) {
    for (int i = 0; i < 4 * 9; ++i) w[k * 36 + i] += 0.7;
    d.conv_bias(1)[k] += 2.0;
  }
  CHECK(masked_logits(d, img, mask) == before);
}

TEST_CASE("forward is deterministic and batch-consistent") {
  std::mt19937_64 rng(14);
  Architecture arch;
  arch.height = arch.width = 8;
  arch.conv_channels = {4, 6};
  Classifier c(arch, 2);
  const auto imgs = testing::random_image(arch.input_size() * 3, rng);
  const auto a = c.forward(imgs, 3);
  const auto b = c.forward(imgs, 3);
  CHECK(a.logits == b.logits);
  const auto single = c.forward(std::span(imgs).subspan(arch.input_size(), arch.input_size()), 1);
  for (int j = 0; j < arch.label_count; ++j) CHECK(single.logits[j] == a.logits[arch.label_count + j]);
}

TEST_CASE("predict fills a consistent record") {
  std::mt19937_64 rng(15);
  Architecture arch;
  arch.height = arch.width = 8;
  arch.conv_channels = {4, 6};
  Classifier c(arch, 2);
  const auto img = testing::random_image(arch.input_size(), rng);
  const auto r = predict(c, img, "x", 3);
  const auto probs = softmax(c.forward(img, 1).logits);
  CHECK(r.inferred_class == argmax(probs));
  CHECK(r.confidence == probs[r.inferred_class]);
  CHECK(r.activation_map == binary_activation_map(r.gap_features));
  CHECK(r.true_class == 3);
  CHECK_THROWS_AS(predict(c, img, "x", 99), UsageError);
}

TEST_CASE("checkpoint round trip and corrupt files") {
  const auto dir = testing::scratch_dir("ckpt");
  Architecture arch;
  arch.height = arch.width = 8;
  arch.conv_channels = {3, 5};
  Classifier c(arch, 21);
  c.save(dir / "m.ckpt");
  const auto back = Classifier::load(dir / "m.ckpt");
  CHECK(back.architecture() == arch);
  CHECK(std::equal(back.parameters().begin(), back.parameters().end(), c.parameters().begin()));
  std::ofstream(dir / "bad.ckpt") << "not a checkpoint";
  CHECK_THROWS_AS(Classifier::load(dir / "bad.ckpt"), FormatError);
  CHECK_THROWS_AS(Classifier::load(dir / "missing.ckpt"), FormatError);
}

TEST_CASE("golden prediction record") {
  // Fixed seed network and image; the stored record pins the numerics.
  Architecture arch;
  arch.height = arch.width = 8;
  arch.conv_channels = {4, 8};
  arch.label_count = 4;
  Classifier c(arch, 2024);
  std::mt19937_64 rng(77);
  const auto img = testing::random_image(arch.input_size(), rng);
  const auto rec = predict(c, img, "golden", 1);
  const std::filesystem::path path = CFDEBUG_TEST_DATA "/golden_record.json";
  if (std::getenv("CFDEBUG_WRITE_GOLDEN")) std::ofstream(path) << record_to_json(rec).dump(1) << '\n';
  std::ifstream is(path);
  REQUIRE(is.good());
  const auto golden = record_from_json(nlohmann::json::parse(is));
  CHECK(golden.inferred_class == rec.inferred_class);
  CHECK(golden.activation_map == rec.activation_map);
  CHECK(golden.confidence == doctest::Approx(rec.confidence).epsilon(1e-12));
  REQUIRE(golden.gap_features.size() == rec.gap_features.size());
  for (std::size_t k = 0; k < rec.gap_features.size(); ++k) {
    CHECK(golden.gap_features[k] == doctest::Approx(rec.gap_features[k]).epsilon(1e-12));
  }
}

}
