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
#include <random>

#include "doctest.h"

#include "cfdebug/csv.hpp"
#include "cfdebug/debugger.hpp"
#include "cfdebug/errors.hpp"
#include "support.hpp"

using namespace cfdebug;

namespace {

GlobalFilterSet global_bits(std::vector<std::uint8_t> bits) {
  GlobalFilterSet g;
  g.normalized_freq.assign(bits.size(), 0.0);
  g.bits = std::move(bits);
  return g;
}

Architecture small_arch() {
  Architecture arch;
  arch.height = arch.width = 16;
  arch.conv_channels = {4, 8};
  arch.label_count = 10;
  return arch;
}

GlobalSets every_class_set(int classes, int n) {
  GlobalSets out;
  for (int c = 0; c < classes; ++c) {
    std::vector<std::uint8_t> b(n, 0);
    b[c % n] = b[(c + 3) % n] = 1;
    out[c] = global_bits(b);
    out[c].class_label = c;
  }
  return out;
}

}  // namespace

TEST_SUITE("debugger") {

TEST_CASE("alignment losses") {
  const auto g = global_bits({1, 0, 1});
  const std::vector<double> f{1, 1, 0};
  CHECK(loss_mc(g, f) == -1.0);
  CHECK(loss_nonmc(g, f) == 1.0);
  CHECK(loss_mc(global_bits({0, 0, 0}), f) == 0.0);
  CHECK(loss_nonmc(global_bits({1, 1, 1}), f) == 0.0);
  CHECK(loss_mc(global_bits(std::vector<std::uint8_t>(8, 1)), std::vector<double>(8, 1.0)) == -8.0);
  CHECK(loss_nonmc(global_bits({0, 0}), std::vector<double>{0.5, 0.5}) == 1.0);
  CHECK_THROWS_AS(loss_mc(g, std::vector<double>{1.0}), UsageError);
  CHECK_THROWS_AS(loss_nonmc(g, std::vector<double>{1.0}), UsageError);
}

TEST_CASE("combined loss") {
  CHECK(loss_d(1.0, -8.0, 1.0, 0.001, 0.00005) == doctest::Approx(0.99205).epsilon(1e-15));
  CHECK(loss_d(0.37, -3.0, 2.0, 0.0, 0.0) == 0.37);
  // Raising f on an MC filter lowers L_d; raising it on a non-MC filter raises it.
  const auto g = global_bits({1, 0, 1, 0});
  std::vector<double> f{0.3, 0.4, 0.5, 0.6};
  const double base = loss_d(0.5, loss_mc(g, f), loss_nonmc(g, f), 0.001, 0.00005);
  f[0] += 0.1;
  CHECK(loss_d(0.5, loss_mc(g, f), loss_nonmc(g, f), 0.001, 0.00005) < base);
  f[0] -= 0.1;
  f[1] += 0.1;
  CHECK(loss_d(0.5, loss_mc(g, f), loss_nonmc(g, f), 0.001, 0.00005) > base);
}

TEST_CASE("cross-entropy") {
  const std::vector<double> onehot{0, 1, 0, 1, 0, 0};
  CHECK(loss_ce(onehot, std::vector<int>{1, 0}, 2) == doctest::Approx(-std::log(1.0 - kProbabilityClamp)));
  CHECK(loss_ce(onehot, std::vector<int>{1, 0}, 2) < 1e-6);
  const std::vector<double> uniform(4 * 7, 1.0 / 7.0);
  CHECK(loss_ce(uniform, std::vector<int>{0, 3, 6, 2}, 4) == doctest::Approx(std::log(7.0)).epsilon(1e-14));
  CHECK(loss_ce(std::vector<double>{0.0, 1.0}, std::vector<int>{0}, 1) == doctest::Approx(-std::log(kProbabilityClamp)));

  std::mt19937_64 rng(61);
  for (int trial = 0; trial < 50; ++trial) {
    const int m = 1 + static_cast<int>(rng() % 16), K = 2 + static_cast<int>(rng() % 9);
    std::vector<double> probs;
    std::vector<int> labels;
    double expected = 0.0;
    for (int i = 0; i < m; ++i) {
      const auto row = softmax(testing::random_vector(K, rng, 3.0));
      probs.insert(probs.end(), row.begin(), row.end());
      labels.push_back(static_cast<int>(rng() % K));
      double p = row[labels.back()];
      p = p < 1e-7 ? 1e-7 : (p > 1 - 1e-7 ? 1 - 1e-7 : p);
      expected += -std::log(p);
    }
    CHECK(std::abs(loss_ce(probs, labels, m) - expected / m) <= 1e-6);
  }
  CHECK_THROWS_AS(loss_ce(std::vector<double>(5, 0.2), std::vector<int>{0, 1}, 2), UsageError);
}

TEST_CASE("alignment gradients match central differences") {
  std::mt19937_64 rng(71);
  std::uniform_real_distribution<double> u(0.05, 0.95), gu(0.0, 4.0);
  const double l1 = 0.001, l2 = 0.00005, h = 1e-6;
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::uint8_t> bits(64);
    for (auto& b : bits) b = rng() % 3 == 0;
    const auto g = global_bits(bits);
    std::vector<double> f(64), gap(64);
    for (auto& x : f) x = u(rng);
    for (auto& x : gap) x = gu(rng);
    auto obj_f = [&](const std::vector<double>& v) { return l1 * loss_mc(g, v) + l2 * loss_nonmc(g, v); };
    auto obj_g = [&](std::vector<double> v) {
      for (auto& x : v) x = sigmoid(x);
      return obj_f(v);
    };
    const auto df = alignment_gradient(g, f, l1, l2);
    const auto dg = alignment_gap_gradient(g, gap, l1, l2);
    for (int k = 0; k < 64; ++k) {
      auto fp = f, fm = f, gp = gap, gm = gap;
      fp[k] += h;
      fm[k] -= h;
      gp[k] += h;
      gm[k] -= h;
      const double fd_f = (obj_f(fp) - obj_f(fm)) / (2 * h);
      const double fd_g = (obj_g(gp) - obj_g(gm)) / (2 * h);
      CHECK(std::abs(df[k] - fd_f) <= 1e-4 * std::abs(fd_f));
      CHECK(std::abs(dg[k] - fd_g) <= 1e-4 * std::abs(fd_g));
    }
  }
}

TEST_CASE("zero weights reduce exactly to fine-tuning") {
  const auto train = testing::small_dataset(6, 1);
  const auto test = testing::small_dataset(3, 2);
  const Classifier base(small_arch(), 5);
  DebugConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 8;
  cfg.learning_rate = 0.02;
  cfg.seed = 9;
  cfg.lambda_mc = cfg.lambda_nonmc = 0.0;
  const auto globals = every_class_set(10, 8);
  const auto dbg = debug_train(base, train, test, globals, cfg);
  const auto ft = fine_tune(base, train, test, cfg);
  REQUIRE(dbg.outcome.epochs.size() == 3);
  for (std::size_t e = 0; e < 3; ++e) {
    CHECK(dbg.outcome.epochs[e].loss_d == ft.outcome.epochs[e].loss_ce);
    CHECK(dbg.outcome.epochs[e].loss_ce == ft.outcome.epochs[e].loss_ce);
    CHECK(dbg.outcome.epochs[e].test_accuracy == ft.outcome.epochs[e].test_accuracy);
  }
  CHECK(std::equal(dbg.classifier.parameters().begin(), dbg.classifier.parameters().end(),
                   ft.classifier.parameters().begin()));
}

TEST_CASE("hard activations contribute no gradient") {
  const auto train = testing::small_dataset(4, 3);
  const auto test = testing::small_dataset(2, 4);
  const Classifier base(small_arch(), 6);
  DebugConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 8;
  cfg.soft_activation = false;
  const auto globals = every_class_set(10, 8);
  const auto hard = debug_train(base, train, test, globals, cfg);
  const auto ft = fine_tune(base, train, test, cfg);
  for (std::size_t e = 0; e < 2; ++e) {
    CHECK(hard.outcome.epochs[e].loss_ce == ft.outcome.epochs[e].loss_ce);
    CHECK(hard.outcome.epochs[e].loss_mc <= 0.0);
    CHECK(std::isfinite(hard.outcome.epochs[e].loss_d));
  }
}

TEST_CASE("training is seed-deterministic and keeps the best epoch") {
  const auto train = testing::small_dataset(5, 5);
  const auto test = testing::small_dataset(3, 6);
  const Classifier base(small_arch(), 7);
  DebugConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 10;
  const auto globals = every_class_set(10, 8);
  const auto a = debug_train(base, train, test, globals, cfg);
  const auto b = debug_train(base, train, test, globals, cfg);
  CHECK(std::equal(a.classifier.parameters().begin(), a.classifier.parameters().end(),
                   b.classifier.parameters().begin()));
  double best = 0.0;
  for (const auto& e : a.outcome.epochs) best = std::max(best, e.test_accuracy);
  CHECK(a.outcome.test_accuracy == best);
  CHECK(a.outcome.epochs[a.outcome.best_epoch - 1].test_accuracy == best);
  CHECK(accuracy(a.classifier, test) == best);
}

TEST_CASE("debug_train errors") {
  const auto train = testing::small_dataset(2, 7);
  const Classifier base(small_arch(), 8);
  auto globals = every_class_set(10, 8);
  globals.erase(4);
  CHECK_THROWS_AS(debug_train(base, train, train, globals, DebugConfig{}), UsageError);
  DebugConfig wild;
  wild.epochs = 3;
  wild.learning_rate = 1e300;
  CHECK_THROWS_AS(debug_train(base, train, train, every_class_set(10, 8), wild), NumericError);
  DebugConfig negative;
  negative.lambda_mc = -1.0;
  CHECK_THROWS_AS(debug_train(base, train, train, every_class_set(10, 8), negative), UsageError);
}

TEST_CASE("reference grid and grid table") {
  const auto grid = reference_grid();
  REQUIRE(grid.size() == 8);
  CHECK(grid[6].lambda_mc == 0.001);
  CHECK(grid[6].lambda_nonmc == 0.00005);
  const auto train = testing::small_dataset(3, 9);
  const auto test = testing::small_dataset(2, 10);
  const Classifier base(small_arch(), 10);
  DebugConfig cfg;
  cfg.epochs = 1;
  const auto report = run_grid(base, train, test, every_class_set(10, 8), cfg, {grid[0], grid[6]});
  REQUIRE(report.rows.size() == 4);
  CHECK(report.rows[0].model == "base");
  CHECK(report.rows[1].model == "fine-tuned");
  CHECK(report.best_debugged >= 2);
  REQUIRE(report.best_model.has_value());
  CHECK(accuracy(*report.best_model, test) == report.rows[report.best_debugged].test_accuracy);
  const auto dir = testing::scratch_dir("grid");
  write_grid_csv(dir / "grid.csv", report);
  const auto rows = read_csv(dir / "grid.csv");
  REQUIRE(rows.size() == 5);
  CHECK(rows[0][0] == "Model");
  CHECK(rows[0][1] == "MC filters weight lambda1");
  CHECK(rows[4][1] == "0.001");
  CHECK(rows[4][2] == "5e-05");
}

}
