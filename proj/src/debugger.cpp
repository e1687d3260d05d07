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

#include "cfdebug/debugger.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "cfdebug/csv.hpp"
#include "cfdebug/detector.hpp"
#include "cfdebug/errors.hpp"

namespace cfdebug {
namespace {

void check_length(const GlobalFilterSet& global, std::span<const double> f) {
  if (global.bits.size() != f.size()) {
    throw UsageError(fmt::format("activation vector has {} entries, global set has {}", f.size(), global.bits.size()));
  }
}

struct Alignment {
  const GlobalSets* globals = nullptr;
  double lambda_mc = 0.0;
  double lambda_nonmc = 0.0;
  bool soft = true;
  double t = 0.5;
};

void check_dataset(const Classifier& classifier, const Dataset& data, const char* name) {
  if (data.image_size() != classifier.architecture().input_size()) {
    throw InputError(fmt::format("{} images have {} values, classifier expects {}", name, data.image_size(),
                                 classifier.architecture().input_size()));
  }
  for (int label : data.labels) {
    if (label < 0 || label >= classifier.label_count()) throw UsageError(fmt::format("{} label {} out of range", name, label));
  }
}

TrainResult train_loop(const Classifier& start, const Dataset& train, const Dataset& test, const DebugConfig& config,
                       const Alignment* align) {
  config.validate();
  check_dataset(start, train, "training");
  check_dataset(start, test, "test");
  if (train.size() == 0) throw UsageError("training set is empty");

  Classifier model = start;
  std::optional<Classifier> best;
  TrainingOutcome outcome;
  const int n = model.filter_count(), K = model.label_count();
  const std::size_t per = train.image_size();
  std::vector<double> velocity(model.parameters().size(), 0.0);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(config.seed);

  if (align) outcome.mc_recall_before = mean_mc_recall(start, train, *align->globals, align->t);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    EpochLog log;
    log.epoch = epoch;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t m = std::min<std::size_t>(config.batch_size, order.size() - begin);
      std::vector<double> images(m * per);
      std::vector<int> labels(m);
      for (std::size_t i = 0; i < m; ++i) {
        const auto img = train.image(order[begin + i]);
        std::copy(img.begin(), img.end(), images.begin() + static_cast<std::ptrdiff_t>(i * per));
        labels[i] = train.labels[order[begin + i]];
      }
      const auto tr = model.forward(images, static_cast<int>(m));

      std::vector<double> probs(m * K), grad_logits(m * K);
      for (std::size_t i = 0; i < m; ++i) {
        const auto p = softmax(std::span(tr.logits).subspan(i * K, K));
        for (int j = 0; j < K; ++j) {
          probs[i * K + j] = p[j];
          grad_logits[i * K + j] = (p[j] - (j == labels[i] ? 1.0 : 0.0)) / static_cast<double>(m);
        }
      }
      const double ce = loss_ce(probs, labels, static_cast<int>(m));
      double mc = 0.0, nonmc = 0.0;
      std::vector<double> grad_gap;
      if (align) {
        grad_gap.assign(m * n, 0.0);
        for (std::size_t i = 0; i < m; ++i) {
          const auto& global = align->globals->at(labels[i]);
          const auto g = std::span(tr.gap).subspan(i * n, n);
          std::vector<double> f(n);
          for (int k = 0; k < n; ++k) f[k] = sigmoid(g[k]);
          if (!align->soft) {
            const auto hard = binary_activation_map(g, align->t);
            for (int k = 0; k < n; ++k) f[k] = hard[k] ? 1.0 : 0.0;
          }
          mc += loss_mc(global, f) / static_cast<double>(m);
          nonmc += loss_nonmc(global, f) / static_cast<double>(m);
          if (align->soft) {
            const auto dg = alignment_gap_gradient(global, g, align->lambda_mc, align->lambda_nonmc);
            for (int k = 0; k < n; ++k) grad_gap[i * n + k] = dg[k] / static_cast<double>(m);
          }
        }
      }
      const double total = align ? loss_d(ce, mc, nonmc, align->lambda_mc, align->lambda_nonmc) : ce;
      if (!std::isfinite(total)) {
        throw NumericError(fmt::format("loss diverged at epoch {} (batch starting at {}): ce={} mc={} nonmc={}", epoch,
                                       begin, ce, mc, nonmc));
      }
      const double w = static_cast<double>(m) / static_cast<double>(order.size());
      log.loss_ce += ce * w;
      log.loss_mc += mc * w;
      log.loss_nonmc += nonmc * w;
      log.loss_d += total * w;

      const auto grad = model.backward(tr, grad_logits, grad_gap);
      auto params = model.parameters();
      for (std::size_t p = 0; p < params.size(); ++p) {
        const double gp = grad[p] + config.weight_decay * params[p];
        velocity[p] = config.momentum * velocity[p] - config.learning_rate * gp;
        params[p] += velocity[p];
      }
    }
    log.train_accuracy = accuracy(model, train);
    log.test_accuracy = test.size() ? accuracy(model, test) : 0.0;
    spdlog::info("epoch {}: L_d={:.5f} L_CE={:.5f} L_MC={:.4f} L_nonMC={:.4f} train={:.4f} test={:.4f}", epoch,
                 log.loss_d, log.loss_ce, log.loss_mc, log.loss_nonmc, log.train_accuracy, log.test_accuracy);
    outcome.epochs.push_back(log);
    if (config.keep_best && (!best || log.test_accuracy > outcome.test_accuracy)) {
      best = model;
      outcome.best_epoch = epoch;
      outcome.train_accuracy = log.train_accuracy;
      outcome.test_accuracy = log.test_accuracy;
    }
  }
  if (!config.keep_best || !best) {
    best = model;
    outcome.best_epoch = config.epochs;
    if (!outcome.epochs.empty()) {
      outcome.train_accuracy = outcome.epochs.back().train_accuracy;
      outcome.test_accuracy = outcome.epochs.back().test_accuracy;
    }
  }
  if (align) outcome.mc_recall_after = mean_mc_recall(*best, train, *align->globals, align->t);
  return {std::move(outcome), std::move(*best)};
}

}  // namespace

void DebugConfig::validate() const {
  if (!(lambda_mc >= 0.0) || !(lambda_nonmc >= 0.0)) throw UsageError("loss weights must be non-negative");
  if (!(tau >= 0.0 && tau <= 1.0)) throw UsageError("tau must lie in [0, 1]");
  if (!(t > 0.0 && t < 1.0)) throw UsageError("activation threshold must lie in (0, 1)");
  if (epochs < 1 || batch_size < 1) throw UsageError("epochs and batch size must be positive");
  if (!(learning_rate > 0.0) || !(momentum >= 0.0 && momentum < 1.0) || !(weight_decay >= 0.0)) {
    throw UsageError("invalid optimizer settings");
  }
}

double loss_mc(const GlobalFilterSet& global, std::span<const double> f) {
  check_length(global, f);
  double sum = 0.0;
  for (std::size_t k = 0; k < f.size(); ++k) sum += std::abs(global.bits[k] * f[k]);
  return -sum;
}

double loss_nonmc(const GlobalFilterSet& global, std::span<const double> f) {
  check_length(global, f);
  double sum = 0.0;
  for (std::size_t k = 0; k < f.size(); ++k) sum += std::abs((1 - global.bits[k]) * f[k]);
  return sum;
}

std::vector<double> alignment_gradient(const GlobalFilterSet& global, std::span<const double> f, double lambda_mc,
                                       double lambda_nonmc) {
  check_length(global, f);
  std::vector<double> grad(f.size());
  for (std::size_t k = 0; k < f.size(); ++k) {
    grad[k] = global.bits[k] ? -lambda_mc : lambda_nonmc;
  }
  return grad;
}

std::vector<double> alignment_gap_gradient(const GlobalFilterSet& global, std::span<const double> g,
                                           double lambda_mc, double lambda_nonmc) {
  std::vector<double> f(g.size());
  for (std::size_t k = 0; k < g.size(); ++k) f[k] = sigmoid(g[k]);
  auto grad = alignment_gradient(global, f, lambda_mc, lambda_nonmc);
  for (std::size_t k = 0; k < g.size(); ++k) grad[k] *= f[k] * (1.0 - f[k]);
  return grad;
}

double loss_ce(std::span<const double> probs, std::span<const int> labels, int m) {
  if (m < 1 || labels.size() != static_cast<std::size_t>(m) || probs.size() % m != 0) {
    throw UsageError("probability matrix does not match batch size");
  }
  const std::size_t K = probs.size() / m;
  double sum = 0.0;
  for (int i = 0; i < m; ++i) {
    const double p = std::clamp(probs[i * K + labels[i]], kProbabilityClamp, 1.0 - kProbabilityClamp);
    sum -= std::log(p);
  }
  return sum / m;
}

double loss_d(double ce, double mc, double nonmc, double lambda_mc, double lambda_nonmc) {
  return ce + lambda_mc * mc + lambda_nonmc * nonmc;
}

double accuracy(const Classifier& classifier, const Dataset& data) {
  if (data.size() == 0) return 0.0;
  const auto records = predict_batch(classifier, data.all_images(), data.image_ids, data.labels);
  std::size_t correct = 0;
  for (const auto& r : records) correct += r.correct();
  return static_cast<double>(correct) / static_cast<double>(records.size());
}

double mean_mc_recall(const Classifier& classifier, const Dataset& data, const GlobalSets& globals, double t) {
  const auto records = predict_batch(classifier, data.all_images(), data.image_ids, data.labels, t);
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& r : records) {
    auto it = globals.find(*r.true_class);
    if (it == globals.end()) continue;
    sum += agreement_recall(r.activation_map, it->second);
    ++count;
  }
  return count ? sum / static_cast<double>(count) : 0.0;
}

TrainResult debug_train(const Classifier& base, const Dataset& train, const Dataset& test, const GlobalSets& globals,
                        const DebugConfig& config) {
  for (int label : train.labels) {
    if (!globals.contains(label)) throw UsageError(fmt::format("no global MC set for class {}", label));
  }
  for (const auto& [label, g] : globals) {
    if (g.n() != base.filter_count()) throw UsageError("global set length does not match the classifier's filter count");
  }
  Alignment align{&globals, config.lambda_mc, config.lambda_nonmc, config.soft_activation, config.t};
  return train_loop(base, train, test, config, &align);
}

TrainResult fine_tune(const Classifier& base, const Dataset& train, const Dataset& test, const DebugConfig& config) {
  return train_loop(base, train, test, config, nullptr);
}

TrainResult train_base(const Architecture& arch, const Dataset& train, const Dataset& test, const DebugConfig& config) {
  return train_loop(Classifier(arch, config.seed), train, test, config, nullptr);
}

void write_epoch_log(const std::filesystem::path& path, const TrainingOutcome& outcome) {
  std::vector<CsvRow> rows;
  for (const auto& e : outcome.epochs) {
    rows.push_back({std::to_string(e.epoch), fmt::format("{:.17g}", e.loss_d), fmt::format("{:.17g}", e.loss_ce),
                    fmt::format("{:.17g}", e.loss_mc), fmt::format("{:.17g}", e.loss_nonmc),
                    fmt::format("{:.6f}", e.train_accuracy), fmt::format("{:.6f}", e.test_accuracy)});
  }
  write_csv(path, {"epoch", "loss_d", "loss_ce", "loss_mc", "loss_nonmc", "train_acc", "test_acc"}, rows);
}

std::vector<GridPoint> reference_grid() {
  return {{0.0001, 0.00001}, {0.0002, 0.00002}, {0.0005, 0.00002}, {0.0005, 0.00005},
          {0.001, 0.00002},  {0.002, 0.00002},  {0.001, 0.00005},  {0.001, 0.0001}};
}

GridReport run_grid(const Classifier& base, const Dataset& train, const Dataset& test, const GlobalSets& globals,
                    const DebugConfig& config, const std::vector<GridPoint>& grid) {
  GridReport report;
  const double t = config.t;
  report.rows.push_back({"base", std::nullopt, accuracy(base, train), accuracy(base, test),
                         mean_mc_recall(base, train, globals, t)});
  const auto tuned = fine_tune(base, train, test, config);
  report.rows.push_back({"fine-tuned", std::nullopt, tuned.outcome.train_accuracy, tuned.outcome.test_accuracy,
                         mean_mc_recall(tuned.classifier, train, globals, t)});
  for (const auto& point : grid) {
    DebugConfig c = config;
    c.lambda_mc = point.lambda_mc;
    c.lambda_nonmc = point.lambda_nonmc;
    const auto res = debug_train(base, train, test, globals, c);
    report.rows.push_back({"debugged", point, res.outcome.train_accuracy, res.outcome.test_accuracy,
                           res.outcome.mc_recall_after});
    const auto& best = report.rows[report.best_debugged];
    if (report.best_debugged < 2 || report.rows.back().test_accuracy > best.test_accuracy) {
      report.best_debugged = report.rows.size() - 1;
      report.best_model = res.classifier;
    }
  }
  return report;
}

void write_grid_csv(const std::filesystem::path& path, const GridReport& report) {
  std::vector<CsvRow> rows;
  for (const auto& r : report.rows) {
    rows.push_back({r.model, r.weights ? fmt::format("{:g}", r.weights->lambda_mc) : "-",
                    r.weights ? fmt::format("{:g}", r.weights->lambda_nonmc) : "-",
                    r.train_accuracy ? fmt::format("{:.2f}", *r.train_accuracy * 100.0) : "",
                    fmt::format("{:.2f}", r.test_accuracy * 100.0), fmt::format("{:.4f}", r.mc_recall)});
  }
  write_csv(path,
            {"Model", "MC filters weight lambda1", "Non-MC filters weight lambda2", "Train acc. (%)", "Test acc. (%)",
             "Mean MC recall"},
            rows);
}

}  // namespace cfdebug
