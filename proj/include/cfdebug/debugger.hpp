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

// Retraining with MC-alignment losses.
//
//   L_d = L_CE + lambda_mc * L_MC + lambda_nonmc * L_nonMC
//   L_MC    = -sum_k |bits[k] * f[k]|        (rewards class-relevant filters)
//   L_nonMC =  sum_k |(1 - bits[k]) * f[k]|  (penalizes the rest)
//
// L_MC is already non-positive, so adding it with a positive weight
// encourages agreement with the global MC set. During training f is the soft
// activation sigmoid(gap); the thresholded map is used for evaluation.

#ifndef CFDEBUG_DEBUGGER_HPP
#define CFDEBUG_DEBUGGER_HPP

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cfdebug/dataset.hpp"
#include "cfdebug/model.hpp"
#include "cfdebug/profile.hpp"

namespace cfdebug {

inline constexpr double kProbabilityClamp = 1e-7;

struct DebugConfig {
  double lambda_mc = 0.001;
  double lambda_nonmc = 0.00005;
  double tau = 0.90;
  double t = 0.5;
  int epochs = 10;
  int batch_size = 32;
  double learning_rate = 0.01;
  double momentum = 0.9;
  double weight_decay = 0.0;
  std::uint64_t seed = 1;
  bool soft_activation = true;
  // Return the epoch with the best test accuracy instead of the last one.
  bool keep_best = true;

  void validate() const;
};

double loss_mc(const GlobalFilterSet& global, std::span<const double> f);
double loss_nonmc(const GlobalFilterSet& global, std::span<const double> f);
// d/df of lambda_mc * loss_mc + lambda_nonmc * loss_nonmc (for f >= 0).
std::vector<double> alignment_gradient(const GlobalFilterSet& global, std::span<const double> f,
                                       double lambda_mc, double lambda_nonmc);
// Mean categorical cross-entropy; probs is m x K row-major, clamped to
// [eps, 1 - eps] before the log.
// The same terms differentiated w.r.t. GAP features g through f = sigmoid(g).
std::vector<double> alignment_gap_gradient(const GlobalFilterSet& global, std::span<const double> g,
                                           double lambda_mc, double lambda_nonmc);
double loss_ce(std::span<const double> probs, std::span<const int> labels, int m);
double loss_d(double ce, double mc, double nonmc, double lambda_mc, double lambda_nonmc);

struct EpochLog {
  int epoch = 0;
  double loss_ce = 0.0;
  double loss_mc = 0.0;
  double loss_nonmc = 0.0;
  double loss_d = 0.0;
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
};

struct TrainingOutcome {
  double train_accuracy = 0.0;
  double test_accuracy = 0.0;
  int best_epoch = 0;
  std::vector<EpochLog> epochs;
  double mc_recall_before = 0.0;
  double mc_recall_after = 0.0;
};

struct TrainResult {
  TrainingOutcome outcome;
  Classifier classifier;
};

// Fraction of images whose argmax equals the label.
double accuracy(const Classifier& classifier, const Dataset& data);
// Mean agreement_recall(binary activation map, true-class global set) over
// images whose class has a global set.
double mean_mc_recall(const Classifier& classifier, const Dataset& data, const GlobalSets& globals, double t);

// Trains on all images of `train` with the combined objective. Every class
// in `train` needs a global set. Aborts with NumericError on divergence.
TrainResult debug_train(const Classifier& base, const Dataset& train, const Dataset& test,
                        const GlobalSets& globals, const DebugConfig& config);
// Cross-entropy only; the control arm. Lambdas in `config` are ignored.
TrainResult fine_tune(const Classifier& base, const Dataset& train, const Dataset& test, const DebugConfig& config);

// Minimal bootstrap: cross-entropy training from a fresh initialization
// seeded by config.seed.
TrainResult train_base(const Architecture& arch, const Dataset& train, const Dataset& test,
                       const DebugConfig& config);

void write_epoch_log(const std::filesystem::path& path, const TrainingOutcome& outcome);

struct GridPoint {
  double lambda_mc = 0.0;
  double lambda_nonmc = 0.0;
};
// The eight (lambda_mc, lambda_nonmc) pairs of the reference sweep.
std::vector<GridPoint> reference_grid();

struct GridRow {
  std::string model;
  std::optional<GridPoint> weights;
  std::optional<double> train_accuracy;
  double test_accuracy = 0.0;
  double mc_recall = 0.0;
};

struct GridReport {
  std::vector<GridRow> rows;  // base, fine-tuned, then one per grid point
  std::size_t best_debugged = 0;  // index into rows
  std::optional<Classifier> best_model;
};

GridReport run_grid(const Classifier& base, const Dataset& train, const Dataset& test, const GlobalSets& globals,
                    const DebugConfig& config, const std::vector<GridPoint>& grid);
void write_grid_csv(const std::filesystem::path& path, const GridReport& report);

}  // namespace cfdebug

#endif  // CFDEBUG_DEBUGGER_HPP
