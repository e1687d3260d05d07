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

// Batch commands behind the `cfdebug` CLI. Each command reads and writes
// files only, and records a run manifest (command, full option snapshot,
// SHA-256 of every input and output, timestamps) next to its outputs so the
// run can be replayed with rerun().

#ifndef CFDEBUG_PIPELINE_HPP
#define CFDEBUG_PIPELINE_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

namespace cfdebug {

struct Manifest {
  int manifest_version = 1;
  std::string command;
  nlohmann::json config;
  std::map<std::string, std::string> inputs;   // path -> sha256
  std::map<std::string, std::string> outputs;  // path -> sha256
  std::uint64_t seed = 0;
  std::string started_at;
  std::string finished_at;
};

nlohmann::json manifest_to_json(const Manifest& m);
Manifest manifest_from_json(const nlohmann::json& j);
Manifest read_manifest(const std::string& path);
std::string sha256_file(const std::string& path);

struct BootstrapOptions {
  std::string out_dir;
  std::uint64_t seed = 7;
  int train_per_class = 100;
  int test_per_class = 100;
  int image_size = 16;
  double noise = 0.22;
  double distractor_alpha = 0.45;
  double min_contrast = 0.1;
  double max_contrast = 0.9;
  std::vector<int> conv_channels{8, 16, 32, 64};
  int epochs = 40;
  int batch_size = 32;
  double learning_rate = 0.02;
  double momentum = 0.9;
  std::string manifest;
};

struct ExtractOptions {
  std::string data_dir;
  std::string model;
  std::string records_out;
  std::string mc_out;
  std::string skip_log;
  bool records_only = false;
  double tau = 0.90;
  double t = 0.5;
  double sparsity_weight = 2.0;
  bool logits_loss = true;
  int max_iterations = 300;
  double mask_init = 1.0;
  double tolerance = 1e-6;
  double cfe_learning_rate = 0.05;
  std::string manifest;
};

struct AccumulateOptions {
  std::string records;
  std::string mc;
  double tau = 0.90;
  std::string profiles_out;
  std::string skip_log;
  std::string manifest;
};

struct DetectRow {
  std::string metric = "avg_recall";
  double skip_threshold = 0.90;
  double freq_threshold = 0.15;
};

struct DetectOptions {
  std::string train_records;
  std::string train_mc;
  std::string test_records;
  std::string test_mc;
  std::string profiles;
  std::vector<DetectRow> rows{DetectRow{}};
  double recall_floor = 0.3;
  std::string population = "per_class";  // or "global"
  std::string local = "mc";               // or "activation_map"
  std::string model_name = "base";
  std::string results_out;
  std::string summary_out;
  std::string scores_out;
  std::string manifest;
};

struct DebugOptions {
  std::string train_dir;
  std::string test_dir;
  std::string model;
  std::string profiles;
  double freq_threshold = 0.15;
  double lambda_mc = 0.001;
  double lambda_nonmc = 0.00005;
  double tau = 0.90;
  double t = 0.5;
  int epochs = 10;
  int batch_size = 32;
  double learning_rate = 0.005;
  double momentum = 0.9;
  std::uint64_t seed = 1;
  bool soft_activation = true;
  bool grid = false;
  std::string out_model;
  std::string log_csv;
  std::string outcome_out;
  std::string grid_csv;
  std::string manifest;
};

struct RecallDeltaOptions {
  std::string base_records;
  std::string debugged_records;
  std::string classes;  // optional file with one class name per line
  int top_k = 3;
  std::string out;
  std::string manifest;
};

struct SaliencyOptions {
  std::string model;
  std::string image;
  int class_index = -1;  // -1: the inferred class
  double alpha = 0.5;
  std::string out;
  std::string manifest;
};

Manifest run_bootstrap(const BootstrapOptions& o);
Manifest run_extract(const ExtractOptions& o);
Manifest run_accumulate(const AccumulateOptions& o);
Manifest run_detect(const DetectOptions& o);
Manifest run_debug(const DebugOptions& o);
Manifest run_recall_delta(const RecallDeltaOptions& o);
Manifest run_saliency(const SaliencyOptions& o);

// Re-executes the command recorded in a manifest with its option snapshot.
// With verify, throws FormatError if any output checksum differs.
Manifest rerun(const std::string& manifest_path, bool verify);

// Where a command writes its manifest when none was given.
std::string default_manifest_path(const std::string& primary_output);

}  // namespace cfdebug

#endif  // CFDEBUG_PIPELINE_HPP
