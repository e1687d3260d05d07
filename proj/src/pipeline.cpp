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

#include "cfdebug/pipeline.hpp"

#include <chrono>
#include <ctime>
#include <exception>
#include <filesystem>
#include <fstream>
#include <memory>

#include <fmt/format.h>
#include <openssl/evp.h>
#include <spdlog/spdlog.h>

#include "cfdebug/cfe.hpp"
#include "cfdebug/dataset.hpp"
#include "cfdebug/debugger.hpp"
#include "cfdebug/detector.hpp"
#include "cfdebug/errors.hpp"
#include "cfdebug/profile.hpp"
#include "cfdebug/records_io.hpp"
#include "cfdebug/report.hpp"
#include "cfdebug/saliency.hpp"

namespace cfdebug {

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(BootstrapOptions, out_dir, seed, train_per_class, test_per_class,
                                                image_size, noise, distractor_alpha, min_contrast, max_contrast, conv_channels, epochs, batch_size,
                                                learning_rate, momentum, manifest)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(ExtractOptions, data_dir, model, records_out, mc_out, skip_log,
                                                records_only, tau, t, sparsity_weight, logits_loss, max_iterations,
                                                mask_init, tolerance, cfe_learning_rate, manifest)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(AccumulateOptions, records, mc, tau, profiles_out, skip_log, manifest)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(DetectRow, metric, skip_threshold, freq_threshold)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(DetectOptions, train_records, train_mc, test_records, test_mc,
                                                profiles, rows, recall_floor, population, local, model_name,
                                                results_out, summary_out, scores_out, manifest)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(DebugOptions, train_dir, test_dir, model, profiles, freq_threshold,
                                                lambda_mc, lambda_nonmc, tau, t, epochs, batch_size, learning_rate,
                                                momentum, seed, soft_activation, grid, out_model, log_csv, outcome_out,
                                                grid_csv, manifest)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(RecallDeltaOptions, base_records, debugged_records, classes, top_k,
                                                out, manifest)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(SaliencyOptions, model, image, class_index, alpha, out, manifest)

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct DigestDeleter {
  void operator()(EVP_MD_CTX* ctx) const { EVP_MD_CTX_free(ctx); }
};

class Sha256 {
 public:
  Sha256() : ctx_(EVP_MD_CTX_new()) {
    if (!ctx_ || EVP_DigestInit_ex(ctx_.get(), EVP_sha256(), nullptr) != 1) throw std::runtime_error("sha256 init failed");
  }
  void update(const void* data, std::size_t len) { EVP_DigestUpdate(ctx_.get(), data, len); }
  std::string hex() {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx_.get(), md, &len);
    std::string out;
    for (unsigned int i = 0; i < len; ++i) out += fmt::format("{:02x}", md[i]);
    return out;
  }

 private:
  std::unique_ptr<EVP_MD_CTX, DigestDeleter> ctx_;
};

// Hash of a file, or of a directory tree as (relative path, file hash) pairs.
std::string sha256_path(const std::string& path) {
  if (!fs::is_directory(path)) return sha256_file(path);
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(path)) {
    if (e.is_regular_file()) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  Sha256 h;
  for (const auto& f : files) {
    const auto line = fs::relative(f, path).generic_string() + " " + sha256_file(f.string()) + "\n";
    h.update(line.data(), line.size());
  }
  return h.hex();
}

std::string or_default(const std::string& value, const std::string& fallback) {
  return value.empty() ? fallback : value;
}

void require(const std::string& value, const char* name) {
  if (value.empty()) throw UsageError(fmt::format("missing required option --{}", name));
}

class ManifestWriter {
 public:
  ManifestWriter(std::string command, json config, std::uint64_t seed) {
    m_.command = std::move(command);
    m_.config = std::move(config);
    m_.config.erase("manifest");
    m_.seed = seed;
    m_.started_at = utc_now();
  }
  void input(const std::string& path) {
    if (!path.empty()) m_.inputs[path] = sha256_path(path);
  }
  void output(const std::string& path) {
    if (!path.empty()) m_.outputs[path] = sha256_path(path);
  }
  Manifest finish(const std::string& manifest_path) {
    m_.finished_at = utc_now();
    std::ofstream os(manifest_path, std::ios::trunc);
    if (!os) throw FormatError(fmt::format("cannot write manifest {}", manifest_path));
    os << manifest_to_json(m_).dump(2) << '\n';
    return m_;
  }

 private:
  Manifest m_;
};

void write_skip_log(const std::string& path, const std::vector<SkippedRecord>& skipped) {
  std::vector<json> lines;
  for (const auto& s : skipped) lines.push_back({{"image_id", s.image_id}, {"reason", to_string(s.reason)}});
  write_json_lines(path, lines);
}

json outcome_to_json(const TrainingOutcome& o) {
  json epochs = json::array();
  for (const auto& e : o.epochs) {
    epochs.push_back({{"epoch", e.epoch},
                      {"loss_d", e.loss_d},
                      {"loss_ce", e.loss_ce},
                      {"loss_mc", e.loss_mc},
                      {"loss_nonmc", e.loss_nonmc},
                      {"train_accuracy", e.train_accuracy},
                      {"test_accuracy", e.test_accuracy}});
  }
  return {{"train_accuracy", o.train_accuracy},   {"test_accuracy", o.test_accuracy},
          {"best_epoch", o.best_epoch},           {"mc_recall_before", o.mc_recall_before},
          {"mc_recall_after", o.mc_recall_after}, {"epochs", epochs}};
}

}  // namespace

std::string sha256_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError(fmt::format("cannot open {}", path));
  Sha256 h;
  char buf[1 << 16];
  while (is.read(buf, sizeof buf) || is.gcount() > 0) h.update(buf, static_cast<std::size_t>(is.gcount()));
  return h.hex();
}

std::string default_manifest_path(const std::string& primary_output) {
  return primary_output + ".manifest.json";
}

json manifest_to_json(const Manifest& m) {
  return {{"manifest_version", m.manifest_version},
          {"command", m.command},
          {"config", m.config},
          {"inputs", m.inputs},
          {"outputs", m.outputs},
          {"seed", m.seed},
          {"started_at", m.started_at},
          {"finished_at", m.finished_at}};
}

Manifest manifest_from_json(const json& j) {
  try {
    Manifest m;
    m.manifest_version = j.at("manifest_version").get<int>();
    if (m.manifest_version != 1) throw FormatError(fmt::format("unsupported manifest_version {}", m.manifest_version));
    m.command = j.at("command").get<std::string>();
    m.config = j.at("config");
    m.inputs = j.at("inputs").get<std::map<std::string, std::string>>();
    m.outputs = j.at("outputs").get<std::map<std::string, std::string>>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.started_at = j.value("started_at", "");
    m.finished_at = j.value("finished_at", "");
    return m;
  } catch (const json::exception& e) {
    throw FormatError(fmt::format("malformed manifest: {}", e.what()));
  }
}

Manifest read_manifest(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw FormatError(fmt::format("cannot open manifest {}", path));
  try {
    return manifest_from_json(json::parse(is));
  } catch (const json::parse_error& e) {
    throw FormatError(fmt::format("corrupt manifest {}: {}", path, e.what()));
  }
}

Manifest run_bootstrap(const BootstrapOptions& o) {
  require(o.out_dir, "out");
  ManifestWriter mw("bootstrap", o, o.seed);
  const fs::path root(o.out_dir);
  fs::create_directories(root);
  for (const char* split : {"train", "test"}) {
    if (fs::exists(root / split)) fs::remove_all(root / split);
  }
  SyntheticConfig sc{o.train_per_class, o.image_size, o.noise, o.distractor_alpha, o.min_contrast, o.max_contrast};
  write_image_dir(generate_synthetic(sc, o.seed), root / "train");
  sc.per_class = o.test_per_class;
  write_image_dir(generate_synthetic(sc, o.seed + 1), root / "test");

  const auto train = load_image_dir(root / "train");
  const auto test = load_image_dir(root / "test");
  Architecture arch;
  arch.in_channels = train.channels;
  arch.height = train.height;
  arch.width = train.width;
  arch.conv_channels = o.conv_channels;
  arch.label_count = static_cast<int>(train.class_names.size());

  DebugConfig cfg;
  cfg.epochs = o.epochs;
  cfg.batch_size = o.batch_size;
  cfg.learning_rate = o.learning_rate;
  cfg.momentum = o.momentum;
  cfg.seed = o.seed;
  cfg.keep_best = false;
  const auto res = train_base(arch, train, test, cfg);
  res.classifier.save(root / "base.ckpt");
  write_epoch_log(root / "base_train_log.csv", res.outcome);
  {
    std::ofstream os(root / "classes.txt", std::ios::trunc);
    for (const auto& name : train.class_names) os << name << '\n';
  }
  spdlog::info("base classifier: train accuracy {:.4f}, test accuracy {:.4f}", res.outcome.train_accuracy,
               res.outcome.test_accuracy);
  for (const char* out : {"train", "test", "base.ckpt", "base_train_log.csv", "classes.txt"}) {
    mw.output((root / out).string());
  }
  return mw.finish(or_default(o.manifest, (root / "bootstrap.manifest.json").string()));
}

Manifest run_extract(const ExtractOptions& o) {
  require(o.data_dir, "data");
  require(o.model, "model");
  require(o.records_out, "records-out");
  if (!o.records_only) require(o.mc_out, "mc-out");
  ManifestWriter mw("extract", o, 0);
  mw.input(o.data_dir);
  mw.input(o.model);

  const auto data = load_image_dir(o.data_dir);
  const auto model = Classifier::load(o.model);
  if (data.class_names.size() != static_cast<std::size_t>(model.label_count())) {
    throw UsageError(fmt::format("dataset has {} classes, classifier has {}", data.class_names.size(),
                                 model.label_count()));
  }
  const auto records = predict_batch(model, data.all_images(), data.image_ids, data.labels, o.t);
  write_records(o.records_out, records);
  mw.output(o.records_out);

  std::vector<SkippedRecord> skipped;
  for (const auto& r : records) {
    if (!r.correct()) {
      skipped.push_back({r.image_id, AccumulateOutcome::skipped_misclassified});
    } else if (!(r.confidence > o.tau)) {
      skipped.push_back({r.image_id, AccumulateOutcome::skipped_low_confidence});
    }
  }
  spdlog::info("{} of {} records will not qualify for accumulation at tau={}", skipped.size(), records.size(), o.tau);
  const std::string skip_log = or_default(o.skip_log, o.records_out + ".skips.jsonl");
  write_skip_log(skip_log, skipped);
  mw.output(skip_log);

  if (!o.records_only) {
    CfeConfig cfe;
    cfe.sparsity_weight = o.sparsity_weight;
    cfe.logits_loss = o.logits_loss;
    cfe.max_iterations = o.max_iterations;
    cfe.mask_init = o.mask_init;
    cfe.tolerance = o.tolerance;
    cfe.learning_rate = o.cfe_learning_rate;
    cfe.validate();
    std::vector<MCFilterSet> sets(records.size());
    std::vector<std::exception_ptr> errors(records.size());
    const long count = static_cast<long>(records.size());
#pragma omp parallel for schedule(dynamic, 8)
    for (long i = 0; i < count; ++i) {
      try {
        sets[i] = identify_mc_filters(model, data.image(i), records[i].inferred_class, cfe);
        sets[i].image_id = records[i].image_id;
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
    for (const auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
    write_mc_sets(o.mc_out, sets);
    mw.output(o.mc_out);
  }
  return mw.finish(or_default(o.manifest, default_manifest_path(o.records_out)));
}

Manifest run_accumulate(const AccumulateOptions& o) {
  require(o.records, "records");
  require(o.mc, "mc");
  require(o.profiles_out, "out");
  ManifestWriter mw("accumulate", o, 0);
  mw.input(o.records);
  mw.input(o.mc);
  std::vector<SkippedRecord> skipped;
  const auto profiles = accumulate_all(read_records(o.records), read_mc_sets(o.mc), o.tau, &skipped);
  spdlog::info("accumulated profiles for {} classes; skipped {} records", profiles.size(), skipped.size());
  save_profiles(o.profiles_out, profiles);
  mw.output(o.profiles_out);
  const std::string skip_log = or_default(o.skip_log, o.profiles_out + ".skips.jsonl");
  write_skip_log(skip_log, skipped);
  mw.output(skip_log);
  return mw.finish(or_default(o.manifest, default_manifest_path(o.profiles_out)));
}

Manifest run_detect(const DetectOptions& o) {
  for (auto [value, name] : {std::pair{&o.train_records, "train-records"}, {&o.test_records, "test-records"},
                             {&o.profiles, "profiles"}, {&o.summary_out, "summary-out"}}) {
    require(*value, name);
  }
  if (o.local == "mc") {
    require(o.train_mc, "train-mc");
    require(o.test_mc, "test-mc");
  } else if (o.local != "activation_map") {
    throw UsageError(fmt::format("unknown local filter source '{}'", o.local));
  }
  if (o.population != "per_class" && o.population != "global") {
    throw UsageError(fmt::format("unknown threshold population '{}'", o.population));
  }
  if (o.rows.empty()) throw UsageError("no detection rows configured");
  std::vector<DetectionConfig> configs;
  for (const auto& row : o.rows) {
    DetectionConfig c;
    c.metric = parse_metric(row.metric);
    c.skip_threshold = row.skip_threshold;
    c.freq_threshold = row.freq_threshold;
    c.recall_floor = o.recall_floor;
    c.population = o.population == "global" ? ThresholdPopulation::global : ThresholdPopulation::per_class;
    c.local = o.local == "mc" ? LocalSource::mc_filters : LocalSource::activation_map;
    c.validate();
    configs.push_back(c);
  }

  ManifestWriter mw("detect", o, 0);
  for (const auto* p : {&o.train_records, &o.train_mc, &o.test_records, &o.test_mc, &o.profiles}) mw.input(*p);
  const auto train_records = read_records(o.train_records);
  const auto test_records = read_records(o.test_records);
  const auto train_mc = o.local == "mc" ? read_mc_sets(o.train_mc) : std::vector<MCFilterSet>{};
  const auto test_mc = o.local == "mc" ? read_mc_sets(o.test_mc) : std::vector<MCFilterSet>{};
  const auto profiles = load_profiles(o.profiles);

  std::vector<DetectionSummary> summaries;
  std::vector<json> result_lines, score_lines;
  for (const auto& c : configs) {
    const auto globals = derive_global_sets(profiles, c.freq_threshold);
    const auto cal = calibrate_class_thresholds(train_records, train_mc, globals, c);
    const auto results = detect_all(test_records, test_mc, globals, cal.thresholds, c);
    for (const auto& r : results) {
      auto j = result_to_json(r);
      j["metric"] = to_string(c.metric);
      j["skip_threshold"] = c.skip_threshold;
      j["freq_threshold"] = c.freq_threshold;
      result_lines.push_back(std::move(j));
    }
    for (const auto& s : cal.scores) {
      score_lines.push_back({{"metric", to_string(c.metric)},
                             {"freq_threshold", c.freq_threshold},
                             {"image_id", s.image_id},
                             {"true_class", s.true_class},
                             {"score", s.score}});
    }
    summaries.push_back(detection_report(results, c, o.model_name));
    const auto& s = summaries.back();
    spdlog::info("{}: {} errors, {} detected ({:.1f}%), {} new", display_name(c.metric, c.recall_floor),
                 s.total_errors, s.errors_detected, 100.0 * s.detected_fraction(), s.new_errors);
  }
  write_detection_csv(o.summary_out, summaries);
  mw.output(o.summary_out);
  const auto results_out = or_default(o.results_out, o.summary_out + ".results.jsonl");
  write_json_lines(results_out, result_lines);
  mw.output(results_out);
  const auto scores_out = or_default(o.scores_out, o.summary_out + ".scores.jsonl");
  write_json_lines(scores_out, score_lines);
  mw.output(scores_out);
  return mw.finish(or_default(o.manifest, default_manifest_path(o.summary_out)));
}

Manifest run_debug(const DebugOptions& o) {
  for (auto [value, name] : {std::pair{&o.train_dir, "train"}, {&o.test_dir, "test"}, {&o.model, "model"},
                             {&o.profiles, "profiles"}, {&o.out_model, "out"}}) {
    require(*value, name);
  }
  if (o.grid) require(o.grid_csv, "grid-csv");
  ManifestWriter mw("debug", o, o.seed);
  for (const auto* p : {&o.train_dir, &o.test_dir, &o.model, &o.profiles}) mw.input(*p);

  const auto train = load_image_dir(o.train_dir);
  const auto test = load_image_dir(o.test_dir);
  const auto base = Classifier::load(o.model);
  const auto globals = derive_global_sets(load_profiles(o.profiles), o.freq_threshold);

  DebugConfig cfg;
  cfg.lambda_mc = o.lambda_mc;
  cfg.lambda_nonmc = o.lambda_nonmc;
  cfg.tau = o.tau;
  cfg.t = o.t;
  cfg.epochs = o.epochs;
  cfg.batch_size = o.batch_size;
  cfg.learning_rate = o.learning_rate;
  cfg.momentum = o.momentum;
  cfg.seed = o.seed;
  cfg.soft_activation = o.soft_activation;

  if (o.grid) {
    const auto report = run_grid(base, train, test, globals, cfg, reference_grid());
    write_grid_csv(o.grid_csv, report);
    mw.output(o.grid_csv);
    report.best_model->save(o.out_model);
    mw.output(o.out_model);
  } else {
    const auto res = debug_train(base, train, test, globals, cfg);
    res.classifier.save(o.out_model);
    mw.output(o.out_model);
    const auto log_csv = or_default(o.log_csv, o.out_model + ".log.csv");
    write_epoch_log(log_csv, res.outcome);
    mw.output(log_csv);
    const auto outcome_out = or_default(o.outcome_out, o.out_model + ".outcome.json");
    std::ofstream(outcome_out, std::ios::trunc) << outcome_to_json(res.outcome).dump(2) << '\n';
    mw.output(outcome_out);
  }
  return mw.finish(or_default(o.manifest, default_manifest_path(o.out_model)));
}

Manifest run_recall_delta(const RecallDeltaOptions& o) {
  require(o.base_records, "base");
  require(o.debugged_records, "debugged");
  require(o.out, "out");
  if (o.top_k < 0) throw UsageError("top-k must be non-negative");
  ManifestWriter mw("report-recall-delta", o, 0);
  mw.input(o.base_records);
  mw.input(o.debugged_records);
  std::vector<std::string> names;
  if (!o.classes.empty()) {
    mw.input(o.classes);
    std::ifstream is(o.classes);
    if (!is) throw FormatError(fmt::format("cannot open {}", o.classes));
    for (std::string line; std::getline(is, line);) {
      if (!line.empty()) names.push_back(line);
    }
  }
  const auto ranked = class_recall_delta(read_records(o.base_records), read_records(o.debugged_records), names);
  write_recall_delta_csv(o.out, ranked, static_cast<std::size_t>(o.top_k));
  mw.output(o.out);
  return mw.finish(or_default(o.manifest, default_manifest_path(o.out)));
}

Manifest run_saliency(const SaliencyOptions& o) {
  require(o.model, "model");
  require(o.image, "image");
  require(o.out, "out");
  ManifestWriter mw("report-saliency", o, 0);
  mw.input(o.model);
  mw.input(o.image);
  const auto model = Classifier::load(o.model);
  int w = 0, h = 0;
  const auto pixels = read_pgm(o.image, w, h);
  const int cls = o.class_index >= 0 ? o.class_index : predict(model, pixels).inferred_class;
  saliency_overlay(model, pixels, cls, o.out, o.alpha);
  mw.output(o.out);
  return mw.finish(or_default(o.manifest, default_manifest_path(o.out)));
}

Manifest rerun(const std::string& manifest_path, bool verify) {
  const auto m = read_manifest(manifest_path);
  Manifest fresh;
  auto with_path = [&](auto options) {
    options.manifest = manifest_path;
    return options;
  };
  try {
    if (m.command == "bootstrap") {
      fresh = run_bootstrap(with_path(m.config.get<BootstrapOptions>()));
    } else if (m.command == "extract") {
      fresh = run_extract(with_path(m.config.get<ExtractOptions>()));
    } else if (m.command == "accumulate") {
      fresh = run_accumulate(with_path(m.config.get<AccumulateOptions>()));
    } else if (m.command == "detect") {
      fresh = run_detect(with_path(m.config.get<DetectOptions>()));
    } else if (m.command == "debug") {
      fresh = run_debug(with_path(m.config.get<DebugOptions>()));
    } else if (m.command == "report-recall-delta") {
      fresh = run_recall_delta(with_path(m.config.get<RecallDeltaOptions>()));
    } else if (m.command == "report-saliency") {
      fresh = run_saliency(with_path(m.config.get<SaliencyOptions>()));
    } else {
      throw FormatError(fmt::format("manifest names unknown command '{}'", m.command));
    }
  } catch (const json::exception& e) {
    throw FormatError(fmt::format("manifest config does not match command {}: {}", m.command, e.what()));
  }
  if (verify) {
    for (const auto& [path, digest] : m.outputs) {
      auto it = fresh.outputs.find(path);
      if (it == fresh.outputs.end() || it->second != digest) {
        throw FormatError(fmt::format("rerun of {} produced a different {}", m.command, path));
      }
    }
  }
  return fresh;
}

}  // namespace cfdebug
