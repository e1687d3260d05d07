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

// cfdebug: command-line front end. Every subcommand reads and writes files
// only and leaves a JSON manifest that `cfdebug rerun` can replay.

#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "cfdebug/errors.hpp"
#include "cfdebug/pipeline.hpp"

namespace {

using namespace cfdebug;

std::vector<DetectRow> parse_rows(const std::vector<std::string>& specs, double skip, double freq,
                                  const std::string& metric) {
  if (specs.empty()) return {DetectRow{metric, skip, freq}};
  std::vector<DetectRow> rows;
  for (const auto& spec : specs) {
    DetectRow row{metric, skip, freq};
    const auto a = spec.find(':');
    row.metric = spec.substr(0, a);
    if (a != std::string::npos) {
      const auto b = spec.find(':', a + 1);
      try {
        row.skip_threshold = std::stod(spec.substr(a + 1, b - a - 1));
        if (b != std::string::npos) row.freq_threshold = std::stod(spec.substr(b + 1));
      } catch (const std::exception&) {
        throw UsageError("--row expects metric[:skip[:freq]], got '" + spec + "'");
      }
    }
    rows.push_back(row);
  }
  return rows;
}

void add_manifest(CLI::App* cmd, std::string& path) {
  cmd->add_option("--manifest", path, "Manifest path (default: next to the primary output)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Counterfactual filter profiling, error detection and debugging for CNN classifiers"};
  app.set_config("--config", "", "Read options from a key=value run file");
  app.require_subcommand(1);
  std::string log_level = "info";
  app.add_option("--log-level", log_level, "trace, debug, info, warn, error")->capture_default_str();

  BootstrapOptions boot;
  auto* b = app.add_subcommand("bootstrap", "Generate the small 10-class image set and train a base classifier");
  b->add_option("--out", boot.out_dir, "Output directory")->required();
  b->add_option("--seed", boot.seed)->capture_default_str();
  b->add_option("--train-per-class", boot.train_per_class)->capture_default_str();
  b->add_option("--test-per-class", boot.test_per_class)->capture_default_str();
  b->add_option("--image-size", boot.image_size)->capture_default_str();
  b->add_option("--noise", boot.noise)->capture_default_str();
  b->add_option("--distractor", boot.distractor_alpha)->capture_default_str();
  b->add_option("--min-contrast", boot.min_contrast)->capture_default_str();
  b->add_option("--max-contrast", boot.max_contrast)->capture_default_str();
  b->add_option("--conv-channels", boot.conv_channels)->capture_default_str()->delimiter(',');
  b->add_option("--epochs", boot.epochs)->capture_default_str();
  b->add_option("--batch-size", boot.batch_size)->capture_default_str();
  b->add_option("--lr", boot.learning_rate)->capture_default_str();
  b->add_option("--momentum", boot.momentum)->capture_default_str();
  add_manifest(b, boot.manifest);

  ExtractOptions ext;
  auto* e = app.add_subcommand("extract", "Predict, threshold activations and identify MC filters");
  e->add_option("--data", ext.data_dir, "Image directory (one subdirectory per class)")->required();
  e->add_option("--model", ext.model, "Classifier checkpoint")->required();
  e->add_option("--records-out", ext.records_out, "Prediction records (JSON lines)")->required();
  e->add_option("--mc-out", ext.mc_out, "MC filter sets (JSON lines)");
  e->add_option("--skip-log", ext.skip_log);
  e->add_flag("--records-only", ext.records_only, "Skip MC identification");
  e->add_option("--tau", ext.tau, "Confidence threshold for profile eligibility")->capture_default_str();
  e->add_option("-t,--activation-threshold", ext.t, "Binary activation threshold")->capture_default_str();
  e->add_option("--sparsity", ext.sparsity_weight)->capture_default_str();
  e->add_option("--logits-loss", ext.logits_loss, "Logit preservation (true) or target CE (false)")
      ->capture_default_str();
  e->add_option("--max-iterations", ext.max_iterations)->capture_default_str();
  e->add_option("--mask-init", ext.mask_init)->capture_default_str();
  e->add_option("--tolerance", ext.tolerance)->capture_default_str();
  e->add_option("--cfe-lr", ext.cfe_learning_rate)->capture_default_str();
  add_manifest(e, ext.manifest);

  AccumulateOptions acc;
  auto* a = app.add_subcommand("accumulate", "Build per-class filter profiles");
  a->add_option("--records", acc.records)->required();
  a->add_option("--mc", acc.mc)->required();
  a->add_option("--tau", acc.tau)->capture_default_str();
  a->add_option("--out", acc.profiles_out)->required();
  a->add_option("--skip-log", acc.skip_log);
  add_manifest(a, acc.manifest);

  DetectOptions det;
  std::vector<std::string> row_specs;
  std::string metric = "avg_recall";
  double skip = 0.90, freq = 0.15;
  auto* d = app.add_subcommand("detect", "Flag likely misclassifications on test records");
  d->add_option("--train-records", det.train_records)->required();
  d->add_option("--train-mc", det.train_mc);
  d->add_option("--test-records", det.test_records)->required();
  d->add_option("--test-mc", det.test_mc);
  d->add_option("--profiles", det.profiles)->required();
  d->add_option("--metric", metric, "avg_recall, avg_f1 or recall_floor")->capture_default_str();
  d->add_option("--skip", skip, "Confidence above which predictions are trusted (0 disables)")
      ->capture_default_str();
  d->add_option("--freq", freq, "Global filter frequency threshold")->capture_default_str();
  d->add_option("--row", row_specs, "Summary row as metric:skip:freq (repeatable)");
  d->add_option("--recall-floor", det.recall_floor)->capture_default_str();
  d->add_option("--population", det.population, "per_class or global")->capture_default_str();
  d->add_option("--local", det.local, "mc or activation_map")->capture_default_str();
  d->add_option("--model-name", det.model_name)->capture_default_str();
  d->add_option("--results-out", det.results_out);
  d->add_option("--summary-out", det.summary_out)->required();
  d->add_option("--scores-out", det.scores_out);
  add_manifest(d, det.manifest);

  DebugOptions dbg;
  auto* g = app.add_subcommand("debug", "Fine-tune with the filter alignment losses");
  g->add_option("--train", dbg.train_dir)->required();
  g->add_option("--test", dbg.test_dir)->required();
  g->add_option("--model", dbg.model)->required();
  g->add_option("--profiles", dbg.profiles)->required();
  g->add_option("--freq", dbg.freq_threshold)->capture_default_str();
  g->add_option("--lambda-mc", dbg.lambda_mc)->capture_default_str();
  g->add_option("--lambda-nonmc", dbg.lambda_nonmc)->capture_default_str();
  g->add_option("--tau", dbg.tau)->capture_default_str();
  g->add_option("-t,--activation-threshold", dbg.t)->capture_default_str();
  g->add_option("--epochs", dbg.epochs)->capture_default_str();
  g->add_option("--batch-size", dbg.batch_size)->capture_default_str();
  g->add_option("--lr", dbg.learning_rate)->capture_default_str();
  g->add_option("--momentum", dbg.momentum)->capture_default_str();
  g->add_option("--seed", dbg.seed)->capture_default_str();
  g->add_option("--soft", dbg.soft_activation, "Sigmoid-relaxed activations in the alignment losses")
      ->capture_default_str();
  g->add_flag("--grid", dbg.grid, "Run the eight-point lambda sweep plus a plain fine-tune");
  g->add_option("--out", dbg.out_model, "Debugged checkpoint (best grid point with --grid)")->required();
  g->add_option("--log-csv", dbg.log_csv);
  g->add_option("--outcome-out", dbg.outcome_out);
  g->add_option("--grid-csv", dbg.grid_csv);
  add_manifest(g, dbg.manifest);

  auto* r = app.add_subcommand("report", "Reports over existing artifacts");
  r->require_subcommand(1);
  RecallDeltaOptions rd;
  auto* rr = r->add_subcommand("recall-delta", "Per-class recall change between two result sets");
  rr->add_option("--base", rd.base_records)->required();
  rr->add_option("--debugged", rd.debugged_records)->required();
  rr->add_option("--classes", rd.classes, "Class names, one per line");
  rr->add_option("--top-k", rd.top_k)->capture_default_str();
  rr->add_option("--out", rd.out)->required();
  add_manifest(rr, rd.manifest);
  SaliencyOptions sal;
  auto* rs = r->add_subcommand("saliency", "Grad-CAM overlay for one image");
  rs->add_option("--model", sal.model)->required();
  rs->add_option("--image", sal.image)->required();
  rs->add_option("--class", sal.class_index, "Class index (default: inferred)");
  rs->add_option("--alpha", sal.alpha)->capture_default_str();
  rs->add_option("--out", sal.out, "Output .ppm")->required();
  add_manifest(rs, sal.manifest);

  std::string manifest_path;
  bool verify = false;
  auto* re = app.add_subcommand("rerun", "Replay a run from its manifest");
  re->add_option("manifest", manifest_path)->required();
  re->add_flag("--verify", verify, "Fail if any output checksum changes");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    return app.exit(err);
  }
  spdlog::set_level(spdlog::level::from_str(log_level));

  try {
    Manifest m;
    if (*b) m = run_bootstrap(boot);
    else if (*e) m = run_extract(ext);
    else if (*a) m = run_accumulate(acc);
    else if (*d) {
      det.rows = parse_rows(row_specs, skip, freq, metric);
      m = run_detect(det);
    } else if (*g) m = run_debug(dbg);
    else if (*rr) m = run_recall_delta(rd);
    else if (*rs) m = run_saliency(sal);
    else if (*re) {
      m = rerun(manifest_path, verify);
      if (verify) std::cout << "verified " << m.outputs.size() << " outputs\n";
    }
    for (const auto& [path, digest] : m.outputs) spdlog::info("wrote {} ({})", path, digest.substr(0, 12));
  } catch (const UsageError& err) {
    spdlog::error("usage: {}", err.what());
    return 2;
  } catch (const InputError& err) {
    spdlog::error("input: {}", err.what());
    return 3;
  } catch (const FormatError& err) {
    spdlog::error("format: {}", err.what());
    return 4;
  } catch (const NumericError& err) {
    spdlog::error("numeric: {}", err.what());
    return 5;
  } catch (const std::exception& err) {
    spdlog::error("{}", err.what());
    return 1;
  }
  return EXIT_SUCCESS;
}
