// Copyright (c) 2026 The fairprog Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdio>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "fairprog/harness/config.hpp"
#include "fairprog/harness/dataset.hpp"
#include "fairprog/harness/probe.hpp"
#include "fairprog/models/io.hpp"
#include "fairprog/theory/analysis.hpp"
#include "fairprog/training/protocols.hpp"
#include "fairprog/triggers/io.hpp"
#include "json.hpp"

namespace fairprog {

struct RunResult {
  std::string dir;
  nlohmann::json manifest;
};

inline constexpr std::uint64_t probe_seed_tag = 0x5052;

namespace detail {

/// Writes files into the run directory and remembers their checksums.
class Artifacts {
 public:
  explicit Artifacts(std::string dir) : dir_(std::move(dir)) {}

  void write(const std::string& name, const std::string& contents) {
    write_file_atomic((std::filesystem::path(dir_) / name).string(), contents);
    outputs_[name] = hex64(checksum_bytes(contents));
  }

  const nlohmann::json& outputs() const { return outputs_; }
  const std::string& dir() const { return dir_; }

 private:
  std::string dir_;
  nlohmann::json outputs_ = nlohmann::json::object();
};

struct Prepared {
  LabeledDataset data;
  Splits raw;    // as generated or loaded
  Splits plain;  // at the classifier's input width, trigger slots empty
  TriggerGeometry geometry;
  NetSpec spec;
};

inline Prepared prepare(const ExperimentConfig& c) {
  Prepared p;
  if (c.data.source == "synthetic") {
    p.data = gen_synth(c.data.gen);
  } else {
    p.data = load_csv(c.data.source);
    if (c.data.gen.grid) p.data.side = c.data.gen.side;
    p.data.validate();
  }
  p.geometry = c.trigger;
  p.geometry.data_width = p.data.d();
  try {
    validate(p.geometry);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("trigger: ") + e.what());
  }
  p.raw = split(p.data, c.data.ratios, c.data.split_seed);
  p.plain = Splits{plain_dataset(p.raw.train, p.geometry), plain_dataset(p.raw.tune, p.geometry),
                   plain_dataset(p.raw.val, p.geometry), plain_dataset(p.raw.test, p.geometry)};
  p.spec = classifier_spec(model_input_width(p.geometry), p.data.classes(), c.model.hidden, c.model.activation);
  return p;
}

inline TrainConfig base_config(const ExperimentConfig& c, std::uint64_t seed, std::uint64_t init_seed) {
  TrainConfig cfg = c.train.cfg;
  cfg.epochs = c.train.base_epochs;
  cfg.lambda = 0.0;
  cfg.seed = seed;
  cfg.init_seed = init_seed;
  return cfg;
}

/// Adaptation runs share the base seed for initialization (token
/// embeddings) and take their own seed for batches and the discriminator.
inline TrainConfig adapt_config(const ExperimentConfig& c, std::uint64_t seed) {
  TrainConfig cfg = c.train.cfg;
  cfg.seed = seed;
  cfg.init_seed = c.train.seed;
  return cfg;
}

inline NetModel train_base_model(const ExperimentConfig& c, const Prepared& p, std::uint64_t seed) {
  return train_base(p.plain.train, p.spec, base_config(c, seed, c.train.seed), c.train.select ? &p.plain.val : nullptr);
}

inline Trigger run_reprogram(const ExperimentConfig& c, const Prepared& p, const NetModel& base, const LabeledDataset& tune,
                             const TrainConfig& cfg) {
  ReprogramOptions ro;
  ro.val = c.train.select ? &p.raw.val : nullptr;
  if (c.train.blackbox) {
    return reprogram_blackbox(base, tune, p.geometry, cfg, ZerothOrderOptions{c.train.queries, c.train.smoothing}, ro);
  }
  return reprogram(base, tune, p.geometry, cfg, ro);
}

inline std::string metrics_csv(const std::vector<std::pair<std::string, BiasScores>>& rows) {
  std::string out = "run,accuracy,neg_dp,neg_eo\n";
  for (const auto& [name, s] : rows) {
    out += name + "," + format_fixed(s.accuracy) + "," + format_fixed(-s.dp) + "," + format_fixed(-s.eo) + "\n";
  }
  return out;
}

inline std::string probabilities_row(const std::string& name, const std::vector<double>& p) {
  std::string out = name + "," + format_fixed(*std::max_element(p.begin(), p.end()));
  for (double v : p) out += "," + format_fixed(v);
  return out + "\n";
}

inline void run_theory(const ExperimentConfig& c, Artifacts& out) {
  const theory::TheoryWorld world = c.theory.world ? theory::TheoryWorld(*c.theory.world) : theory::reference_world();
  if (c.theory.target >= world.nz()) throw ConfigError("theory.target: group out of range");
  out.write("theory_curve.csv", theory::curve_to_csv(theory::theorem1_curve(world, c.theory.target, c.theory.strengths)));
  const auto suff = theory::check_sufficiency(world);
  std::string report;
  char buf[160];
  std::snprintf(buf, sizeof buf, "total_mass=%.17g\n", theory::enumerate_joint(world).total());
  report += buf;
  std::snprintf(buf, sizeof buf, "mi_without_trigger=%.17g\n", theory::prediction_mi(world, {}).mi);
  report += buf;
  std::snprintf(buf, sizeof buf, "sufficiency=%s documents=%zu groups=%zu shared_groups=%zu max_deviation=%.3g\n",
                suff.passed ? "pass" : "fail", suff.documents, suff.groups, suff.shared_groups, suff.max_deviation);
  report += buf;
  for (const auto& row : theory::check_assumption2(world, c.theory.target, c.theory.sigmas)) {
    std::snprintf(buf, sizeof buf, "low_posterior_mass sigma=%.17g mass=%.17g\n", row.sigma, row.mass);
    report += buf;
  }
  out.write("theory_report.txt", report);
}

}  // namespace detail

inline std::string config_hash(const ExperimentConfig& c) { return hex64(checksum_bytes(resolved_config(c).dump())); }

/// Runs one protocol end to end and writes its artifacts plus
/// `manifest.json` into the output directory.
inline RunResult run_experiment(const ExperimentConfig& c) {
  using nlohmann::json;
  detail::Artifacts out(c.output_dir);
  json manifest;
  manifest["format"] = "fairprog.manifest";
  manifest["protocol"] = to_string(c.protocol);
  manifest["config_hash"] = config_hash(c);
  manifest["seed"] = c.train.seed;
  out.write("config.json", resolved_config(c).dump(2) + "\n");

  if (c.protocol == Protocol::theory) {
    detail::run_theory(c, out);
  } else {
    const detail::Prepared p = detail::prepare(c);
    manifest["data_checksum"] = hex64(checksum(p.data));
    const NetModel base = detail::train_base_model(c, p, c.train.seed);
    const std::uint64_t before = checksum(base);
    out.write("base_model.json", serialize_model(base));
    std::vector<std::pair<std::string, BiasScores>> metrics{{"base", evaluate(base, p.plain.test)}};
    const std::uint64_t seed0 = c.train.seeds.front();

    switch (c.protocol) {
      case Protocol::base:
        break;
      case Protocol::advin: {
        TrainConfig cfg = c.train.cfg;
        cfg.seed = c.train.seed;
        cfg.init_seed = c.train.seed;
        cfg.epochs = c.train.base_epochs;
        const NetModel m = train_adv_in(p.plain.train, p.spec, cfg, c.train.select ? &p.plain.val : nullptr);
        out.write("advin_model.json", serialize_model(m));
        metrics.emplace_back("advin", evaluate(m, p.plain.test));
        break;
      }
      case Protocol::advpost: {
        const NetModel m = finetune_adv_post(base, p.plain.tune, detail::adapt_config(c, seed0));
        out.write("advpost_model.json", serialize_model(m));
        metrics.emplace_back("advpost", evaluate(m, p.plain.test));
        break;
      }
      case Protocol::reprogram: {
        const Trigger t = detail::run_reprogram(c, p, base, p.raw.tune, detail::adapt_config(c, seed0));
        out.write("trigger.json", serialize_trigger(t));
        metrics.emplace_back("reprogram", evaluate(base, t, p.raw.test));
        break;
      }
      case Protocol::sweep: {
        SweepOptions so;
        so.val = c.train.select ? &p.raw.val : nullptr;
        so.threads = c.train.threads;
        const auto cells =
            lambda_sweep(base, p.raw.tune, p.raw.test, p.geometry, c.train.lambdas, c.train.seeds, detail::adapt_config(c, seed0), so);
        out.write("sweep.csv", sweep_to_csv(points_of(cells)));
        break;
      }
      case Protocol::limited_data: {
        SweepOptions so;
        so.val = c.train.select ? &p.raw.val : nullptr;
        so.threads = c.train.threads;
        const auto points = limited_data(base, p.raw.tune, p.raw.test, p.geometry, c.train.ratios, detail::adapt_config(c, seed0), so);
        out.write("limited_data.csv", limited_data_to_csv(points));
        break;
      }
      case Protocol::transfer: {
        const Trigger t = detail::run_reprogram(c, p, base, p.raw.tune, detail::adapt_config(c, seed0));
        const NetModel target = detail::train_base_model(c, p, c.transfer_target_seed);
        const std::uint64_t target_before = checksum(target);
        out.write("trigger.json", serialize_trigger(t));
        out.write("target_model.json", serialize_model(target));
        metrics.emplace_back("source_trigger", transfer_eval(t, base, p.raw.test));
        metrics.emplace_back("target", evaluate(target, p.plain.test));
        metrics.emplace_back("target_trigger", transfer_eval(t, target, p.raw.test));
        manifest["target_checksum_before"] = hex64(target_before);
        manifest["target_checksum_after"] = hex64(checksum(target));
        break;
      }
      case Protocol::probe: {
        const Trigger t = detail::run_reprogram(c, p, base, p.raw.tune, detail::adapt_config(c, seed0));
        TrainConfig pc = detail::base_config(c, c.train.seed, derive_seed(c.train.seed, probe_seed_tag));
        const DemographicProbe probe = train_probe(p.plain.train, p.plain.val, p.spec, pc);
        out.write("trigger.json", serialize_trigger(t));
        out.write("probe_model.json", serialize_model(probe.model));
        std::string csv = "input,max_confidence";
        for (std::size_t g = 0; g < probe.model.spec().output_width(); ++g) csv += ",p_group" + std::to_string(g);
        csv += "\n";
        csv += detail::probabilities_row("null", null_probe(probe, p.geometry));
        csv += detail::probabilities_row("initial_trigger", demographic_probe(probe, init_trigger(p.geometry, c.train.seed), p.data.d()));
        csv += detail::probabilities_row("trained_trigger", demographic_probe(probe, t, p.data.d()));
        out.write("probe.csv", csv);
        out.write("probe_report.txt", "validation_auc=" + format_fixed(probe.validation_auc) + "\n");
        break;
      }
      case Protocol::theory:
        break;
    }
    out.write("metrics.csv", detail::metrics_csv(metrics));
    manifest["base_checksum_before"] = hex64(before);
    manifest["base_checksum_after"] = hex64(checksum(base));
  }
  manifest["outputs"] = out.outputs();
  write_file_atomic((std::filesystem::path(c.output_dir) / "manifest.json").string(), manifest.dump(2) + "\n");
  return {c.output_dir, manifest};
}

}  // namespace fairprog
