// Copyright (c) 2026 The fairprog Authors
// SPDX-License-Identifier: Apache-2.0

#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fairprog/harness/experiment.hpp"
#include "json.hpp"

namespace {

using nlohmann::json;

enum class Kind { integer, number, text, flag, integers, numbers };

struct Field {
  const char* flag;
  const char* path;  // JSON pointer into the config document
  Kind kind;
  const char* help;
};

const std::vector<Field>& data_fields() {
  static const std::vector<Field> f{
      {"--data-source", "/data/source", Kind::text, "'synthetic' or a CSV path"},
      {"--n", "/data/n", Kind::integer, "rows to generate"},
      {"--d", "/data/d", Kind::integer, "feature width"},
      {"--bias", "/data/bias", Kind::number, "spurious Y-Z correlation in [0, 1]"},
      {"--data-seed", "/data/seed", Kind::integer, "generator seed"},
      {"--grid", "/data/grid", Kind::flag, "generate side x side images"},
      {"--side", "/data/side", Kind::integer, "image side for grid data"},
      {"--split-seed", "/data/split_seed", Kind::integer, "split shuffle seed"},
  };
  return f;
}

const std::vector<Field>& run_fields() {
  static const std::vector<Field> f{
      {"--hidden", "/model/hidden", Kind::integers, "classifier hidden widths"},
      {"--activation", "/model/activation", Kind::text, "relu or tanh"},
      {"--lambda", "/train/lambda", Kind::number, "fairness weight"},
      {"--lambdas", "/train/lambdas", Kind::numbers, "sweep grid"},
      {"--criterion", "/train/criterion", Kind::text, "EO or DP"},
      {"--fairness-loss", "/train/fairness_loss", Kind::text, "adversarial or mmd"},
      {"--epochs", "/train/epochs", Kind::integer, "adaptation epochs"},
      {"--base-epochs", "/train/base_epochs", Kind::integer, "base training epochs"},
      {"--batch", "/train/batch", Kind::integer, "batch size"},
      {"--lr-classifier", "/train/lrs/classifier", Kind::number, "classifier learning rate"},
      {"--lr-trigger", "/train/lrs/trigger", Kind::number, "trigger learning rate"},
      {"--lr-disc", "/train/lrs/disc", Kind::number, "discriminator learning rate"},
      {"--disc-steps", "/train/disc_steps", Kind::integer, "discriminator steps per batch"},
      {"--seed", "/train/seed", Kind::integer, "base model seed"},
      {"--seeds", "/train/seeds", Kind::integers, "adaptation seeds"},
      {"--ratios", "/train/ratios", Kind::numbers, "tuning data ratios"},
      {"--blackbox", "/train/blackbox", Kind::flag, "zeroth-order trigger updates"},
      {"--queries", "/train/queries", Kind::integer, "queries per zeroth-order estimate"},
      {"--threads", "/train/threads", Kind::integer, "worker threads (0 = all cores)"},
      {"--trigger-kind", "/trigger/kind", Kind::text, "additive, concat, border, patch, soft or hard"},
      {"--trigger-size", "/trigger/size", Kind::integer, "slots, border width or patch side"},
      {"--position", "/trigger/position", Kind::text, "prefix or suffix"},
      {"--target-seed", "/transfer/target_seed", Kind::integer, "seed of the transfer target model"},
      {"--theory-target", "/theory/target", Kind::integer, "group indicated by the trigger token"},
      {"--strengths", "/theory/strengths", Kind::numbers, "trigger strengths"},
      {"--out", "/output/dir", Kind::text, "output directory"},
  };
  return f;
}

struct Bound {
  const Field* field;
  CLI::Option* option;
  std::string text;
  std::vector<std::string> list;
  bool flag = false;
};

json to_json_value(const Bound& b) {
  auto number = [&](const std::string& s) -> json {
    std::size_t used = 0;
    if (b.field->kind == Kind::integer || b.field->kind == Kind::integers) {
      if (!s.empty() && s[0] == '-') throw CLI::ValidationError(b.field->flag, "expected a nonnegative integer");
      const auto v = std::stoull(s, &used);
      if (used != s.size()) throw CLI::ValidationError(b.field->flag, "expected an integer, got " + s);
      return v;
    }
    const double v = std::stod(s, &used);
    if (used != s.size()) throw CLI::ValidationError(b.field->flag, "expected a number, got " + s);
    return v;
  };
  try {
    switch (b.field->kind) {
      case Kind::flag: return true;
      case Kind::text: return b.text;
      case Kind::integer:
      case Kind::number: return number(b.text);
      case Kind::integers:
      case Kind::numbers: {
        json arr = json::array();
        for (const auto& s : b.list) arr.push_back(number(s));
        return arr;
      }
    }
  } catch (const std::logic_error&) {
    throw CLI::ValidationError(b.field->flag, "not a valid number");
  }
  return nullptr;
}

void bind_fields(CLI::App* app, const std::vector<Field>& fields, std::vector<Bound>& out) {
  for (const auto& f : fields) {
    out.push_back(Bound{&f, nullptr, {}, {}, false});
    Bound& b = out.back();
    switch (f.kind) {
      case Kind::flag: b.option = app->add_flag(f.flag, b.flag, f.help); break;
      case Kind::integers:
      case Kind::numbers: b.option = app->add_option(f.flag, b.list, f.help)->delimiter(','); break;
      default: b.option = app->add_option(f.flag, b.text, f.help); break;
    }
  }
}

json overlay_from_flags(const std::vector<Bound>& bound) {
  json j = json::object();
  for (const auto& b : bound) {
    if (b.option->count() > 0) j[json::json_pointer(b.field->path)] = to_json_value(b);
  }
  return j;
}

/// Flags first, then the config file on top of them.
json assemble(const std::vector<Bound>& bound, const std::string& config_path) {
  json j = overlay_from_flags(bound);
  if (!config_path.empty()) {
    const std::string text = fairprog::read_file(config_path);
    json file;
    try {
      file = json::parse(text);
    } catch (const json::parse_error& e) {
      throw fairprog::ConfigError(config_path + ": byte " + std::to_string(e.byte) + ": malformed JSON");
    }
    if (!file.is_object()) throw fairprog::ConfigError(config_path + ": expected a JSON object");
    j.merge_patch(file);
  }
  return j;
}

std::string one_line(std::string s) {
  for (char& c : s) {
    if (c == '\n' || c == '\r') c = ' ';
  }
  return s;
}

int fail(const std::string& kind, const std::string& message, int code) {
  std::cerr << json{{"error", kind}, {"message", one_line(message)}}.dump() << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fairprog: fairness reprogramming experiments"};
  app.require_subcommand(1);

  std::map<std::string, std::string> protocol_of{{"train-base", "base"}};
  std::vector<std::pair<CLI::App*, std::string>> runs;
  std::vector<std::vector<Bound>> bound_per_app;
  std::vector<std::string> config_paths;
  bound_per_app.reserve(16);
  config_paths.reserve(16);

  // gen-data writes a dataset only.
  CLI::App* gen = app.add_subcommand("gen-data", "write a synthetic biased dataset as CSV");
  bound_per_app.emplace_back();
  config_paths.emplace_back();
  std::vector<Bound>& gen_bound = bound_per_app.back();
  gen_bound.reserve(data_fields().size());
  bind_fields(gen, data_fields(), gen_bound);
  std::string gen_out;
  gen->add_option("--out", gen_out, "CSV path")->required();
  gen->add_option("--config", config_paths.back(), "JSON config; its fields override flags");

  for (const char* name : {"train-base", "advin", "advpost", "reprogram", "sweep", "limited-data", "transfer", "theory", "probe"}) {
    CLI::App* sub = app.add_subcommand(name, std::string("run the ") + name + " protocol");
    bound_per_app.emplace_back();
    config_paths.emplace_back();
    std::vector<Bound>& b = bound_per_app.back();
    b.reserve(data_fields().size() + run_fields().size());
    bind_fields(sub, data_fields(), b);
    bind_fields(sub, run_fields(), b);
    sub->add_option("--config", config_paths.back(), "JSON config; its fields override flags");
    runs.emplace_back(sub, protocol_of.count(name) ? protocol_of[name] : name);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what(), 2);
  }

  try {
    if (gen->parsed()) {
      json j = assemble(gen_bound, config_paths[0]);
      j["protocol"] = "base";
      const fairprog::ExperimentConfig c = fairprog::parse_config(j);
      if (c.data.source != "synthetic") throw fairprog::ConfigError("data.source: gen-data only generates synthetic data");
      const fairprog::LabeledDataset ds = fairprog::gen_synth(c.data.gen);
      fairprog::save_csv(ds, gen_out);
      std::cout << json{{"dataset", gen_out}, {"rows", ds.n()}, {"checksum", fairprog::hex64(fairprog::checksum(ds))}}.dump()
                << "\n";
      return 0;
    }
    for (std::size_t i = 0; i < runs.size(); ++i) {
      if (!runs[i].first->parsed()) continue;
      json j = assemble(bound_per_app[i + 1], config_paths[i + 1]);
      if (j.contains("protocol") && j["protocol"] != runs[i].second) {
        throw fairprog::ConfigError("protocol: config names '" + j["protocol"].dump() + "' but the subcommand runs '" +
                                    runs[i].second + "'");
      }
      j["protocol"] = runs[i].second;
      const fairprog::ExperimentConfig c = fairprog::parse_config(j);
      const fairprog::RunResult r = fairprog::run_experiment(c);
      std::cout << json{{"output", r.dir}, {"config_hash", r.manifest["config_hash"]}}.dump() << "\n";
      return 0;
    }
  } catch (const fairprog::ConfigError& e) {
    return fail("config", e.what(), 2);
  } catch (const CLI::ValidationError& e) {
    return fail("usage", e.what(), 2);
  } catch (const fairprog::CsvError& e) {
    return fail("data", e.what(), 1);
  } catch (const fairprog::ProbeQualityError& e) {
    return fail("probe", e.what(), 1);
  } catch (const std::exception& e) {
    return fail("runtime", e.what(), 1);
  }
  return 0;
}
