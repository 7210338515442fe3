// SPDX-License-Identifier: Apache-2.0
// divprompt: command-line front end for strategy discovery, experiment runs
// and reporting. Exit codes: 0 ok, 1 usage or configuration, 2 backend,
// 3 verification failed.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "divprompt/backends.hpp"
#include "divprompt/divprompt.hpp"

namespace fs = std::filesystem;
using namespace divprompt;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitBackend = 2;
constexpr int kExitVerify = 3;

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& content) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + p.string());
  out << content;
}

nlohmann::json read_json(const fs::path& p) {
  try {
    return nlohmann::json::parse(read_file(p));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(p.string() + " is not valid JSON: " + e.what());
  }
}

struct Loaded {
  RunConfigFile file;
  RunConfig run;
  TaskSpec task;
  std::vector<TaskRecord> dataset;
};

Loaded load(const std::string& config_path) {
  Loaded l;
  l.file = load_config(config_path);
  l.run = to_run_config(l.file);
  l.task = l.run.task;
  if (l.file.dataset.empty()) throw ConfigError("run config has no \"dataset\"");
  l.dataset = load_dataset(l.task, l.file.dataset);
  return l;
}

StrategyBundle bundle_or_new(const fs::path& p, TaskId task) {
  if (fs::exists(p)) {
    auto b = load_bundle(p);
    if (b.task != task) throw ConfigError("bundle " + p.string() + " belongs to task " + std::string(to_string(b.task)));
    return b;
  }
  StrategyBundle b;
  b.task = task;
  return b;
}

fs::path bundle_path(const Loaded& l, const std::string& override_path) {
  fs::path p = override_path.empty() ? l.file.bundle : fs::path(override_path);
  if (p.empty()) throw ConfigError("no strategy bundle path: set \"bundle\" in the run config or pass --bundle");
  return p;
}

void print_summary(const Summary& s) {
  std::printf("%s %s %s: accuracy %zu/%zu (%s), cost $%s%s\n", s.task.c_str(), s.mode.c_str(), s.model.c_str(),
              s.n_correct, s.n_items, format_fraction(s.accuracy()).c_str(), s.total_cost.str().c_str(),
              s.truncated ? " [truncated: budget exceeded]" : "");
}

// ---------------------------------------------------------------------------

int cmd_discover(const std::string& config, const std::string& bundle_override, DiscoveryConfig dc) {
  auto l = load(config);
  auto path = bundle_path(l, bundle_override);
  auto gateway = make_gateway(l.file);
  std::vector<std::string> questions;
  for (const auto& r : l.dataset) questions.push_back(render_question(l.task, r));
  auto bundle = bundle_or_new(path, l.task.id);
  try {
    bundle.approaches = extract_approaches(questions, dc, gateway, l.file.model, l.task.kind == AnswerKind::Choice,
                                           l.file.seed);
  } catch (const DiscoveryExhaustedError& e) {
    std::fprintf(stderr, "warning: %s\n", e.what());
    bundle.approaches = e.partial();
  }
  bundle.personas = extract_personas(describe_task(l.task.id), dc, gateway, l.file.model);
  bundle.pairs.clear();
  bundle.material.augmented.clear();
  save_bundle(bundle, path);
  std::printf("%zu approaches, %zu personas written to %s\n", bundle.approaches.size(), bundle.personas.size(),
              path.string().c_str());
  for (const auto& a : bundle.approaches) std::printf("  approach %s (%d)\n", a.name.c_str(), a.frequency);
  for (const auto& p : bundle.personas)
    std::printf("  persona %s\n", p.is_empty ? "(none)" : p.description.c_str());
  return kExitOk;
}

int cmd_select(const std::string& config, const std::string& bundle_override, std::size_t size,
               int validation_size, bool persona_only) {
  auto l = load(config);
  auto path = bundle_path(l, bundle_override);
  DiscoveryConfig dc;
  dc.validation_size = validation_size;
  dc.validate();
  if (static_cast<std::size_t>(validation_size) > l.dataset.size())
    throw ConfigError("validation slice of " + std::to_string(validation_size) + " exceeds the dataset");
  auto bundle = load_bundle(path);
  if (bundle.approaches.empty()) throw ConfigError("bundle " + path.string() + " has no approaches; run 'discover'");
  if (bundle.personas.empty()) bundle.personas.push_back(Persona::empty());
  if (size == 0) size = static_cast<std::size_t>(l.task.default_ensemble_size);
  std::vector<TaskRecord> validation(l.dataset.begin(), l.dataset.begin() + validation_size);
  auto gateway = make_gateway(l.file);
  bundle.pairs =
      select_pairs(bundle.personas, bundle.approaches, validation, size, l.task, gateway, l.file.model, persona_only);
  bundle.material.augmented.clear();
  save_bundle(bundle, path);
  for (std::size_t i = 0; i < bundle.pairs.size(); ++i) {
    const auto& p = bundle.pairs[i];
    std::printf("%zu. %s  val %s%s\n", i + 1, p.id().c_str(), format_fraction(p.val_accuracy.value_or(0)).c_str(),
                p.partial ? " (partial)" : "");
  }
  return kExitOk;
}

int cmd_augment(const std::string& config, const std::string& bundle_override, const std::string& shots_path,
                int retries) {
  auto l = load(config);
  auto path = bundle_path(l, bundle_override);
  auto bundle = load_bundle(path);
  if (bundle.pairs.empty()) throw ConfigError("bundle " + path.string() + " has no selected pairs; run 'select'");
  if (!shots_path.empty()) {
    bundle.material.shots.clear();
    auto j = read_json(shots_path);
    if (!j.is_array()) throw ConfigError("shots file must hold a JSON array");
    try {
      for (const auto& s : j) bundle.material.shots.push_back(shot_from_json(s));
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("malformed shots file: " + std::string(e.what()));
    }
  }
  if (bundle.material.shots.empty()) throw ConfigError("no few-shot examples: pass --shots");
  auto gateway = make_gateway(l.file);
  bundle.material.augmented =
      augment_examples(bundle.pairs, bundle.material.shots, l.task.kind, gateway, l.file.model, retries);
  save_bundle(bundle, path);
  std::printf("%zu augmented examples written to %s\n", bundle.material.augmented.size(), path.string().c_str());
  return kExitOk;
}

int cmd_run(const std::string& config, const std::string& log_path, const std::string& summary_path) {
  auto l = load(config);
  l.run.validate(l.dataset.size());
  auto gateway = make_gateway(l.file);
  auto result = run(l.run, l.dataset, gateway);
  if (!log_path.empty()) write_file(log_path, run_log(result.trials));
  if (!summary_path.empty()) write_file(summary_path, to_json(result.summary).dump(2) + "\n");
  print_summary(result.summary);
  return kExitOk;
}

int cmd_sweep(const std::string& config, const std::vector<std::size_t>& sizes, const std::string& out_path) {
  auto l = load(config);
  auto gateway = make_gateway(l.file);
  auto summaries = ensemble_size_sweep(l.run, sizes, l.dataset, gateway);
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& s : summaries) {
    arr.push_back(to_json(s));
    print_summary(s);
  }
  if (!out_path.empty()) write_file(out_path, arr.dump(2) + "\n");
  return kExitOk;
}

int cmd_propagation(const std::string& config, const std::string& out_path) {
  auto l = load(config);
  if (l.run.mode != PromptMode::IdivSe) throw ConfigError("propagation needs a run config with mode IDIV_SE");
  auto gateway = make_gateway(l.file);
  auto result = run(l.run, l.dataset, gateway);
  auto report = error_propagation_study(l.run, result.trials, l.dataset, gateway);
  if (!out_path.empty()) write_file(out_path, to_json(report).dump(2) + "\n");
  std::printf("qualifying items: %zu, propagated: %zu, rate: %s\n", report.items.size(), report.propagated,
              report.rate ? format_fraction(*report.rate).c_str() : "undefined (no qualifying items)");
  for (const auto& it : report.items)
    std::printf("  %s: %s\n", it.item_id.c_str(), it.propagated ? "propagated" : "not propagated");
  return kExitOk;
}

int cmd_verify(const std::string& instance_path, const std::string& plan_path, const std::string& coloring_path) {
  if (plan_path.empty() == coloring_path.empty()) throw ConfigError("verify needs exactly one of --plan or --coloring");
  auto j = read_json(instance_path);
  if (!plan_path.empty()) {
    blocks::Instance inst;
    try {
      inst = blocks::instance_from_json(j);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("malformed blocksworld instance: " + std::string(e.what()));
    }
    blocks::Plan plan;
    try {
      plan = parse_plan(read_file(plan_path));
    } catch (const ParseError& e) {
      std::printf("invalid: %s\n", e.what());
      return kExitVerify;
    }
    auto report = blocks::validate_plan(inst.initial, inst.goal, plan);
    if (!report.valid) {
      const auto& f = *report.failed_step;
      std::printf("invalid: step %zu: %s\n", f.index + 1, f.message.c_str());
      return kExitVerify;
    }
    if (!report.goal_satisfied) {
      std::printf("valid, goal not satisfied\n");
      return kExitVerify;
    }
    std::printf("valid, goal satisfied\n");
    return kExitOk;
  }
  coloring::Graph graph = [&] {
    try {
      return coloring::graph_from_json(j);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("malformed graph instance: " + std::string(e.what()));
    }
  }();
  auto parsed = parse_coloring(read_file(coloring_path), graph.n_vertices());
  auto verdict = coloring::verify_coloring(graph, parsed.coloring);
  std::printf("%s\n", verdict.summary().c_str());
  for (const auto& [u, v] : verdict.conflicts) std::printf("  conflict: %d-%d\n", u, v);
  return verdict.valid() ? kExitOk : kExitVerify;
}

int cmd_report(const std::vector<std::string>& inputs, const std::string& out_csv, const std::string& out_json) {
  std::vector<Summary> summaries;
  for (const auto& in : inputs) {
    auto j = read_json(in);
    if (j.is_array())
      for (const auto& s : j) summaries.push_back(summary_from_json(s));
    else
      summaries.push_back(summary_from_json(j));
  }
  auto report = summarize_report(summaries);
  if (!out_csv.empty()) write_file(out_csv, report.csv);
  else std::fputs(report.csv.c_str(), stdout);
  if (!out_json.empty()) write_file(out_json, report.document.dump(2) + "\n");
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Diverse-prompting ensembles: discover strategies, run experiments, report cost and accuracy"};
  app.require_subcommand(1);

  std::string config, bundle, shots, log_path, summary_path, out, instance, plan, coloring_file, out_json;
  DiscoveryConfig dc;
  std::size_t size = 0;
  int validation_size = 10, retries = 2;
  bool persona_only = false;
  std::vector<std::size_t> sizes;
  std::vector<std::string> inputs;

  auto* discover = app.add_subcommand("discover", "Find frequent approaches and personas; writes the strategy bundle");
  discover->add_option("-c,--config", config, "Run config file")->required()->check(CLI::ExistingFile);
  discover->add_option("--bundle", bundle, "Bundle path (default: the config's)");
  discover->add_option("--per-call", dc.approaches_per_call, "Approaches requested per call")->capture_default_str();
  discover->add_option("--repetitions", dc.repetitions, "Discovery calls")->capture_default_str();
  discover->add_option("--approaches", dc.keep_approaches, "Approaches to keep")->capture_default_str();
  discover->add_option("--personas", dc.keep_personas, "Personas to keep")->capture_default_str();

  auto* select = app.add_subcommand("select", "Score persona x approach pairs on a validation slice");
  select->add_option("-c,--config", config, "Run config file")->required()->check(CLI::ExistingFile);
  select->add_option("--bundle", bundle, "Bundle path (default: the config's)");
  select->add_option("--size", size, "Pairs to keep (default: task ensemble size)");
  select->add_option("--validation", validation_size, "Validation items, taken from the start of the dataset")
      ->capture_default_str();
  select->add_flag("--persona-only", persona_only, "Also score persona-only pairs");

  auto* augment = app.add_subcommand("augment", "Re-solve few-shot examples in the style of each selected pair");
  augment->add_option("-c,--config", config, "Run config file")->required()->check(CLI::ExistingFile);
  augment->add_option("--bundle", bundle, "Bundle path (default: the config's)");
  augment->add_option("--shots", shots, "JSON array of few-shot examples")->check(CLI::ExistingFile);
  augment->add_option("--retries", retries, "Retries per rejected generation")->capture_default_str();

  auto* run_cmd = app.add_subcommand("run", "Run an experiment; writes the run log and summary");
  run_cmd->add_option("-c,--config", config, "Run config file")->required()->check(CLI::ExistingFile);
  run_cmd->add_option("--log", log_path, "Run log output (JSON lines)");
  run_cmd->add_option("--summary", summary_path, "Summary output (JSON)");

  auto* sweep = app.add_subcommand("sweep", "Summaries for several ensemble sizes");
  sweep->add_option("-c,--config", config, "Run config file")->required()->check(CLI::ExistingFile);
  sweep->add_option("--sizes", sizes, "Ensemble sizes")->required()->delimiter(',');
  sweep->add_option("-o,--out", out, "Summaries output (JSON array)");

  auto* propagation = app.add_subcommand("propagation", "Error-propagation study on an IDIV_SE run");
  propagation->add_option("-c,--config", config, "IDIV_SE run config")->required()->check(CLI::ExistingFile);
  propagation->add_option("-o,--out", out, "Report output (JSON)");

  auto* verify = app.add_subcommand("verify", "Check a plan or coloring against an instance");
  verify->add_option("--instance", instance, "Blocksworld instance or graph (JSON)")->required()->check(CLI::ExistingFile);
  verify->add_option("--plan", plan, "Plan file, one action per line")->check(CLI::ExistingFile);
  verify->add_option("--coloring", coloring_file, "Coloring file, one 'v: Color k' line per vertex")
      ->check(CLI::ExistingFile);

  auto* report = app.add_subcommand("report", "Merge summaries into a cost/accuracy table with Pareto membership");
  report->add_option("inputs", inputs, "Summary JSON files")->required()->check(CLI::ExistingFile);
  report->add_option("-o,--out", out, "CSV output (default: stdout)");
  report->add_option("--json", out_json, "Structured report output");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*discover) return cmd_discover(config, bundle, dc);
    if (*select) return cmd_select(config, bundle, size, validation_size, persona_only);
    if (*augment) return cmd_augment(config, bundle, shots, retries);
    if (*run_cmd) return cmd_run(config, log_path, summary_path);
    if (*sweep) return cmd_sweep(config, sizes, out);
    if (*propagation) return cmd_propagation(config, out);
    if (*verify) return cmd_verify(instance, plan, coloring_file);
    if (*report) return cmd_report(inputs, out, out_json);
  } catch (const BackendError& e) {
    std::fprintf(stderr, "backend error: %s\n", e.what());
    return kExitBackend;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  } catch (const std::filesystem::filesystem_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  }
  return kExitConfig;
}
