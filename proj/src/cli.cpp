/**
 * Copyright 2026 The pumetric Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "pumetric/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <thread>

#include "pumetric/config.hpp"
#include "pumetric/error.hpp"
#include "pumetric/io.hpp"

namespace pumetric {
namespace {

namespace fs = std::filesystem;

struct CommonFlags {
  std::string config;
  std::string out;
  std::uint64_t seed = 0;
  std::string variant;
  double multiplier = 0.0;
  CLI::Option* seed_opt = nullptr;
  CLI::Option* multiplier_opt = nullptr;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
  cmd->add_option("--config", flags.config, "experiment config (JSON); defaults apply when omitted");
  cmd->add_option("--out", flags.out, "output directory (overrides output_dir)");
  flags.seed_opt = cmd->add_option("--seed", flags.seed, "seed override");
  cmd->add_option("--variant", flags.variant, "pm, p2m-all, p2m, p3m-ori, p3m or pn");
  flags.multiplier_opt = cmd->add_option("--multiplier", flags.multiplier, "class-prior multiplier");
}

// Config file, then flag overrides. The seed override is per command.
ExperimentConfig resolve_config(const CommonFlags& flags) {
  ExperimentConfig config = flags.config.empty() ? default_experiment_config() : load_experiment_config(flags.config);
  if (!flags.out.empty()) config.output_dir = flags.out;
  if (!flags.variant.empty()) config.priors.variant = parse_variant(flags.variant);
  if (flags.multiplier_opt->count()) {
    if (!(flags.multiplier >= 1.0)) throw ConfigError("--multiplier must be >= 1");
    config.priors.prior_multiplier = flags.multiplier;
  }
  config.train.priors.globals = config.priors;
  config.grad_check.globals = config.priors;
  return config;
}

std::string fixed(double value, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, value);
  return buf;
}

std::string jsonl(const std::vector<StepRecord>& log) {
  std::string text;
  for (const StepRecord& r : log) text += step_record_to_json(r).dump() + "\n";
  return text;
}

// Observed labels standing in for truth, for runs without a labeled test set.
PuDataset observed_as_truth(const PuDataset& data) {
  return PuDataset(data.meta(), data.feature_matrix(), data.observed_matrix(), data.observed_matrix());
}

void write_metrics(const fs::path& dir, const MetricsReport& report, const std::string& reference) {
  const ordered_json doc = metrics_to_json(report, reference);
  validate_metrics_json(doc);
  atomic_write(dir / "metrics.json", doc.dump(2) + "\n");
  atomic_write(dir / "metrics.txt", metrics_table(report));
}

int cmd_gen_data(const CommonFlags& flags, std::ostream& out) {
  ExperimentConfig config = resolve_config(flags);
  if (flags.seed_opt->count()) config.gen.seed = flags.seed;
  const PuDataset train_set = generate(config.gen);
  const PuDataset test_set = generate(config.test_spec());
  const fs::path dir = config.output_dir;
  write_dataset(train_set, dir / "train.jsonl");
  write_dataset(test_set, dir / "test.jsonl");

  char line[128];
  std::snprintf(line, sizeof(line), "%-6s %8s %8s %10s %10s\n", "class", "pi_true", "erasure", "true_prior",
                "obs_prior");
  out << line;
  for (std::size_t k = 0; k < train_set.num_classes(); ++k) {
    std::size_t pos = 0, obs = 0;
    for (std::size_t j = 0; j < train_set.size(); ++j) {
      pos += train_set.truth(j, k) == 1;
      obs += train_set.observed(j, k) == 1;
    }
    const double n = static_cast<double>(train_set.size());
    std::snprintf(line, sizeof(line), "%-6zu %8s %8s %10s %10s\n", k + 1, fixed(config.gen.pi_true[k]).c_str(),
                  fixed(config.gen.erasure[k]).c_str(), fixed(pos / n).c_str(), fixed(obs / n).c_str());
    out << line;
  }
  out << "wrote " << (dir / "train.jsonl").string() << " (" << train_set.size() << " samples) and "
      << (dir / "test.jsonl").string() << " (" << test_set.size() << " samples)\n";
  return kExitOk;
}

int cmd_train(const CommonFlags& flags, const std::string& data_path, const std::string& test_path,
              std::ostream& out) {
  ExperimentConfig config = resolve_config(flags);
  const fs::path dir = config.output_dir;
  const PuDataset data = read_dataset(data_path.empty() ? dir / "train.jsonl" : fs::path(data_path));

  TrainConfig train_config = config.train;
  if (flags.seed_opt->count()) train_config.seed = flags.seed;
  train_config.priors = build_prior_config(data, config.priors);
  TrainResult result = train(train_config, data);

  MetricsReport report;
  std::string reference = "truth";
  if (!test_path.empty()) {
    report = evaluate(result.params, read_dataset(test_path));
  } else if (data.has_truth()) {
    report = result.report;
  } else {
    report = evaluate(result.params, observed_as_truth(data));
    reference = "observed";
  }
  report.step_log = std::move(result.report.step_log);

  const fs::path run_dir = dir / std::string(to_string(config.priors.variant));
  write_params(result.params, run_dir / "params.json");
  atomic_write(run_dir / "priors.json", prior_config_to_json(train_config.priors).dump(2) + "\n");
  write_metrics(run_dir, report, reference);
  atomic_write(run_dir / "steplog.jsonl", jsonl(report.step_log));
  out << metrics_table(report);
  out << "wrote " << run_dir.string() << "/{params.json,priors.json,metrics.json,metrics.txt,steplog.jsonl}\n";
  return kExitOk;
}

int cmd_eval(const CommonFlags& flags, const std::string& params_path, const std::string& data_path,
             std::ostream& out) {
  const ExperimentConfig config = resolve_config(flags);
  const fs::path dir = config.output_dir;
  const ModelParams params = read_params(params_path);
  const PuDataset data = read_dataset(data_path.empty() ? dir / "test.jsonl" : fs::path(data_path));
  if (!data.has_truth()) throw UsageError("eval needs a dataset that carries true labels");
  const MetricsReport report = evaluate(params, data);
  write_metrics(dir / "eval", report, "truth");
  out << metrics_table(report);
  out << "wrote " << (dir / "eval").string() << "/{metrics.json,metrics.txt}\n";
  return kExitOk;
}

std::size_t sweep_threads() {
  std::size_t threads = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("P3M_THREADS")) {
    char* end = nullptr;
    const unsigned long long cap = std::strtoull(env, &end, 10);
    if (end == env || *end != '\0' || cap == 0) throw UsageError("P3M_THREADS must be a positive integer");
    threads = std::min<std::size_t>(threads, cap);
  }
  return threads;
}

int cmd_sweep(const CommonFlags& flags, const std::string& data_path, const std::string& test_path,
              std::ostream& out) {
  ExperimentConfig config = resolve_config(flags);
  if (flags.seed_opt->count()) config.sweep_seeds = {flags.seed};
  if (flags.multiplier_opt->count()) config.sweep_multipliers = {flags.multiplier};
  if (config.sweep_multipliers.empty()) throw ConfigError("sweep.multipliers must not be empty");
  if (data_path.empty() != test_path.empty()) throw UsageError("--data and --test must be given together");

  const PuDataset train_set = data_path.empty() ? generate(config.gen) : read_dataset(data_path);
  const PuDataset test_set = test_path.empty() ? generate(config.test_spec()) : read_dataset(test_path);
  const SweepTable table = sweep_prior_multiplier(config.train, config.sweep_multipliers, config.sweep_seeds,
                                                  train_set, test_set, sweep_threads());

  ordered_json priors = ordered_json::array();
  for (std::size_t m = 0; m < config.sweep_multipliers.size(); ++m) {
    priors.push_back(prior_config_to_json(table.cells[m * config.sweep_seeds.size()].priors));
  }
  const fs::path dir = config.output_dir;
  const std::string csv = sweep_csv(table);
  atomic_write(dir / "sweep.csv", csv);
  atomic_write(dir / "sweep_priors.json", priors.dump(2) + "\n");
  out << csv;
  out << "wrote " << (dir / "sweep.csv").string() << "\n";
  return kExitOk;
}

int cmd_grad_check(const CommonFlags& flags, bool corrupt, std::ostream& out) {
  ExperimentConfig config = resolve_config(flags);
  if (flags.seed_opt->count()) config.grad_check.seed = flags.seed;
  if (corrupt) {
    // Mutation fixture: a wrong analytic gradient must be caught.
    config.grad_check.corrupt = [](autodiff::Gradient& g) {
      if (!g.empty()) g.front() += 1e-3 * (1.0 + std::abs(g.front()));
    };
  }
  const GradCheckReport report = run_grad_check(config.grad_check);
  char line[256];
  std::snprintf(line, sizeof(line), "%-8s %9s %14s %8s %s\n", "variant", "instances", "max_rel_error", "clamped",
                "status");
  out << line;
  for (const VariantCheck& v : report.variants) {
    char err_text[32];
    std::snprintf(err_text, sizeof(err_text), "%.3e", v.max_relative_error);
    std::snprintf(line, sizeof(line), "%-8s %9zu %14s %8zu %s", std::string(to_string(v.variant)).c_str(),
                  v.instances, err_text, v.clamped_brackets, v.passed ? "PASS" : "FAIL");
    out << line;
    if (!v.failure.empty()) out << " (" << v.failure << ")";
    out << "\n";
  }
  out << (report.passed() ? "grad-check passed" : "grad-check FAILED") << " (tolerance "
      << format_double(config.grad_check.tolerance) << ")\n";
  return report.passed() ? kExitOk : kExitVerification;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Positive-unlabeled metric learning on synthetic multi-label data", "p3m"};
  app.require_subcommand(1);

  // One flag set per subcommand; option counts are tracked per App.
  CommonFlags gen_flags, train_flags, eval_flags, sweep_flags, grad_flags, print_flags;
  std::string data_path, test_path, params_path;
  bool corrupt = false;

  CLI::App* gen = app.add_subcommand("gen-data", "generate train.jsonl and test.jsonl");
  add_common(gen, gen_flags);
  CLI::App* trn = app.add_subcommand("train", "train one variant and write params, metrics and the step log");
  add_common(trn, train_flags);
  trn->add_option("--data", data_path, "training set (default OUT/train.jsonl)");
  trn->add_option("--test", test_path, "labeled set for the reported metrics (default: the training set)");
  CLI::App* ev = app.add_subcommand("eval", "evaluate saved params against true labels");
  add_common(ev, eval_flags);
  ev->add_option("--params", params_path, "params.json written by train")->required();
  ev->add_option("--data", data_path, "labeled dataset (default OUT/test.jsonl)");
  CLI::App* sw = app.add_subcommand("sweep", "train over prior multipliers x seeds and write sweep.csv");
  add_common(sw, sweep_flags);
  sw->add_option("--data", data_path, "training set (default: generated from the config)");
  sw->add_option("--test", test_path, "test set (default: generated from the config)");
  CLI::App* gc = app.add_subcommand("grad-check", "compare analytic and finite-difference gradients");
  add_common(gc, grad_flags);
  gc->add_flag("--corrupt-gradient", corrupt, "perturb the analytic gradient (self-test)");
  CLI::App* pc = app.add_subcommand("print-config", "print the effective config with every default");
  add_common(pc, print_flags);

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (gen->parsed()) return cmd_gen_data(gen_flags, out);
    if (trn->parsed()) return cmd_train(train_flags, data_path, test_path, out);
    if (ev->parsed()) return cmd_eval(eval_flags, params_path, data_path, out);
    if (sw->parsed()) return cmd_sweep(sweep_flags, data_path, test_path, out);
    if (gc->parsed()) return cmd_grad_check(grad_flags, corrupt, out);
    out << to_json(resolve_config(print_flags)).dump(2) << "\n";
    return kExitOk;
  } catch (const TrainingError& e) {
    err << "error: " << e.what() << "\n";
    return kExitVerification;
  } catch (const NumericError& e) {
    err << "error: " << e.what() << " (op " << e.op_kind() << ")\n";
    return kExitVerification;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
}

}  // namespace pumetric
