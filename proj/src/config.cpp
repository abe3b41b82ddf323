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

#include "pumetric/config.hpp"

#include <cstdio>
#include <set>
#include <sstream>

#include "pumetric/error.hpp"
#include "pumetric/io.hpp"

namespace pumetric {
namespace {

// Strict reader for one JSON object: remembers which keys were consumed so
// leftovers can be reported by name.
class Section {
 public:
  Section(const ordered_json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw SchemaError("config field '" + path_ + "' must be an object");
  }

  bool has(const char* key) const { return obj_.contains(key); }

  template <typename T>
  void read(const char* key, T& out) {
    if (!obj_.contains(key)) return;
    seen_.insert(key);
    try {
      out = obj_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw SchemaError("config field '" + name(key) + "' has the wrong type");
    }
  }

  /// Number broadcast to `count` entries, or an explicit array.
  void read_per_class(const char* key, std::vector<double>& out, std::size_t count) {
    if (!obj_.contains(key)) return;
    seen_.insert(key);
    const auto& v = obj_.at(key);
    if (v.is_number()) {
      out.assign(count, v.get<double>());
      return;
    }
    read_unchecked(key, out);
  }

  Section child(const char* key) {
    seen_.insert(key);
    return Section(obj_.at(key), name(key));
  }

  void finish() const {
    for (const auto& item : obj_.items()) {
      if (!seen_.count(item.key())) throw SchemaError("unknown config field '" + name(item.key().c_str()) + "'");
    }
  }

 private:
  std::string name(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

  template <typename T>
  void read_unchecked(const char* key, T& out) {
    try {
      out = obj_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw SchemaError("config field '" + name(key) + "' has the wrong type");
    }
  }

  const ordered_json& obj_;
  std::string path_;
  std::set<std::string> seen_;
};

template <typename T>
T field(const ordered_json& doc, const char* key, const char* where) {
  if (!doc.contains(key)) throw SchemaError(std::string(where) + ": missing field '" + key + "'");
  try {
    return doc.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw SchemaError(std::string(where) + ": field '" + key + "' has the wrong type");
  }
}

std::string fixed(double value, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, value);
  return buf;
}

}  // namespace

GenSpec ExperimentConfig::test_spec() const {
  GenSpec spec = gen;
  spec.n = n_test;
  spec.seed = test_seed;
  return spec;
}

ExperimentConfig default_experiment_config() {
  ExperimentConfig config;
  config.gen.n = 5000;
  config.gen.d_in = 32;
  config.gen.num_classes = 8;
  config.gen.pi_true.assign(8, 0.2);
  config.gen.erasure.assign(8, 0.7);
  config.gen.separation = 1.0;
  config.gen.noise = 0.35;
  config.gen.seed = 1;
  config.n_test = 5000;
  config.test_seed = 2;
  return config;
}

ordered_json to_json(const ExperimentConfig& c) {
  ordered_json doc;
  doc["gen"] = {{"n_train", c.gen.n},       {"n_test", c.n_test},       {"d_in", c.gen.d_in},
                {"num_classes", c.gen.num_classes}, {"pi_true", c.gen.pi_true}, {"erasure", c.gen.erasure},
                {"separation", c.gen.separation},   {"noise", c.gen.noise},     {"seed", c.gen.seed},
                {"test_seed", c.test_seed}, {"task_seed", c.gen.task_seed}};
  doc["model"] = {{"hidden_dims", c.train.hidden_dims}, {"embedding_dim", c.train.embedding_dim}};
  doc["train"] = {{"epochs", c.train.epochs},
                  {"batch_size", c.train.batch_size},
                  {"learning_rate", c.train.learning_rate},
                  {"warmup_fraction", c.train.warmup_fraction},
                  {"seed", c.train.seed},
                  {"adam",
                   {{"beta1", c.train.adam.beta1}, {"beta2", c.train.adam.beta2}, {"epsilon", c.train.adam.epsilon}}}};
  doc["priors"] = {{"variant", std::string(to_string(c.priors.variant))},
                   {"lambda", c.priors.lambda},
                   {"alpha", c.priors.alpha},
                   {"nu", c.priors.nu},
                   {"dropout_rate", c.priors.dropout_rate},
                   {"multiplier", c.priors.prior_multiplier}};
  doc["sweep"] = {{"multipliers", c.sweep_multipliers}, {"seeds", c.sweep_seeds}};
  doc["grad_check"] = {{"instances", c.grad_check.instances},     {"max_samples", c.grad_check.max_samples},
                       {"max_dim", c.grad_check.max_dim},         {"max_classes", c.grad_check.max_classes},
                       {"epsilon", c.grad_check.epsilon},         {"tolerance", c.grad_check.tolerance},
                       {"seed", c.grad_check.seed}};
  doc["output_dir"] = c.output_dir;
  return doc;
}

ExperimentConfig experiment_config_from_json(const ordered_json& doc) {
  ExperimentConfig c = default_experiment_config();
  Section root(doc, "");
  if (root.has("gen")) {
    Section s = root.child("gen");
    s.read("n_train", c.gen.n);
    s.read("n_test", c.n_test);
    s.read("d_in", c.gen.d_in);
    const std::size_t old_k = c.gen.num_classes;
    s.read("num_classes", c.gen.num_classes);
    if (c.gen.num_classes != old_k) {
      // Keep per-class defaults meaningful when only K changes.
      c.gen.pi_true.assign(c.gen.num_classes, c.gen.pi_true.empty() ? 0.2 : c.gen.pi_true.front());
      c.gen.erasure.assign(c.gen.num_classes, c.gen.erasure.empty() ? 0.7 : c.gen.erasure.front());
    }
    s.read_per_class("pi_true", c.gen.pi_true, c.gen.num_classes);
    s.read_per_class("erasure", c.gen.erasure, c.gen.num_classes);
    s.read("separation", c.gen.separation);
    s.read("noise", c.gen.noise);
    s.read("seed", c.gen.seed);
    s.read("test_seed", c.test_seed);
    s.read("task_seed", c.gen.task_seed);
    s.finish();
  }
  if (root.has("model")) {
    Section s = root.child("model");
    s.read("hidden_dims", c.train.hidden_dims);
    s.read("embedding_dim", c.train.embedding_dim);
    s.finish();
  }
  if (root.has("train")) {
    Section s = root.child("train");
    s.read("epochs", c.train.epochs);
    s.read("batch_size", c.train.batch_size);
    s.read("learning_rate", c.train.learning_rate);
    s.read("warmup_fraction", c.train.warmup_fraction);
    s.read("seed", c.train.seed);
    if (s.has("adam")) {
      Section a = s.child("adam");
      a.read("beta1", c.train.adam.beta1);
      a.read("beta2", c.train.adam.beta2);
      a.read("epsilon", c.train.adam.epsilon);
      a.finish();
    }
    s.finish();
  }
  if (root.has("priors")) {
    Section s = root.child("priors");
    std::string variant(to_string(c.priors.variant));
    s.read("variant", variant);
    try {
      c.priors.variant = parse_variant(variant);
    } catch (const UsageError& e) {
      throw SchemaError(std::string("config field 'priors.variant': ") + e.what());
    }
    s.read("lambda", c.priors.lambda);
    s.read("alpha", c.priors.alpha);
    s.read("nu", c.priors.nu);
    s.read("dropout_rate", c.priors.dropout_rate);
    s.read("multiplier", c.priors.prior_multiplier);
    s.finish();
  }
  if (root.has("sweep")) {
    Section s = root.child("sweep");
    s.read("multipliers", c.sweep_multipliers);
    s.read("seeds", c.sweep_seeds);
    s.finish();
  }
  if (root.has("grad_check")) {
    Section s = root.child("grad_check");
    s.read("instances", c.grad_check.instances);
    s.read("max_samples", c.grad_check.max_samples);
    s.read("max_dim", c.grad_check.max_dim);
    s.read("max_classes", c.grad_check.max_classes);
    s.read("epsilon", c.grad_check.epsilon);
    s.read("tolerance", c.grad_check.tolerance);
    s.read("seed", c.grad_check.seed);
    s.finish();
  }
  root.read("output_dir", c.output_dir);
  root.finish();

  c.train.priors.globals = c.priors;
  c.grad_check.globals = c.priors;
  c.gen.validate();
  c.train.validate();
  if (c.n_test == 0) throw ConfigError("gen.n_test must be positive");
  if (!(c.priors.lambda > 0.0)) throw ConfigError("priors.lambda must be positive");
  if (!(c.priors.alpha > 0.0)) throw ConfigError("priors.alpha must be positive");
  if (!(c.priors.nu >= 0.0)) throw ConfigError("priors.nu must be >= 0");
  if (!(c.priors.prior_multiplier >= 1.0)) throw ConfigError("priors.multiplier must be >= 1");
  return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  ordered_json doc;
  try {
    doc = ordered_json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what(), 0);
  }
  return experiment_config_from_json(doc);
}

ordered_json params_to_json(const ModelParams& params) {
  ordered_json doc;
  doc["format_version"] = kParamsFormatVersion;
  doc["dims"] = std::vector<std::size_t>(params.dims().begin(), params.dims().end());
  doc["num_classes"] = params.num_classes();
  ordered_json layers = ordered_json::array();
  const auto values = params.values();
  for (const LayerLayout& layer : params.layers()) {
    const auto w = values.subspan(layer.weight_offset, layer.in * layer.out);
    const auto b = values.subspan(layer.bias_offset, layer.out);
    layers.push_back({{"in", layer.in},
                      {"out", layer.out},
                      {"weight", std::vector<double>(w.begin(), w.end())},
                      {"bias", std::vector<double>(b.begin(), b.end())}});
  }
  doc["layers"] = std::move(layers);
  ordered_json proxies = ordered_json::array();
  for (std::size_t row = 0; row <= params.num_classes(); ++row) {
    const auto p = params.proxy_row(row);
    proxies.push_back(std::vector<double>(p.begin(), p.end()));
  }
  doc["proxies"] = std::move(proxies);
  return doc;
}

ModelParams params_from_json(const ordered_json& doc) {
  constexpr const char* where = "params";
  if (field<int>(doc, "format_version", where) != kParamsFormatVersion) throw SchemaError("params: unsupported format_version");
  ModelParams params(field<std::vector<std::size_t>>(doc, "dims", where), field<std::size_t>(doc, "num_classes", where));
  const auto layers = field<ordered_json>(doc, "layers", where);
  if (!layers.is_array() || layers.size() != params.layers().size()) throw SchemaError("params: layer count does not match dims");
  auto values = params.values();
  for (std::size_t k = 0; k < layers.size(); ++k) {
    const LayerLayout& layout = params.layers()[k];
    const auto w = field<std::vector<double>>(layers[k], "weight", "params.layers");
    const auto b = field<std::vector<double>>(layers[k], "bias", "params.layers");
    if (w.size() != layout.in * layout.out || b.size() != layout.out) {
      throw SchemaError("params: layer " + std::to_string(k) + " has the wrong shape");
    }
    std::copy(w.begin(), w.end(), values.begin() + static_cast<std::ptrdiff_t>(layout.weight_offset));
    std::copy(b.begin(), b.end(), values.begin() + static_cast<std::ptrdiff_t>(layout.bias_offset));
  }
  const auto proxies = field<std::vector<std::vector<double>>>(doc, "proxies", where);
  if (proxies.size() != params.num_classes() + 1) throw SchemaError("params: proxy table needs K+1 rows");
  for (std::size_t row = 0; row < proxies.size(); ++row) {
    if (proxies[row].size() != params.embedding_dim()) throw SchemaError("params: proxy row has the wrong width");
    std::copy(proxies[row].begin(), proxies[row].end(), params.proxy_row(row).begin());
  }
  return params;
}

void write_params(const ModelParams& params, const std::filesystem::path& path) {
  atomic_write(path, params_to_json(params).dump(1) + "\n");
}

ModelParams read_params(const std::filesystem::path& path) {
  try {
    return params_from_json(ordered_json::parse(read_file(path)));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what(), 0);
  }
}

ordered_json prior_config_to_json(const PriorConfig& priors) {
  ordered_json classes = ordered_json::array();
  for (std::size_t k = 0; k < priors.classes.size(); ++k) {
    const ClassPrior& c = priors.classes[k];
    classes.push_back({{"class", k + 1},
                       {"active", c.active},
                       {"pi", c.pi},
                       {"pi_labeled", c.pi_labeled},
                       {"pi_u", c.pi_u},
                       {"gamma", c.gamma}});
  }
  const PriorGlobals& g = priors.globals;
  return {{"variant", std::string(to_string(g.variant))},
          {"lambda", g.lambda},
          {"alpha", g.alpha},
          {"nu", g.nu},
          {"dropout_rate", g.dropout_rate},
          {"multiplier", g.prior_multiplier},
          {"classes", std::move(classes)}};
}

ordered_json metrics_to_json(const MetricsReport& report, const std::string& reference) {
  ordered_json per_class = ordered_json::array();
  const auto clamp = report.clamp_frequency();
  for (std::size_t k = 0; k < report.per_class.size(); ++k) {
    const ClassCounts& c = report.per_class[k];
    ordered_json entry{{"class", k + 1}, {"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}};
    if (k < clamp.size()) entry["clamp_frequency"] = clamp[k];
    per_class.push_back(std::move(entry));
  }
  return {{"format_version", kMetricsFormatVersion},
          {"reference", reference},
          {"micro", {{"precision", report.precision}, {"recall", report.recall}, {"f1", report.f1}}},
          {"per_class", std::move(per_class)},
          {"steps", report.step_log.size()}};
}

void validate_metrics_json(const ordered_json& doc) {
  constexpr const char* where = "metrics";
  if (!doc.is_object()) throw SchemaError("metrics: not an object");
  if (field<int>(doc, "format_version", where) != kMetricsFormatVersion) throw SchemaError("metrics: bad format_version");
  const auto reference = field<std::string>(doc, "reference", where);
  if (reference != "truth" && reference != "observed") throw SchemaError("metrics: reference must be truth or observed");
  const auto micro = field<ordered_json>(doc, "micro", where);
  std::size_t tp = 0, fp = 0, fn = 0;
  for (const char* key : {"precision", "recall", "f1"}) {
    const double v = field<double>(micro, key, "metrics.micro");
    if (!(v >= 0.0 && v <= 1.0)) throw SchemaError(std::string("metrics: micro.") + key + " outside [0, 1]");
  }
  const auto per_class = field<ordered_json>(doc, "per_class", where);
  if (!per_class.is_array()) throw SchemaError("metrics: per_class must be an array");
  for (std::size_t k = 0; k < per_class.size(); ++k) {
    if (field<std::size_t>(per_class[k], "class", "metrics.per_class") != k + 1) {
      throw SchemaError("metrics: per_class entries must be numbered 1..K in order");
    }
    tp += field<std::size_t>(per_class[k], "tp", "metrics.per_class");
    fp += field<std::size_t>(per_class[k], "fp", "metrics.per_class");
    fn += field<std::size_t>(per_class[k], "fn", "metrics.per_class");
  }
  field<std::size_t>(doc, "steps", where);
  const MetricsReport expected = micro_metrics({{tp, fp, fn}});
  if (std::abs(expected.f1 - micro.at("f1").get<double>()) > 1e-12 ||
      std::abs(expected.precision - micro.at("precision").get<double>()) > 1e-12 ||
      std::abs(expected.recall - micro.at("recall").get<double>()) > 1e-12) {
    throw SchemaError("metrics: micro scores disagree with the per-class counts");
  }
}

std::string metrics_table(const MetricsReport& report) {
  std::ostringstream out;
  char line[128];
  std::snprintf(line, sizeof(line), "%-10s %10s\n", "metric", "value");
  out << line;
  std::snprintf(line, sizeof(line), "%-10s %10s\n", "precision", fixed(report.precision).c_str());
  out << line;
  std::snprintf(line, sizeof(line), "%-10s %10s\n", "recall", fixed(report.recall).c_str());
  out << line;
  std::snprintf(line, sizeof(line), "%-10s %10s\n\n", "f1", fixed(report.f1).c_str());
  out << line;
  std::snprintf(line, sizeof(line), "%-6s %8s %8s %8s\n", "class", "tp", "fp", "fn");
  out << line;
  for (std::size_t k = 0; k < report.per_class.size(); ++k) {
    const ClassCounts& c = report.per_class[k];
    std::snprintf(line, sizeof(line), "%-6zu %8zu %8zu %8zu\n", k + 1, c.tp, c.fp, c.fn);
    out << line;
  }
  return out.str();
}

ordered_json step_record_to_json(const StepRecord& r) {
  std::vector<int> clamped;
  for (bool c : r.clamped) clamped.push_back(c ? 1 : 0);
  return {{"step", r.step},
          {"epoch", r.epoch},
          {"lr", r.learning_rate},
          {"mu", r.mu},
          {"l_pm_or_p2m", r.l_pm_or_p2m},
          {"l_pmix", r.l_pmix},
          {"l_total", r.l_total},
          {"active_classes", r.active_classes},
          {"clamped", clamped}};
}

std::string sweep_csv(const SweepTable& table) {
  std::ostringstream out;
  out << "multiplier,seed,precision,recall,f1\n";
  for (const SweepCell& c : table.cells) {
    out << format_double(c.multiplier) << ',' << c.seed << ',' << format_double(c.metrics.precision) << ','
        << format_double(c.metrics.recall) << ',' << format_double(c.metrics.f1) << '\n';
  }
  for (const SweepSummary& s : table.summary) {
    out << format_double(s.multiplier) << ",mean," << format_double(s.precision) << ',' << format_double(s.recall)
        << ',' << format_double(s.f1) << '\n';
  }
  return out.str();
}

}  // namespace pumetric
