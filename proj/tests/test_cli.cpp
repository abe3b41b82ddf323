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

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "pumetric/cli.hpp"
#include "pumetric/config.hpp"
#include "pumetric/error.hpp"
#include "pumetric/io.hpp"

using namespace pumetric;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "pumetric_test_cli" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Tiny but complete experiment so every command runs in well under a second.
fs::path tiny_config(const fs::path& dir) {
  const std::string text = R"({
  "gen": {"n_train": 240, "n_test": 120, "d_in": 8, "num_classes": 3, "pi_true": 0.3, "erasure": 0.7},
  "model": {"hidden_dims": [8, 8], "embedding_dim": 6},
  "train": {"epochs": 1, "batch_size": 32},
  "sweep": {"multipliers": [1, 2, 3, 4, 5], "seeds": [62, 63, 64, 65, 66]},
  "grad_check": {"instances": 2}
})";
  atomic_write(dir / "config.json", text);
  return dir / "config.json";
}

std::size_t count_lines(const fs::path& path) {
  std::ifstream in(path);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) ++n;
  return n;
}

}  // namespace

TEST_CASE("print-config round-trips every default") {
  const Run r = run({"print-config"});
  REQUIRE(r.code == 0);
  const ordered_json doc = ordered_json::parse(r.out);
  CHECK(to_json(experiment_config_from_json(doc)) == doc);
  CHECK(doc["priors"]["lambda"] == 10.0);
  CHECK(doc["priors"]["alpha"] == 1.0);
  CHECK(doc["priors"]["nu"] == 0.05);
  CHECK(doc["priors"]["multiplier"] == 3.0);
  CHECK(doc["train"]["epochs"] == 10);
  CHECK(doc["train"]["batch_size"] == 64);
  CHECK(doc["sweep"]["seeds"] == std::vector<int>{62, 63, 64, 65, 66});

  const Run overridden = run({"print-config", "--variant", "pm", "--multiplier", "2"});
  const ordered_json o = ordered_json::parse(overridden.out);
  CHECK(o["priors"]["variant"] == "pm");
  CHECK(o["priors"]["multiplier"] == 2.0);
}

TEST_CASE("config errors name the field") {
  ordered_json doc = to_json(default_experiment_config());
  doc["train"]["epohcs"] = 3;
  try {
    experiment_config_from_json(doc);
    FAIL("expected SchemaError");
  } catch (const SchemaError& e) {
    CHECK(std::string(e.what()).find("train.epohcs") != std::string::npos);
  }
  doc = to_json(default_experiment_config());
  doc["priors"]["lambda"] = "ten";
  CHECK_THROWS_AS(experiment_config_from_json(doc), SchemaError);
  doc = to_json(default_experiment_config());
  doc["priors"]["variant"] = "p4m";
  CHECK_THROWS_AS(experiment_config_from_json(doc), SchemaError);

  const fs::path dir = fresh_dir("bad_config");
  atomic_write(dir / "bad.json", R"({"gen": {"n_train": 10, "colour": 1}})");
  const Run r = run({"gen-data", "--config", (dir / "bad.json").string(), "--out", dir.string()});
  CHECK(r.code == 2);
  CHECK(r.err.find("gen.colour") != std::string::npos);
  CHECK(run({"print-config", "--config", (dir / "missing.json").string()}).code == 2);
}

TEST_CASE("usage errors exit with 2") {
  CHECK(run({}).code == 2);
  CHECK(run({"frobnicate"}).code == 2);
  CHECK(run({"train", "--no-such-flag"}).code == 2);
  CHECK(run({"print-config", "--variant", "p9m"}).code == 2);
  CHECK(run({"--help"}).code == 0);
}

TEST_CASE("gen-data writes deterministic datasets and a prior summary") {
  const fs::path dir = fresh_dir("gen");
  const fs::path config = tiny_config(dir);
  const Run first = run({"gen-data", "--config", config.string(), "--out", dir.string()});
  REQUIRE(first.code == 0);
  CHECK(count_lines(dir / "train.jsonl") == 241);
  CHECK(count_lines(dir / "test.jsonl") == 121);
  const std::string before = read_file(dir / "train.jsonl");
  REQUIRE(run({"gen-data", "--config", config.string(), "--out", dir.string()}).code == 0);
  CHECK(read_file(dir / "train.jsonl") == before);

  const Run reseeded = run({"gen-data", "--config", config.string(), "--out", dir.string(), "--seed", "9"});
  REQUIRE(reseeded.code == 0);
  CHECK(read_file(dir / "train.jsonl") != before);
}

TEST_CASE("gen-data summary reflects the erasure rate") {
  const fs::path dir = fresh_dir("gen_big");
  atomic_write(dir / "config.json",
               R"({"gen": {"n_train": 20000, "n_test": 10, "d_in": 4, "num_classes": 2, "pi_true": 0.4, "erasure": 0.7}})");
  const Run r = run({"gen-data", "--config", (dir / "config.json").string(), "--out", dir.string()});
  REQUIRE(r.code == 0);
  // Rows: class pi_true erasure true_prior obs_prior; observed ~ 0.3 * 0.4 = 0.12.
  std::istringstream lines(r.out);
  std::string header;
  std::getline(lines, header);
  for (int k = 0; k < 2; ++k) {
    std::size_t cls;
    double pi, rho, truth, observed;
    lines >> cls >> pi >> rho >> truth >> observed;
    CHECK(std::abs(observed - 0.3 * truth) < 0.01);
    CHECK(std::abs(observed - 0.12) < 0.01);
  }
}

TEST_CASE("train, eval and the metrics schema") {
  const fs::path dir = fresh_dir("train");
  const fs::path config = tiny_config(dir);
  REQUIRE(run({"gen-data", "--config", config.string(), "--out", dir.string()}).code == 0);

  for (const char* variant : {"pm", "p3m"}) {
    const Run r = run({"train", "--config", config.string(), "--out", dir.string(), "--variant", variant, "--test",
                       (dir / "test.jsonl").string()});
    REQUIRE(r.code == 0);
    const ordered_json metrics = ordered_json::parse(read_file(dir / variant / "metrics.json"));
    CHECK_NOTHROW(validate_metrics_json(metrics));
    CHECK(fs::exists(dir / variant / "metrics.txt"));
    CHECK(fs::exists(dir / variant / "priors.json"));
  }

  double pmix_sum = 0.0;
  std::ifstream log(dir / "p3m" / "steplog.jsonl");
  std::size_t steps = 0;
  for (std::string line; std::getline(log, line); ++steps) {
    pmix_sum += ordered_json::parse(line)["l_pmix"].get<double>();
  }
  CHECK(steps == 8);  // 240 / 32 rounded up
  CHECK(pmix_sum > 0.0);
  std::ifstream pm_log(dir / "pm" / "steplog.jsonl");
  for (std::string line; std::getline(pm_log, line);) CHECK(ordered_json::parse(line)["l_pmix"] == 0.0);

  const Run ev = run({"eval", "--config", config.string(), "--out", dir.string(), "--params",
                      (dir / "p3m" / "params.json").string(), "--data", (dir / "test.jsonl").string()});
  REQUIRE(ev.code == 0);
  const ordered_json evaluated = ordered_json::parse(read_file(dir / "eval" / "metrics.json"));
  const ordered_json trained = ordered_json::parse(read_file(dir / "p3m" / "metrics.json"));
  CHECK(evaluated["micro"] == trained["micro"]);
  CHECK(evaluated["per_class"][0]["tp"] == trained["per_class"][0]["tp"]);
  CHECK_NOTHROW(validate_metrics_json(evaluated));
  CHECK(ev.out.find("precision") != std::string::npos);

  // Params survive a round trip.
  const ModelParams params = read_params(dir / "p3m" / "params.json");
  write_params(params, dir / "copy.json");
  CHECK(read_file(dir / "copy.json") == read_file(dir / "p3m" / "params.json"));

  // Evaluation needs truth.
  const PuDataset test = read_dataset(dir / "test.jsonl");
  write_dataset(test, dir / "no_truth.jsonl", false);
  CHECK(run({"eval", "--out", dir.string(), "--params", (dir / "p3m" / "params.json").string(), "--data",
             (dir / "no_truth.jsonl").string()})
            .code != 0);

  CHECK(run({"train", "--config", config.string(), "--data", (dir / "nope.jsonl").string()}).code == 2);
}

TEST_CASE("validate_metrics_json rejects inconsistent records") {
  const MetricsReport report = micro_metrics({{2, 1, 1}, {3, 0, 2}});
  ordered_json doc = metrics_to_json(report, "truth");
  CHECK_NOTHROW(validate_metrics_json(doc));
  ordered_json bad = doc;
  bad["micro"]["f1"] = 0.99;
  CHECK_THROWS_AS(validate_metrics_json(bad), SchemaError);
  bad = doc;
  bad.erase("per_class");
  CHECK_THROWS_AS(validate_metrics_json(bad), SchemaError);
  bad = doc;
  bad["reference"] = "vibes";
  CHECK_THROWS_AS(validate_metrics_json(bad), SchemaError);
}

TEST_CASE("sweep writes 25 cells plus 5 summary rows") {
  const fs::path dir = fresh_dir("sweep");
  const fs::path config = tiny_config(dir);
  const Run r = run({"sweep", "--config", config.string(), "--out", dir.string()});
  REQUIRE(r.code == 0);
  CHECK(count_lines(dir / "sweep.csv") == 1 + 25 + 5);
  const std::string csv = read_file(dir / "sweep.csv");
  CHECK(csv.rfind("multiplier,seed,precision,recall,f1\n", 0) == 0);
  CHECK(csv.find("\n5,mean,") != std::string::npos);
  const ordered_json priors = ordered_json::parse(read_file(dir / "sweep_priors.json"));
  CHECK(priors.size() == 5);

  const fs::path one = fresh_dir("sweep_one");
  REQUIRE(run({"sweep", "--config", config.string(), "--out", one.string(), "--multiplier", "3", "--seed", "62"}).code == 0);
  CHECK(count_lines(one / "sweep.csv") == 1 + 1 + 1);
}

TEST_CASE("sweep honours P3M_THREADS without changing results") {
  const fs::path a = fresh_dir("threads_a");
  const fs::path b = fresh_dir("threads_b");
  const fs::path config = a / "config.json";
  atomic_write(config, R"({
  "gen": {"n_train": 120, "n_test": 60, "d_in": 8, "num_classes": 2, "pi_true": 0.3, "erasure": 0.5},
  "model": {"hidden_dims": [8, 8], "embedding_dim": 6},
  "train": {"epochs": 1, "batch_size": 32},
  "sweep": {"multipliers": [1, 3], "seeds": [62, 63]}
})");
  setenv("P3M_THREADS", "1", 1);
  REQUIRE(run({"sweep", "--config", config.string(), "--out", a.string()}).code == 0);
  setenv("P3M_THREADS", "4", 1);
  REQUIRE(run({"sweep", "--config", config.string(), "--out", b.string()}).code == 0);
  CHECK(read_file(a / "sweep.csv") == read_file(b / "sweep.csv"));
  setenv("P3M_THREADS", "zero", 1);
  CHECK(run({"sweep", "--config", config.string(), "--out", b.string()}).code == 2);
  unsetenv("P3M_THREADS");
}

TEST_CASE("grad-check reports all five variants and catches a corrupted gradient") {
  const fs::path dir = fresh_dir("grad");
  const fs::path config = tiny_config(dir);
  const Run ok = run({"grad-check", "--config", config.string()});
  CHECK(ok.code == 0);
  for (const char* v : {"pm ", "p2m-all ", "p2m ", "p3m-ori ", "p3m "}) CHECK(ok.out.find(v) != std::string::npos);
  const Run bad = run({"grad-check", "--config", config.string(), "--corrupt-gradient"});
  CHECK(bad.code == 1);
  CHECK(bad.out.find("FAIL") != std::string::npos);
}
