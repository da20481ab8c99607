#include "rrgnn/experiment.hpp"

#include <doctest.h>

#include <chrono>
#include <filesystem>
#include <fstream>

using namespace rrgnn;
using nlohmann::json;

namespace {

json small_config() {
  return {
      {"dataset",
       {{"generator", {{"type", "erdos_renyi"}, {"n", 100}, {"p", 0.05}}},
        {"label_model", {{"type", "heteroscedastic"}, {"sigma0", 0.5}}},
        {"n_features", 8},
        {"seed", 1}}},
      {"task", "NodeReg"},
      {"score_variant", "CQR-RR"},
      {"alpha", 0.1},
      {"n_resplits", 5},
      {"seed", 2},
      {"hidden", 16},
      {"cross_train", {{"loop_limit", 2}, {"epochs_per_phase", 30}}},
  };
}

}  // namespace

TEST_CASE("small end-to-end run") {
  const auto start = std::chrono::steady_clock::now();
  const RunReport r = run_experiment(config_from_json(small_config()));
  CHECK(std::chrono::steady_clock::now() - start < std::chrono::seconds(60));
  CHECK(r.version == std::string(kReportVersion));
  REQUIRE(r.resplits.size() == 5);
  for (const auto& e : r.resplits) {
    CHECK(e.coverage >= 0.0);
    CHECK(e.coverage <= 1.0);
    CHECK(e.alpha == 0.1);
  }
  CHECK(r.phases.size() == 2);
  CHECK(r.n_clusters >= 1);
  CHECK(r.timings.empty());
  CHECK_FALSE(r.wsc.has_value());
}

TEST_CASE("aggregates are recomputable from the resplits") {
  const RunReport r = run_experiment(config_from_json(small_config()));
  std::vector<double> cov;
  for (const auto& e : r.resplits) cov.push_back(e.coverage);
  const MetricSummary s = summarize(cov);
  CHECK(s.mean == r.coverage.mean);
  CHECK(s.sd == r.coverage.sd);
  CHECK(summarize({2.0}).sd == 0.0);
  CHECK(summarize({1.0, 3.0}).sd == doctest::Approx(std::sqrt(2.0)));
}

TEST_CASE("runs are reproducible") {
  const ExperimentConfig c = config_from_json(small_config());
  CHECK(to_json(run_experiment(c)).dump() == to_json(run_experiment(c)).dump());
}

TEST_CASE("one cluster matches the unclustered run") {
  json j = small_config();
  j["min_cluster_calib"] = 1e9;  // merging collapses everything
  const RunReport clustered = run_experiment(config_from_json(j));
  CHECK(clustered.n_clusters == 1);
  j["clustered"] = false;
  const RunReport plain = run_experiment(config_from_json(j));
  REQUIRE(plain.resplits.size() == clustered.resplits.size());
  for (std::size_t i = 0; i < plain.resplits.size(); ++i) {
    CHECK(plain.resplits[i].coverage == clustered.resplits[i].coverage);
    CHECK(plain.resplits[i].inefficiency == clustered.resplits[i].inefficiency);
  }
}

TEST_CASE("smaller alpha gives wider intervals") {
  const ExperimentConfig c = config_from_json(small_config());
  const Dataset d = load_dataset(c.dataset);
  const TrainedPipeline p = train_pipeline(d.graph, c);
  double tight = 0, loose = 0;
  for (std::uint64_t s = 0; s < 10; ++s) {
    const SplitMask split = resplit(p.base_split, s);
    tight += evaluate(p, split, c.score_variant, false, 0.05, std::nullopt, s).report.inefficiency;
    loose += evaluate(p, split, c.score_variant, false, 0.2, std::nullopt, s).report.inefficiency;
  }
  CHECK(tight > loose);
}

TEST_CASE("resplits keep train and validation fixed") {
  const SplitMask base = split_targets(200, TargetKind::Nodes, {}, 3);
  for (std::uint64_t s = 0; s < 5; ++s) {
    const SplitMask r = resplit(base, s);
    CHECK(r.count(Phase::Calib) == base.count(Phase::Calib));
    CHECK(r.count(Phase::Test) == base.count(Phase::Test));
    for (Index t = 0; t < 200; ++t) {
      const bool fixed = base[t] == Phase::Train || base[t] == Phase::Val;
      if (fixed) CHECK(r[t] == base[t]);
      else CHECK((r[t] == Phase::Calib || r[t] == Phase::Test));
    }
  }
  CHECK(resplit(base, 1).assignment() != resplit(base, 2).assignment());
}

TEST_CASE("all tasks and variants run") {
  for (const char* variant : {"CP", "CQR", "RR", "CQR-RR"}) {
    json j = small_config();
    j["score_variant"] = variant;
    j["n_resplits"] = 2;
    j["wsc"] = {{"n_directions", 20}};
    const RunReport r = run_experiment(config_from_json(j));
    CHECK(r.wsc.has_value());
  }
  json edge = small_config();
  edge["task"] = "EdgeWeight";
  edge["model"] = "DiGAE";
  edge["embed_dim"] = 8;
  edge["dataset"]["label_model"] = {{"type", "edge_weight"}};
  CHECK(run_experiment(config_from_json(edge)).resplits.size() == 5);

  json cls = small_config();
  cls["task"] = "NodeClass";
  cls["dataset"]["label_model"] = {{"type", "classify"}, {"n_classes", 3}};
  const RunReport r = run_experiment(config_from_json(cls));
  CHECK(r.inefficiency.mean >= 1.0 - 1e-12);
  CHECK(r.inefficiency.mean <= 3.0);
}

TEST_CASE("config errors") {
  json j = small_config();
  j["alpha"] = 1.5;
  CHECK_THROWS_AS(config_from_json(j), ConfigError);
  j = small_config();
  j["n_resplits"] = 0;
  CHECK_THROWS_AS(config_from_json(j), ConfigError);
  j = small_config();
  j["learning_rate"] = 0.1;
  CHECK_THROWS_WITH_AS(config_from_json(j), doctest::Contains("unknown field 'learning_rate'"),
                       ConfigError);
  j = small_config();
  j["cross_train"]["residual_target"] = "cubed";
  CHECK_THROWS_AS(config_from_json(j), ConfigError);
  j = small_config();
  j["task"] = "NodeClass";
  CHECK_THROWS_AS(config_from_json(j), ConfigError);
  j = small_config();
  j["alpha"] = "high";
  CHECK_THROWS_AS(config_from_json(j), ConfigError);
  j = small_config();
  j.erase("dataset");
  CHECK_THROWS_AS(config_from_json(j), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/config.json"), ConfigError);
}

TEST_CASE("config round trip") {
  json j = small_config();
  j["wsc"] = {{"n_directions", 50}};
  const ExperimentConfig c = config_from_json(j);
  CHECK(to_json(config_from_json(to_json(c))) == to_json(c));
}

TEST_CASE("stage failures name the stage") {
  const auto dir = std::filesystem::temp_directory_path() / "rrgnn_stage_error";
  std::filesystem::create_directories(dir);
  std::ofstream(dir / "e.csv") << "src,dst\n0,1\n";
  std::ofstream(dir / "n.csv") << "node_id,feat_0\n0,1\n1,2\n";
  json j = small_config();
  j["dataset"] = {{"csv", {{"edges", "e.csv"}, {"nodes", "n.csv"}}}};
  ExperimentConfig c = config_from_json(j, dir);
  try {
    run_experiment(c);
    FAIL("expected a stage error");
  } catch (const StageError& e) {
    CHECK(e.stage() == "load");
  }
  std::filesystem::remove_all(dir);
}
