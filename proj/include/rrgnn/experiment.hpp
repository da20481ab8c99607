#pragma once

#include "rrgnn/community.hpp"
#include "rrgnn/conformal.hpp"
#include "rrgnn/data_io.hpp"
#include "rrgnn/metrics.hpp"
#include "rrgnn/models.hpp"
#include "rrgnn/training.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace rrgnn {

inline constexpr const char* kReportVersion = "rrgnn-report/1";

/// Invalid configuration (CLI exit code 2).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Failure inside a pipeline stage (CLI exit code 1).
class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, const std::string& what)
      : std::runtime_error(stage + ": " + what), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

struct WscSettings {
  double delta_mass = 0.1;
  Index n_directions = 1000;
  double estimate_fraction = 0.25;
  Index grid_levels = 20;
};

struct ExperimentConfig {
  DatasetSpec dataset;
  Task task = Task::NodeReg;
  Decoder model = Decoder::GAE;
  LayerKind encoder = LayerKind::SAGEConv;
  conformal::ScoreVariant score_variant = conformal::ScoreVariant::CQR_RR;
  bool clustered = true;
  double alpha = 0.1;
  SplitRatios ratios;
  Index n_resplits = 10;
  std::uint64_t seed = 0;
  CrossTrainConfig cross_train;
  Index hidden = 64;
  Index n_layers = 2;
  Index embed_dim = 16;
  /// Edge-mask placeholder weight; 0 selects default_delta().
  double delta = 0.0;
  /// Merge threshold on expected calibration targets per cluster; 0 selects
  /// default_min_cluster_calib(alpha).
  double min_cluster_calib = 0.0;
  std::optional<WscSettings> wsc;
  /// Wall-clock stage timings make reports non-reproducible, so they are opt-in.
  bool record_timings = false;
  /// Resolves relative CSV paths; not serialized.
  std::filesystem::path base_dir;

  void validate() const;
};

/// Throws ConfigError on unknown fields, bad values or wrong types.
ExperimentConfig config_from_json(const nlohmann::json& j,
                                  const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);
nlohmann::json to_json(const ExperimentConfig& config);

/// Everything that stays fixed across calibration/test resplits: the graph,
/// the train/val assignment, the clusters and both trained networks'
/// predictions for every target.
struct TrainedPipeline {
  Graph graph;
  Task task = Task::NodeReg;
  SplitMask base_split{TargetKind::Nodes, {}, 0};
  ClusterAssignment clusters;
  std::vector<Index> target_cluster;  // cluster of each target
  TriplePrediction prediction;        // canonicalized; class tasks: logits / probability bands
  Matrix probs;                       // softmax of the mean head, class tasks only
  Matrix residual;                    // signed residual estimates, targets x (1 or K)
  TrainHistory history;
  std::vector<std::pair<std::string, double>> timings;

  Index n_targets() const { return base_split.size(); }
};

TrainedPipeline train_pipeline(const Graph& graph, const ExperimentConfig& config);

/// Keeps Train/Val and redraws which pooled Calib/Test targets are which,
/// preserving both counts.
SplitMask resplit(const SplitMask& base, std::uint64_t seed);

struct Evaluation {
  EvalReport report;
  std::vector<conformal::PredictionInterval> intervals;  // regression / edge tasks
  std::vector<conformal::PredictionSet> sets;            // classification
  std::vector<Index> test_targets;
  conformal::ClusterQuantiles quantiles;
};

/// Scores the calibration targets of `split`, calibrates (per cluster when
/// `clustered`) and evaluates on its test targets.
Evaluation evaluate(const TrainedPipeline& pipeline, const SplitMask& split,
                    conformal::ScoreVariant variant, bool clustered, double alpha,
                    const std::optional<WscSettings>& wsc, std::uint64_t seed);

struct MetricSummary {
  double mean = 0.0;
  double sd = 0.0;  // sample standard deviation; 0 for a single value
};

MetricSummary summarize(const std::vector<double>& values);

struct RunReport {
  std::string version = kReportVersion;
  ExperimentConfig config;
  std::vector<EvalReport> resplits;
  MetricSummary coverage;
  MetricSummary inefficiency;
  std::optional<MetricSummary> wsc;
  Index n_clusters = 0;
  double modularity = 0.0;
  std::vector<PhaseRecord> phases;
  std::vector<std::pair<std::string, double>> timings;  // seconds; empty unless recorded
};

/// load -> cluster -> cross-train -> (score -> calibrate -> intervals -> metrics) per resplit.
RunReport run_experiment(const ExperimentConfig& config);

nlohmann::json to_json(const RunReport& report);
/// Human-readable summary table.
std::string format_report(const RunReport& report);

}  // namespace rrgnn
