#include "rrgnn/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

namespace rrgnn {

using nlohmann::json;
using conformal::ScoreVariant;

namespace {

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

template <typename Fn>
auto stage(const char* name, Fn&& fn) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

void check_keys(const json& j, std::initializer_list<const char*> keys, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& item : j.items())
    if (std::none_of(keys.begin(), keys.end(), [&](const char* k) { return item.key() == k; }))
      throw ConfigError(where + ": unknown field '" + item.key() + "'");
}

const char* to_string(ResidualTarget t) {
  return t == ResidualTarget::Signed ? "signed" : "magnitude";
}

ResidualTarget parse_residual_target(const std::string& s) {
  if (s == "signed") return ResidualTarget::Signed;
  if (s == "magnitude") return ResidualTarget::Magnitude;
  throw ConfigError("unknown residual_target: " + s);
}

json null_if_nan(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace

void ExperimentConfig::validate() const {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
  if (n_resplits < 1) throw ConfigError("n_resplits must be at least 1");
  if (hidden < 1 || n_layers < 1 || embed_dim < 1) throw ConfigError("model sizes must be positive");
  if (cross_train.loop_limit < 1) throw ConfigError("cross_train.loop_limit must be at least 1");
  if (cross_train.epochs_per_phase < 0) throw ConfigError("cross_train.epochs_per_phase must be >= 0");
  if (!(cross_train.adam.lr > 0.0)) throw ConfigError("cross_train.lr must be positive");
  if (cross_train.adam.weight_decay < 0.0) throw ConfigError("cross_train.weight_decay must be >= 0");
  if (delta < 0.0) throw ConfigError("delta must be >= 0");
  if (min_cluster_calib < 0.0) throw ConfigError("min_cluster_calib must be >= 0");
  const auto r = ratios.as_array();
  if (std::any_of(r.begin(), r.end(), [](double x) { return x < 0.0; }) ||
      std::abs(std::accumulate(r.begin(), r.end(), 0.0) - 1.0) > 1e-9)
    throw ConfigError("ratios must be non-negative and sum to 1");
  if (ratios.calib <= 0.0 || ratios.test <= 0.0 || ratios.train <= 0.0)
    throw ConfigError("train, calib and test ratios must be positive");
  if (wsc) {
    if (!(wsc->delta_mass > 0.0 && wsc->delta_mass <= 1.0))
      throw ConfigError("wsc.delta_mass must lie in (0, 1]");
    if (wsc->n_directions < 1) throw ConfigError("wsc.n_directions must be positive");
    if (!(wsc->estimate_fraction > 0.0 && wsc->estimate_fraction < 1.0))
      throw ConfigError("wsc.estimate_fraction must lie in (0, 1)");
  }
  try {
    dataset.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (task == Task::NodeClass && dataset.label_model &&
      !std::holds_alternative<Classify>(*dataset.label_model))
    throw ConfigError("NodeClass needs a classify label model");
  if (task == Task::EdgeWeight && dataset.label_model &&
      !std::holds_alternative<EdgeWeightModel>(*dataset.label_model))
    throw ConfigError("EdgeWeight needs an edge_weight label model");
}

ExperimentConfig config_from_json(const json& j, const std::filesystem::path& base_dir) {
  ExperimentConfig c;
  c.base_dir = base_dir;
  try {
    check_keys(j,
               {"dataset", "task", "model", "encoder", "score_variant", "clustered", "alpha",
                "ratios", "n_resplits", "seed", "cross_train", "hidden", "n_layers", "embed_dim",
                "delta", "min_cluster_calib", "wsc", "record_timings"},
               "config");
    if (!j.contains("dataset")) throw ConfigError("config: missing field 'dataset'");
    c.dataset = dataset_spec_from_json(j.at("dataset"));
    if (j.contains("task")) c.task = parse_task(j.at("task").get<std::string>());
    if (j.contains("model")) c.model = parse_decoder(j.at("model").get<std::string>());
    if (j.contains("encoder")) c.encoder = parse_layer_kind(j.at("encoder").get<std::string>());
    if (c.encoder == LayerKind::Dense) throw ConfigError("encoder must be a message-passing layer");
    if (j.contains("score_variant"))
      c.score_variant = conformal::parse_score_variant(j.at("score_variant").get<std::string>());
    if (j.contains("clustered")) c.clustered = j.at("clustered").get<bool>();
    if (j.contains("alpha")) c.alpha = j.at("alpha").get<double>();
    if (j.contains("ratios")) {
      const auto& r = j.at("ratios");
      check_keys(r, {"train", "val", "calib", "test"}, "ratios");
      c.ratios = {r.at("train").get<double>(), r.at("val").get<double>(),
                  r.at("calib").get<double>(), r.at("test").get<double>()};
    }
    if (j.contains("n_resplits")) c.n_resplits = j.at("n_resplits").get<Index>();
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("cross_train")) {
      const auto& t = j.at("cross_train");
      check_keys(t, {"loop_limit", "epochs_per_phase", "lr", "weight_decay", "residual_target"},
                 "cross_train");
      if (t.contains("loop_limit")) c.cross_train.loop_limit = t.at("loop_limit").get<int>();
      if (t.contains("epochs_per_phase"))
        c.cross_train.epochs_per_phase = t.at("epochs_per_phase").get<int>();
      if (t.contains("lr")) c.cross_train.adam.lr = t.at("lr").get<double>();
      if (t.contains("weight_decay")) c.cross_train.adam.weight_decay = t.at("weight_decay").get<double>();
      if (t.contains("residual_target"))
        c.cross_train.residual_target = parse_residual_target(t.at("residual_target").get<std::string>());
    }
    if (j.contains("hidden")) c.hidden = j.at("hidden").get<Index>();
    if (j.contains("n_layers")) c.n_layers = j.at("n_layers").get<Index>();
    if (j.contains("embed_dim")) c.embed_dim = j.at("embed_dim").get<Index>();
    if (j.contains("delta")) c.delta = j.at("delta").get<double>();
    if (j.contains("min_cluster_calib")) c.min_cluster_calib = j.at("min_cluster_calib").get<double>();
    if (j.contains("wsc") && !j.at("wsc").is_null()) {
      const auto& w = j.at("wsc");
      check_keys(w, {"delta_mass", "n_directions", "estimate_fraction", "grid_levels"}, "wsc");
      WscSettings s;
      if (w.contains("delta_mass")) s.delta_mass = w.at("delta_mass").get<double>();
      if (w.contains("n_directions")) s.n_directions = w.at("n_directions").get<Index>();
      if (w.contains("estimate_fraction")) s.estimate_fraction = w.at("estimate_fraction").get<double>();
      if (w.contains("grid_levels")) s.grid_levels = w.at("grid_levels").get<Index>();
      c.wsc = s;
    }
    if (j.contains("record_timings")) c.record_timings = j.at("record_timings").get<bool>();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return config_from_json(j, path.parent_path());
}

json to_json(const ExperimentConfig& c) {
  json j;
  j["dataset"] = to_json(c.dataset);
  j["task"] = to_string(c.task);
  j["model"] = to_string(c.model);
  j["encoder"] = to_string(c.encoder);
  j["score_variant"] = conformal::to_string(c.score_variant);
  j["clustered"] = c.clustered;
  j["alpha"] = c.alpha;
  j["ratios"] = {{"train", c.ratios.train}, {"val", c.ratios.val}, {"calib", c.ratios.calib},
                 {"test", c.ratios.test}};
  j["n_resplits"] = c.n_resplits;
  j["seed"] = c.seed;
  j["cross_train"] = {{"loop_limit", c.cross_train.loop_limit},
                      {"epochs_per_phase", c.cross_train.epochs_per_phase},
                      {"lr", c.cross_train.adam.lr},
                      {"weight_decay", c.cross_train.adam.weight_decay},
                      {"residual_target", to_string(c.cross_train.residual_target)}};
  j["hidden"] = c.hidden;
  j["n_layers"] = c.n_layers;
  j["embed_dim"] = c.embed_dim;
  j["delta"] = c.delta;
  j["min_cluster_calib"] = c.min_cluster_calib;
  if (c.wsc) {
    j["wsc"] = {{"delta_mass", c.wsc->delta_mass}, {"n_directions", c.wsc->n_directions},
                {"estimate_fraction", c.wsc->estimate_fraction}, {"grid_levels", c.wsc->grid_levels}};
  } else {
    j["wsc"] = nullptr;
  }
  j["record_timings"] = c.record_timings;
  return j;
}

TrainedPipeline train_pipeline(const Graph& graph, const ExperimentConfig& config) {
  TrainedPipeline p;
  p.graph = graph;
  p.task = config.task;
  const TargetKind kind = config.task == Task::EdgeWeight ? TargetKind::Edges : TargetKind::Nodes;

  p.base_split = stage("split", [&] { return split_targets(graph, kind, config.ratios, config.seed); });

  Stopwatch cluster_clock;
  p.clusters = stage("cluster", [&] {
    // Merge weight: expected number of calibration targets a node brings in.
    const double calib_share = config.ratios.calib / (config.ratios.calib + config.ratios.test);
    LouvainOptions opts;
    opts.seed = config.seed + 3;
    opts.min_cluster_weight =
        config.min_cluster_calib > 0.0 ? config.min_cluster_calib : default_min_cluster_calib(config.alpha);
    opts.node_weight.assign(static_cast<std::size_t>(graph.n_nodes()), 0.0);
    for (Index t = 0; t < p.base_split.size(); ++t) {
      const Phase ph = p.base_split[t];
      if (ph != Phase::Calib && ph != Phase::Test) continue;
      const Index node = kind == TargetKind::Edges ? graph.edges()[static_cast<std::size_t>(t)].src : t;
      opts.node_weight[static_cast<std::size_t>(node)] += calib_share;
    }
    if (graph.n_edges() == 0) {
      ClusterAssignment single;
      single.membership.assign(static_cast<std::size_t>(graph.n_nodes()), 0);
      single.n_clusters = 1;
      return single;
    }
    return louvain(graph, opts);
  });
  p.target_cluster = kind == TargetKind::Edges ? edge_clusters(graph, p.clusters.membership)
                                               : p.clusters.membership;
  p.timings.emplace_back("cluster", cluster_clock.seconds());

  Stopwatch train_clock;
  const TrainingData data =
      stage("train", [&] { return make_training_data(graph, p.base_split, config.task, config.delta); });
  ModelSpec spec;
  spec.task = config.task;
  spec.encoder = config.encoder;
  spec.decoder = config.model;
  spec.in_dim = graph.n_features();
  spec.hidden = config.hidden;
  spec.n_layers = config.n_layers;
  spec.embed_dim = config.embed_dim;
  spec.n_classes = data.n_classes;
  spec.role = ModelRole::Conformal;
  GnnModel conformal_model(spec, config.seed + 1);
  spec.role = ModelRole::Residual;
  GnnModel residual_model(spec, config.seed + 2);
  CrossTrainConfig ct = config.cross_train;
  ct.alpha = config.alpha;
  ct.seed = config.seed;
  p.history = stage("train", [&] { return cross_train(conformal_model, residual_model, data, ct); });
  p.timings.emplace_back("train", train_clock.seconds());

  Stopwatch infer_clock;
  stage("inference", [&] {
    p.prediction = conformal_forward(conformal_model, data.conformal_ops, data.features, data.pairs);
    p.prediction.canonicalize();
    if (config.task == Task::NodeClass) p.probs = classify_probs(p.prediction.mean);
    p.residual =
        residual_forward(residual_model, data.residual_ops, data.features, data.pairs).signed_residual;
    return 0;
  });
  p.timings.emplace_back("inference", infer_clock.seconds());
  return p;
}

SplitMask resplit(const SplitMask& base, std::uint64_t seed) {
  std::vector<Index> pool;
  Index n_calib = 0;
  for (Index t = 0; t < base.size(); ++t) {
    if (base[t] == Phase::Calib) ++n_calib;
    if (base[t] == Phase::Calib || base[t] == Phase::Test) pool.push_back(t);
  }
  std::mt19937_64 rng(seed);
  std::shuffle(pool.begin(), pool.end(), rng);
  std::vector<Phase> assignment = base.assignment();
  for (std::size_t i = 0; i < pool.size(); ++i)
    assignment[static_cast<std::size_t>(pool[i])] =
        static_cast<Index>(i) < n_calib ? Phase::Calib : Phase::Test;
  return SplitMask(base.kind(), std::move(assignment), seed);
}

Evaluation evaluate(const TrainedPipeline& p, const SplitMask& split, ScoreVariant variant,
                    bool clustered, double alpha, const std::optional<WscSettings>& wsc,
                    std::uint64_t seed) {
  if (split.size() != p.n_targets()) throw std::invalid_argument("evaluate: split size mismatch");
  const bool classes = p.task == Task::NodeClass;
  const Index n_clusters = clustered ? p.clusters.n_clusters : 1;
  auto cluster_of = [&](Index t) { return clustered ? p.target_cluster[static_cast<std::size_t>(t)] : 0; };

  Vector truth;
  Matrix onehot;
  if (p.task == Task::EdgeWeight) {
    truth = Eigen::Map<const Vector>(p.graph.weights().data(), p.graph.n_edges());
  } else {
    truth = p.graph.labels().values;
    if (classes) onehot = one_hot(truth, p.graph.labels().n_classes);
  }

  auto target_score = [&](Index t) {
    if (classes) {
      const Eigen::RowVectorXd y = onehot.row(t), probs = p.probs.row(t),
                               lo = p.prediction.lower.row(t), hi = p.prediction.upper.row(t),
                               r = p.residual.row(t);
      return conformal::class_score(variant, y, probs, lo, hi, r);
    }
    return conformal::score<double>(variant, truth(t), p.prediction.mean(t, 0), p.prediction.lower(t, 0),
                                    p.prediction.upper(t, 0), p.residual(t, 0));
  };

  conformal::ScoreSet scores;
  scores.alpha = alpha;
  scores.variant = variant;
  for (Index t : split.targets(Phase::Calib)) scores.scores.push_back({t, cluster_of(t), target_score(t)});

  Evaluation out;
  out.quantiles = conformal::calibrate(scores, n_clusters, alpha);
  out.test_targets = split.targets(Phase::Test);
  if (out.test_targets.empty()) throw std::invalid_argument("evaluate: no test targets");

  std::vector<char> covered;
  std::map<Index, std::pair<Index, Index>> per_cluster;  // cluster -> (covered, total)
  for (Index t : out.test_targets) {
    const double d = out.quantiles.at(cluster_of(t));
    bool hit = false;
    if (classes) {
      const Eigen::RowVectorXd probs = p.probs.row(t), lo = p.prediction.lower.row(t),
                               hi = p.prediction.upper.row(t), r = p.residual.row(t);
      out.sets.push_back(conformal::build_prediction_set(variant, probs, lo, hi, r, d, t));
      hit = out.sets.back().contains(static_cast<int>(truth(t)));
    } else {
      out.intervals.push_back(conformal::build_interval(variant, p.prediction.mean(t, 0),
                                                        p.prediction.lower(t, 0),
                                                        p.prediction.upper(t, 0), p.residual(t, 0), d, t));
      hit = out.intervals.back().contains(truth(t));
    }
    covered.push_back(hit ? 1 : 0);
    auto& pc = per_cluster[p.target_cluster[static_cast<std::size_t>(t)]];
    pc.first += hit ? 1 : 0;
    ++pc.second;
  }

  EvalReport& r = out.report;
  r.alpha = alpha;
  r.seed = seed;
  if (classes) {
    std::vector<int> labels;
    for (Index t : out.test_targets) labels.push_back(static_cast<int>(truth(t)));
    r.coverage = coverage(out.sets, labels);
    r.inefficiency = inefficiency(out.sets);
  } else {
    std::vector<double> ys;
    for (Index t : out.test_targets) ys.push_back(truth(t));
    r.coverage = coverage(out.intervals, ys);
    const Inefficiency ineff = inefficiency(out.intervals);
    r.inefficiency = ineff.value;
    r.n_unbounded = ineff.n_unbounded;
  }
  for (const auto& [cluster, counts] : per_cluster)
    r.per_cluster_coverage[cluster] =
        static_cast<double>(counts.first) / static_cast<double>(counts.second);

  if (wsc && out.test_targets.size() >= 20) {
    const Matrix feats = p.task == Task::EdgeWeight ? edge_target_features(p.graph, out.test_targets)
                                                    : node_target_features(p.graph, out.test_targets);
    WscOptions opts;
    opts.delta_mass = wsc->delta_mass;
    opts.n_directions = wsc->n_directions;
    opts.estimate_fraction = wsc->estimate_fraction;
    opts.grid_levels = wsc->grid_levels;
    opts.seed = seed;
    r.wsc = rrgnn::wsc(feats, covered, opts).value;
  }
  return out;
}

MetricSummary summarize(const std::vector<double>& values) {
  MetricSummary s;
  if (values.empty()) return s;
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - s.mean) * (v - s.mean);
    s.sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return s;
}

RunReport run_experiment(const ExperimentConfig& config) {
  config.validate();
  RunReport report;
  report.config = config;

  Stopwatch load_clock;
  const Dataset dataset = stage("load", [&] { return load_dataset(config.dataset, config.base_dir); });
  const double load_seconds = load_clock.seconds();
  const Graph& graph = dataset.graph;
  stage("load", [&] {
    if (config.task == Task::EdgeWeight && !graph.has_weights())
      throw std::invalid_argument("EdgeWeight task needs edge weights");
    if (config.task != Task::EdgeWeight && !graph.has_labels())
      throw std::invalid_argument("node task needs node labels");
    if (config.task == Task::NodeClass && !graph.labels().is_classification())
      throw std::invalid_argument("NodeClass needs class labels");
    if (config.task == Task::NodeReg && graph.labels().is_classification())
      throw std::invalid_argument("NodeReg needs real-valued labels");
    return 0;
  });

  const TrainedPipeline pipeline = train_pipeline(graph, config);
  report.n_clusters = config.clustered ? pipeline.clusters.n_clusters : 1;
  report.modularity = pipeline.clusters.modularity;
  report.phases = pipeline.history.phases;

  Stopwatch eval_clock;
  std::vector<double> cov, ineff, wsc_values;
  for (Index r = 0; r < config.n_resplits; ++r) {
    const std::uint64_t seed = config.seed + static_cast<std::uint64_t>(r);
    Evaluation ev = stage("calibrate", [&] {
      return evaluate(pipeline, resplit(pipeline.base_split, seed), config.score_variant,
                      config.clustered, config.alpha, config.wsc, seed);
    });
    cov.push_back(ev.report.coverage);
    ineff.push_back(ev.report.inefficiency);
    if (ev.report.wsc) wsc_values.push_back(*ev.report.wsc);
    report.resplits.push_back(std::move(ev.report));
  }
  report.coverage = summarize(cov);
  report.inefficiency = summarize(ineff);
  if (!wsc_values.empty()) report.wsc = summarize(wsc_values);

  if (config.record_timings) {
    report.timings.emplace_back("load", load_seconds);
    for (const auto& t : pipeline.timings) report.timings.push_back(t);
    report.timings.emplace_back("calibrate", eval_clock.seconds());
  }
  return report;
}

json to_json(const RunReport& report) {
  json j;
  j["version"] = report.version;
  j["config"] = to_json(report.config);
  json resplits = json::array();
  for (const auto& r : report.resplits) resplits.push_back(to_json(r));
  j["resplits"] = resplits;
  auto summary = [](const MetricSummary& s) {
    return json{{"mean", null_if_nan(s.mean)}, {"sd", null_if_nan(s.sd)}};
  };
  j["aggregate"] = {{"coverage", summary(report.coverage)},
                    {"inefficiency", summary(report.inefficiency)},
                    {"wsc", report.wsc ? summary(*report.wsc) : json(nullptr)}};
  j["n_clusters"] = report.n_clusters;
  j["modularity"] = report.modularity;
  json phases = json::array();
  for (const auto& ph : report.phases)
    phases.push_back({{"index", ph.index},
                      {"model", to_string(ph.model)},
                      {"initial_loss", null_if_nan(ph.initial_loss)},
                      {"final_loss", null_if_nan(ph.final_loss)}});
  j["phases"] = phases;
  if (!report.timings.empty()) {
    json t = json::object();
    for (const auto& [name, seconds] : report.timings) t[name] = seconds;
    j["timings"] = t;
  }
  return j;
}

std::string format_report(const RunReport& report) {
  std::ostringstream out;
  const auto& c = report.config;
  out << "task " << to_string(c.task) << "  encoder " << to_string(c.encoder) << "  score "
      << conformal::to_string(c.score_variant) << (c.clustered ? " (clustered)" : "") << "  alpha "
      << c.alpha << "\n";
  out << "clusters " << report.n_clusters << "  modularity " << std::fixed << std::setprecision(4)
      << report.modularity << "  resplits " << report.resplits.size() << "\n\n";
  out << std::left << std::setw(14) << "metric" << std::right << std::setw(10) << "mean"
      << std::setw(10) << "sd" << "\n";
  auto row = [&](const char* name, const MetricSummary& s) {
    out << std::left << std::setw(14) << name << std::right << std::setw(10) << s.mean
        << std::setw(10) << s.sd << "\n";
  };
  row("coverage", report.coverage);
  row("inefficiency", report.inefficiency);
  if (report.wsc) row("wsc", *report.wsc);
  Index unbounded = 0;
  for (const auto& r : report.resplits) unbounded += r.n_unbounded;
  if (unbounded > 0) out << "unbounded intervals (all resplits): " << unbounded << "\n";
  if (!report.timings.empty()) {
    out << "\n";
    for (const auto& [name, seconds] : report.timings)
      out << std::left << std::setw(14) << name << std::right << std::setw(10) << seconds << " s\n";
  }
  return out.str();
}

}  // namespace rrgnn
