#pragma once

#include "rrgnn/conformal.hpp"
#include "rrgnn/graph.hpp"

#include <json.hpp>

#include <cstdint>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace rrgnn {

using conformal::PredictionInterval;
using conformal::PredictionSet;

double coverage(std::span<const PredictionInterval> intervals, std::span<const double> truths);
double coverage(std::span<const PredictionSet> sets, std::span<const int> truths);

/// Mean width over bounded intervals; unbounded ones are counted apart.
/// `value` is NaN when every interval is unbounded.
struct Inefficiency {
  double value = 0.0;
  Index n_bounded = 0;
  Index n_unbounded = 0;
};

Inefficiency inefficiency(std::span<const PredictionInterval> intervals);
/// Mean prediction-set cardinality.
double inefficiency(std::span<const PredictionSet> sets);

struct WscOptions {
  double delta_mass = 0.1;
  Index n_directions = 1000;
  double estimate_fraction = 0.25;
  /// Quantile levels of the projected values per direction; 0 = every value.
  Index grid_levels = 20;
  std::uint64_t seed = 0;
};

struct WscResult {
  double value = 1.0;          // coverage of the chosen slab on the evaluation part
  double eval_marginal = 1.0;  // marginal coverage on the evaluation part
  double estimate_coverage = 1.0;
  Index direction = 0;
  double lower = 0.0;  // slab bounds on v^T x
  double upper = 0.0;
  Index eval_in_slab = 0;
};

/// Unit directions (columns), Gaussian-normalized.
Matrix sample_directions(Index dim, Index count, std::mt19937_64& rng);

/// Slab search on the estimation rows, evaluated on the evaluation rows.
/// Candidate slabs are contiguous runs [i, j] of the sorted estimation
/// projections (i, j on the grid); a slab's real bounds sit halfway to the
/// neighbouring projections and open to +-inf at the extremes.
WscResult wsc_with_directions(const Matrix& features, std::span<const char> covered,
                              const Matrix& directions, std::span<const Index> estimate_rows,
                              std::span<const Index> eval_rows, double delta_mass,
                              Index grid_levels);

/// Worst-slice coverage: seeded estimate/eval split, then the slab search.
WscResult wsc(const Matrix& features, std::span<const char> covered, const WscOptions& options);

/// Row per edge target: [X_src || X_dst].
Matrix edge_target_features(const Graph& graph, std::span<const Index> edge_targets);
Matrix node_target_features(const Graph& graph, std::span<const Index> node_targets);

struct EvalReport {
  double coverage = 0.0;
  double inefficiency = 0.0;
  std::optional<double> wsc;
  std::map<Index, double> per_cluster_coverage;
  Index n_unbounded = 0;
  double alpha = 0.1;
  std::uint64_t seed = 0;
};

/// Flat object; a missing wsc and a NaN inefficiency serialize as null.
nlohmann::json to_json(const EvalReport& report);

}  // namespace rrgnn
