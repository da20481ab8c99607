#include "rrgnn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

namespace rrgnn {

double coverage(std::span<const PredictionInterval> intervals, std::span<const double> truths) {
  if (intervals.size() != truths.size()) throw std::invalid_argument("coverage: length mismatch");
  if (intervals.empty()) throw std::invalid_argument("coverage: no targets");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < intervals.size(); ++i)
    if (intervals[i].contains(truths[i])) ++hit;
  return static_cast<double>(hit) / static_cast<double>(intervals.size());
}

double coverage(std::span<const PredictionSet> sets, std::span<const int> truths) {
  if (sets.size() != truths.size()) throw std::invalid_argument("coverage: length mismatch");
  if (sets.empty()) throw std::invalid_argument("coverage: no targets");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < sets.size(); ++i)
    if (sets[i].contains(truths[i])) ++hit;
  return static_cast<double>(hit) / static_cast<double>(sets.size());
}

Inefficiency inefficiency(std::span<const PredictionInterval> intervals) {
  Inefficiency out;
  double total = 0.0;
  for (const auto& iv : intervals) {
    if (!iv.bounded()) {
      ++out.n_unbounded;
      continue;
    }
    total += iv.width();
    ++out.n_bounded;
  }
  out.value = out.n_bounded > 0 ? total / static_cast<double>(out.n_bounded)
                                : std::numeric_limits<double>::quiet_NaN();
  return out;
}

double inefficiency(std::span<const PredictionSet> sets) {
  if (sets.empty()) return std::numeric_limits<double>::quiet_NaN();
  double total = 0.0;
  for (const auto& s : sets) total += static_cast<double>(s.labels.size());
  return total / static_cast<double>(sets.size());
}

Matrix sample_directions(Index dim, Index count, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix dirs(dim, count);
  for (Index c = 0; c < count; ++c) {
    for (Index r = 0; r < dim; ++r) dirs(r, c) = normal(rng);
    const double norm = dirs.col(c).norm();
    if (norm > 0.0) dirs.col(c) /= norm;
  }
  return dirs;
}

WscResult wsc_with_directions(const Matrix& features, std::span<const char> covered,
                              const Matrix& directions, std::span<const Index> estimate_rows,
                              std::span<const Index> eval_rows, double delta_mass,
                              Index grid_levels) {
  if (!(delta_mass > 0.0 && delta_mass <= 1.0))
    throw std::invalid_argument("wsc: delta_mass must lie in (0, 1]");
  if (static_cast<Index>(covered.size()) != features.rows())
    throw std::invalid_argument("wsc: covered/feature length mismatch");
  if (directions.rows() != features.cols()) throw std::invalid_argument("wsc: direction dim mismatch");
  if (estimate_rows.empty() || eval_rows.empty())
    throw std::invalid_argument("wsc: empty estimate or evaluation split");

  const auto n_est = static_cast<Index>(estimate_rows.size());
  std::vector<Index> grid;
  if (grid_levels <= 0 || grid_levels >= n_est) {
    grid.resize(static_cast<std::size_t>(n_est));
    std::iota(grid.begin(), grid.end(), Index{0});
  } else {
    for (Index l = 0; l < grid_levels; ++l) {
      const double q = grid_levels == 1 ? 0.0 : static_cast<double>(l) / (grid_levels - 1);
      grid.push_back(static_cast<Index>(std::llround(q * static_cast<double>(n_est - 1))));
    }
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  }
  const auto min_count = static_cast<Index>(std::ceil(delta_mass * static_cast<double>(n_est) - 1e-12));

  WscResult best;
  best.estimate_coverage = std::numeric_limits<double>::infinity();
  std::vector<std::pair<double, char>> proj(static_cast<std::size_t>(n_est));
  std::vector<Index> prefix(static_cast<std::size_t>(n_est) + 1);
  for (Index d = 0; d < directions.cols(); ++d) {
    const auto v = directions.col(d);
    for (Index i = 0; i < n_est; ++i) {
      const Index row = estimate_rows[static_cast<std::size_t>(i)];
      proj[static_cast<std::size_t>(i)] = {features.row(row).dot(v), covered[static_cast<std::size_t>(row)]};
    }
    std::sort(proj.begin(), proj.end());
    prefix[0] = 0;
    for (Index i = 0; i < n_est; ++i) prefix[i + 1] = prefix[i] + (proj[i].second ? 1 : 0);

    for (Index lo : grid) {
      for (Index hi : grid) {
        if (hi < lo) continue;
        const Index count = hi - lo + 1;
        if (count < min_count) continue;
        const double cov = static_cast<double>(prefix[hi + 1] - prefix[lo]) / static_cast<double>(count);
        if (cov < best.estimate_coverage) {
          best.estimate_coverage = cov;
          best.direction = d;
          best.lower = lo == 0 ? -std::numeric_limits<double>::infinity()
                               : 0.5 * (proj[lo - 1].first + proj[lo].first);
          best.upper = hi == n_est - 1 ? std::numeric_limits<double>::infinity()
                                       : 0.5 * (proj[hi].first + proj[hi + 1].first);
        }
      }
    }
  }

  const auto v = directions.col(best.direction);
  Index in_slab = 0, covered_in_slab = 0, covered_total = 0;
  for (Index row : eval_rows) {
    const bool c = covered[static_cast<std::size_t>(row)] != 0;
    covered_total += c ? 1 : 0;
    const double p = features.row(row).dot(v);
    if (best.lower <= p && p <= best.upper) {
      ++in_slab;
      covered_in_slab += c ? 1 : 0;
    }
  }
  best.eval_marginal = static_cast<double>(covered_total) / static_cast<double>(eval_rows.size());
  best.eval_in_slab = in_slab;
  // An empty evaluation slab carries no information; report the marginal.
  best.value = in_slab > 0 ? static_cast<double>(covered_in_slab) / static_cast<double>(in_slab)
                           : best.eval_marginal;
  return best;
}

WscResult wsc(const Matrix& features, std::span<const char> covered, const WscOptions& options) {
  if (!(options.delta_mass > 0.0 && options.delta_mass <= 1.0))
    throw std::invalid_argument("wsc: delta_mass must lie in (0, 1]");
  if (features.rows() < 20) throw std::invalid_argument("wsc: needs at least 20 targets");
  if (!(options.estimate_fraction > 0.0 && options.estimate_fraction < 1.0))
    throw std::invalid_argument("wsc: estimate_fraction must lie in (0, 1)");
  if (options.n_directions < 1) throw std::invalid_argument("wsc: need at least one direction");

  std::mt19937_64 rng(options.seed);
  std::vector<Index> rows(static_cast<std::size_t>(features.rows()));
  std::iota(rows.begin(), rows.end(), Index{0});
  std::shuffle(rows.begin(), rows.end(), rng);
  const auto n_est = std::clamp<Index>(
      std::llround(options.estimate_fraction * static_cast<double>(rows.size())), 1,
      static_cast<Index>(rows.size()) - 1);
  const std::span<const Index> all(rows);
  const Matrix dirs = sample_directions(features.cols(), options.n_directions, rng);
  return wsc_with_directions(features, covered, dirs, all.first(static_cast<std::size_t>(n_est)),
                             all.subspan(static_cast<std::size_t>(n_est)), options.delta_mass,
                             options.grid_levels);
}

Matrix edge_target_features(const Graph& graph, std::span<const Index> edge_targets) {
  const Index f = graph.n_features();
  Matrix out(static_cast<Index>(edge_targets.size()), 2 * f);
  for (std::size_t i = 0; i < edge_targets.size(); ++i) {
    const auto& e = graph.edges()[static_cast<std::size_t>(edge_targets[i])];
    out.row(static_cast<Index>(i)) << graph.features().row(e.src), graph.features().row(e.dst);
  }
  return out;
}

Matrix node_target_features(const Graph& graph, std::span<const Index> node_targets) {
  Matrix out(static_cast<Index>(node_targets.size()), graph.n_features());
  for (std::size_t i = 0; i < node_targets.size(); ++i)
    out.row(static_cast<Index>(i)) = graph.features().row(node_targets[i]);
  return out;
}

nlohmann::json to_json(const EvalReport& report) {
  nlohmann::json j;
  j["coverage"] = report.coverage;
  j["inefficiency"] = std::isnan(report.inefficiency) ? nlohmann::json(nullptr)
                                                       : nlohmann::json(report.inefficiency);
  j["wsc"] = report.wsc ? nlohmann::json(*report.wsc) : nlohmann::json(nullptr);
  nlohmann::json per = nlohmann::json::object();
  for (const auto& [cluster, cov] : report.per_cluster_coverage) per[std::to_string(cluster)] = cov;
  j["per_cluster_coverage"] = per;
  j["n_unbounded"] = report.n_unbounded;
  j["alpha"] = report.alpha;
  j["seed"] = report.seed;
  return j;
}

}  // namespace rrgnn
