#include "rrgnn/graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

namespace rrgnn {

namespace {

std::uint64_t edge_key(Index src, Index dst, Index n) {
  return static_cast<std::uint64_t>(src) * static_cast<std::uint64_t>(n) +
         static_cast<std::uint64_t>(dst);
}

}  // namespace

void Graph::index_edges() {
  edge_index_.clear();
  edge_index_.reserve(edges_.size());
  degrees_.assign(static_cast<std::size_t>(n_nodes_), 0);
  for (std::size_t e = 0; e < edges_.size(); ++e) {
    const auto [s, d] = edges_[e];
    edge_index_.emplace_back(edge_key(s, d, n_nodes_), static_cast<Index>(e));
    ++degrees_[static_cast<std::size_t>(s)];
    if (s != d) ++degrees_[static_cast<std::size_t>(d)];
  }
  std::sort(edge_index_.begin(), edge_index_.end());
}

std::optional<Index> Graph::find_edge(Index src, Index dst) const {
  if (src < 0 || dst < 0 || src >= n_nodes_ || dst >= n_nodes_) return std::nullopt;
  if (!directed_ && src > dst) std::swap(src, dst);
  const auto key = edge_key(src, dst, n_nodes_);
  auto it = std::lower_bound(edge_index_.begin(), edge_index_.end(),
                             std::pair<std::uint64_t, Index>{key, 0});
  if (it == edge_index_.end() || it->first != key) return std::nullopt;
  return it->second;
}

double Graph::weight(Index src, Index dst) const {
  if (!weights_) throw std::logic_error("graph has no edge weights");
  auto e = find_edge(src, dst);
  if (!e) throw std::out_of_range("no such edge");
  return (*weights_)[static_cast<std::size_t>(*e)];
}

SparseMatrix Graph::adjacency() const {
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(edges_.size() * 2);
  for (const auto& [s, d] : edges_) {
    triplets.emplace_back(s, d, 1.0);
    if (!directed_ && s != d) triplets.emplace_back(d, s, 1.0);
  }
  SparseMatrix a(n_nodes_, n_nodes_);
  a.setFromTriplets(triplets.begin(), triplets.end());
  return a;
}

Graph Graph::with_labels(NodeLabels labels) const {
  if (labels.values.size() != n_nodes_) throw std::invalid_argument("label count mismatch");
  Graph g = *this;
  g.labels_ = std::move(labels);
  return g;
}

Graph Graph::with_weights(std::vector<double> weights) const {
  if (static_cast<Index>(weights.size()) != n_edges())
    throw std::invalid_argument("weight count mismatch");
  for (double w : weights)
    if (!(w >= 0.0)) throw std::invalid_argument("negative weight");
  Graph g = *this;
  g.weights_ = std::move(weights);
  return g;
}

Graph build_graph(Index n_nodes, std::span<const Edge> edges, Matrix features,
                  std::optional<std::vector<double>> weights, std::optional<NodeLabels> labels,
                  GraphOptions options) {
  if (n_nodes < 0) throw std::invalid_argument("negative node count");
  if (features.rows() != n_nodes) throw std::invalid_argument("feature row mismatch");
  if (weights && weights->size() != edges.size())
    throw std::invalid_argument("weight count mismatch");
  if (labels) {
    if (labels->values.size() != n_nodes) throw std::invalid_argument("label count mismatch");
    if (labels->is_classification()) {
      for (Index i = 0; i < n_nodes; ++i) {
        const double v = labels->values[i];
        if (v != std::floor(v) || v < 0 || v >= labels->n_classes)
          throw std::invalid_argument("class label out of range");
      }
    }
  }

  Graph g;
  g.n_nodes_ = n_nodes;
  g.directed_ = options.directed;
  g.features_ = std::move(features);
  g.labels_ = std::move(labels);

  std::vector<std::pair<std::uint64_t, Index>> seen;
  seen.reserve(edges.size());
  std::vector<double> kept_weights;
  for (std::size_t e = 0; e < edges.size(); ++e) {
    auto [s, d] = edges[e];
    if (s < 0 || d < 0 || s >= n_nodes || d >= n_nodes)
      throw std::out_of_range("out-of-range node id");
    if (s == d && !options.allow_self_loops) throw std::invalid_argument("self-loop not allowed");
    if (weights && !((*weights)[e] >= 0.0)) throw std::invalid_argument("negative weight");
    if (!options.directed && s > d) std::swap(s, d);
    g.edges_.push_back({s, d});
    if (weights) kept_weights.push_back((*weights)[e]);
  }

  // Dedup keeping the first occurrence, preserving insertion order.
  std::vector<Index> order(g.edges_.size());
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    return edge_key(g.edges_[a].src, g.edges_[a].dst, n_nodes) <
           edge_key(g.edges_[b].src, g.edges_[b].dst, n_nodes);
  });
  std::vector<char> keep(g.edges_.size(), 1);
  for (std::size_t i = 1; i < order.size(); ++i)
    if (g.edges_[order[i]] == g.edges_[order[i - 1]]) keep[order[i]] = 0;

  std::vector<Edge> unique_edges;
  std::vector<double> unique_weights;
  for (std::size_t e = 0; e < g.edges_.size(); ++e) {
    if (!keep[e]) continue;
    unique_edges.push_back(g.edges_[e]);
    if (weights) unique_weights.push_back(kept_weights[e]);
  }
  g.edges_ = std::move(unique_edges);
  if (weights) g.weights_ = std::move(unique_weights);
  g.index_edges();
  return g;
}

const char* to_string(Phase phase) {
  switch (phase) {
    case Phase::Train: return "train";
    case Phase::Val: return "val";
    case Phase::Calib: return "calib";
    case Phase::Test: return "test";
  }
  return "?";
}

std::vector<Index> SplitMask::targets(Phase phase) const {
  std::vector<Index> out;
  for (std::size_t t = 0; t < assignment_.size(); ++t)
    if (assignment_[t] == phase) out.push_back(static_cast<Index>(t));
  return out;
}

Index SplitMask::count(Phase phase) const {
  return static_cast<Index>(std::count(assignment_.begin(), assignment_.end(), phase));
}

std::array<Index, 4> split_sizes(Index n_targets, const SplitRatios& ratios) {
  const auto r = ratios.as_array();
  double total = 0.0;
  for (double x : r) {
    if (!(x >= 0.0)) throw std::invalid_argument("split ratios must be nonnegative");
    total += x;
  }
  if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("split ratios must sum to 1");

  std::array<Index, 4> sizes{};
  std::array<double, 4> remainder{};
  Index assigned = 0;
  for (std::size_t b = 0; b < 4; ++b) {
    const double exact = r[b] * static_cast<double>(n_targets);
    sizes[b] = static_cast<Index>(std::floor(exact + 1e-9));
    remainder[b] = exact - static_cast<double>(sizes[b]);
    assigned += sizes[b];
  }
  std::array<std::size_t, 4> order{0, 1, 2, 3};
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (std::size_t i = 0; assigned < n_targets; ++i, ++assigned) ++sizes[order[i % 4]];
  return sizes;
}

SplitMask split_targets(Index n_targets, TargetKind kind, const SplitRatios& ratios,
                        std::uint64_t seed) {
  const auto sizes = split_sizes(n_targets, ratios);
  const auto r = ratios.as_array();
  if (n_targets >= 4) {
    for (std::size_t b = 0; b < 4; ++b)
      if (r[b] > 0.0 && sizes[b] == 0)
        throw std::invalid_argument(std::string("empty ") + to_string(static_cast<Phase>(b)) +
                                    " split");
  }
  std::vector<Index> perm(static_cast<std::size_t>(n_targets));
  std::iota(perm.begin(), perm.end(), Index{0});
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);

  std::vector<Phase> assignment(perm.size());
  std::size_t pos = 0;
  for (std::size_t b = 0; b < 4; ++b)
    for (Index c = 0; c < sizes[b]; ++c) assignment[perm[pos++]] = static_cast<Phase>(b);
  return SplitMask(kind, std::move(assignment), seed);
}

SplitMask split_targets(const Graph& graph, TargetKind kind, const SplitRatios& ratios,
                        std::uint64_t seed) {
  const Index n = kind == TargetKind::Edges ? graph.n_edges() : graph.n_nodes();
  return split_targets(n, kind, ratios, seed);
}

double default_delta(const Graph& graph, const SplitMask& split) {
  double min_w = std::numeric_limits<double>::infinity();
  if (graph.has_weights() && split.kind() == TargetKind::Edges) {
    const auto& w = graph.weights();
    for (std::size_t e = 0; e < w.size(); ++e)
      if (split[static_cast<Index>(e)] == Phase::Train && w[e] > 0.0) min_w = std::min(min_w, w[e]);
  }
  if (!std::isfinite(min_w)) return 1e-6;
  return std::max(1e-3 * min_w, 1e-6);
}

MaskedWeights mask_weights(const Graph& graph, const SplitMask& split, double delta, Phase keep) {
  if (!(delta > 0.0)) throw std::invalid_argument("delta must be positive");
  if (split.kind() != TargetKind::Edges) throw std::invalid_argument("split kind mismatch");
  if (!graph.has_weights()) throw std::invalid_argument("graph has no edge weights");
  if (split.size() != graph.n_edges()) throw std::invalid_argument("split size mismatch");

  const auto& w = graph.weights();
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(w.size() * 2);
  for (Index e = 0; e < graph.n_edges(); ++e) {
    const auto [s, d] = graph.edges()[static_cast<std::size_t>(e)];
    const double v = split[e] == keep ? w[static_cast<std::size_t>(e)] : delta;
    triplets.emplace_back(s, d, v);
    if (!graph.directed() && s != d) triplets.emplace_back(d, s, v);
  }
  MaskedWeights out;
  out.values.resize(graph.n_nodes(), graph.n_nodes());
  out.values.setFromTriplets(triplets.begin(), triplets.end());
  out.delta = delta;
  out.keep = keep;
  return out;
}

Matrix one_hot(const Vector& class_ids, int n_classes) {
  Matrix out = Matrix::Zero(class_ids.size(), n_classes);
  for (Index i = 0; i < class_ids.size(); ++i) {
    const auto c = static_cast<Index>(class_ids[i]);
    if (c < 0 || c >= n_classes) throw std::out_of_range("class id out of range");
    out(i, c) = 1.0;
  }
  return out;
}

MaskedLabels mask_labels(const Graph& graph, const SplitMask& split, Phase phase) {
  if (!graph.has_labels()) throw std::invalid_argument("missing labels");
  if (split.kind() != TargetKind::Nodes) throw std::invalid_argument("split kind mismatch");
  if (split.size() != graph.n_nodes()) throw std::invalid_argument("split size mismatch");
  const auto& labels = graph.labels();
  MaskedLabels out;
  out.values = labels.is_classification() ? one_hot(labels.values, labels.n_classes)
                                          : Matrix(labels.values);
  out.mask = Vector::Zero(graph.n_nodes());
  for (Index i = 0; i < graph.n_nodes(); ++i) {
    if (split[i] == phase)
      out.mask[i] = 1.0;
    else
      out.values.row(i).setZero();
  }
  return out;
}

}  // namespace rrgnn
