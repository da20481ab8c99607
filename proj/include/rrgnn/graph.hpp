#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace rrgnn {

using Index = std::int64_t;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

struct Edge {
  Index src = 0;
  Index dst = 0;
  bool operator==(const Edge&) const = default;
};

/// Node-level supervision. Regression graphs carry real labels with
/// n_classes == 0; classification graphs carry integral class ids.
struct NodeLabels {
  Vector values;
  int n_classes = 0;
  bool is_classification() const { return n_classes > 0; }
};

struct GraphOptions {
  bool directed = false;
  bool allow_self_loops = false;
};

class Graph {
 public:
  Graph() = default;

  Index n_nodes() const { return n_nodes_; }
  Index n_edges() const { return static_cast<Index>(edges_.size()); }
  Index n_features() const { return features_.cols(); }
  bool directed() const { return directed_; }

  const std::vector<Edge>& edges() const { return edges_; }
  const Matrix& features() const { return features_; }
  bool has_weights() const { return weights_.has_value(); }
  const std::vector<double>& weights() const { return weights_.value(); }
  bool has_labels() const { return labels_.has_value(); }
  const NodeLabels& labels() const { return labels_.value(); }

  /// Number of incident edges; for directed graphs in + out.
  const std::vector<Index>& degrees() const { return degrees_; }

  /// Index of the edge (src, dst), honoring symmetry for undirected graphs.
  std::optional<Index> find_edge(Index src, Index dst) const;
  /// Weight lookup, symmetric for undirected graphs. Throws if absent.
  double weight(Index src, Index dst) const;

  /// Binary adjacency A; symmetric when undirected.
  SparseMatrix adjacency() const;

  /// Copy with replaced labels or weights; structure is shared.
  Graph with_labels(NodeLabels labels) const;
  Graph with_weights(std::vector<double> weights) const;

 private:
  friend Graph build_graph(Index, std::span<const Edge>, Matrix, std::optional<std::vector<double>>,
                           std::optional<NodeLabels>, GraphOptions);

  Index n_nodes_ = 0;
  bool directed_ = false;
  std::vector<Edge> edges_;
  std::optional<std::vector<double>> weights_;
  Matrix features_;
  std::optional<NodeLabels> labels_;
  std::vector<Index> degrees_;
  std::vector<std::pair<std::uint64_t, Index>> edge_index_;  // sorted by key
  void index_edges();
};

/// Validates and canonicalizes. Undirected edges are stored once with
/// src <= dst; duplicates are dropped and the first occurrence (and its
/// weight) is kept.
Graph build_graph(Index n_nodes, std::span<const Edge> edges, Matrix features,
                  std::optional<std::vector<double>> weights = std::nullopt,
                  std::optional<NodeLabels> labels = std::nullopt,
                  GraphOptions options = {});

enum class TargetKind { Edges, Nodes };
enum class Phase : std::uint8_t { Train = 0, Val = 1, Calib = 2, Test = 3 };

const char* to_string(Phase phase);

struct SplitRatios {
  double train = 0.3;
  double val = 0.3;
  double calib = 0.2;
  double test = 0.2;
  std::array<double, 4> as_array() const { return {train, val, calib, test}; }
};

class SplitMask {
 public:
  SplitMask(TargetKind kind, std::vector<Phase> assignment, std::uint64_t seed)
      : kind_(kind), assignment_(std::move(assignment)), seed_(seed) {}

  TargetKind kind() const { return kind_; }
  std::uint64_t seed() const { return seed_; }
  Index size() const { return static_cast<Index>(assignment_.size()); }
  Phase operator[](Index target) const { return assignment_[static_cast<std::size_t>(target)]; }
  const std::vector<Phase>& assignment() const { return assignment_; }

  std::vector<Index> targets(Phase phase) const;
  Index count(Phase phase) const;

 private:
  TargetKind kind_;
  std::vector<Phase> assignment_;
  std::uint64_t seed_;
};

/// Largest-remainder bucket sizes for n targets.
std::array<Index, 4> split_sizes(Index n_targets, const SplitRatios& ratios);

SplitMask split_targets(const Graph& graph, TargetKind kind, const SplitRatios& ratios,
                        std::uint64_t seed);
SplitMask split_targets(Index n_targets, TargetKind kind, const SplitRatios& ratios,
                        std::uint64_t seed);

/// Weighted adjacency where edges of `keep` carry their weight, every other
/// edge carries delta and non-edges stay zero.
struct MaskedWeights {
  SparseMatrix values;
  double delta = 0.0;
  Phase keep = Phase::Train;
};

/// 1e-3 x the smallest positive train weight, floored at 1e-6.
double default_delta(const Graph& graph, const SplitMask& split);

MaskedWeights mask_weights(const Graph& graph, const SplitMask& split, double delta,
                           Phase keep = Phase::Train);

/// Labels kept on one phase and zeroed elsewhere. Classification labels are
/// one-hot encoded (n x K); regression labels are n x 1. `mask` flags rows
/// that carry a genuine label.
struct MaskedLabels {
  Matrix values;
  Vector mask;
};

MaskedLabels mask_labels(const Graph& graph, const SplitMask& split, Phase phase);

Matrix one_hot(const Vector& class_ids, int n_classes);

}  // namespace rrgnn
