#pragma once

#include "rrgnn/graph.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace rrgnn {

struct ClusterAssignment {
  std::vector<Index> membership;  // node -> cluster id in [0, n_clusters)
  Index n_clusters = 0;
  double modularity = 0.0;
  /// Modularity of the singleton start, after each pass that moved a node, and
  /// after each improving restart. Merging small clusters is not included.
  std::vector<double> pass_modularity;
};

/// Newman modularity of a partition over the binary, symmetrized adjacency.
double modularity(const Graph& graph, std::span<const Index> membership);

struct LouvainOptions {
  std::uint64_t seed = 0;
  /// Clusters whose target weight falls below this are merged into the
  /// neighbor giving the largest modularity gain. 0 disables merging.
  double min_cluster_weight = 0.0;
  /// Per-node target weight used for the merge threshold; empty means 1 per node.
  std::vector<double> node_weight;
  double tolerance = 1e-7;
  /// Perturb-and-reoptimize rounds after the first multilevel run. Each merges
  /// two adjacent clusters, isolates a `perturbation` share of nodes and keeps
  /// the result only if modularity improves.
  Index restarts = 20;
  double perturbation = 0.3;
};

ClusterAssignment louvain(const Graph& graph, const LouvainOptions& options = {});

/// Default merge threshold ceil(1/alpha) + 1.
double default_min_cluster_calib(double alpha);

/// Cluster of each edge target: the cluster of its source node.
std::vector<Index> edge_clusters(const Graph& graph, std::span<const Index> membership);

}  // namespace rrgnn
