#include "rrgnn/community.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <stdexcept>

namespace rrgnn {

namespace {

// Weighted undirected graph in CSR form. self_loop[u] holds the ordered-pair
// sum of intra-node weight (2 per undirected self-loop edge), so that
// degree[u] = self_loop[u] + sum of incident link weights.
struct WeightedGraph {
  Index n = 0;
  std::vector<Index> offsets;
  // Compact types keep the move loops cache-resident on large graphs. Link
  // weights count binary edges, so they are exact integers.
  std::vector<std::int32_t> neighbors;
  std::vector<std::uint32_t> weights;
  std::vector<double> self_loop;
  std::vector<double> degree;
  double total = 0.0;  // 2m
};

WeightedGraph symmetrized(const Graph& graph) {
  const Index n = graph.n_nodes();
  if (n > std::numeric_limits<std::int32_t>::max())
    throw std::invalid_argument("community detection supports at most 2^31 - 1 nodes");
  std::vector<std::pair<Index, Index>> pairs;
  pairs.reserve(graph.edges().size());
  for (const auto& [s, d] : graph.edges()) pairs.emplace_back(std::min(s, d), std::max(s, d));
  std::sort(pairs.begin(), pairs.end());
  pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());

  WeightedGraph g;
  g.n = n;
  g.self_loop.assign(static_cast<std::size_t>(n), 0.0);
  g.degree.assign(static_cast<std::size_t>(n), 0.0);
  std::vector<Index> count(static_cast<std::size_t>(n) + 1, 0);
  for (const auto& [a, b] : pairs) {
    if (a == b) {
      g.self_loop[a] += 2.0;
      g.degree[a] += 2.0;
      continue;
    }
    ++count[a + 1];
    ++count[b + 1];
    g.degree[a] += 1.0;
    g.degree[b] += 1.0;
  }
  std::partial_sum(count.begin(), count.end(), count.begin());
  g.offsets = count;
  g.neighbors.resize(static_cast<std::size_t>(count.back()));
  g.weights.assign(g.neighbors.size(), 1);
  std::vector<Index> fill(g.offsets.begin(), g.offsets.end() - 1);
  for (const auto& [a, b] : pairs) {
    if (a == b) continue;
    g.neighbors[fill[a]++] = static_cast<std::int32_t>(b);
    g.neighbors[fill[b]++] = static_cast<std::int32_t>(a);
  }
  g.total = std::accumulate(g.degree.begin(), g.degree.end(), 0.0);
  return g;
}

double weighted_modularity(const WeightedGraph& g, std::span<const Index> community,
                           Index n_communities) {
  std::vector<double> in(static_cast<std::size_t>(n_communities), 0.0);
  std::vector<double> tot(static_cast<std::size_t>(n_communities), 0.0);
  for (Index u = 0; u < g.n; ++u) {
    const Index c = community[u];
    tot[c] += g.degree[u];
    in[c] += g.self_loop[u];
    for (Index p = g.offsets[u]; p < g.offsets[u + 1]; ++p)
      if (community[g.neighbors[p]] == c) in[c] += g.weights[p];
  }
  double q = 0.0;
  for (Index c = 0; c < n_communities; ++c) {
    const double share = tot[c] / g.total;
    q += in[c] / g.total - share * share;
  }
  return q;
}

// Renumbers labels contiguously in order of first appearance.
Index renumber(std::vector<Index>& labels) {
  std::vector<Index> map(labels.size(), -1);
  Index next = 0;
  for (auto& l : labels) {
    if (map[l] < 0) map[l] = next++;
    l = map[l];
  }
  return next;
}

// Local moving from `community` (ids in [0, g.n)) until no node can improve.
// Every node is visited once in random order; afterwards only neighbors of
// nodes that moved are revisited. Returns true if any node moved.
bool local_moves(const WeightedGraph& g, std::vector<Index>& community, std::mt19937_64& rng,
                 double tolerance) {
  const auto n = static_cast<std::size_t>(g.n);
  std::vector<double> tot(n, 0.0);
  std::vector<Index> size(n, 0);
  for (std::size_t u = 0; u < n; ++u) {
    tot[community[u]] += g.degree[u];
    ++size[community[u]];
  }
  std::vector<Index> empty;
  for (Index c = 0; c < g.n; ++c)
    if (size[c] == 0) empty.push_back(c);

  std::deque<Index> queue(n);
  std::iota(queue.begin(), queue.end(), Index{0});
  std::shuffle(queue.begin(), queue.end(), rng);
  std::vector<char> queued(n, 1);

  // Gains are in units of edge weight; moves must beat staying by this much.
  const double min_gain = tolerance * g.total;
  std::vector<double> link(n, -1.0);
  std::vector<Index> touched;
  bool moved_any = false;
  while (!queue.empty()) {
    const Index u = queue.front();
    queue.pop_front();
    queued[u] = 0;
    const Index own = community[u];
    const double k_u = g.degree[u];

    touched.clear();
    link[own] = 0.0;
    touched.push_back(own);
    for (Index p = g.offsets[u]; p < g.offsets[u + 1]; ++p) {
      const Index c = community[g.neighbors[p]];
      if (link[c] < 0.0) {
        link[c] = 0.0;
        touched.push_back(c);
      }
      link[c] += g.weights[p];
    }

    tot[own] -= k_u;
    --size[own];
    if (size[own] == 0) empty.push_back(own);

    const double stay = link[own] - tot[own] * k_u / g.total;
    Index best = own;
    double best_gain = stay;
    for (Index c : touched) {
      const double gain = link[c] - tot[c] * k_u / g.total;
      if (gain > best_gain + min_gain) {
        best_gain = gain;
        best = c;
      }
    }
    // An empty community has gain 0: isolate u when every option is worse.
    while (!empty.empty() && size[empty.back()] != 0) empty.pop_back();
    if (best_gain < -min_gain && !empty.empty()) best = empty.back();

    tot[best] += k_u;
    ++size[best];
    community[u] = best;
    for (Index c : touched) link[c] = -1.0;
    if (best == own) continue;
    moved_any = true;
    for (Index p = g.offsets[u]; p < g.offsets[u + 1]; ++p) {
      const Index v = g.neighbors[p];
      if (!queued[v] && community[v] != best) {
        queued[v] = 1;
        queue.push_back(v);
      }
    }
  }
  return moved_any;
}

// Splits each community of `part` back into singletons and greedily merges
// singletons into neighboring subcommunities of the same community. The
// refined partition becomes the next aggregation level, so its pieces can
// still leave their community later.
std::vector<Index> refine(const WeightedGraph& g, std::span<const Index> part,
                          std::mt19937_64& rng) {
  const auto n = static_cast<std::size_t>(g.n);
  std::vector<Index> ref(n);
  std::iota(ref.begin(), ref.end(), Index{0});
  std::vector<double> tot(g.degree.begin(), g.degree.end());
  std::vector<Index> size(n, 1);
  std::vector<Index> order(n);
  std::iota(order.begin(), order.end(), Index{0});
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<double> link(n, -1.0);
  std::vector<Index> touched;
  for (Index u : order) {
    if (size[ref[u]] != 1) continue;
    const double k_u = g.degree[u];
    touched.clear();
    for (Index p = g.offsets[u]; p < g.offsets[u + 1]; ++p) {
      const Index v = g.neighbors[p];
      if (part[v] != part[u] || ref[v] == ref[u]) continue;
      const Index c = ref[v];
      if (link[c] < 0.0) {
        link[c] = 0.0;
        touched.push_back(c);
      }
      link[c] += g.weights[p];
    }
    Index best = ref[u];
    double best_gain = 0.0;
    for (Index c : touched) {
      const double gain = link[c] - tot[c] * k_u / g.total;
      if (gain > best_gain) {
        best_gain = gain;
        best = c;
      }
      link[c] = -1.0;
    }
    if (best == ref[u]) continue;
    tot[ref[u]] -= k_u;
    --size[ref[u]];
    ref[u] = best;
    tot[best] += k_u;
    ++size[best];
  }
  return ref;
}

WeightedGraph aggregate(const WeightedGraph& g, std::span<const Index> community,
                        Index n_communities) {
  const auto k = static_cast<std::size_t>(n_communities);
  WeightedGraph out;
  out.n = n_communities;
  out.total = g.total;
  out.self_loop.assign(k, 0.0);
  out.degree.assign(k, 0.0);
  out.offsets.assign(k + 1, 0);

  // Nodes bucketed by community.
  std::vector<Index> start(k + 1, 0), members(static_cast<std::size_t>(g.n));
  for (Index u = 0; u < g.n; ++u) ++start[community[u] + 1];
  std::partial_sum(start.begin(), start.end(), start.begin());
  std::vector<Index> fill(start.begin(), start.end() - 1);
  for (Index u = 0; u < g.n; ++u) members[fill[community[u]]++] = u;

  out.neighbors.reserve(g.neighbors.size());
  out.weights.reserve(g.neighbors.size());
  std::vector<double> link(k, 0.0);
  std::vector<Index> touched;
  for (Index c = 0; c < n_communities; ++c) {
    touched.clear();
    for (Index i = start[c]; i < start[c + 1]; ++i) {
      const Index u = members[i];
      out.self_loop[c] += g.self_loop[u];
      out.degree[c] += g.degree[u];
      for (Index p = g.offsets[u]; p < g.offsets[u + 1]; ++p) {
        const Index d = community[g.neighbors[p]];
        if (d == c) {
          out.self_loop[c] += g.weights[p];
          continue;
        }
        if (link[d] == 0.0) touched.push_back(d);
        link[d] += g.weights[p];
      }
    }
    for (Index d : touched) {
      out.neighbors.push_back(static_cast<std::int32_t>(d));
      out.weights.push_back(static_cast<std::uint32_t>(link[d]));
      link[d] = 0.0;
    }
    out.offsets[c + 1] = static_cast<Index>(out.neighbors.size());
  }
  return out;
}

void merge_small_clusters(const WeightedGraph& g, std::vector<Index>& membership,
                          Index& n_clusters, std::span<const double> node_weight,
                          double threshold) {
  const auto k = static_cast<std::size_t>(n_clusters);
  std::vector<double> weight(k, 0.0), tot(k, 0.0);
  std::vector<std::map<Index, double>> links(k);
  std::vector<char> alive(k, 1);
  for (Index u = 0; u < g.n; ++u) {
    const Index c = membership[u];
    weight[c] += node_weight.empty() ? 1.0 : node_weight[u];
    tot[c] += g.degree[u];
    for (Index p = g.offsets[u]; p < g.offsets[u + 1]; ++p) {
      const Index d = membership[g.neighbors[p]];
      if (d != c) links[c][d] += g.weights[p];
    }
  }
  std::vector<Index> target(k);
  std::iota(target.begin(), target.end(), Index{0});
  Index remaining = n_clusters;
  while (remaining > 1) {
    Index small = -1;
    for (Index c = 0; c < n_clusters; ++c)
      if (alive[c] && weight[c] < threshold && (small < 0 || weight[c] < weight[small])) small = c;
    if (small < 0) break;

    // dQ of merging a into b: w_ab / m - tot_a tot_b / (2 m^2), with 2m = total.
    const double m = g.total / 2.0;
    Index best = -1;
    double best_gain = -std::numeric_limits<double>::infinity();
    for (Index c = 0; c < n_clusters; ++c) {
      if (!alive[c] || c == small) continue;
      auto it = links[small].find(c);
      const double w = it == links[small].end() ? 0.0 : it->second;
      const double gain = w / m - tot[small] * tot[c] / (2.0 * m * m);
      if (gain > best_gain) {
        best_gain = gain;
        best = c;
      }
    }
    alive[small] = 0;
    weight[best] += weight[small];
    tot[best] += tot[small];
    for (const auto& [d, w] : links[small]) {
      links[d].erase(small);
      if (d == best) continue;
      links[best][d] += w;
      links[d][best] += w;
    }
    links[small].clear();
    links[best].erase(small);
    target[small] = best;
    --remaining;
  }
  for (auto& c : membership) {
    while (target[c] != c) c = target[c];
  }
  n_clusters = renumber(membership);
}

}  // namespace

double modularity(const Graph& graph, std::span<const Index> membership) {
  if (static_cast<Index>(membership.size()) != graph.n_nodes())
    throw std::invalid_argument("membership must cover every node");
  if (graph.n_edges() == 0) throw std::invalid_argument("modularity undefined");
  const auto g = symmetrized(graph);
  std::vector<Index> labels(membership.begin(), membership.end());
  for (Index l : labels)
    if (l < 0) throw std::invalid_argument("negative cluster id");
  const Index k = renumber(labels);
  return weighted_modularity(g, labels, k);
}

namespace {

// Multilevel optimization from the node partition `start`: local moves,
// refinement, aggregation, repeated until nothing changes. Appends the
// modularity after every pass that moved a node to `passes`.
std::vector<Index> multilevel(const WeightedGraph& base, std::vector<Index> start,
                              std::mt19937_64& rng, double tolerance,
                              std::vector<double>* passes) {
  // membership maps each node to its node on the current level; `part` is
  // the community of each level node.
  std::vector<Index> membership(static_cast<std::size_t>(base.n));
  std::iota(membership.begin(), membership.end(), Index{0});
  WeightedGraph level = base;
  std::vector<Index> part = std::move(start);
  while (true) {
    const bool moved = local_moves(level, part, rng, tolerance);
    const Index n_parts = renumber(part);
    if (moved && passes) {
      std::vector<Index> flat = membership;
      for (auto& c : flat) c = part[c];
      passes->push_back(weighted_modularity(base, flat, n_parts));
    }
    if (n_parts == 1) break;

    std::vector<Index> ref = refine(level, part, rng);
    const Index k = renumber(ref);
    if (!moved && k == level.n) break;
    std::vector<Index> next_part(static_cast<std::size_t>(k));
    for (Index u = 0; u < level.n; ++u) next_part[ref[u]] = part[u];
    for (auto& c : membership) c = ref[c];
    level = aggregate(level, ref, k);
    part = std::move(next_part);
  }
  for (auto& c : membership) c = part[c];
  renumber(membership);
  return membership;
}

}  // namespace

ClusterAssignment louvain(const Graph& graph, const LouvainOptions& options) {
  if (graph.n_edges() == 0) throw std::invalid_argument("louvain requires at least one edge");
  if (!options.node_weight.empty() &&
      static_cast<Index>(options.node_weight.size()) != graph.n_nodes())
    throw std::invalid_argument("node weight size mismatch");

  const WeightedGraph base = symmetrized(graph);
  const Index n = graph.n_nodes();
  std::mt19937_64 rng(options.seed);

  ClusterAssignment result;
  std::vector<Index> singletons(static_cast<std::size_t>(n));
  std::iota(singletons.begin(), singletons.end(), Index{0});
  result.pass_modularity.push_back(weighted_modularity(base, singletons, n));
  result.membership = multilevel(base, singletons, rng, options.tolerance, &result.pass_modularity);
  double q = weighted_modularity(base, result.membership, n);

  // Perturbation restarts: merge the communities at both ends of a random
  // crossing edge and isolate a random share of nodes, re-optimize, keep
  // strict improvements. Greedy moves rarely undo a merge on their own.
  std::bernoulli_distribution isolate(options.perturbation);
  std::uniform_int_distribution<std::size_t> pick_edge(0, graph.edges().size() - 1);
  for (Index trial = 0; trial < options.restarts; ++trial) {
    std::vector<Index> start = result.membership;
    for (int attempt = 0; attempt < 8; ++attempt) {
      const Edge& e = graph.edges()[pick_edge(rng)];
      const Index a = start[e.src], b = start[e.dst];
      if (a == b) continue;
      for (auto& c : start)
        if (c == b) c = a;
      break;
    }
    Index next_id = *std::max_element(start.begin(), start.end()) + 1;
    for (auto& c : start)
      if (next_id < n && isolate(rng)) c = next_id++;
    std::vector<Index> candidate = multilevel(base, std::move(start), rng, options.tolerance, nullptr);
    const double q_candidate = weighted_modularity(base, candidate, n);
    if (q_candidate > q + options.tolerance) {
      result.membership = std::move(candidate);
      q = q_candidate;
      result.pass_modularity.push_back(q);
    }
  }
  result.n_clusters = renumber(result.membership);

  if (options.min_cluster_weight > 0.0 && result.n_clusters > 1)
    merge_small_clusters(base, result.membership, result.n_clusters, options.node_weight,
                         options.min_cluster_weight);
  result.modularity = weighted_modularity(base, result.membership, result.n_clusters);
  return result;
}

double default_min_cluster_calib(double alpha) { return std::ceil(1.0 / alpha) + 1.0; }

std::vector<Index> edge_clusters(const Graph& graph, std::span<const Index> membership) {
  std::vector<Index> out;
  out.reserve(graph.edges().size());
  for (const auto& e : graph.edges()) out.push_back(membership[e.src]);
  return out;
}

}  // namespace rrgnn
