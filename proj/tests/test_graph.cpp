#include "oracles.hpp"
#include "rrgnn/graph.hpp"

#include <doctest.h>

#include <random>
#include <set>

using namespace rrgnn;

namespace {

Graph weighted_path() {
  // 0-1 (4.2), 1-2 (1.5), 2-3 (0.7)
  std::vector<Edge> edges{{0, 1}, {1, 2}, {2, 3}};
  return build_graph(4, edges, Matrix::Ones(4, 2), std::vector<double>{4.2, 1.5, 0.7});
}

}  // namespace

TEST_CASE("single edge graph") {
  std::vector<Edge> edges{{0, 1}};
  const Graph g = build_graph(2, edges, Matrix::Zero(2, 3));
  CHECK(g.n_nodes() == 2);
  CHECK(g.n_edges() == 1);
  CHECK(g.n_features() == 3);
  CHECK(g.degrees() == std::vector<Index>{1, 1});
}

TEST_CASE("undirected duplicates collapse, directed ones do not") {
  std::vector<Edge> edges{{0, 1}, {1, 0}};
  CHECK(build_graph(2, edges, Matrix::Zero(2, 1)).n_edges() == 1);
  CHECK(build_graph(2, edges, Matrix::Zero(2, 1), std::nullopt, std::nullopt, {.directed = true})
            .n_edges() == 2);
}

TEST_CASE("first duplicate keeps its weight") {
  std::vector<Edge> edges{{1, 0}, {0, 1}};
  const Graph g = build_graph(2, edges, Matrix::Zero(2, 1), std::vector<double>{2.0, 9.0});
  CHECK(g.weight(0, 1) == 2.0);
  CHECK(g.weight(1, 0) == 2.0);
}

TEST_CASE("invalid graph input") {
  std::vector<Edge> bad{{0, 5}};
  CHECK_THROWS_WITH_AS(build_graph(3, bad, Matrix::Zero(3, 1)), "out-of-range node id",
                       std::out_of_range);
  std::vector<Edge> loop{{1, 1}};
  CHECK_THROWS_AS(build_graph(3, loop, Matrix::Zero(3, 1)), std::invalid_argument);
  CHECK_NOTHROW(build_graph(3, loop, Matrix::Zero(3, 1), std::nullopt, std::nullopt,
                            {.allow_self_loops = true}));
  std::vector<Edge> ok{{0, 1}};
  CHECK_THROWS_AS(build_graph(3, ok, Matrix::Zero(2, 1)), std::invalid_argument);
  CHECK_THROWS_AS(build_graph(3, ok, Matrix::Zero(3, 1), std::vector<double>{-1.0}),
                  std::invalid_argument);
  CHECK_THROWS_AS(build_graph(3, ok, Matrix::Zero(3, 1), std::vector<double>{1.0, 2.0}),
                  std::invalid_argument);
}

TEST_CASE("undirected weights are symmetric") {
  const Graph g = weighted_path();
  for (const auto& e : g.edges()) CHECK(g.weight(e.src, e.dst) == g.weight(e.dst, e.src));
  CHECK_THROWS_AS(g.weight(0, 3), std::out_of_range);
  const SparseMatrix a = g.adjacency();
  CHECK(Matrix(a) == Matrix(a).transpose());
}

TEST_CASE("split sizes follow the ratios") {
  const auto s = split_sizes(100, {});
  CHECK(s == std::array<Index, 4>{30, 30, 20, 20});
  const auto all_train = split_sizes(10, {1.0, 0.0, 0.0, 0.0});
  CHECK(all_train == std::array<Index, 4>{10, 0, 0, 0});
  // 7 * (.3, .3, .2, .2) = 2.1, 2.1, 1.4, 1.4; the spare target goes to the
  // largest remainder, calib before test.
  CHECK(split_sizes(7, {}) == std::array<Index, 4>{2, 2, 2, 1});
  CHECK_THROWS_AS(split_sizes(10, {0.5, 0.5, 0.5, 0.0}), std::invalid_argument);
  CHECK_THROWS_AS(split_sizes(10, {1.2, -0.2, 0.0, 0.0}), std::invalid_argument);
}

TEST_CASE("split sizes are within one of the exact share") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::array<double, 4> raw{u(rng), u(rng), u(rng), u(rng)};
    const double total = raw[0] + raw[1] + raw[2] + raw[3];
    SplitRatios r{raw[0] / total, raw[1] / total, raw[2] / total, 0.0};
    r.test = 1.0 - r.train - r.val - r.calib;
    const Index n = 1 + trial * 7;
    const auto s = split_sizes(n, r);
    CHECK(s[0] + s[1] + s[2] + s[3] == n);
    const auto ra = r.as_array();
    for (std::size_t b = 0; b < 4; ++b) CHECK(std::abs(s[b] - ra[b] * n) < 1.0 + 1e-9);
  }
}

TEST_CASE("split assigns every target exactly once and is seeded") {
  const SplitMask a = split_targets(100, TargetKind::Nodes, {}, 7);
  const SplitMask b = split_targets(100, TargetKind::Nodes, {}, 7);
  const SplitMask c = split_targets(100, TargetKind::Nodes, {}, 8);
  CHECK(a.assignment() == b.assignment());
  CHECK(a.assignment() != c.assignment());
  CHECK(a.count(Phase::Train) == 30);
  CHECK(a.count(Phase::Test) == 20);
  std::set<Index> seen;
  for (Phase p : {Phase::Train, Phase::Val, Phase::Calib, Phase::Test})
    for (Index t : a.targets(p)) CHECK(seen.insert(t).second);
  CHECK(seen.size() == 100);
}

TEST_CASE("split refuses an empty requested bucket") {
  CHECK_THROWS_WITH_AS(split_targets(4, TargetKind::Nodes, {0.9, 0.05, 0.025, 0.025}, 0),
                       "empty val split", std::invalid_argument);
  const SplitMask one = split_targets(1, TargetKind::Nodes, {}, 0);
  CHECK(one.size() == 1);
}

TEST_CASE("masked weights keep train edges and replace the rest by delta") {
  const Graph g = weighted_path();
  const SplitMask split(TargetKind::Edges, {Phase::Train, Phase::Calib, Phase::Val}, 0);
  const MaskedWeights m = mask_weights(g, split, 0.01);
  const Matrix w(m.values);
  CHECK(w(0, 1) == 4.2);
  CHECK(w(1, 0) == 4.2);
  CHECK(w(1, 2) == 0.01);
  CHECK(w(2, 3) == 0.01);
  CHECK(w(0, 3) == 0.0);
  CHECK(w == w.transpose());
  CHECK(m.values.nonZeros() == g.adjacency().nonZeros());

  const Matrix val(mask_weights(g, split, 0.01, Phase::Val).values);
  CHECK(val(2, 3) == 0.7);
  CHECK(val(0, 1) == 0.01);

  CHECK_THROWS_AS(mask_weights(g, split, 0.0), std::invalid_argument);
  const SplitMask nodes(TargetKind::Nodes, std::vector<Phase>(4, Phase::Train), 0);
  CHECK_THROWS_AS(mask_weights(g, nodes, 0.01), std::invalid_argument);
}

TEST_CASE("masked weight pattern matches the adjacency on random graphs") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const Graph base = oracle::random_graph(30, 0.15, rng);
    std::vector<double> w(static_cast<std::size_t>(base.n_edges()));
    std::uniform_real_distribution<double> u(0.1, 5.0);
    for (auto& x : w) x = u(rng);
    const Graph g = base.with_weights(w);
    const SplitMask split = split_targets(g, TargetKind::Edges, {}, trial);
    const Matrix m(mask_weights(g, split, 1e-3).values);
    const Matrix a(g.adjacency());
    CHECK(((m.array() != 0) == (a.array() != 0)).all());
    CHECK(m == m.transpose());
    for (Index e = 0; e < g.n_edges(); ++e) {
      const auto& edge = g.edges()[static_cast<std::size_t>(e)];
      CHECK(m(edge.src, edge.dst) == (split[e] == Phase::Train ? w[static_cast<std::size_t>(e)] : 1e-3));
    }
  }
}

TEST_CASE("default delta scales with the smallest train weight") {
  const Graph g = weighted_path();
  const SplitMask split(TargetKind::Edges, {Phase::Train, Phase::Train, Phase::Test}, 0);
  CHECK(default_delta(g, split) == doctest::Approx(1.5e-3));
  const SplitMask none(TargetKind::Edges, {Phase::Test, Phase::Test, Phase::Test}, 0);
  CHECK(default_delta(g, none) == 1e-6);
}

TEST_CASE("masked labels") {
  std::vector<Edge> edges{{0, 1}, {1, 2}};
  NodeLabels y{Vector::LinSpaced(3, 1.0, 3.0), 0};
  const Graph g = build_graph(3, edges, Matrix::Zero(3, 1), std::nullopt, y);
  const SplitMask split(TargetKind::Nodes, {Phase::Train, Phase::Val, Phase::Train}, 0);
  const MaskedLabels m = mask_labels(g, split, Phase::Train);
  CHECK(m.values.col(0) == Vector((Vector(3) << 1, 0, 3).finished()));
  CHECK(m.mask == Vector((Vector(3) << 1, 0, 1).finished()));

  const SplitMask no_train(TargetKind::Nodes, {Phase::Val, Phase::Val, Phase::Test}, 0);
  const MaskedLabels empty = mask_labels(g, no_train, Phase::Train);
  CHECK(empty.values.isZero());
  CHECK(empty.mask.isZero());
}

TEST_CASE("class labels are one-hot encoded") {
  CHECK(one_hot(Vector::Constant(1, 2.0), 3) == Matrix((Matrix(1, 3) << 0, 0, 1).finished()));
  CHECK_THROWS_AS(one_hot(Vector::Constant(1, 3.0), 3), std::out_of_range);

  std::vector<Edge> edges{{0, 1}};
  NodeLabels y{(Vector(2) << 2, 0).finished(), 3};
  const Graph g = build_graph(2, edges, Matrix::Zero(2, 1), std::nullopt, y);
  const SplitMask split(TargetKind::Nodes, {Phase::Val, Phase::Train}, 0);
  const MaskedLabels m = mask_labels(g, split, Phase::Val);
  CHECK(m.values == Matrix((Matrix(2, 3) << 0, 0, 1, 0, 0, 0).finished()));
}
