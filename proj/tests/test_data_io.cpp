#include "oracles.hpp"
#include "rrgnn/data_io.hpp"

#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

using namespace rrgnn;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  fs::path write(const std::string& file, const std::string& text) const {
    std::ofstream(path / file) << text;
    return path / file;
  }
};

bool same_graph(const Graph& a, const Graph& b) {
  if (a.n_nodes() != b.n_nodes() || a.edges() != b.edges() || a.features() != b.features())
    return false;
  if (a.has_weights() != b.has_weights() || (a.has_weights() && a.weights() != b.weights()))
    return false;
  if (a.has_labels() != b.has_labels()) return false;
  return !a.has_labels() || (a.labels().values == b.labels().values &&
                             a.labels().n_classes == b.labels().n_classes);
}

}  // namespace

TEST_CASE("CSV graph loading") {
  TempDir dir("rrgnn_csv_basic");
  const auto edges = dir.write("edges.csv", "src,dst,weight\n0,1,1.5\n1,2,2\n2,3,0.25\n");
  const auto nodes = dir.write("nodes.csv",
                               "node_id,feat_0,feat_1,label\n"
                               "3,1,2,0.5\n0,0,0,1\n1,1,1,2\n2,2,2,3\n");
  const Graph g = load_graph_csv(edges, nodes);
  CHECK(g.n_nodes() == 4);
  CHECK(g.n_edges() == 3);
  CHECK(g.n_features() == 2);
  CHECK(g.weight(2, 1) == 2.0);
  CHECK(g.features().row(3) == (Eigen::RowVector2d() << 1, 2).finished());
  CHECK(g.labels().values(3) == 0.5);
  CHECK_FALSE(g.labels().is_classification());

  const auto cls_nodes = dir.write("cls.csv", "node_id,feat_0,label\n0,1,0\n1,1,2\n2,1,1\n3,0,1\n");
  const Graph c = load_graph_csv(edges, cls_nodes, {.classification = true});
  CHECK(c.labels().n_classes == 3);
}

TEST_CASE("CSV errors name the file, line and column") {
  TempDir dir("rrgnn_csv_errors");
  const auto nodes = dir.write("nodes.csv", "node_id,feat_0\n0,1\n1,2\n");
  const auto bad_header = dir.write("e1.csv", "source,dst\n0,1\n");
  CHECK_THROWS_WITH_AS(load_graph_csv(bad_header, nodes),
                       doctest::Contains("expected column 'src', got 'source'"), ParseError);

  const auto bad_row = dir.write("e2.csv", "src,dst\n0,1\n1,x\n");
  try {
    load_graph_csv(bad_row, nodes);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
    CHECK(std::string(e.what()).find("e2.csv:3") != std::string::npos);
    CHECK(std::string(e.what()).find("'dst'") != std::string::npos);
  }

  const auto out_of_range = dir.write("e3.csv", "src,dst\n0,7\n");
  CHECK_THROWS_AS(load_graph_csv(out_of_range, nodes), ParseError);

  const auto ok = dir.write("e4.csv", "src,dst\n0,1\n");
  const auto gap = dir.write("n2.csv", "node_id,feat_0\n0,1\n2,2\n");
  CHECK_THROWS_WITH_AS(load_graph_csv(ok, gap), doctest::Contains("inconsistent node count"),
                       ParseError);
  const auto dup = dir.write("n3.csv", "node_id,feat_0\n0,1\n0,2\n");
  CHECK_THROWS_AS(load_graph_csv(ok, dup), ParseError);
  const auto short_row = dir.write("n4.csv", "node_id,feat_0\n0\n1,2\n");
  CHECK_THROWS_AS(load_graph_csv(ok, short_row), ParseError);
  const auto frac = dir.write("n5.csv", "node_id,feat_0,label\n0,1,0.5\n1,2,1\n");
  CHECK_THROWS_AS(load_graph_csv(ok, frac, {.classification = true}), ParseError);
  CHECK_THROWS_AS(load_graph_csv(dir.path / "missing.csv", nodes), ParseError);
}

TEST_CASE("CSV round trip is exact") {
  TempDir dir("rrgnn_csv_roundtrip");
  Graph g = generate_graph(BarabasiAlbert{50, 2}, 3, 4);
  g = synth_labels(g, Heteroscedastic{1.0}, 4);
  g = synth_labels(g, EdgeWeightModel{}, 5);
  save_graph_csv(g, dir.path / "e.csv", dir.path / "n.csv");
  CHECK(same_graph(load_graph_csv(dir.path / "e.csv", dir.path / "n.csv"), g));

  Graph c = synth_labels(generate_graph(ErdosRenyi{40, 0.1}, 2, 1), Classify{4, 0.1}, 1);
  save_graph_csv(c, dir.path / "e.csv", dir.path / "n.csv");
  CHECK(same_graph(load_graph_csv(dir.path / "e.csv", dir.path / "n.csv", {.classification = true}), c));
}

TEST_CASE("z-scoring is opt-in") {
  TempDir dir("rrgnn_csv_zscore");
  const auto edges = dir.write("e.csv", "src,dst\n0,1\n");
  const auto nodes = dir.write("n.csv", "node_id,feat_0\n0,10\n1,20\n2,30\n");
  CHECK(load_graph_csv(edges, nodes).features()(2, 0) == 30.0);
  const Matrix z = load_graph_csv(edges, nodes, {.zscore = true}).features();
  CHECK(z(0, 0) == doctest::Approx(-1.0));
  CHECK(z(1, 0) == doctest::Approx(0.0));
  CHECK(z(2, 0) == doctest::Approx(1.0));
}

TEST_CASE("ring lattice") {
  const Graph g = generate_graph(WattsStrogatz{20, 4, 0.0}, 1, 0);
  CHECK(g.n_edges() == 40);
  for (Index i = 0; i < 20; ++i) {
    CHECK(g.degrees()[static_cast<std::size_t>(i)] == 4);
    CHECK(g.find_edge(i, (i + 1) % 20).has_value());
    CHECK(g.find_edge(i, (i + 2) % 20).has_value());
  }
  // Rewiring preserves the edge count and never creates duplicates or loops.
  const Graph r = generate_graph(WattsStrogatz{50, 6, 0.5}, 1, 3);
  CHECK(r.n_edges() == 150);
}

TEST_CASE("random graph edge counts") {
  double total = 0;
  for (std::uint64_t s = 0; s < 1000; ++s) total += generate_graph(ErdosRenyi{100, 0.1}, 1, s).n_edges();
  // Mean 495, sd of the 1000-draw mean sqrt(4950 * 0.09 / 1000) = 0.667.
  CHECK(std::abs(total / 1000 - 495.0) < 3 * 0.667);

  const Graph ba = generate_graph(BarabasiAlbert{100, 2}, 1, 0);
  CHECK(ba.n_edges() == 197);
  CHECK(*std::min_element(ba.degrees().begin(), ba.degrees().end()) >= 2);
  CHECK(generate_graph(ErdosRenyi{10, 1.0}, 1, 0).n_edges() == 45);
  CHECK(generate_graph(ErdosRenyi{10, 0.0}, 1, 0).n_edges() == 0);
}

TEST_CASE("generators are seeded") {
  for (const GeneratorSpec& spec :
       {GeneratorSpec{ErdosRenyi{60, 0.1}}, GeneratorSpec{BarabasiAlbert{60, 3}},
        GeneratorSpec{WattsStrogatz{60, 4, 0.2}}, GeneratorSpec{PlantedPartition{60, 3, 0.3, 0.01}}}) {
    CHECK(same_graph(generate_graph(spec, 4, 9), generate_graph(spec, 4, 9)));
    CHECK_FALSE(same_graph(generate_graph(spec, 4, 9), generate_graph(spec, 4, 10)));
  }
}

TEST_CASE("generator parameter errors") {
  CHECK_THROWS_AS(generate_graph(ErdosRenyi{10, 1.5}, 1, 0), std::invalid_argument);
  CHECK_THROWS_AS(generate_graph(WattsStrogatz{10, 3, 0.1}, 1, 0), std::invalid_argument);
  CHECK_THROWS_AS(generate_graph(WattsStrogatz{10, 4, -0.1}, 1, 0), std::invalid_argument);
  CHECK_THROWS_AS(generate_graph(BarabasiAlbert{3, 3}, 1, 0), std::invalid_argument);
  CHECK_THROWS_AS(generate_graph(PlantedPartition{10, 0, 0.1, 0.1}, 1, 0), std::invalid_argument);
  CHECK_THROWS_AS(generate_graph(ErdosRenyi{10, 0.1}, 0, 0), std::invalid_argument);
}

TEST_CASE("planted blocks are contiguous") {
  const auto b = planted_blocks(PlantedPartition{10, 3, 0.5, 0.0});
  CHECK(b == std::vector<Index>{0, 0, 0, 0, 1, 1, 1, 2, 2, 2});
  const Graph g = generate_graph(PlantedPartition{10, 3, 0.5, 0.0}, 1, 1);
  for (const auto& e : g.edges())
    CHECK(b[static_cast<std::size_t>(e.src)] == b[static_cast<std::size_t>(e.dst)]);
}

TEST_CASE("noise-free labels are linear in the features") {
  const Graph g = generate_graph(ErdosRenyi{200, 0.05}, 5, 1);
  SynthTruth truth;
  const Graph y = synth_labels(g, Homoscedastic{0.0}, 2, {}, &truth);
  CHECK(y.labels().values == truth.clean);
  CHECK((g.features() * truth.coefficients - truth.clean).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("heteroscedastic noise grows with the first feature") {
  const Graph g = generate_graph(ErdosRenyi{10000, 0.0005}, 3, 2);
  SynthTruth truth;
  const Graph y = synth_labels(g, Heteroscedastic{1.0}, 3, {}, &truth);
  const Vector noise = y.labels().values - truth.clean;
  for (Index i = 0; i < 10000; ++i)
    REQUIRE(truth.noise_sd(i) == doctest::Approx(1.0 + std::abs(g.features()(i, 0))));

  // Empirical noise sd in 20 bins of |x_0| rises with the bin.
  std::vector<std::pair<double, double>> by_x;
  for (Index i = 0; i < 10000; ++i) by_x.push_back({std::abs(g.features()(i, 0)), noise(i)});
  std::sort(by_x.begin(), by_x.end());
  std::vector<double> centers, sds;
  for (int b = 0; b < 20; ++b) {
    double s = 0, ss = 0, c = 0;
    for (int k = b * 500; k < (b + 1) * 500; ++k) {
      s += by_x[static_cast<std::size_t>(k)].second;
      ss += by_x[static_cast<std::size_t>(k)].second * by_x[static_cast<std::size_t>(k)].second;
      c += by_x[static_cast<std::size_t>(k)].first;
    }
    centers.push_back(c / 500);
    sds.push_back(std::sqrt(ss / 500 - (s / 500) * (s / 500)));
  }
  CHECK(oracle::spearman(centers, sds) > 0.8);
}

TEST_CASE("class labels follow the linear boundary up to flips") {
  const Graph g = generate_graph(ErdosRenyi{10000, 0.0005}, 4, 3);
  SynthTruth truth;
  const Graph y = synth_labels(g, Classify{3, 0.2}, 4, {}, &truth);
  CHECK(y.labels().n_classes == 3);
  const Matrix scores = g.features() * truth.coefficients;
  double agree = 0;
  for (Index i = 0; i < 10000; ++i) {
    Index best = 0;
    scores.row(i).maxCoeff(&best);
    REQUIRE(truth.clean(i) == static_cast<double>(best));
    agree += y.labels().values(i) == truth.clean(i);
  }
  // Bayes accuracy is 1 - flip_prob.
  CHECK(std::abs(agree / 10000 - 0.8) < 3 * std::sqrt(0.16 / 10000));
}

TEST_CASE("edge weights") {
  Graph g = generate_graph(ErdosRenyi{300, 0.05}, 3, 5);
  SynthTruth truth;
  g = synth_labels(g, EdgeWeightModel{0.5, true}, 6, {}, &truth);
  REQUIRE(g.has_weights());
  CHECK(*std::min_element(g.weights().begin(), g.weights().end()) >= 0.0);
  for (Index e = 0; e < g.n_edges(); ++e) {
    const auto& edge = g.edges()[static_cast<std::size_t>(e)];
    const double expected = 0.5 * (1 + 0.5 * (std::abs(g.features()(edge.src, 0)) +
                                               std::abs(g.features()(edge.dst, 0))));
    CHECK(truth.noise_sd(e) == doctest::Approx(expected));
  }
}

TEST_CASE("block noise follows the planted blocks") {
  const PlantedPartition pp{2000, 2, 0.01, 0.001};
  const Graph g = generate_graph(pp, 2, 7);
  SynthTruth truth;
  const auto blocks = planted_blocks(pp);
  const Graph y = synth_labels(g, BlockHeteroscedastic{{0.5, 2.0}}, 8, blocks, &truth);
  CHECK(truth.noise_sd(0) == 0.5);
  CHECK(truth.noise_sd(1999) == 2.0);
  CHECK_THROWS_AS(synth_labels(g, BlockHeteroscedastic{{0.5, 2.0}}, 8), std::invalid_argument);
  CHECK_THROWS_AS(synth_labels(g, BlockHeteroscedastic{{0.5}}, 8, blocks), std::invalid_argument);
}

TEST_CASE("dataset specs") {
  DatasetSpec none;
  CHECK_THROWS_AS(none.validate(), std::invalid_argument);
  DatasetSpec both;
  both.generator = ErdosRenyi{};
  both.csv = CsvSource{};
  CHECK_THROWS_AS(both.validate(), std::invalid_argument);

  const nlohmann::json j = {{"generator", {{"type", "watts_strogatz"}, {"n", 30}, {"k_ring", 4}, {"beta", 0.1}}},
                            {"label_model", {{"type", "heteroscedastic"}, {"sigma0", 0.5}}},
                            {"n_features", 6},
                            {"seed", 3}};
  const DatasetSpec spec = dataset_spec_from_json(j);
  CHECK(to_json(dataset_spec_from_json(to_json(spec))) == to_json(spec));
  const Dataset d = load_dataset(spec);
  CHECK(d.graph.n_nodes() == 30);
  CHECK(d.graph.n_features() == 6);
  CHECK(d.graph.has_labels());
  CHECK(same_graph(load_dataset(spec).graph, d.graph));

  nlohmann::json extra = j;
  extra["colour"] = 1;
  CHECK_THROWS_WITH_AS(dataset_spec_from_json(extra), doctest::Contains("unknown field 'colour'"),
                       std::invalid_argument);
  nlohmann::json bad = j;
  bad["generator"]["type"] = "lattice";
  CHECK_THROWS_AS(dataset_spec_from_json(bad), std::invalid_argument);
}

TEST_CASE("CSV datasets resolve relative paths") {
  TempDir dir("rrgnn_csv_dataset");
  dir.write("e.csv", "src,dst\n0,1\n1,2\n");
  dir.write("n.csv", "node_id,feat_0,label\n0,1,0.5\n1,2,1.5\n2,3,2.5\n");
  const DatasetSpec spec = dataset_spec_from_json({{"csv", {{"edges", "e.csv"}, {"nodes", "n.csv"}}}});
  const Dataset d = load_dataset(spec, dir.path);
  CHECK(d.graph.n_edges() == 2);
  CHECK(d.graph.labels().values(2) == 2.5);
}
