#include "rrgnn/data_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>
#include <unordered_set>

namespace rrgnn {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix(seed ^ splitmix(stream));
}

std::vector<std::string> split_fields(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  for (auto& f : out) {
    const auto b = f.find_first_not_of(" \t");
    const auto e = f.find_last_not_of(" \t");
    f = b == std::string::npos ? std::string() : f.substr(b, e - b + 1);
  }
  return out;
}

double parse_real(const std::string& s, const std::string& file, std::size_t line,
                  const std::string& column) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty())
    throw ParseError(file, line, "column '" + column + "': not a number: '" + s + "'");
  return v;
}

Index parse_id(const std::string& s, const std::string& file, std::size_t line,
               const std::string& column) {
  Index v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty())
    throw ParseError(file, line, "column '" + column + "': not an integer: '" + s + "'");
  return v;
}

std::string format_real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

Matrix gaussian_features(Index n, Index f, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix x(n, f);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < f; ++j) x(i, j) = normal(rng);
  return x;
}

std::uint64_t pair_key(Index a, Index b) {
  if (a > b) std::swap(a, b);
  return (static_cast<std::uint64_t>(a) << 32) | static_cast<std::uint64_t>(b);
}

std::vector<Edge> erdos_renyi(const ErdosRenyi& s, std::mt19937_64& rng) {
  std::vector<Edge> edges;
  if (s.n < 2 || s.p <= 0.0) return edges;
  if (s.p >= 1.0) {
    for (Index v = 1; v < s.n; ++v)
      for (Index w = 0; w < v; ++w) edges.push_back({w, v});
    return edges;
  }
  // Geometric skipping over the lower triangle.
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double log_q = std::log1p(-s.p);
  Index v = 1, w = -1;
  while (v < s.n) {
    const double r = unif(rng);
    w += 1 + static_cast<Index>(std::floor(std::log1p(-r) / log_q));
    while (w >= v && v < s.n) {
      w -= v;
      ++v;
    }
    if (v < s.n) edges.push_back({w, v});
  }
  return edges;
}

std::vector<Edge> barabasi_albert(const BarabasiAlbert& s, std::mt19937_64& rng) {
  const Index m0 = s.m_attach + 1;
  std::vector<Edge> edges;
  std::vector<Index> ends;  // each node repeated once per incident edge
  for (Index a = 0; a < m0; ++a)
    for (Index b = a + 1; b < m0; ++b) {
      edges.push_back({a, b});
      ends.push_back(a);
      ends.push_back(b);
    }
  std::vector<Index> chosen;
  for (Index v = m0; v < s.n; ++v) {
    chosen.clear();
    std::uniform_int_distribution<std::size_t> pick(0, ends.size() - 1);
    while (static_cast<Index>(chosen.size()) < s.m_attach) {
      const Index t = ends[pick(rng)];
      if (std::find(chosen.begin(), chosen.end(), t) == chosen.end()) chosen.push_back(t);
    }
    for (Index t : chosen) {
      edges.push_back({t, v});
      ends.push_back(t);
      ends.push_back(v);
    }
  }
  return edges;
}

std::vector<Edge> watts_strogatz(const WattsStrogatz& s, std::mt19937_64& rng) {
  std::vector<Edge> edges;
  std::unordered_set<std::uint64_t> present;
  for (Index j = 1; j <= s.k_ring / 2; ++j)
    for (Index u = 0; u < s.n; ++u) {
      const Index v = (u + j) % s.n;
      edges.push_back({u, v});
      present.insert(pair_key(u, v));
    }
  if (s.beta <= 0.0) return edges;

  std::vector<Index> degree(static_cast<std::size_t>(s.n), s.k_ring);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::uniform_int_distribution<Index> node(0, s.n - 1);
  for (auto& e : edges) {
    if (unif(rng) >= s.beta) continue;
    const Index u = e.src;
    if (degree[static_cast<std::size_t>(u)] >= s.n - 1) continue;
    Index w = node(rng);
    while (w == u || present.count(pair_key(u, w)) > 0) w = node(rng);
    present.erase(pair_key(u, e.dst));
    --degree[static_cast<std::size_t>(e.dst)];
    ++degree[static_cast<std::size_t>(w)];
    present.insert(pair_key(u, w));
    e.dst = w;
  }
  return edges;
}

std::vector<Edge> planted_partition(const PlantedPartition& s, std::mt19937_64& rng) {
  const auto blocks = planted_blocks(s);
  std::bernoulli_distribution in(s.p_in), out(s.p_out);
  std::vector<Edge> edges;
  for (Index a = 0; a < s.n; ++a)
    for (Index b = a + 1; b < s.n; ++b) {
      const bool same = blocks[static_cast<std::size_t>(a)] == blocks[static_cast<std::size_t>(b)];
      if (same ? in(rng) : out(rng)) edges.push_back({a, b});
    }
  return edges;
}

Vector linear_weights(Index f, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector w(f);
  for (Index j = 0; j < f; ++j) w(j) = normal(rng) / std::sqrt(static_cast<double>(f));
  return w;
}

}  // namespace

ParseError::ParseError(const std::string& file, std::size_t line, const std::string& what)
    : std::runtime_error(file + (line > 0 ? ":" + std::to_string(line) : std::string()) + ": " +
                         what),
      line_(line) {}

Graph load_graph_csv(const fs::path& edges_path, const fs::path& nodes_path,
                     const CsvOptions& options) {
  const std::string nodes_name = nodes_path.string();
  std::ifstream nodes_in(nodes_path);
  if (!nodes_in) throw ParseError(nodes_name, 0, "cannot open");
  std::string line;
  if (!std::getline(nodes_in, line)) throw ParseError(nodes_name, 1, "missing header row");
  const auto header = split_fields(line);
  if (header.empty() || header[0] != "node_id")
    throw ParseError(nodes_name, 1,
                     "expected column 'node_id', got '" + (header.empty() ? "" : header[0]) + "'");
  std::size_t n_feat = 0;
  while (1 + n_feat < header.size() && header[1 + n_feat] == "feat_" + std::to_string(n_feat))
    ++n_feat;
  bool has_label = false;
  if (1 + n_feat < header.size()) {
    if (header[1 + n_feat] != "label" || 2 + n_feat != header.size())
      throw ParseError(nodes_name, 1,
                       "expected column 'feat_" + std::to_string(n_feat) + "' or 'label', got '" +
                           header[1 + n_feat] + "'");
    has_label = true;
  }

  std::vector<std::vector<double>> rows;
  std::vector<double> labels;
  std::vector<Index> ids;
  std::size_t lineno = 1;
  while (std::getline(nodes_in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto fields = split_fields(line);
    if (fields.size() != header.size())
      throw ParseError(nodes_name, lineno,
                       "expected " + std::to_string(header.size()) + " fields, got " +
                           std::to_string(fields.size()));
    ids.push_back(parse_id(fields[0], nodes_name, lineno, "node_id"));
    std::vector<double> feat(n_feat);
    for (std::size_t j = 0; j < n_feat; ++j)
      feat[j] = parse_real(fields[1 + j], nodes_name, lineno, header[1 + j]);
    rows.push_back(std::move(feat));
    if (has_label) labels.push_back(parse_real(fields.back(), nodes_name, lineno, "label"));
  }

  const auto n = static_cast<Index>(rows.size());
  Matrix features(n, static_cast<Index>(n_feat));
  std::vector<char> seen(static_cast<std::size_t>(n), 0);
  Vector label_values(has_label ? n : 0);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const Index id = ids[r];
    if (id < 0 || id >= n || seen[static_cast<std::size_t>(id)])
      throw ParseError(nodes_name, 0,
                       "inconsistent node count: ids must be 0.." + std::to_string(n - 1) +
                           " each once (bad id " + std::to_string(id) + ")");
    seen[static_cast<std::size_t>(id)] = 1;
    for (std::size_t j = 0; j < n_feat; ++j) features(id, static_cast<Index>(j)) = rows[r][j];
    if (has_label) label_values(id) = labels[r];
  }
  if (options.zscore && n > 1) {
    for (Index j = 0; j < features.cols(); ++j) {
      auto col = features.col(j);
      const double mean = col.mean();
      const double sd = std::sqrt((col.array() - mean).square().sum() / static_cast<double>(n - 1));
      col.array() -= mean;
      if (sd > 0.0) col /= sd;
    }
  }

  std::optional<NodeLabels> node_labels;
  if (has_label) {
    NodeLabels nl;
    nl.values = label_values;
    if (options.classification) {
      double max_id = -1.0;
      for (Index i = 0; i < n; ++i) {
        const double v = label_values(i);
        if (v < 0.0 || v != std::floor(v))
          throw ParseError(nodes_name, 0, "column 'label': class ids must be non-negative integers");
        max_id = std::max(max_id, v);
      }
      nl.n_classes = static_cast<int>(max_id) + 1;
    }
    node_labels = std::move(nl);
  }

  const std::string edges_name = edges_path.string();
  std::ifstream edges_in(edges_path);
  if (!edges_in) throw ParseError(edges_name, 0, "cannot open");
  if (!std::getline(edges_in, line)) throw ParseError(edges_name, 1, "missing header row");
  const auto eh = split_fields(line);
  const std::vector<std::string> expected{"src", "dst", "weight"};
  if (eh.size() < 2 || eh.size() > 3)
    throw ParseError(edges_name, 1, "expected columns src,dst[,weight]");
  for (std::size_t c = 0; c < eh.size(); ++c)
    if (eh[c] != expected[c])
      throw ParseError(edges_name, 1, "expected column '" + expected[c] + "', got '" + eh[c] + "'");
  const bool has_weight = eh.size() == 3;

  std::vector<Edge> edges;
  std::vector<double> weights;
  lineno = 1;
  while (std::getline(edges_in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto fields = split_fields(line);
    if (fields.size() != eh.size())
      throw ParseError(edges_name, lineno,
                       "expected " + std::to_string(eh.size()) + " fields, got " +
                           std::to_string(fields.size()));
    const Index s = parse_id(fields[0], edges_name, lineno, "src");
    const Index d = parse_id(fields[1], edges_name, lineno, "dst");
    if (s < 0 || s >= n || d < 0 || d >= n)
      throw ParseError(edges_name, lineno,
                       "node id outside 0.." + std::to_string(n - 1) + " from nodes file");
    edges.push_back({s, d});
    if (has_weight) weights.push_back(parse_real(fields[2], edges_name, lineno, "weight"));
  }

  GraphOptions go;
  go.directed = options.directed;
  std::optional<std::vector<double>> w;
  if (has_weight) w = std::move(weights);
  return build_graph(n, edges, std::move(features), std::move(w), std::move(node_labels), go);
}

void save_graph_csv(const Graph& graph, const fs::path& edges_path, const fs::path& nodes_path) {
  std::ofstream eo(edges_path);
  if (!eo) throw std::runtime_error("cannot write " + edges_path.string());
  eo << (graph.has_weights() ? "src,dst,weight\n" : "src,dst\n");
  for (Index e = 0; e < graph.n_edges(); ++e) {
    const auto& edge = graph.edges()[static_cast<std::size_t>(e)];
    eo << edge.src << ',' << edge.dst;
    if (graph.has_weights()) eo << ',' << format_real(graph.weights()[static_cast<std::size_t>(e)]);
    eo << '\n';
  }

  std::ofstream no(nodes_path);
  if (!no) throw std::runtime_error("cannot write " + nodes_path.string());
  no << "node_id";
  for (Index j = 0; j < graph.n_features(); ++j) no << ",feat_" << j;
  if (graph.has_labels()) no << ",label";
  no << '\n';
  for (Index i = 0; i < graph.n_nodes(); ++i) {
    no << i;
    for (Index j = 0; j < graph.n_features(); ++j) no << ',' << format_real(graph.features()(i, j));
    if (graph.has_labels()) {
      const double v = graph.labels().values(i);
      if (graph.labels().is_classification())
        no << ',' << static_cast<long long>(v);
      else
        no << ',' << format_real(v);
    }
    no << '\n';
  }
}

void validate_generator(const GeneratorSpec& generator) {
  std::visit(
      [](const auto& g) {
        using T = std::decay_t<decltype(g)>;
        if (g.n < 1) throw std::invalid_argument("generator: n must be positive");
        if constexpr (std::is_same_v<T, ErdosRenyi>) {
          if (!(g.p >= 0.0 && g.p <= 1.0)) throw std::invalid_argument("erdos_renyi: p outside [0,1]");
        } else if constexpr (std::is_same_v<T, BarabasiAlbert>) {
          if (g.m_attach < 1) throw std::invalid_argument("barabasi_albert: m_attach must be >= 1");
          if (g.n < g.m_attach + 1)
            throw std::invalid_argument("barabasi_albert: n must be >= m_attach + 1");
        } else if constexpr (std::is_same_v<T, WattsStrogatz>) {
          if (g.k_ring % 2 != 0) throw std::invalid_argument("watts_strogatz: k_ring must be even");
          if (g.k_ring < 2 || g.k_ring >= g.n)
            throw std::invalid_argument("watts_strogatz: need 2 <= k_ring < n");
          if (!(g.beta >= 0.0 && g.beta <= 1.0))
            throw std::invalid_argument("watts_strogatz: beta outside [0,1]");
        } else {
          if (g.n_blocks < 1 || g.n_blocks > g.n)
            throw std::invalid_argument("planted_partition: need 1 <= n_blocks <= n");
          if (!(g.p_in >= 0.0 && g.p_in <= 1.0 && g.p_out >= 0.0 && g.p_out <= 1.0))
            throw std::invalid_argument("planted_partition: probabilities outside [0,1]");
        }
      },
      generator);
}

std::vector<Index> planted_blocks(const PlantedPartition& spec) {
  std::vector<Index> blocks(static_cast<std::size_t>(spec.n));
  for (Index i = 0; i < spec.n; ++i) blocks[static_cast<std::size_t>(i)] = i * spec.n_blocks / spec.n;
  return blocks;
}

Graph generate_graph(const GeneratorSpec& generator, Index n_features, std::uint64_t seed) {
  validate_generator(generator);
  if (n_features < 1) throw std::invalid_argument("generator: n_features must be positive");
  std::mt19937_64 rng(stream_seed(seed, 1));
  const auto edges = std::visit(
      [&](const auto& g) {
        using T = std::decay_t<decltype(g)>;
        if constexpr (std::is_same_v<T, ErdosRenyi>) return erdos_renyi(g, rng);
        else if constexpr (std::is_same_v<T, BarabasiAlbert>) return barabasi_albert(g, rng);
        else if constexpr (std::is_same_v<T, WattsStrogatz>) return watts_strogatz(g, rng);
        else return planted_partition(g, rng);
      },
      generator);
  const Index n = std::visit([](const auto& g) { return g.n; }, generator);
  std::mt19937_64 feat_rng(stream_seed(seed, 2));
  return build_graph(n, edges, gaussian_features(n, n_features, feat_rng));
}

Graph synth_labels(const Graph& graph, const LabelModel& model, std::uint64_t seed,
                   const std::vector<Index>& blocks, SynthTruth* truth) {
  std::mt19937_64 rng(stream_seed(seed, 3));
  std::normal_distribution<double> normal(0.0, 1.0);
  const Matrix& x = graph.features();
  const Index n = graph.n_nodes();

  if (const auto* c = std::get_if<Classify>(&model)) {
    if (c->n_classes < 2) throw std::invalid_argument("classify: need at least 2 classes");
    if (!(c->flip_prob >= 0.0 && c->flip_prob <= 1.0))
      throw std::invalid_argument("classify: flip_prob outside [0,1]");
    Matrix w(x.cols(), c->n_classes);
    for (Index i = 0; i < w.rows(); ++i)
      for (Index k = 0; k < w.cols(); ++k) w(i, k) = normal(rng);
    const Matrix scores = x * w;
    std::bernoulli_distribution flip(c->flip_prob);
    std::uniform_int_distribution<int> other(1, c->n_classes - 1);
    NodeLabels labels;
    labels.n_classes = c->n_classes;
    labels.values.resize(n);
    Vector clean(n);
    for (Index i = 0; i < n; ++i) {
      Index best = 0;
      scores.row(i).maxCoeff(&best);
      clean(i) = static_cast<double>(best);
      int cls = static_cast<int>(best);
      if (flip(rng)) cls = (cls + other(rng)) % c->n_classes;
      labels.values(i) = cls;
    }
    if (truth) *truth = {w, clean, Vector()};
    return graph.with_labels(std::move(labels));
  }

  const Vector w = linear_weights(x.cols(), rng);
  const Vector signal = x * w;

  if (const auto* e = std::get_if<EdgeWeightModel>(&model)) {
    std::vector<double> weights(static_cast<std::size_t>(graph.n_edges()));
    Vector clean(graph.n_edges()), sds(graph.n_edges());
    for (Index k = 0; k < graph.n_edges(); ++k) {
      const auto& edge = graph.edges()[static_cast<std::size_t>(k)];
      double sd = e->sigma;
      if (e->heteroscedastic) sd *= 1.0 + 0.5 * (std::abs(x(edge.src, 0)) + std::abs(x(edge.dst, 0)));
      clean(k) = 2.0 + 0.5 * (signal(edge.src) + signal(edge.dst));
      sds(k) = sd;
      weights[static_cast<std::size_t>(k)] = std::max(0.0, clean(k) + sd * normal(rng));
    }
    if (truth) *truth = {w, clean, sds};
    return graph.with_weights(std::move(weights));
  }

  NodeLabels labels;
  labels.values.resize(n);
  Vector sds(n);
  for (Index i = 0; i < n; ++i) {
    double sd = 0.0;
    if (const auto* h = std::get_if<Homoscedastic>(&model)) {
      sd = h->sigma;
    } else if (const auto* h2 = std::get_if<Heteroscedastic>(&model)) {
      sd = h2->sigma0 * (1.0 + std::abs(x(i, 0)));
    } else {
      const auto& b = std::get<BlockHeteroscedastic>(model);
      if (static_cast<Index>(blocks.size()) != n)
        throw std::invalid_argument("block_heteroscedastic: needs one block id per node");
      const auto id = static_cast<std::size_t>(blocks[static_cast<std::size_t>(i)]);
      if (id >= b.block_sigma.size())
        throw std::invalid_argument("block_heteroscedastic: block id without a sigma");
      sd = b.block_sigma[id];
    }
    sds(i) = sd;
    labels.values(i) = signal(i) + sd * normal(rng);
  }
  if (truth) *truth = {w, signal, sds};
  return graph.with_labels(std::move(labels));
}

void DatasetSpec::validate() const {
  if (csv.has_value() == generator.has_value())
    throw std::invalid_argument("dataset: exactly one of csv or generator must be set");
  if (generator) validate_generator(*generator);
  if (generator && n_features < 1) throw std::invalid_argument("dataset: n_features must be positive");
  if (csv && label_model) throw std::invalid_argument("dataset: label_model applies to generators only");
}

Dataset load_dataset(const DatasetSpec& spec, const fs::path& base_dir) {
  spec.validate();
  Dataset out;
  if (spec.csv) {
    auto resolve = [&](const fs::path& p) { return p.is_relative() ? base_dir / p : p; };
    out.graph = load_graph_csv(resolve(spec.csv->edges), resolve(spec.csv->nodes), spec.csv->options);
    return out;
  }
  out.graph = generate_graph(*spec.generator, spec.n_features, spec.seed);
  if (const auto* pp = std::get_if<PlantedPartition>(&*spec.generator)) out.blocks = planted_blocks(*pp);
  if (spec.label_model) out.graph = synth_labels(out.graph, *spec.label_model, spec.seed, out.blocks);
  return out;
}

namespace {

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

void reject_unknown(const json& j, std::initializer_list<const char*> keys, const char* where) {
  for (const auto& [k, v] : j.items()) {
    (void)v;
    if (std::none_of(keys.begin(), keys.end(), [&](const char* allowed) { return k == allowed; }))
      throw std::invalid_argument(std::string(where) + ": unknown field '" + k + "'");
  }
}

}  // namespace

DatasetSpec dataset_spec_from_json(const json& j) {
  if (!j.is_object()) throw std::invalid_argument("dataset: expected an object");
  reject_unknown(j, {"csv", "generator", "label_model", "n_features", "seed"}, "dataset");
  DatasetSpec spec;
  spec.n_features = get_or<Index>(j, "n_features", spec.n_features);
  spec.seed = get_or<std::uint64_t>(j, "seed", spec.seed);

  if (j.contains("csv")) {
    const auto& c = j.at("csv");
    reject_unknown(c, {"edges", "nodes", "directed", "classification", "zscore"}, "dataset.csv");
    CsvSource src;
    src.edges = c.at("edges").get<std::string>();
    src.nodes = c.at("nodes").get<std::string>();
    src.options.directed = get_or(c, "directed", false);
    src.options.classification = get_or(c, "classification", false);
    src.options.zscore = get_or(c, "zscore", false);
    spec.csv = std::move(src);
  }
  if (j.contains("generator")) {
    const auto& g = j.at("generator");
    const auto type = g.at("type").get<std::string>();
    if (type == "erdos_renyi") {
      reject_unknown(g, {"type", "n", "p"}, "dataset.generator");
      spec.generator = ErdosRenyi{g.at("n").get<Index>(), g.at("p").get<double>()};
    } else if (type == "barabasi_albert") {
      reject_unknown(g, {"type", "n", "m_attach"}, "dataset.generator");
      spec.generator = BarabasiAlbert{g.at("n").get<Index>(), g.at("m_attach").get<Index>()};
    } else if (type == "watts_strogatz") {
      reject_unknown(g, {"type", "n", "k_ring", "beta"}, "dataset.generator");
      spec.generator = WattsStrogatz{g.at("n").get<Index>(), g.at("k_ring").get<Index>(),
                                     g.at("beta").get<double>()};
    } else if (type == "planted_partition") {
      reject_unknown(g, {"type", "n", "n_blocks", "p_in", "p_out"}, "dataset.generator");
      spec.generator = PlantedPartition{g.at("n").get<Index>(), g.at("n_blocks").get<Index>(),
                                        g.at("p_in").get<double>(), g.at("p_out").get<double>()};
    } else {
      throw std::invalid_argument("dataset.generator: unknown type '" + type + "'");
    }
  }
  if (j.contains("label_model")) {
    const auto& l = j.at("label_model");
    const auto type = l.at("type").get<std::string>();
    if (type == "homoscedastic") {
      reject_unknown(l, {"type", "sigma"}, "dataset.label_model");
      spec.label_model = Homoscedastic{get_or(l, "sigma", 1.0)};
    } else if (type == "heteroscedastic") {
      reject_unknown(l, {"type", "sigma0"}, "dataset.label_model");
      spec.label_model = Heteroscedastic{get_or(l, "sigma0", 1.0)};
    } else if (type == "classify") {
      reject_unknown(l, {"type", "n_classes", "flip_prob"}, "dataset.label_model");
      spec.label_model = Classify{get_or(l, "n_classes", 3), get_or(l, "flip_prob", 0.0)};
    } else if (type == "block_heteroscedastic") {
      reject_unknown(l, {"type", "block_sigma"}, "dataset.label_model");
      spec.label_model = BlockHeteroscedastic{l.at("block_sigma").get<std::vector<double>>()};
    } else if (type == "edge_weight") {
      reject_unknown(l, {"type", "sigma", "heteroscedastic"}, "dataset.label_model");
      spec.label_model = EdgeWeightModel{get_or(l, "sigma", 0.5), get_or(l, "heteroscedastic", true)};
    } else {
      throw std::invalid_argument("dataset.label_model: unknown type '" + type + "'");
    }
  }
  spec.validate();
  return spec;
}

json to_json(const DatasetSpec& spec) {
  json j;
  if (spec.csv) {
    j["csv"] = {{"edges", spec.csv->edges.string()},
                {"nodes", spec.csv->nodes.string()},
                {"directed", spec.csv->options.directed},
                {"classification", spec.csv->options.classification},
                {"zscore", spec.csv->options.zscore}};
  }
  if (spec.generator) {
    j["generator"] = std::visit(
        [](const auto& g) -> json {
          using T = std::decay_t<decltype(g)>;
          if constexpr (std::is_same_v<T, ErdosRenyi>)
            return {{"type", "erdos_renyi"}, {"n", g.n}, {"p", g.p}};
          else if constexpr (std::is_same_v<T, BarabasiAlbert>)
            return {{"type", "barabasi_albert"}, {"n", g.n}, {"m_attach", g.m_attach}};
          else if constexpr (std::is_same_v<T, WattsStrogatz>)
            return {{"type", "watts_strogatz"}, {"n", g.n}, {"k_ring", g.k_ring}, {"beta", g.beta}};
          else
            return {{"type", "planted_partition"}, {"n", g.n}, {"n_blocks", g.n_blocks},
                    {"p_in", g.p_in}, {"p_out", g.p_out}};
        },
        *spec.generator);
  }
  if (spec.label_model) {
    j["label_model"] = std::visit(
        [](const auto& l) -> json {
          using T = std::decay_t<decltype(l)>;
          if constexpr (std::is_same_v<T, Homoscedastic>)
            return {{"type", "homoscedastic"}, {"sigma", l.sigma}};
          else if constexpr (std::is_same_v<T, Heteroscedastic>)
            return {{"type", "heteroscedastic"}, {"sigma0", l.sigma0}};
          else if constexpr (std::is_same_v<T, Classify>)
            return {{"type", "classify"}, {"n_classes", l.n_classes}, {"flip_prob", l.flip_prob}};
          else if constexpr (std::is_same_v<T, BlockHeteroscedastic>)
            return {{"type", "block_heteroscedastic"}, {"block_sigma", l.block_sigma}};
          else
            return {{"type", "edge_weight"}, {"sigma", l.sigma}, {"heteroscedastic", l.heteroscedastic}};
        },
        *spec.label_model);
  }
  j["n_features"] = spec.n_features;
  j["seed"] = spec.seed;
  return j;
}

}  // namespace rrgnn
