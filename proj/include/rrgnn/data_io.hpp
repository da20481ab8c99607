#pragma once

#include "rrgnn/graph.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace rrgnn {

/// Malformed input file; `line` is 1-based (0 when not tied to a line).
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& file, std::size_t line, const std::string& what);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

struct CsvOptions {
  bool directed = false;
  /// Label column holds class ids 0..K-1 rather than real values.
  bool classification = false;
  /// Standardize each feature column to zero mean, unit variance.
  bool zscore = false;
};

/// edges.csv: src,dst[,weight]. nodes.csv: node_id,feat_0..feat_{f-1}[,label].
/// Every node id in 0..n-1 must appear exactly once in nodes.csv.
Graph load_graph_csv(const std::filesystem::path& edges_path,
                     const std::filesystem::path& nodes_path, const CsvOptions& options = {});

/// Values are written with 17 significant digits.
void save_graph_csv(const Graph& graph, const std::filesystem::path& edges_path,
                    const std::filesystem::path& nodes_path);

struct ErdosRenyi {
  Index n = 100;
  double p = 0.1;
};
/// Seeded with a clique on m_attach + 1 nodes; every later node attaches
/// m_attach edges by preferential attachment.
struct BarabasiAlbert {
  Index n = 100;
  Index m_attach = 2;
};
struct WattsStrogatz {
  Index n = 100;
  Index k_ring = 4;
  double beta = 0.1;
};
/// Contiguous equal-size blocks; node i sits in block i * n_blocks / n.
struct PlantedPartition {
  Index n = 100;
  Index n_blocks = 4;
  double p_in = 0.1;
  double p_out = 0.01;
};
using GeneratorSpec = std::variant<ErdosRenyi, BarabasiAlbert, WattsStrogatz, PlantedPartition>;

/// y = w.x + N(0, sigma^2).
struct Homoscedastic {
  double sigma = 1.0;
};
/// y = w.x + N(0, (sigma0 (1 + |x_0|))^2).
struct Heteroscedastic {
  double sigma0 = 1.0;
};
/// Class = argmax of K random linear scores; each label is then replaced by
/// a uniformly drawn different class with probability flip_prob, so the
/// Bayes accuracy is 1 - flip_prob.
struct Classify {
  int n_classes = 3;
  double flip_prob = 0.0;
};
/// Homoscedastic within each planted block, with a per-block sigma.
struct BlockHeteroscedastic {
  std::vector<double> block_sigma{0.5, 2.0};
};
/// Edge weights W_ij = max(0, 2 + 0.5 (s_i + s_j) + noise), s = w.x; the
/// noise sd is sigma, scaled by (1 + (|x_i0| + |x_j0|) / 2) when heteroscedastic.
struct EdgeWeightModel {
  double sigma = 0.5;
  bool heteroscedastic = true;
};
using LabelModel =
    std::variant<Homoscedastic, Heteroscedastic, Classify, BlockHeteroscedastic, EdgeWeightModel>;

struct CsvSource {
  std::filesystem::path edges;
  std::filesystem::path nodes;
  CsvOptions options;
};

struct DatasetSpec {
  std::optional<CsvSource> csv;
  std::optional<GeneratorSpec> generator;
  std::optional<LabelModel> label_model;
  Index n_features = 128;
  std::uint64_t seed = 0;

  /// Exactly one source must be set; generator parameters must be valid.
  void validate() const;
};

/// Unlabeled graph with N(0,1) features.
Graph generate_graph(const GeneratorSpec& generator, Index n_features, std::uint64_t seed);
void validate_generator(const GeneratorSpec& generator);
/// Block id per node of a planted-partition graph.
std::vector<Index> planted_blocks(const PlantedPartition& spec);

/// Generating truth behind synthetic labels.
struct SynthTruth {
  Matrix coefficients;  // f x 1 (regression, edge weights) or f x K (classify)
  Vector clean;         // noise-free value per target, or the unflipped class
  Vector noise_sd;      // per-target noise scale; empty for classify
};

/// Returns a copy carrying node labels, or edge weights for EdgeWeightModel.
/// BlockHeteroscedastic needs `blocks` (one id per node).
Graph synth_labels(const Graph& graph, const LabelModel& model, std::uint64_t seed,
                   const std::vector<Index>& blocks = {}, SynthTruth* truth = nullptr);

struct Dataset {
  Graph graph;
  std::vector<Index> blocks;  // planted partitions only
};

/// Relative CSV paths resolve against `base_dir`.
Dataset load_dataset(const DatasetSpec& spec, const std::filesystem::path& base_dir = {});

DatasetSpec dataset_spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const DatasetSpec& spec);

}  // namespace rrgnn
