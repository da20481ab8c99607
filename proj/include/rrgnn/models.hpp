#pragma once

#include "rrgnn/autodiff.hpp"
#include "rrgnn/graph.hpp"
#include "rrgnn/layers.hpp"

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace rrgnn {

enum class Task { EdgeWeight, NodeReg, NodeClass };
enum class ModelRole { Conformal, Residual };
/// Inner-product decoders: GAE shares one embedding for both endpoints,
/// DiGAE splits the embedding width into source and target halves.
enum class Decoder { GAE, DiGAE };

const char* to_string(Task task);
const char* to_string(Decoder decoder);
const char* to_string(ModelRole role);
ModelRole parse_role(const std::string& name);
Task parse_task(const std::string& name);
Decoder parse_decoder(const std::string& name);

using PairList = std::vector<std::pair<Eigen::Index, Eigen::Index>>;

/// Per-target (mean, lower, upper). Rows are targets; classification uses
/// K columns (mean holds logits, lower/upper hold probability quantiles).
struct TriplePrediction {
  Matrix mean;
  Matrix lower;
  Matrix upper;

  Index size() const { return mean.rows(); }
  /// Swaps crossed quantiles so lower <= upper everywhere.
  void canonicalize();
};

/// Signed residual estimates; rows are targets.
struct ResidualPrediction {
  Matrix signed_residual;
  Matrix magnitude() const { return signed_residual.cwiseAbs(); }
};

struct ModelSpec {
  ModelRole role = ModelRole::Conformal;
  Task task = Task::NodeReg;
  LayerKind encoder = LayerKind::SAGEConv;
  Decoder decoder = Decoder::GAE;
  Index in_dim = 1;
  Index hidden = 64;
  Index n_layers = 2;
  Index embed_dim = 16;
  int n_classes = 0;
};

/// A shared message-passing trunk followed by linear heads: three heads
/// (mean, lower, upper) for the conformal role, one for the residual role.
class GnnModel {
 public:
  GnnModel(ModelSpec spec, std::uint64_t seed);

  const ModelSpec& spec() const { return spec_; }
  const std::vector<LayerSpec>& layers() const { return layers_; }
  std::vector<Matrix>& params() { return params_; }
  const std::vector<Matrix>& params() const { return params_; }
  Index n_heads() const { return spec_.role == ModelRole::Conformal ? 3 : 1; }
  Index head_dim() const;

  /// Registers parameters on the tape (appended to `param_vars`) and returns
  /// one decoded tensor per head. Edge tasks decode `pairs` by inner product.
  std::vector<ad::Tensor> forward(ad::Tape& tape, const GraphOperators& ops, const Matrix& features,
                                  const std::shared_ptr<const PairList>& pairs,
                                  std::vector<ad::Tensor>& param_vars) const;

  /// Raw node embeddings of every head (before decoding).
  std::vector<Matrix> embeddings(const GraphOperators& ops, const Matrix& features) const;

  std::string to_json() const;
  static GnnModel from_json(const std::string& text);
  void save(const std::string& path) const;
  static GnnModel load(const std::string& path);

 private:
  GnnModel() = default;
  void build_layers();

  ModelSpec spec_;
  std::vector<LayerSpec> layers_;
  std::vector<std::size_t> offsets_;  // first parameter index of each layer
  std::vector<Matrix> params_;
};

/// Decodes node embeddings to per-pair scores, z_s(src) . z_t(dst).
ad::Tensor inner_product_decode(const ad::Tensor& z, Decoder decoder,
                                const std::shared_ptr<const PairList>& pairs);

TriplePrediction conformal_forward(const GnnModel& model, const GraphOperators& ops,
                                   const Matrix& features,
                                   const std::shared_ptr<const PairList>& pairs);
ResidualPrediction residual_forward(const GnnModel& model, const GraphOperators& ops,
                                    const Matrix& features,
                                    const std::shared_ptr<const PairList>& pairs);

/// Row-wise max-shifted softmax.
Matrix classify_probs(const Matrix& logits);

}  // namespace rrgnn
