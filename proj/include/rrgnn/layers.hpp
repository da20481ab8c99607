#pragma once

#include "rrgnn/autodiff.hpp"
#include "rrgnn/graph.hpp"

#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace rrgnn {

enum class LayerKind { Dense, GCNConv, SAGEConv, GraphConv };
enum class Activation { ReLU, Identity };

const char* to_string(LayerKind kind);
LayerKind parse_layer_kind(const std::string& name);

struct LayerSpec {
  LayerKind kind = LayerKind::Dense;
  Index in_dim = 1;
  Index out_dim = 1;
  Activation activation = Activation::Identity;
  bool operator==(const LayerSpec&) const = default;
};

/// Precomputed propagation operators for one (weighted) adjacency.
struct GraphOperators {
  std::shared_ptr<const SparseMatrix> normalized;  // D^-1/2 (W + I) D^-1/2
  std::shared_ptr<const SparseMatrix> mean;        // row-normalized W; isolated rows are zero
  std::shared_ptr<const SparseMatrix> adjacency;   // W

  static GraphOperators from_adjacency(const SparseMatrix& weights);
};

/// Number of parameter matrices a layer owns (weights then bias).
std::size_t parameter_count(const LayerSpec& spec);

/// Glorot-uniform weights, zero bias.
std::vector<Matrix> init_layer(const LayerSpec& spec, std::mt19937_64& rng);

/// One message-passing layer:
///   Dense:     H W + b
///   GCNConv:   Ahat H W + b
///   SAGEConv:  H W1 + mean_neighbors(H) W2 + b
///   GraphConv: H W1 + A H W2 + b
/// followed by the activation.
ad::Tensor message_passing_forward(const LayerSpec& spec, const GraphOperators& ops,
                                   const ad::Tensor& h, std::span<const ad::Tensor> params);

}  // namespace rrgnn
