#include "rrgnn/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace rrgnn {

const char* to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::Dense: return "Dense";
    case LayerKind::GCNConv: return "GCNConv";
    case LayerKind::SAGEConv: return "SAGEConv";
    case LayerKind::GraphConv: return "GraphConv";
  }
  return "?";
}

LayerKind parse_layer_kind(const std::string& name) {
  if (name == "Dense") return LayerKind::Dense;
  if (name == "GCNConv" || name == "GCN") return LayerKind::GCNConv;
  if (name == "SAGEConv" || name == "GraphSAGE") return LayerKind::SAGEConv;
  if (name == "GraphConv") return LayerKind::GraphConv;
  throw std::invalid_argument("unknown layer kind: " + name);
}

GraphOperators GraphOperators::from_adjacency(const SparseMatrix& weights) {
  if (weights.rows() != weights.cols()) throw std::invalid_argument("adjacency must be square");
  const Index n = weights.rows();

  SparseMatrix with_self = weights;
  {
    SparseMatrix eye(n, n);
    eye.setIdentity();
    with_self += eye;
  }
  Vector deg = Vector::Zero(n);
  Vector row_sum = Vector::Zero(n);
  for (Index i = 0; i < n; ++i) {
    for (SparseMatrix::InnerIterator it(with_self, i); it; ++it) deg[i] += it.value();
    for (SparseMatrix::InnerIterator it(weights, i); it; ++it) row_sum[i] += it.value();
  }
  const Vector inv_sqrt = deg.array().rsqrt();

  auto normalized = std::make_shared<SparseMatrix>(with_self);
  for (Index i = 0; i < n; ++i)
    for (SparseMatrix::InnerIterator it(*normalized, i); it; ++it)
      it.valueRef() *= inv_sqrt[i] * inv_sqrt[it.col()];

  auto mean = std::make_shared<SparseMatrix>(weights);
  for (Index i = 0; i < n; ++i) {
    if (row_sum[i] <= 0.0) continue;
    for (SparseMatrix::InnerIterator it(*mean, i); it; ++it) it.valueRef() /= row_sum[i];
  }

  GraphOperators ops;
  ops.normalized = std::move(normalized);
  ops.mean = std::move(mean);
  ops.adjacency = std::make_shared<SparseMatrix>(weights);
  return ops;
}

std::size_t parameter_count(const LayerSpec& spec) {
  switch (spec.kind) {
    case LayerKind::Dense:
    case LayerKind::GCNConv: return 2;
    case LayerKind::SAGEConv:
    case LayerKind::GraphConv: return 3;
  }
  return 0;
}

std::vector<Matrix> init_layer(const LayerSpec& spec, std::mt19937_64& rng) {
  if (spec.in_dim <= 0 || spec.out_dim <= 0) throw std::invalid_argument("layer dims must be > 0");
  const double limit = std::sqrt(6.0 / static_cast<double>(spec.in_dim + spec.out_dim));
  std::uniform_real_distribution<double> uniform(-limit, limit);
  std::vector<Matrix> params;
  const std::size_t n_weights = parameter_count(spec) - 1;
  for (std::size_t w = 0; w < n_weights; ++w) {
    Matrix m(spec.in_dim, spec.out_dim);
    for (Index j = 0; j < m.cols(); ++j)
      for (Index i = 0; i < m.rows(); ++i) m(i, j) = uniform(rng);
    params.push_back(std::move(m));
  }
  params.push_back(Matrix::Zero(1, spec.out_dim));
  return params;
}

ad::Tensor message_passing_forward(const LayerSpec& spec, const GraphOperators& ops,
                                   const ad::Tensor& h, std::span<const ad::Tensor> params) {
  if (params.size() != parameter_count(spec))
    throw std::invalid_argument("message_passing_forward: wrong parameter count");
  if (h.cols() != spec.in_dim) throw std::invalid_argument("message_passing_forward: dimension mismatch");
  for (std::size_t i = 0; i + 1 < params.size(); ++i)
    if (params[i].rows() != spec.in_dim || params[i].cols() != spec.out_dim)
      throw std::invalid_argument("message_passing_forward: parameter shape mismatch");
  if (spec.kind != LayerKind::Dense && ops.adjacency && ops.adjacency->rows() != h.rows())
    throw std::invalid_argument("message_passing_forward: adjacency/feature mismatch");

  ad::Tensor out;
  switch (spec.kind) {
    case LayerKind::Dense:
      out = h * params[0];
      break;
    case LayerKind::GCNConv:
      out = ad::propagate(ops.normalized, h * params[0]);
      break;
    case LayerKind::SAGEConv:
      out = h * params[0] + ad::propagate(ops.mean, h) * params[1];
      break;
    case LayerKind::GraphConv:
      out = h * params[0] + ad::propagate(ops.adjacency, h) * params[1];
      break;
  }
  out = ad::add_bias(out, params.back());
  if (spec.activation == Activation::ReLU) out = ad::relu(out);
  return out;
}

}  // namespace rrgnn
