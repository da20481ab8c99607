#include "oracles.hpp"
#include "rrgnn/autodiff.hpp"
#include "rrgnn/layers.hpp"
#include "rrgnn/models.hpp"
#include "rrgnn/optim.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

using namespace rrgnn;
using ad::Tape;
using ad::Tensor;

namespace {

SparseMatrix path_adjacency() {
  SparseMatrix a(2, 2);
  a.insert(0, 1) = 1.0;
  a.insert(1, 0) = 1.0;
  a.makeCompressed();
  return a;
}

std::vector<Tensor> as_constants(Tape& tape, const std::vector<Matrix>& ms) {
  std::vector<Tensor> out;
  for (const auto& m : ms) out.push_back(tape.constant(m));
  return out;
}

Matrix layer_output(LayerKind kind, const SparseMatrix& a, const Matrix& x,
                    const std::vector<Matrix>& params, Index out_dim) {
  const auto ops = GraphOperators::from_adjacency(a);
  const LayerSpec spec{kind, x.cols(), out_dim, Activation::Identity};
  Tape tape;
  const auto p = as_constants(tape, params);
  return message_passing_forward(spec, ops, tape.constant(x), p).value();
}

}  // namespace

TEST_CASE("gradient of a square") {
  Tape tape;
  auto w = tape.variable(Matrix::Constant(1, 1, 3.0));
  auto y = w * w;
  tape.backward(y);
  CHECK(y.scalar() == 9.0);
  CHECK(w.grad()(0, 0) == 6.0);
}

TEST_CASE("constant loss gives zero gradients") {
  Tape tape;
  auto w = tape.variable(Matrix::Ones(2, 2));
  auto c = tape.constant(Matrix::Ones(1, 1));
  tape.backward(c);
  CHECK(w.grad().isZero());
}

TEST_CASE("backward wants a scalar") {
  Tape tape;
  auto w = tape.variable(Matrix::Ones(2, 2));
  CHECK_THROWS_AS(tape.backward(w), std::invalid_argument);
}

TEST_CASE("shape mismatches are reported") {
  Tape tape;
  auto a = tape.variable(Matrix::Ones(2, 3));
  auto b = tape.variable(Matrix::Ones(2, 3));
  CHECK_THROWS_AS(matmul(a, b), std::invalid_argument);
  CHECK_THROWS_AS(a + tape.constant(Matrix::Ones(3, 2)), std::invalid_argument);
  Tape other;
  CHECK_THROWS_AS(a + other.variable(Matrix::Ones(2, 3)), std::invalid_argument);
}

TEST_CASE("elementary ops match finite differences") {
  std::mt19937_64 rng(1);
  const Matrix b = oracle::random_matrix(3, 2, rng);
  const Matrix bias = oracle::random_matrix(1, 2, rng);
  auto pairs = std::make_shared<const PairList>(PairList{{0, 1}, {2, 2}, {3, 0}});
  for (int trial = 0; trial < 5; ++trial) {
    const Matrix x0 = oracle::random_matrix(4, 3, rng);
    CHECK(oracle::gradient_error(
              [&](Tape& t, const Tensor& x) {
                auto h = add_bias(matmul(x, t.constant(b)), t.constant(bias));
                return sum(scale(softmax_rows(h), 2.5) - h);
              },
              x0) < 1e-6);
    CHECK(oracle::gradient_error(
              [&](Tape& t, const Tensor& x) {
                auto s = slice_cols(x, 1, 2);
                return sum(pair_dot(s, relu(s), pairs));
              },
              x0) < 1e-6);
  }
}

TEST_CASE("loss gradients match finite differences") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 5; ++trial) {
    const Matrix target = oracle::random_matrix(5, 2, rng);
    Matrix mask = Matrix::Ones(5, 2);
    mask(1, 0) = 0;
    const Matrix x0 = oracle::random_matrix(5, 2, rng);
    CHECK(oracle::gradient_error(
              [&](Tape&, const Tensor& x) { return ad::masked_frobenius_loss(mask, x, target); },
              x0) < 1e-6);
    // Pinball is piecewise linear; random points sit away from the kink.
    CHECK(oracle::gradient_error(
              [&](Tape&, const Tensor& x) { return ad::masked_pinball_loss(mask, x, target, 0.05); },
              x0) < 1e-6);
    Matrix onehot = Matrix::Zero(5, 3);
    for (Index i = 0; i < 5; ++i) onehot(i, i % 3) = 1;
    const Vector row_mask = (Vector(5) << 1, 1, 0, 1, 1).finished();
    CHECK(oracle::gradient_error(
              [&](Tape&, const Tensor& x) { return ad::cross_entropy_loss(x, onehot, row_mask); },
              oracle::random_matrix(5, 3, rng)) < 1e-6);
  }
}

TEST_CASE("layer gradients match finite differences") {
  std::mt19937_64 rng(3);
  const Graph g = oracle::random_graph(7, 0.4, rng);
  const auto ops = GraphOperators::from_adjacency(g.adjacency());
  for (LayerKind kind : {LayerKind::Dense, LayerKind::GCNConv, LayerKind::SAGEConv,
                         LayerKind::GraphConv}) {
    const LayerSpec spec{kind, 3, 2, Activation::ReLU};
    const auto params = init_layer(spec, rng);
    const Matrix x0 = oracle::random_matrix(7, 3, rng);
    CHECK(oracle::gradient_error(
              [&](Tape& t, const Tensor& x) {
                return sum(message_passing_forward(spec, ops, x, as_constants(t, params)));
              },
              x0) < 1e-6);
    // With respect to each parameter matrix.
    for (std::size_t k = 0; k < params.size(); ++k) {
      CHECK(oracle::gradient_error(
                [&](Tape& t, const Tensor& p) {
                  auto ps = as_constants(t, params);
                  ps[k] = p;
                  return sum(message_passing_forward(spec, ops, t.constant(x0), ps));
                },
                params[k] + oracle::random_matrix(params[k].rows(), params[k].cols(), rng) * 0.1) <
            1e-6);
    }
  }
}

TEST_CASE("GCN averages a two-node path") {
  const Matrix x = (Matrix(2, 1) << 1, 3).finished();
  const Matrix out = layer_output(LayerKind::GCNConv, path_adjacency(), x,
                                  {Matrix::Identity(1, 1), Matrix::Zero(1, 1)}, 1);
  CHECK(out.isApprox((Matrix(2, 1) << 2, 2).finished(), 1e-12));
}

TEST_CASE("GCN keeps constant features on a regular graph") {
  const Graph ring = oracle::ring(8);
  const Matrix x = Matrix::Constant(8, 2, 1.5);
  const Matrix out = layer_output(LayerKind::GCNConv, ring.adjacency(), x,
                                  {Matrix::Identity(2, 2), Matrix::Zero(1, 2)}, 2);
  CHECK(out.isApprox(x, 1e-12));
}

TEST_CASE("SAGE adds self and neighbor mean") {
  const Matrix x = (Matrix(2, 1) << 1, 3).finished();
  const Matrix id = Matrix::Identity(1, 1);
  const Matrix out = layer_output(LayerKind::SAGEConv, path_adjacency(), x,
                                  {id, id, Matrix::Zero(1, 1)}, 1);
  CHECK(out(0, 0) == doctest::Approx(4.0));
  CHECK(out(1, 0) == doctest::Approx(4.0));

  // An isolated node only sees itself.
  SparseMatrix lone(2, 2);
  const Matrix iso = layer_output(LayerKind::SAGEConv, lone, x, {id, id, Matrix::Zero(1, 1)}, 1);
  CHECK(iso(0, 0) == 1.0);
  CHECK(iso(1, 0) == 3.0);
}

TEST_CASE("GraphConv sums weighted neighbors") {
  SparseMatrix a(2, 2);
  a.insert(0, 1) = 2.0;
  a.insert(1, 0) = 2.0;
  const Matrix x = (Matrix(2, 1) << 1, 3).finished();
  const Matrix id = Matrix::Identity(1, 1);
  const Matrix out = layer_output(LayerKind::GraphConv, a, x, {id, id, Matrix::Constant(1, 1, 0.5)}, 1);
  CHECK(out(0, 0) == doctest::Approx(1 + 6 + 0.5));
  CHECK(out(1, 0) == doctest::Approx(3 + 2 + 0.5));
}

TEST_CASE("pinball loss values") {
  CHECK(ad::pinball_loss(1.0, 0.0, 0.05) == doctest::Approx(0.05));
  CHECK(ad::pinball_loss(0.0, 1.0, 0.9) == doctest::Approx(0.1));
  CHECK(ad::pinball_loss(2.0, 2.0, 0.3) == 0.0);
  CHECK_THROWS_AS(ad::pinball_loss(0.0, 0.0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(ad::pinball_loss(0.0, 0.0, 0.0), std::invalid_argument);

  std::mt19937_64 rng(4);
  std::normal_distribution<double> normal;
  for (int i = 0; i < 1000; ++i) {
    const double y = normal(rng), yh = normal(rng);
    CHECK(ad::pinball_loss(y, yh, 0.2) > 0.0);
  }
}

TEST_CASE("pinball risk is minimized at the empirical quantile") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> normal;
  std::vector<double> ys(101);
  for (auto& y : ys) y = normal(rng);
  for (double level : {0.1, 0.5, 0.9}) {
    double best = std::numeric_limits<double>::infinity(), arg = 0;
    for (double c : ys) {
      double risk = 0;
      for (double y : ys) risk += ad::pinball_loss(y, c, level);
      if (risk < best) {
        best = risk;
        arg = c;
      }
    }
    // The minimizer of sum rho_level(y_i - c) is y_(ceil(n * level)).
    const auto k = static_cast<Index>(std::ceil(101 * level));
    CHECK(arg == oracle::sorted_kth(ys, k));
  }
}

TEST_CASE("masked losses ignore masked entries") {
  Tape tape;
  const Matrix mask = (Matrix(2, 2) << 1, 0, 0, 0).finished();
  const Matrix target = Matrix::Zero(2, 2);
  auto pred = tape.variable((Matrix(2, 2) << 2, 9, 9, 9).finished());
  auto loss = ad::masked_frobenius_loss(mask, pred, target);
  CHECK(loss.scalar() == 4.0);
  tape.backward(loss);
  CHECK(pred.grad()(0, 1) == 0.0);
  CHECK(pred.grad()(0, 0) == 4.0);
  CHECK_THROWS_AS(ad::masked_frobenius_loss(Matrix(Matrix::Ones(3, 2)), pred, target), std::invalid_argument);

  auto same = tape.variable(Matrix::Ones(2, 2));
  CHECK(ad::masked_frobenius_loss(Matrix(Matrix::Ones(2, 2)), same, Matrix(Matrix::Ones(2, 2))).scalar() == 0.0);
}

TEST_CASE("cross-entropy values") {
  Tape tape;
  const Matrix onehot = (Matrix(1, 4) << 0, 1, 0, 0).finished();
  const Vector mask = Vector::Ones(1);
  CHECK(ad::cross_entropy_loss(tape.constant(Matrix::Zero(1, 4)), onehot, mask).scalar() ==
        doctest::Approx(std::log(4.0)));
  const Matrix sharp = (Matrix(1, 4) << 0, 100, 0, 0).finished();
  CHECK(ad::cross_entropy_loss(tape.constant(sharp), onehot, mask).scalar() < 1e-12);
  CHECK_THROWS_WITH(ad::cross_entropy_loss(tape.constant(sharp), onehot, Vector(Vector::Zero(1))),
                    "cross_entropy_loss: no masked rows");
}

TEST_CASE("row softmax") {
  const Matrix p = classify_probs((Matrix(2, 2) << 0, 0, 1000, 0).finished());
  CHECK(p(0, 0) == doctest::Approx(0.5));
  CHECK(p(1, 0) == doctest::Approx(1.0));
  CHECK(p.allFinite());
  std::mt19937_64 rng(6);
  const Matrix q = classify_probs(oracle::random_matrix(20, 5, rng) * 30);
  CHECK((q.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
}

TEST_CASE("adam steps") {
  AdamConfig cfg;
  cfg.lr = 1e-3;
  std::vector<Matrix> params{Matrix::Constant(2, 2, 0.5)};
  const std::vector<Matrix> grads{Matrix::Ones(2, 2)};
  AdamState<double> state;
  adam_step<double>(params, grads, state, cfg);
  CHECK(((params[0].array() - 0.5).abs() - 1e-3).abs().maxCoeff() < 1e-8);

  std::vector<Matrix> still{Matrix::Constant(2, 2, 0.5)};
  AdamState<double> fresh;
  const std::vector<Matrix> zero{Matrix::Zero(2, 2)};
  adam_step<double>(still, zero, fresh, cfg);
  CHECK(still[0] == Matrix::Constant(2, 2, 0.5));

  // Coupled L2: a zero raw gradient still shrinks the weights.
  cfg.weight_decay = 0.1;
  AdamState<double> decayed;
  adam_step<double>(still, zero, decayed, cfg);
  CHECK((still[0].array() < 0.5).all());

  cfg.lr = 0.0;
  CHECK_THROWS_AS(adam_step<double>(still, zero, decayed, cfg), std::invalid_argument);
  cfg.lr = 1e-3;
  cfg.weight_decay = -1;
  CHECK_THROWS_AS(adam_step<double>(still, zero, decayed, cfg), std::invalid_argument);
}

TEST_CASE("adam is deterministic and converges on a quadratic") {
  auto run = [] {
    std::vector<Matrix> p{Matrix::Constant(1, 1, 5.0)};
    AdamState<double> s;
    AdamConfig cfg;
    cfg.lr = 0.1;
    for (int i = 0; i < 500; ++i) {
      const std::vector<Matrix> g{2 * (p[0].array() - 1.0).matrix()};
      adam_step<double>(p, g, s, cfg);
    }
    return p[0](0, 0);
  };
  const double a = run();
  CHECK(a == run());
  CHECK(a == doctest::Approx(1.0).epsilon(1e-2));
}
