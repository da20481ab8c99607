#pragma once

// Tape-based reverse-mode differentiation over dense Eigen matrices.
//
// A BasicTape records every operation in creation order; backward() walks the
// records in reverse and pushes adjoints into parents. Tensors are cheap
// handles (tape pointer + node index) and stay valid for the tape's lifetime.

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <cmath>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace rrgnn::ad {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using SparseX = Eigen::SparseMatrix<Scalar, Eigen::RowMajor>;

template <typename Scalar>
class BasicTape;

template <typename Scalar>
class BasicTensor {
 public:
  using Matrix = MatrixX<Scalar>;

  BasicTensor() = default;
  BasicTensor(BasicTape<Scalar>* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Matrix& value() const { return tape_->value(id_); }
  /// Adjoint accumulated by the last backward(); zero if unreachable.
  const Matrix& grad() const { return tape_->grad(id_); }
  bool requires_grad() const { return tape_->requires_grad(id_); }
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  Scalar scalar() const { return value()(0, 0); }

  BasicTape<Scalar>& tape() const { return *tape_; }
  std::size_t id() const { return id_; }

 private:
  BasicTape<Scalar>* tape_ = nullptr;
  std::size_t id_ = 0;
};

template <typename Scalar>
class BasicTape {
 public:
  using Matrix = MatrixX<Scalar>;
  using Tensor = BasicTensor<Scalar>;
  using BackwardFn = std::function<void(BasicTape&, const Matrix& upstream)>;

  BasicTape() = default;
  BasicTape(const BasicTape&) = delete;
  BasicTape& operator=(const BasicTape&) = delete;

  Tensor constant(Matrix value) { return push(std::move(value), false, {}); }
  Tensor variable(Matrix value) { return push(std::move(value), true, {}); }

  /// Records an op result. `backward` receives the op's adjoint and is only
  /// invoked when some parent requires a gradient.
  Tensor record(Matrix value, bool requires_grad, BackwardFn backward) {
    return push(std::move(value), requires_grad, std::move(backward));
  }

  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  const Matrix& grad(std::size_t id) {
    auto& n = nodes_[id];
    if (n.grad.size() == 0) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
    return n.grad;
  }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  void accumulate(const Tensor& t, const Matrix& g) {
    auto& n = nodes_[t.id()];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0)
      n.grad = g;
    else
      n.grad += g;
  }

  void backward(const Tensor& loss) {
    if (loss.rows() != 1 || loss.cols() != 1)
      throw std::invalid_argument("backward requires a scalar loss");
    for (auto& n : nodes_) n.grad.resize(0, 0);
    nodes_[loss.id()].grad = Matrix::Ones(1, 1);
    for (std::size_t i = loss.id() + 1; i-- > 0;) {
      auto& n = nodes_[i];
      if (!n.requires_grad || !n.backward || n.grad.size() == 0) continue;
      const Matrix upstream = n.grad;
      n.backward(*this, upstream);
    }
  }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    BackwardFn backward;
  };

  Tensor push(Matrix value, bool requires_grad, BackwardFn backward) {
    nodes_.push_back(Node{std::move(value), Matrix(), requires_grad, std::move(backward)});
    return Tensor(this, nodes_.size() - 1);
  }

  std::vector<Node> nodes_;
};

using Tape = BasicTape<double>;
using Tensor = BasicTensor<double>;

namespace detail {

template <typename Scalar>
void require_same_tape(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b) {
  if (&a.tape() != &b.tape()) throw std::invalid_argument("tensors live on different tapes");
}

template <typename Scalar>
void require_same_shape(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b,
                        const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument(std::string(what) + ": dimension mismatch");
}

}  // namespace detail

template <typename Scalar>
BasicTensor<Scalar> matmul(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b) {
  detail::require_same_tape(a, b);
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: dimension mismatch");
  auto& tape = a.tape();
  return tape.record(a.value() * b.value(), a.requires_grad() || b.requires_grad(),
                     [a, b](BasicTape<Scalar>& t, const MatrixX<Scalar>& g) {
                       if (a.requires_grad()) t.accumulate(a, g * b.value().transpose());
                       if (b.requires_grad()) t.accumulate(b, a.value().transpose() * g);
                     });
}

template <typename Scalar>
BasicTensor<Scalar> operator*(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b) {
  return matmul(a, b);
}

template <typename Scalar>
BasicTensor<Scalar> operator+(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b) {
  detail::require_same_tape(a, b);
  detail::require_same_shape(a, b, "add");
  return a.tape().record(a.value() + b.value(), a.requires_grad() || b.requires_grad(),
                         [a, b](BasicTape<Scalar>& t, const MatrixX<Scalar>& g) {
                           t.accumulate(a, g);
                           t.accumulate(b, g);
                         });
}

template <typename Scalar>
BasicTensor<Scalar> operator-(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& b) {
  detail::require_same_tape(a, b);
  detail::require_same_shape(a, b, "sub");
  return a.tape().record(a.value() - b.value(), a.requires_grad() || b.requires_grad(),
                         [a, b](BasicTape<Scalar>& t, const MatrixX<Scalar>& g) {
                           t.accumulate(a, g);
                           t.accumulate(b, -g);
                         });
}

template <typename Scalar>
BasicTensor<Scalar> scale(const BasicTensor<Scalar>& a, Scalar s) {
  return a.tape().record(a.value() * s, a.requires_grad(),
                         [a, s](BasicTape<Scalar>& t, const MatrixX<Scalar>& g) {
                           t.accumulate(a, g * s);
                         });
}

/// a + 1 * bias, with bias a 1 x cols row broadcast over rows.
template <typename Scalar>
BasicTensor<Scalar> add_bias(const BasicTensor<Scalar>& a, const BasicTensor<Scalar>& bias) {
  detail::require_same_tape(a, bias);
  if (bias.rows() != 1 || bias.cols() != a.cols())
    throw std::invalid_argument("add_bias: dimension mismatch");
  MatrixX<Scalar> out = a.value();
  out.rowwise() += bias.value().row(0);
  return a.tape().record(std::move(out), a.requires_grad() || bias.requires_grad(),
                         [a, bias](BasicTape<Scalar>& t, const MatrixX<Scalar>& g) {
                           t.accumulate(a, g);
                           if (bias.requires_grad()) t.accumulate(bias, g.colwise().sum());
                         });
}

template <typename Scalar>
BasicTensor<Scalar> relu(const BasicTensor<Scalar>& a) {
  MatrixX<Scalar> out = a.value().cwiseMax(Scalar(0));
  return a.tape().record(std::move(out), a.requires_grad(),
                         [a](BasicTape<Scalar>& t, const MatrixX<Scalar>& g) {
                           t.accumulate(a, (a.value().array() > Scalar(0)).select(g, Scalar(0)));
                         });
}

/// Left-multiplication by a constant sparse operator (normalized adjacency,
/// neighbor mean, ...). The operator is shared, not copied, by the record.
template <typename Scalar>
BasicTensor<Scalar> propagate(std::shared_ptr<const SparseX<Scalar>> op,
                              const BasicTensor<Scalar>& a) {
  if (op->cols() != a.rows()) throw std::invalid_argument("propagate: dimension mismatch");
  MatrixX<Scalar> out = (*op) * a.value();
  return a.tape().record(std::move(out), a.requires_grad(),
                         [op, a](BasicTape<Scalar>& t, const MatrixX<Scalar>& g) {
                           t.accumulate(a, MatrixX<Scalar>(op->transpose() * g));
                         });
}

template <typename Scalar>
MatrixX<Scalar> softmax_rows_value(const MatrixX<Scalar>& logits) {
  MatrixX<Scalar> out = logits;
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    const Scalar shift = out.row(i).maxCoeff();
    out.row(i) = (out.row(i).array() - shift).exp();
    out.row(i) /= out.row(i).sum();
  }
  return out;
}

template <typename Scalar>
BasicTensor<Scalar> softmax_rows(const BasicTensor<Scalar>& a) {
  MatrixX<Scalar> p = softmax_rows_value<Scalar>(a.value());
  return a.tape().record(p, a.requires_grad(),
                         [a, p](BasicTape<Scalar>& t, const MatrixX<Scalar>& g) {
                           // dL/da_ij = p_ij (g_ij - sum_k g_ik p_ik)
                           VectorX<Scalar> dot = (g.array() * p.array()).rowwise().sum();
                           MatrixX<Scalar> d = p.array() * (g.colwise() - dot).array();
                           t.accumulate(a, d);
                         });
}

template <typename Scalar>
BasicTensor<Scalar> slice_cols(const BasicTensor<Scalar>& a, Eigen::Index start,
                               Eigen::Index count) {
  if (start < 0 || count < 0 || start + count > a.cols())
    throw std::invalid_argument("slice_cols: out of range");
  MatrixX<Scalar> out = a.value().middleCols(start, count);
  return a.tape().record(std::move(out), a.requires_grad(),
                         [a, start, count](BasicTape<Scalar>& t, const MatrixX<Scalar>& g) {
                           MatrixX<Scalar> d = MatrixX<Scalar>::Zero(a.rows(), a.cols());
                           d.middleCols(start, count) = g;
                           t.accumulate(a, d);
                         });
}

/// Per-pair inner products: out(e) = <left.row(src_e), right.row(dst_e)>.
template <typename Scalar>
BasicTensor<Scalar> pair_dot(const BasicTensor<Scalar>& left, const BasicTensor<Scalar>& right,
                             std::shared_ptr<const std::vector<std::pair<Eigen::Index, Eigen::Index>>> pairs) {
  detail::require_same_tape(left, right);
  detail::require_same_shape(left, right, "pair_dot");
  MatrixX<Scalar> out(static_cast<Eigen::Index>(pairs->size()), 1);
  for (std::size_t e = 0; e < pairs->size(); ++e) {
    const auto [s, d] = (*pairs)[e];
    out(static_cast<Eigen::Index>(e), 0) = left.value().row(s).dot(right.value().row(d));
  }
  return left.tape().record(
      std::move(out), left.requires_grad() || right.requires_grad(),
      [left, right, pairs](BasicTape<Scalar>& t, const MatrixX<Scalar>& g) {
        MatrixX<Scalar> dl = MatrixX<Scalar>::Zero(left.rows(), left.cols());
        MatrixX<Scalar> dr = MatrixX<Scalar>::Zero(right.rows(), right.cols());
        for (std::size_t e = 0; e < pairs->size(); ++e) {
          const auto [s, d] = (*pairs)[e];
          const Scalar ge = g(static_cast<Eigen::Index>(e), 0);
          dl.row(s) += ge * right.value().row(d);
          dr.row(d) += ge * left.value().row(s);
        }
        t.accumulate(left, dl);
        t.accumulate(right, dr);
      });
}

template <typename Scalar>
BasicTensor<Scalar> sum(const BasicTensor<Scalar>& a) {
  MatrixX<Scalar> out(1, 1);
  out(0, 0) = a.value().sum();
  return a.tape().record(std::move(out), a.requires_grad(),
                         [a](BasicTape<Scalar>& t, const MatrixX<Scalar>& g) {
                           t.accumulate(a, MatrixX<Scalar>::Constant(a.rows(), a.cols(), g(0, 0)));
                         });
}

// ---------------------------------------------------------------------------
// Losses

/// Quantile (pinball) loss for a single prediction at level in (0, 1):
/// level * (y - y_hat) above the prediction, (1 - level) * (y_hat - y) otherwise.
template <typename Scalar>
Scalar pinball_loss(Scalar y, Scalar y_hat, Scalar level) {
  if (!(level > Scalar(0) && level < Scalar(1)))
    throw std::invalid_argument("pinball level must lie in (0, 1)");
  return y > y_hat ? level * (y - y_hat) : (Scalar(1) - level) * (y_hat - y);
}

/// Sum over mask == 1 entries of (pred - target)^2.
template <typename Scalar>
BasicTensor<Scalar> masked_frobenius_loss(const MatrixX<Scalar>& mask,
                                          const BasicTensor<Scalar>& pred,
                                          const MatrixX<Scalar>& target) {
  if (mask.rows() != pred.rows() || mask.cols() != pred.cols() || target.rows() != pred.rows() ||
      target.cols() != pred.cols())
    throw std::invalid_argument("masked_frobenius_loss: shape mismatch");
  MatrixX<Scalar> diff = (pred.value() - target).cwiseProduct(mask);
  MatrixX<Scalar> out(1, 1);
  out(0, 0) = diff.squaredNorm();
  return pred.tape().record(std::move(out), pred.requires_grad(),
                            [pred, diff](BasicTape<Scalar>& t, const MatrixX<Scalar>& g) {
                              t.accumulate(pred, Scalar(2) * g(0, 0) * diff);
                            });
}

/// Sum over mask == 1 entries of pinball_loss(target, pred, level).
template <typename Scalar>
BasicTensor<Scalar> masked_pinball_loss(const MatrixX<Scalar>& mask,
                                        const BasicTensor<Scalar>& pred,
                                        const MatrixX<Scalar>& target, Scalar level) {
  if (!(level > Scalar(0) && level < Scalar(1)))
    throw std::invalid_argument("pinball level must lie in (0, 1)");
  if (mask.rows() != pred.rows() || mask.cols() != pred.cols() || target.rows() != pred.rows() ||
      target.cols() != pred.cols())
    throw std::invalid_argument("masked_pinball_loss: shape mismatch");
  const auto& p = pred.value();
  MatrixX<Scalar> slope(p.rows(), p.cols());
  Scalar total = 0;
  for (Eigen::Index j = 0; j < p.cols(); ++j) {
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
      if (mask(i, j) == Scalar(0)) {
        slope(i, j) = 0;
        continue;
      }
      const Scalar y = target(i, j);
      total += pinball_loss(y, p(i, j), level);
      slope(i, j) = y > p(i, j) ? -level : Scalar(1) - level;
    }
  }
  MatrixX<Scalar> out(1, 1);
  out(0, 0) = total;
  return pred.tape().record(std::move(out), pred.requires_grad(),
                            [pred, slope](BasicTape<Scalar>& t, const MatrixX<Scalar>& g) {
                              t.accumulate(pred, g(0, 0) * slope);
                            });
}

/// Mean categorical cross-entropy of softmax(logits) over rows with mask == 1.
template <typename Scalar>
BasicTensor<Scalar> cross_entropy_loss(const BasicTensor<Scalar>& logits,
                                       const MatrixX<Scalar>& onehot, const VectorX<Scalar>& mask) {
  if (onehot.rows() != logits.rows() || onehot.cols() != logits.cols() ||
      mask.size() != logits.rows())
    throw std::invalid_argument("cross_entropy_loss: shape mismatch");
  const Scalar n_rows = mask.sum();
  if (!(n_rows > Scalar(0))) throw std::invalid_argument("cross_entropy_loss: no masked rows");
  const auto& z = logits.value();
  MatrixX<Scalar> p = softmax_rows_value<Scalar>(z);
  Scalar total = 0;
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    if (mask[i] == Scalar(0)) continue;
    const Scalar shift = z.row(i).maxCoeff();
    const Scalar log_norm = shift + std::log((z.row(i).array() - shift).exp().sum());
    for (Eigen::Index k = 0; k < z.cols(); ++k)
      if (onehot(i, k) != Scalar(0)) total -= mask[i] * onehot(i, k) * (z(i, k) - log_norm);
  }
  MatrixX<Scalar> out(1, 1);
  out(0, 0) = total / n_rows;
  const VectorX<Scalar> row_mass = onehot.rowwise().sum();
  MatrixX<Scalar> d = (p.array().colwise() * row_mass.array() - onehot.array()).colwise() *
                      (mask.array() / n_rows);
  return logits.tape().record(std::move(out), logits.requires_grad(),
                              [logits, d](BasicTape<Scalar>& t, const MatrixX<Scalar>& g) {
                                t.accumulate(logits, g(0, 0) * d);
                              });
}

}  // namespace rrgnn::ad
