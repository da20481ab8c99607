#include "rrgnn/training.hpp"

#include <stdexcept>

namespace rrgnn {

namespace {

void keep_phase(const SplitMask& split, Phase phase, const Matrix& all, Matrix& targets,
                Matrix& mask) {
  targets = Matrix::Zero(all.rows(), all.cols());
  mask = Matrix::Zero(all.rows(), all.cols());
  for (Index t = 0; t < all.rows(); ++t) {
    if (split[t] != phase) continue;
    targets.row(t) = all.row(t);
    mask.row(t).setOnes();
  }
}

std::vector<Matrix> collect_grads(const std::vector<ad::Tensor>& vars) {
  std::vector<Matrix> grads;
  grads.reserve(vars.size());
  for (const auto& v : vars) grads.push_back(v.grad());
  return grads;
}

template <typename LossFn>
std::vector<double> run_phase(GnnModel& model, const AdamConfig& adam, AdamState<double>& state,
                              int epochs, LossFn&& loss_fn) {
  std::vector<double> losses;
  losses.reserve(static_cast<std::size_t>(epochs) + 1);
  for (int epoch = 0; epoch <= epochs; ++epoch) {
    ad::Tape tape;
    std::vector<ad::Tensor> vars;
    ad::Tensor loss = loss_fn(tape, vars);
    losses.push_back(loss.scalar());
    if (epoch == epochs) break;
    tape.backward(loss);
    const auto grads = collect_grads(vars);
    adam_step<double>(model.params(), grads, state, adam);
  }
  return losses;
}

}  // namespace

TrainingData make_training_data(const Graph& graph, const SplitMask& split, Task task,
                                double delta) {
  TrainingData data;
  data.task = task;
  data.features = graph.features();

  if (task == Task::EdgeWeight) {
    if (split.kind() != TargetKind::Edges) throw std::invalid_argument("edge task needs an edge split");
    if (!graph.has_weights()) throw std::invalid_argument("edge task needs edge weights");
    if (delta <= 0.0) delta = default_delta(graph, split);
    data.conformal_ops = GraphOperators::from_adjacency(mask_weights(graph, split, delta, Phase::Train).values);
    data.residual_ops = GraphOperators::from_adjacency(mask_weights(graph, split, delta, Phase::Val).values);
    auto pairs = std::make_shared<PairList>();
    pairs->reserve(graph.edges().size());
    for (const auto& e : graph.edges()) pairs->emplace_back(e.src, e.dst);
    data.pairs = std::move(pairs);

    const auto& w = graph.weights();
    Matrix train = Matrix::Zero(graph.n_edges(), 1), val = Matrix::Zero(graph.n_edges(), 1);
    data.train_mask = Matrix::Zero(graph.n_edges(), 1);
    data.val_mask = Matrix::Zero(graph.n_edges(), 1);
    for (Index e = 0; e < graph.n_edges(); ++e) {
      if (split[e] == Phase::Train) {
        train(e, 0) = w[static_cast<std::size_t>(e)];
        data.train_mask(e, 0) = 1.0;
      } else if (split[e] == Phase::Val) {
        val(e, 0) = w[static_cast<std::size_t>(e)];
        data.val_mask(e, 0) = 1.0;
      }
    }
    data.train_targets = std::move(train);
    data.val_targets = std::move(val);
    return data;
  }

  if (split.kind() != TargetKind::Nodes) throw std::invalid_argument("node task needs a node split");
  if (!graph.has_labels()) throw std::invalid_argument("node task needs labels");
  const bool classes = graph.labels().is_classification();
  if ((task == Task::NodeClass) != classes)
    throw std::invalid_argument("task/label mismatch");
  data.n_classes = graph.labels().n_classes;
  data.conformal_ops = GraphOperators::from_adjacency(graph.adjacency());
  data.residual_ops = data.conformal_ops;

  const MaskedLabels train = mask_labels(graph, split, Phase::Train);
  const MaskedLabels val = mask_labels(graph, split, Phase::Val);
  const Index cols = train.values.cols();
  data.train_targets = train.values;
  data.val_targets = val.values;
  data.train_mask = train.mask.replicate(1, cols);
  data.val_mask = val.mask.replicate(1, cols);
  return data;
}

ad::Tensor conformal_loss(const std::vector<ad::Tensor>& heads, const TrainingData& data,
                          double alpha) {
  if (heads.size() != 3) throw std::invalid_argument("conformal loss needs three heads");
  const double n = data.train_mask.col(0).sum();
  if (!(n > 0.0)) throw std::invalid_argument("empty train set");
  const double inv_n = 1.0 / n;

  ad::Tensor quantiles =
      ad::masked_pinball_loss<double>(data.train_mask, heads[1], data.train_targets, alpha / 2) +
      ad::masked_pinball_loss<double>(data.train_mask, heads[2], data.train_targets,
                                      1.0 - alpha / 2);
  if (data.task == Task::NodeClass) {
    const Vector rows = data.train_mask.col(0);
    return ad::cross_entropy_loss<double>(heads[0], data.train_targets, rows) +
           ad::scale(quantiles, inv_n);
  }
  return ad::scale(
      ad::masked_frobenius_loss<double>(data.train_mask, heads[0], data.train_targets) + quantiles,
      inv_n);
}

ad::Tensor residual_loss(const ad::Tensor& prediction, const Matrix& labels, const Matrix& mask) {
  const double n = mask.col(0).sum();
  if (!(n > 0.0)) throw std::invalid_argument("empty validation set");
  return ad::scale(ad::masked_frobenius_loss<double>(mask, prediction, labels), 1.0 / n);
}

Matrix residual_labels(const GnnModel& conformal, const TrainingData& data) {
  const TriplePrediction pred =
      conformal_forward(conformal, data.conformal_ops, data.features, data.pairs);
  Matrix out;
  if (data.task == Task::NodeClass)
    out = classify_probs(pred.mean) - data.val_targets;
  else
    out = data.val_targets - pred.mean;
  return out.cwiseProduct(data.val_mask);
}

std::vector<double> train_conformal(GnnModel& model, const TrainingData& data, double alpha,
                                    int epochs, const AdamConfig& adam,
                                    AdamState<double>& state) {
  return run_phase(model, adam, state, epochs, [&](ad::Tape& tape, std::vector<ad::Tensor>& vars) {
    auto heads = model.forward(tape, data.conformal_ops, data.features, data.pairs, vars);
    return conformal_loss(heads, data, alpha);
  });
}

std::vector<double> train_residual(GnnModel& model, const TrainingData& data, const Matrix& labels,
                                   int epochs, const AdamConfig& adam, AdamState<double>& state) {
  return run_phase(model, adam, state, epochs, [&](ad::Tape& tape, std::vector<ad::Tensor>& vars) {
    auto heads = model.forward(tape, data.residual_ops, data.features, data.pairs, vars);
    return residual_loss(heads[0], labels, data.val_mask);
  });
}

TrainHistory cross_train(GnnModel& conformal, GnnModel& residual, const TrainingData& data,
                         const CrossTrainConfig& config) {
  if (config.loop_limit < 1) throw std::invalid_argument("loop limit must be at least 1");
  if (config.epochs_per_phase < 0) throw std::invalid_argument("negative epoch count");
  if (data.train_mask.col(0).sum() <= 0.0) throw std::invalid_argument("empty train set");
  if (config.loop_limit >= 2 && data.val_mask.col(0).sum() <= 0.0)
    throw std::invalid_argument("empty validation set");

  AdamState<double> conformal_state, residual_state;
  TrainHistory history;
  for (int i = 1; i <= config.loop_limit; ++i) {
    PhaseRecord record;
    record.index = i;
    std::vector<double> losses;
    if (i % 2 == 1) {
      record.model = ModelRole::Conformal;
      losses = train_conformal(conformal, data, config.alpha, config.epochs_per_phase, config.adam,
                               conformal_state);
    } else {
      record.model = ModelRole::Residual;
      Matrix labels = residual_labels(conformal, data);
      history.last_residual_labels = labels;
      if (config.residual_target == ResidualTarget::Magnitude) labels = labels.cwiseAbs();
      losses = train_residual(residual, data, labels, config.epochs_per_phase, config.adam,
                              residual_state);
    }
    record.initial_loss = losses.front();
    record.final_loss = losses.back();
    history.phases.push_back(record);
  }
  return history;
}

}  // namespace rrgnn
