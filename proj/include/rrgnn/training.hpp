#pragma once

#include "rrgnn/graph.hpp"
#include "rrgnn/models.hpp"
#include "rrgnn/optim.hpp"

#include <cstdint>
#include <memory>
#include <vector>

namespace rrgnn {

/// Everything the two networks may see during training. Labels of the
/// calibration and test targets are never copied in here.
struct TrainingData {
  Task task = Task::NodeReg;
  int n_classes = 0;
  Matrix features;
  GraphOperators conformal_ops;  // built from W^train (edges) or A (nodes)
  GraphOperators residual_ops;   // built from W^val (edges) or A (nodes)
  std::shared_ptr<const PairList> pairs;  // every edge target, edge tasks only
  Matrix train_targets, train_mask;       // targets x (1 or K)
  Matrix val_targets, val_mask;

  Index n_targets() const { return train_targets.rows(); }
};

/// delta <= 0 selects default_delta().
TrainingData make_training_data(const Graph& graph, const SplitMask& split, Task task,
                                double delta = 0.0);

enum class ResidualTarget { Signed, Magnitude };

struct CrossTrainConfig {
  int loop_limit = 6;
  int epochs_per_phase = 100;
  std::uint64_t seed = 0;
  double alpha = 0.1;
  AdamConfig adam{};
  ResidualTarget residual_target = ResidualTarget::Magnitude;
};

/// Mean over Train rows of squared error plus the two pinball terms
/// (cross-entropy replaces the squared error for classification).
ad::Tensor conformal_loss(const std::vector<ad::Tensor>& heads, const TrainingData& data,
                          double alpha);
/// Mean over Val rows of (R_hat - R)^2.
ad::Tensor residual_loss(const ad::Tensor& prediction, const Matrix& labels, const Matrix& mask);

/// Residual of the conformal model on Val rows (zero elsewhere):
/// y - y_hat for regression targets, softmax(y_hat) - onehot for classes.
Matrix residual_labels(const GnnModel& conformal, const TrainingData& data);

struct PhaseRecord {
  int index = 0;  // 1-based loop counter
  ModelRole model = ModelRole::Conformal;
  double initial_loss = 0.0;
  double final_loss = 0.0;
};

struct TrainHistory {
  std::vector<PhaseRecord> phases;
  Matrix last_residual_labels;  // labels used by the last residual phase
};

/// Full-batch Adam on the conformal objective; returns per-epoch losses
/// (loss before each step, then the final loss).
std::vector<double> train_conformal(GnnModel& model, const TrainingData& data, double alpha,
                                    int epochs, const AdamConfig& adam,
                                    AdamState<double>& state);
std::vector<double> train_residual(GnnModel& model, const TrainingData& data, const Matrix& labels,
                                   int epochs, const AdamConfig& adam, AdamState<double>& state);

/// Alternates: odd i trains the conformal model on Train targets, even i
/// recomputes Val residual labels from the current conformal model and
/// trains the residual model on them. Each model keeps its own Adam state.
TrainHistory cross_train(GnnModel& conformal, GnnModel& residual, const TrainingData& data,
                         const CrossTrainConfig& config);

}  // namespace rrgnn
