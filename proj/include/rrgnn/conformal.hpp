#pragma once

// Nonconformity scores, per-cluster split-conformal calibration and
// interval / label-set construction.
//
// Scores are pure functions of one target's (prediction, label, residual),
// so calibration and test scores stay exchangeable whenever the targets are.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace rrgnn::conformal {

using Index = std::int64_t;

/// CP:     |y - mean|,                       interval mean +- d
/// CQR:    max(lo - y, y - hi),              interval [lo - d, hi + d]
/// RR:     CQR score / |R_hat|,              interval [lo - d|R_hat|, hi + d|R_hat|]
/// CQR_RR: CQR score / |hi - lo|,            interval [lo - d|hi-lo|, hi + d|hi-lo|]
enum class ScoreVariant { CP, CQR, RR, CQR_RR };

inline const char* to_string(ScoreVariant v) {
  switch (v) {
    case ScoreVariant::CP: return "CP";
    case ScoreVariant::CQR: return "CQR";
    case ScoreVariant::RR: return "RR";
    case ScoreVariant::CQR_RR: return "CQR-RR";
  }
  return "?";
}

inline ScoreVariant parse_score_variant(const std::string& s) {
  if (s == "CP") return ScoreVariant::CP;
  if (s == "CQR") return ScoreVariant::CQR;
  if (s == "RR") return ScoreVariant::RR;
  if (s == "CQR-RR" || s == "CQR_RR") return ScoreVariant::CQR_RR;
  throw std::invalid_argument("unknown score variant: " + s);
}

inline constexpr double kResidualEps = 1e-9;

struct QuantileIndex {
  Index k = 0;
  bool exceeds = false;  // k > n: the quantile is +infinity
};

/// k = ceil((n + 1)(1 - alpha)).
inline QuantileIndex quantile_index(Index n_calib, double alpha) {
  if (n_calib < 1) throw std::invalid_argument("quantile_index needs n >= 1");
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0, 1)");
  const double raw = static_cast<double>(n_calib + 1) * (1.0 - alpha);
  // Guard against representation error pushing an exact integer up by one ulp.
  const double rounded = std::round(raw);
  const auto k = static_cast<Index>(std::abs(raw - rounded) < 1e-9 ? rounded : std::ceil(raw));
  return {k, k > n_calib};
}

template <typename Scalar>
Scalar kth_smallest(std::span<const Scalar> values, Index k) {
  if (k < 1 || k > static_cast<Index>(values.size()))
    throw std::out_of_range("kth_smallest: k out of range");
  std::vector<Scalar> copy(values.begin(), values.end());
  auto nth = copy.begin() + (k - 1);
  std::nth_element(copy.begin(), nth, copy.end());
  return *nth;
}

template <typename Scalar>
Scalar cp_score(Scalar y, Scalar mean) {
  return std::abs(y - mean);
}

template <typename Scalar>
Scalar cqr_score(Scalar y, Scalar lo, Scalar hi) {
  return std::max(lo - y, y - hi);
}

/// Residual-reweighted CQR score. |R_hat| is floored at eps so the score is
/// finite and exactly homogeneous in |R_hat| away from zero.
template <typename Scalar>
Scalar rr_score(Scalar y, Scalar lo, Scalar hi, Scalar r_hat, Scalar eps = Scalar(kResidualEps)) {
  const Scalar w = std::max(std::abs(r_hat), eps);
  return std::max((lo - y) / w, (y - hi) / w);
}

template <typename Scalar>
Scalar rr_score_edge(Scalar w_calib, Scalar lo, Scalar hi, Scalar r_hat,
                     Scalar eps = Scalar(kResidualEps)) {
  return rr_score(w_calib, lo, hi, r_hat, eps);
}

template <typename Scalar>
Scalar rr_score_node_reg(Scalar y, Scalar lo, Scalar hi, Scalar r_hat,
                         Scalar eps = Scalar(kResidualEps)) {
  return rr_score(y, lo, hi, r_hat, eps);
}

/// CQR score reweighted by the width of the raw quantile band.
template <typename Scalar>
Scalar cqr_rr_score(Scalar y, Scalar lo, Scalar hi, Scalar eps = Scalar(kResidualEps)) {
  const Scalar w = std::max(std::abs(hi - lo), eps);
  return cqr_score(y, lo, hi) / w;
}

/// Weight applied to d at interval construction for the scalar variants.
template <typename Scalar>
Scalar interval_weight(ScoreVariant variant, Scalar lo, Scalar hi, Scalar r_hat,
                       Scalar eps = Scalar(kResidualEps)) {
  switch (variant) {
    case ScoreVariant::CP:
    case ScoreVariant::CQR: return Scalar(1);
    case ScoreVariant::RR: return std::max(std::abs(r_hat), eps);
    case ScoreVariant::CQR_RR: return std::max(std::abs(hi - lo), eps);
  }
  return Scalar(1);
}

template <typename Scalar>
Scalar score(ScoreVariant variant, Scalar y, Scalar mean, Scalar lo, Scalar hi, Scalar r_hat,
             Scalar eps = Scalar(kResidualEps)) {
  switch (variant) {
    case ScoreVariant::CP: return cp_score(y, mean);
    case ScoreVariant::CQR: return cqr_score(y, lo, hi);
    case ScoreVariant::RR: return rr_score(y, lo, hi, r_hat, eps);
    case ScoreVariant::CQR_RR: return cqr_rr_score(y, lo, hi, eps);
  }
  return Scalar(0);
}

/// Per-class v_k = max(|lo_k - y_k|, |y_k - hi_k|) / (|R_k| + eps), reduced
/// by max over classes.
template <typename Derived>
typename Derived::Scalar rr_score_node_class(const Eigen::MatrixBase<Derived>& onehot,
                                             const Eigen::MatrixBase<Derived>& lo,
                                             const Eigen::MatrixBase<Derived>& hi,
                                             const Eigen::MatrixBase<Derived>& r_hat,
                                             typename Derived::Scalar eps = kResidualEps) {
  using Scalar = typename Derived::Scalar;
  if (onehot.size() != lo.size() || onehot.size() != hi.size() || onehot.size() != r_hat.size())
    throw std::invalid_argument("rr_score_node_class: dimension mismatch");
  Scalar best = -std::numeric_limits<Scalar>::infinity();
  for (Eigen::Index k = 0; k < onehot.size(); ++k) {
    const Scalar num = std::max(std::abs(lo(k) - onehot(k)), std::abs(onehot(k) - hi(k)));
    best = std::max(best, num / (std::abs(r_hat(k)) + eps));
  }
  return best;
}

/// Classification score for any variant. `probs` are softmax(mean logits).
///   CP     -> 1 - p_y
///   CQR    -> per-class band distance, unit weights
///   RR     -> rr_score_node_class
///   CQR_RR -> per-class band distance over |hi_k - lo_k| + eps
template <typename Derived>
typename Derived::Scalar class_score(ScoreVariant variant, const Eigen::MatrixBase<Derived>& onehot,
                                     const Eigen::MatrixBase<Derived>& probs,
                                     const Eigen::MatrixBase<Derived>& lo,
                                     const Eigen::MatrixBase<Derived>& hi,
                                     const Eigen::MatrixBase<Derived>& r_hat,
                                     typename Derived::Scalar eps = kResidualEps) {
  using Scalar = typename Derived::Scalar;
  switch (variant) {
    case ScoreVariant::CP: return Scalar(1) - onehot.derived().cwiseProduct(probs.derived()).sum();
    case ScoreVariant::CQR: {
      Scalar best = -std::numeric_limits<Scalar>::infinity();
      for (Eigen::Index k = 0; k < onehot.size(); ++k)
        best = std::max(best, std::max(std::abs(lo(k) - onehot(k)), std::abs(onehot(k) - hi(k))));
      return best;
    }
    case ScoreVariant::RR: return rr_score_node_class(onehot, lo, hi, r_hat, eps);
    case ScoreVariant::CQR_RR: {
      Scalar best = -std::numeric_limits<Scalar>::infinity();
      for (Eigen::Index k = 0; k < onehot.size(); ++k) {
        const Scalar num = std::max(std::abs(lo(k) - onehot(k)), std::abs(onehot(k) - hi(k)));
        best = std::max(best, num / (std::abs(hi(k) - lo(k)) + eps));
      }
      return best;
    }
  }
  return Scalar(0);
}

struct ScoreEntry {
  Index target = 0;
  Index cluster = 0;
  double value = 0.0;
};

struct ScoreSet {
  std::vector<ScoreEntry> scores;
  double alpha = 0.1;
  ScoreVariant variant = ScoreVariant::RR;
};

/// Per-cluster calibration thresholds d_(m). Clusters whose k exceeds their
/// calibration count (or that have none) use the pooled threshold.
struct ClusterQuantiles {
  std::vector<double> d;
  std::vector<Index> k_used;   // 0 when the cluster fell back
  std::vector<Index> n_calib;
  std::vector<bool> fallback;
  double global = std::numeric_limits<double>::infinity();
  Index global_k = 0;

  double at(Index cluster) const { return d.at(static_cast<std::size_t>(cluster)); }
};

inline ClusterQuantiles calibrate(const ScoreSet& set, Index n_clusters, double alpha) {
  if (set.scores.empty()) throw std::invalid_argument("calibrate: empty score set");
  if (n_clusters < 1) throw std::invalid_argument("calibrate: need at least one cluster");
  std::vector<std::vector<double>> by_cluster(static_cast<std::size_t>(n_clusters));
  std::vector<double> pooled;
  pooled.reserve(set.scores.size());
  for (const auto& s : set.scores) {
    if (s.cluster < 0 || s.cluster >= n_clusters)
      throw std::out_of_range("calibrate: cluster id out of range");
    by_cluster[static_cast<std::size_t>(s.cluster)].push_back(s.value);
    pooled.push_back(s.value);
  }

  ClusterQuantiles q;
  const auto global = quantile_index(static_cast<Index>(pooled.size()), alpha);
  q.global_k = global.exceeds ? 0 : global.k;
  q.global = global.exceeds ? std::numeric_limits<double>::infinity()
                            : kth_smallest<double>(pooled, global.k);
  for (const auto& values : by_cluster) {
    const auto n = static_cast<Index>(values.size());
    q.n_calib.push_back(n);
    if (n == 0) {
      q.d.push_back(q.global);
      q.k_used.push_back(0);
      q.fallback.push_back(true);
      continue;
    }
    const auto idx = quantile_index(n, alpha);
    if (idx.exceeds) {
      q.d.push_back(q.global);
      q.k_used.push_back(0);
      q.fallback.push_back(true);
    } else {
      q.d.push_back(kth_smallest<double>(values, idx.k));
      q.k_used.push_back(idx.k);
      q.fallback.push_back(false);
    }
  }
  return q;
}

struct PredictionInterval {
  Index target = 0;
  double lower = 0.0;
  double upper = 0.0;
  bool empty = false;  // threshold below the smallest attainable score

  bool bounded() const { return std::isfinite(lower) && std::isfinite(upper); }
  double width() const { return empty ? 0.0 : upper - lower; }
  bool contains(double y) const { return !empty && lower <= y && y <= upper; }
};

struct PredictionSet {
  Index target = 0;
  std::vector<int> labels;
  bool contains(int label) const {
    return std::find(labels.begin(), labels.end(), label) != labels.end();
  }
};

/// Inverts the scalar score at threshold d. d = +inf gives (-inf, +inf).
inline PredictionInterval build_interval(ScoreVariant variant, double mean, double lo, double hi,
                                         double r_hat, double d, Index target = 0,
                                         double eps = kResidualEps) {
  PredictionInterval out;
  out.target = target;
  if (std::isinf(d) && d > 0) {
    out.lower = -std::numeric_limits<double>::infinity();
    out.upper = std::numeric_limits<double>::infinity();
    return out;
  }
  if (variant == ScoreVariant::CP) {
    out.lower = mean - d;
    out.upper = mean + d;
  } else {
    const double w = interval_weight(variant, lo, hi, r_hat, eps);
    out.lower = lo - d * w;
    out.upper = hi + d * w;
  }
  if (out.lower > out.upper) {
    const double mid = 0.5 * (out.lower + out.upper);
    out.lower = out.upper = mid;
    out.empty = true;
  }
  return out;
}

/// Candidate-label membership test: class j is kept iff the score of the
/// one-hot vector e_j is at most d.
template <typename Derived>
PredictionSet build_prediction_set(ScoreVariant variant, const Eigen::MatrixBase<Derived>& probs,
                                   const Eigen::MatrixBase<Derived>& lo,
                                   const Eigen::MatrixBase<Derived>& hi,
                                   const Eigen::MatrixBase<Derived>& r_hat, double d,
                                   Index target = 0, double eps = kResidualEps) {
  using Row = Eigen::Matrix<typename Derived::Scalar, 1, Eigen::Dynamic>;
  PredictionSet out;
  out.target = target;
  const Eigen::Index n_classes = probs.size();
  const Row p = probs, l = lo, h = hi, r = r_hat;
  for (Eigen::Index j = 0; j < n_classes; ++j) {
    Row candidate = Row::Zero(n_classes);
    candidate(j) = 1;
    if (class_score<Row>(variant, candidate, p, l, h, r, eps) <= d)
      out.labels.push_back(static_cast<int>(j));
  }
  return out;
}

}  // namespace rrgnn::conformal
