#pragma once

// Outlier detection and rejection built on the outlier-augmented objective.
//
// Membership matrices here have K + 1 rows; row 0 is the outlier group whose
// mass is charged alpha per unit and is excluded from every dimension
// estimate. Three pipelines sit on top of the soft optimum:
//
//   naive           threshold the (K + 1)-row membership directly
//   known_fraction  reject the points with the most outlier mass, then
//                   re-segment the survivors with plain GDM
//   model_reassign  fit a subspace per known_fraction cluster and reassign
//                   every point to its nearest subspace, rejecting points
//                   at distance kappa or more from all of them

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "gdm/dimension.hpp"
#include "gdm/error.hpp"
#include "gdm/objective.hpp"
#include "gdm/optimizer.hpp"
#include "gdm/partition.hpp"

namespace gdm {

enum class OutlierMode { none, naive, known_fraction, model_reassign };

inline std::string_view to_string(OutlierMode mode) {
  switch (mode) {
    case OutlierMode::none: return "none";
    case OutlierMode::naive: return "naive";
    case OutlierMode::known_fraction: return "known-fraction";
    case OutlierMode::model_reassign: return "model-reassign";
  }
  return "none";
}

struct OutlierConfig {
  OutlierMode mode = OutlierMode::none;
  double alpha = 0.01;
  double fraction = 0.20;
  double kappa = 0.05;
  // Per-cluster threshold mean + r * stddev of the cluster's fit residuals
  // instead of the global kappa.
  bool adaptive_kappa = false;
  double adaptive_r = 3.0;
  // Outlier-row mass given to every point when seeding the descent.
  double initial_outlier_mass = 0.05;

  void validate() const {
    detail::require(alpha >= 0.0, ErrorKind::invalid_parameter, "alpha must be nonnegative");
    detail::require(fraction > 0.0 && fraction < 1.0, ErrorKind::invalid_parameter, "fraction must lie in (0, 1)");
    detail::require(kappa >= 0.0, ErrorKind::invalid_parameter, "kappa must be nonnegative");
    detail::require(adaptive_r > 0.0, ErrorKind::invalid_parameter, "adaptive r must be positive");
    detail::require(initial_outlier_mass >= 0.0 && initial_outlier_mass < 1.0, ErrorKind::invalid_parameter,
                    "initial outlier mass must lie in [0, 1)");
  }
};

struct RobustResult {
  SegmentationResult segmentation;  // partition carries Partition::kOutlier labels
  // Per point: outlier-row mass (naive, known_fraction) or distance to the
  // nearest fitted subspace (model_reassign).
  Eigen::VectorXd outlier_scores;
};

struct OutlierCoreResult {
  MembershipMatrix membership;  // (K + 1) x N, row 0 = outliers
  double value = 0.0;
  int best_restart = 0;
  std::vector<double> trace;
};

namespace detail {

inline Eigen::MatrixXd seed_outlier_membership(const Partition& init, double outlier_mass) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(init.clusters + 1, static_cast<Eigen::Index>(init.size()));
  for (std::size_t n = 0; n < init.size(); ++n) {
    const auto col = static_cast<Eigen::Index>(n);
    m(0, col) = outlier_mass;
    m(init.labels[n] + 1, col) = 1.0 - outlier_mass;
  }
  return m;
}

// Survivor segmentation runs on a stream family disjoint from the core's.
inline GdmConfig survivor_config(const GdmConfig& cfg) {
  GdmConfig out = cfg;
  out.seed = cfg.seed ^ 0x5bd1e9955bd1e995ull;
  return out;
}

}  // namespace detail

/// Merge initialization plus projected descent on the outlier objective,
/// best of cfg.restarts by final objective value.
inline OutlierCoreResult gdm_outlier_core_run(const Eigen::Ref<const Eigen::MatrixXd>& data, const GdmConfig& cfg,
                                              const OutlierConfig& outliers) {
  cfg.validate();
  outliers.validate();
  detail::require_finite(data);
  detail::require(data.cols() > cfg.clusters, ErrorKind::invalid_parameter, "need more points than clusters");
  detail::require(cfg.restarts >= 1, ErrorKind::invalid_parameter, "need at least one restart");
  const Eigen::MatrixXd owned = data;
  const ObjectiveParams params = cfg.objective(outliers.alpha);

  auto restart = [&](int r) {
    Rng rng = make_stream(cfg.seed, static_cast<std::uint64_t>(r));
    const Partition init = greedy_merge_init(owned, cfg, rng);
    ObjectiveFn objective = [&](const Eigen::MatrixXd& m) {
      return evaluate_outlier_with_gradient(owned, m, params, DegeneratePolicy::zero);
    };
    OutlierCoreResult out;
    const Eigen::MatrixXd m = descend_with(detail::seed_outlier_membership(init, outliers.initial_outlier_mass),
                                           cfg.grad_iters, cfg.step, objective, &out.trace);
    out.value = global_dimension_outlier(owned, m, params, DegeneratePolicy::zero);
    out.membership = MembershipMatrix(m);
    out.best_restart = r;
    return out;
  };

  std::vector<std::exception_ptr> errors;
  auto outcomes = detail::run_indexed<OutlierCoreResult>(cfg.restarts, cfg.threads, restart, errors);
  std::optional<std::size_t> best;
  for (std::size_t r = 0; r < outcomes.size(); ++r) {
    if (outcomes[r] && (!best || outcomes[r]->value < outcomes[*best]->value)) best = r;
  }
  if (!best) std::rethrow_exception(errors.front());
  return std::move(*outcomes[*best]);
}

inline MembershipMatrix gdm_outlier_core(const Eigen::Ref<const Eigen::MatrixXd>& data, const GdmConfig& cfg,
                                         double alpha) {
  OutlierConfig outliers;
  outliers.alpha = alpha;
  return gdm_outlier_core_run(data, cfg, outliers).membership;
}

/// Point indices sorted by decreasing score; equal scores keep index order.
inline std::vector<std::size_t> rank_descending(const Eigen::Ref<const Eigen::VectorXd>& scores) {
  std::vector<std::size_t> order(static_cast<std::size_t>(scores.size()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[static_cast<Eigen::Index>(a)] > scores[static_cast<Eigen::Index>(b)];
  });
  return order;
}

/// Number of points rejected for a given fraction: ceil(fraction * N).
inline std::size_t rejection_count(double fraction, std::size_t points) {
  const double raw = fraction * static_cast<double>(points);
  const auto rounded = std::llround(raw);
  // Guard against fraction * N landing a hair above an integer.
  if (std::abs(raw - static_cast<double>(rounded)) < 1e-9) return static_cast<std::size_t>(rounded);
  return static_cast<std::size_t>(std::ceil(raw));
}

/// GDM-Naive: argmax over the (K + 1)-row membership; row 0 means outlier.
inline RobustResult gdm_naive(const Eigen::Ref<const Eigen::MatrixXd>& data, const GdmConfig& cfg,
                              const OutlierConfig& outliers) {
  const OutlierCoreResult core = gdm_outlier_core_run(data, cfg, outliers);
  const Partition raw = threshold(core.membership);
  std::vector<int> labels(raw.labels.size());
  for (std::size_t n = 0; n < labels.size(); ++n) labels[n] = raw.labels[n] == 0 ? Partition::kOutlier : raw.labels[n] - 1;

  RobustResult out;
  auto& seg = out.segmentation;
  seg.partition = Partition(std::move(labels), cfg.clusters);
  seg.per_cluster_dims = hard_cluster_dimensions(data, seg.partition, cfg.objective(), DegeneratePolicy::zero);
  seg.gd_value = power_norm(seg.per_cluster_dims, cfg.p);
  seg.membership = core.membership;
  seg.restarts_run = cfg.restarts;
  seg.best_restart = core.best_restart;
  seg.trace = core.trace;
  out.outlier_scores = core.membership.values().row(0).transpose();
  return out;
}

/// GDM Known-Fraction: reject the ceil(fraction * N) points with the most
/// outlier mass and segment the rest with plain GDM (cold start).
inline RobustResult known_fraction(const Eigen::Ref<const Eigen::MatrixXd>& data, const GdmConfig& cfg,
                                   const OutlierConfig& outliers) {
  outliers.validate();
  const auto points = static_cast<std::size_t>(data.cols());
  const std::size_t rejected = rejection_count(outliers.fraction, points);
  detail::require(points > rejected && points - rejected > static_cast<std::size_t>(cfg.clusters),
                  ErrorKind::insufficient_inliers, "too few points survive the rejection");

  const OutlierCoreResult core = gdm_outlier_core_run(data, cfg, outliers);
  const Eigen::VectorXd mass = core.membership.values().row(0).transpose();
  const auto order = rank_descending(mass);

  std::vector<bool> is_rejected(points, false);
  for (std::size_t i = 0; i < rejected; ++i) is_rejected[order[i]] = true;
  std::vector<std::size_t> survivors;
  for (std::size_t n = 0; n < points; ++n)
    if (!is_rejected[n]) survivors.push_back(n);

  SegmentationResult inner = minimize_global_dimension(gather_columns(data, survivors), detail::survivor_config(cfg));
  std::vector<int> labels(points, Partition::kOutlier);
  for (std::size_t i = 0; i < survivors.size(); ++i) labels[survivors[i]] = inner.partition.labels[i];

  RobustResult out;
  out.segmentation = std::move(inner);
  out.segmentation.partition = Partition(std::move(labels), cfg.clusters);
  out.segmentation.membership = core.membership;
  out.outlier_scores = mass;
  return out;
}

inline RobustResult known_fraction(const Eigen::Ref<const Eigen::MatrixXd>& data, const GdmConfig& cfg,
                                   double fraction) {
  OutlierConfig outliers;
  outliers.mode = OutlierMode::known_fraction;
  outliers.fraction = fraction;
  return known_fraction(data, cfg, outliers);
}

struct FittedSubspace {
  Eigen::MatrixXd basis;  // D x dim, orthonormal columns
  int dim = 0;
};

/// Round-half-up of the empirical dimension, clamped to [1, min(D, N_k)];
/// the basis is the leading left singular vectors.
inline FittedSubspace fit_cluster_subspace(const Eigen::Ref<const Eigen::MatrixXd>& points, double eps) {
  detail::require(points.cols() > 0, ErrorKind::degenerate_cluster, "cannot fit a subspace to an empty cluster");
  const SingularSpectrum spectrum = thin_svd(points);
  detail::require(spectrum.sigma.size() > 0 && spectrum.sigma[0] > 0.0, ErrorKind::degenerate_cluster,
                  "cannot fit a subspace to a zero cluster");
  const double estimate = empirical_dimension(spectrum.sigma, eps);
  const auto cap = static_cast<int>(std::min(points.rows(), points.cols()));
  FittedSubspace out;
  out.dim = std::clamp(static_cast<int>(std::floor(estimate + 0.5)), 1, cap);
  out.basis = spectrum.U.leftCols(out.dim);
  return out;
}

inline double point_subspace_distance(const Eigen::Ref<const Eigen::VectorXd>& v, const FittedSubspace& s) {
  detail::require(v.size() == s.basis.rows(), ErrorKind::invalid_parameter, "vector and subspace dimension differ");
  return (v - s.basis * (s.basis.transpose() * v)).norm();
}

/// Everything model_reassign computes before a threshold is applied, so
/// several thresholds can share one optimization.
struct SubspaceFit {
  RobustResult known_fraction;
  std::vector<FittedSubspace> subspaces;
  Eigen::MatrixXd distances;      // K x N
  std::vector<int> nearest;       // per point, ties to the lowest index
  Eigen::VectorXd min_distance;   // per point
  Eigen::VectorXd residual_mean;  // per cluster, over its known-fraction inliers
  Eigen::VectorXd residual_std;
};

inline SubspaceFit fit_model_reassign(const Eigen::Ref<const Eigen::MatrixXd>& data, const GdmConfig& cfg,
                                      const OutlierConfig& outliers) {
  SubspaceFit fit;
  fit.known_fraction = known_fraction(data, cfg, outliers);
  const Partition& part = fit.known_fraction.segmentation.partition;
  const auto points = static_cast<std::size_t>(data.cols());
  const auto k_count = static_cast<std::size_t>(cfg.clusters);

  for (int k = 0; k < cfg.clusters; ++k) {
    const auto members = part.members(k);
    detail::require(!members.empty(), ErrorKind::degenerate_cluster, "known-fraction produced an empty cluster");
    fit.subspaces.push_back(fit_cluster_subspace(gather_columns(data, members), cfg.eps));
  }

  fit.distances.resize(cfg.clusters, data.cols());
  fit.nearest.assign(points, 0);
  fit.min_distance.resize(data.cols());
  for (std::size_t n = 0; n < points; ++n) {
    const auto col = static_cast<Eigen::Index>(n);
    for (std::size_t k = 0; k < k_count; ++k) {
      fit.distances(static_cast<Eigen::Index>(k), col) = point_subspace_distance(data.col(col), fit.subspaces[k]);
    }
    Eigen::Index best = 0;
    fit.min_distance[col] = fit.distances.col(col).minCoeff(&best);
    fit.nearest[n] = static_cast<int>(best);
  }

  fit.residual_mean = Eigen::VectorXd::Zero(cfg.clusters);
  fit.residual_std = Eigen::VectorXd::Zero(cfg.clusters);
  for (int k = 0; k < cfg.clusters; ++k) {
    const auto members = part.members(k);
    Eigen::VectorXd r(static_cast<Eigen::Index>(members.size()));
    for (std::size_t i = 0; i < members.size(); ++i)
      r[static_cast<Eigen::Index>(i)] = fit.distances(k, static_cast<Eigen::Index>(members[i]));
    fit.residual_mean[k] = r.mean();
    fit.residual_std[k] = std::sqrt((r.array() - r.mean()).square().mean());
  }
  return fit;
}

/// Labels every point with its nearest subspace; a point is an outlier when
/// its distance to every subspace is at least that subspace's threshold.
inline Partition apply_reassign_threshold(const SubspaceFit& fit, const OutlierConfig& outliers) {
  const auto k_count = fit.distances.rows();
  std::vector<int> labels(fit.nearest);
  for (std::size_t n = 0; n < labels.size(); ++n) {
    const auto col = static_cast<Eigen::Index>(n);
    bool inlier = false;
    for (Eigen::Index k = 0; k < k_count && !inlier; ++k) {
      const double limit = outliers.adaptive_kappa
                               ? fit.residual_mean[k] + outliers.adaptive_r * fit.residual_std[k]
                               : outliers.kappa;
      inlier = fit.distances(k, col) < limit;
    }
    if (!inlier) labels[n] = Partition::kOutlier;
  }
  return Partition(std::move(labels), static_cast<int>(k_count));
}

/// GDM Model-Reassign.
inline RobustResult model_reassign(const Eigen::Ref<const Eigen::MatrixXd>& data, const GdmConfig& cfg,
                                   const OutlierConfig& outliers) {
  const SubspaceFit fit = fit_model_reassign(data, cfg, outliers);
  RobustResult out;
  out.segmentation = fit.known_fraction.segmentation;
  out.segmentation.partition = apply_reassign_threshold(fit, outliers);
  out.segmentation.per_cluster_dims =
      hard_cluster_dimensions(data, out.segmentation.partition, cfg.objective(), DegeneratePolicy::zero);
  out.segmentation.gd_value = power_norm(out.segmentation.per_cluster_dims, cfg.p);
  out.outlier_scores = fit.min_distance;
  return out;
}

inline RobustResult model_reassign(const Eigen::Ref<const Eigen::MatrixXd>& data, const GdmConfig& cfg,
                                   double kappa) {
  OutlierConfig outliers;
  outliers.mode = OutlierMode::model_reassign;
  outliers.kappa = kappa;
  return model_reassign(data, cfg, outliers);
}

/// Dispatch on outliers.mode; `none` runs plain GDM.
inline RobustResult segment(const Eigen::Ref<const Eigen::MatrixXd>& data, const GdmConfig& cfg,
                            const OutlierConfig& outliers) {
  switch (outliers.mode) {
    case OutlierMode::naive: return gdm_naive(data, cfg, outliers);
    case OutlierMode::known_fraction: return known_fraction(data, cfg, outliers);
    case OutlierMode::model_reassign: return model_reassign(data, cfg, outliers);
    case OutlierMode::none: break;
  }
  RobustResult out;
  out.segmentation = minimize_global_dimension(data, cfg);
  out.outlier_scores = Eigen::VectorXd::Zero(data.cols());
  return out;
}

struct DetectionRates {
  double tpr = 0.0;  // percent of true outliers flagged
  double fpr = 0.0;  // percent of true inliers flagged
};

inline DetectionRates tpr_fpr(const std::vector<std::size_t>& predicted, const std::vector<std::size_t>& truth,
                              std::size_t points) {
  std::vector<bool> flagged(points, false), outlier(points, false);
  for (std::size_t n : predicted) {
    detail::require(n < points, ErrorKind::invalid_parameter, "predicted index out of range");
    flagged[n] = true;
  }
  for (std::size_t n : truth) {
    detail::require(n < points, ErrorKind::invalid_parameter, "true index out of range");
    outlier[n] = true;
  }
  std::size_t true_count = 0, hits = 0, false_alarms = 0;
  for (std::size_t n = 0; n < points; ++n) {
    if (outlier[n]) {
      ++true_count;
      if (flagged[n]) ++hits;
    } else if (flagged[n]) {
      ++false_alarms;
    }
  }
  const std::size_t inliers = points - true_count;
  DetectionRates rates;
  if (true_count > 0) rates.tpr = 100.0 * static_cast<double>(hits) / static_cast<double>(true_count);
  if (inliers > 0) rates.fpr = 100.0 * static_cast<double>(false_alarms) / static_cast<double>(inliers);
  return rates;
}

}  // namespace gdm
