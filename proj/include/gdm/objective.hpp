#pragma once

// Global dimension of soft and hard partitions, and its analytic gradient.
//
// For a K x N membership matrix M, cluster k sees the data with column n
// scaled by M(k, n); its empirical dimension is d_k and the objective is
// GD(M) = ||(d_1, ..., d_K)||_p. The outlier variant prepends a row whose
// mass is charged alpha per unit instead of entering any dimension estimate.

#include <cmath>
#include <cstddef>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "gdm/dimension.hpp"
#include "gdm/error.hpp"
#include "gdm/partition.hpp"

namespace gdm {

struct ObjectiveParams {
  double eps = 0.35;
  double p = 15.0;
  double alpha = 0.01;  // outlier unit cost; outlier objective only

  double delta() const { return delta_of(eps); }

  void validate() const {
    detail::require(eps > 0.0 && eps < 1.0, ErrorKind::invalid_parameter, "eps must lie in (0, 1)");
    detail::require(p > 0.0, ErrorKind::invalid_parameter, "p must be positive");
    detail::require(alpha >= 0.0, ErrorKind::invalid_parameter, "alpha must be nonnegative");
  }
};

/// What to do when a cluster's (scaled) data is identically zero.
enum class DegeneratePolicy {
  raise,  // throw ErrorKind::degenerate_cluster
  zero,   // the cluster contributes dimension 0 and a zero gradient row
};

/// Column-stochastic soft assignment: every entry in [0, 1], every column
/// summing to one.
class MembershipMatrix {
 public:
  static constexpr double kTolerance = 1e-10;

  MembershipMatrix() = default;
  explicit MembershipMatrix(Eigen::MatrixXd values) : values_(std::move(values)) {
    detail::require(is_valid(values_), ErrorKind::invalid_parameter,
                    "membership columns must be probability vectors");
  }

  /// Indicator matrix of a hard partition; outliers go to `outlier_row` when
  /// given, otherwise the partition must not contain outliers.
  static MembershipMatrix indicator(const Partition& partition, std::optional<int> outlier_row = std::nullopt) {
    const int offset = outlier_row ? 1 : 0;
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(partition.clusters + offset, static_cast<Eigen::Index>(partition.size()));
    for (std::size_t n = 0; n < partition.size(); ++n) {
      const auto col = static_cast<Eigen::Index>(n);
      if (partition.is_outlier(n)) {
        detail::require(outlier_row.has_value(), ErrorKind::invalid_parameter,
                        "partition has outliers but no outlier row was requested");
        m(*outlier_row, col) = 1.0;
      } else {
        m(partition.labels[n] + offset, col) = 1.0;
      }
    }
    return MembershipMatrix(std::move(m));
  }

  static bool is_valid(const Eigen::Ref<const Eigen::MatrixXd>& m) {
    if (m.rows() == 0 || !m.allFinite()) return false;
    if ((m.array() < -kTolerance).any() || (m.array() > 1.0 + kTolerance).any()) return false;
    return ((m.colwise().sum().array() - 1.0).abs() <= kTolerance).all();
  }

  const Eigen::MatrixXd& values() const { return values_; }
  Eigen::Index clusters() const { return values_.rows(); }
  Eigen::Index points() const { return values_.cols(); }
  double operator()(Eigen::Index k, Eigen::Index n) const { return values_(k, n); }

 private:
  Eigen::MatrixXd values_;
};

/// Data columns scaled by row k of the membership weights.
inline Eigen::MatrixXd scaled_cluster_matrix(const Eigen::Ref<const Eigen::MatrixXd>& data,
                                             const Eigen::Ref<const Eigen::MatrixXd>& weights, Eigen::Index k) {
  detail::require(weights.cols() == data.cols(), ErrorKind::invalid_parameter,
                  "membership and data disagree on the number of points");
  detail::require(k >= 0 && k < weights.rows(), ErrorKind::invalid_parameter, "cluster index out of range");
  return data * weights.row(k).asDiagonal();
}

namespace detail {

// Scaled clusters whose largest singular value is at most this fraction of
// the data's Frobenius norm are treated as empty.
inline constexpr double kDegenerateRelative = 1e-14;
// Singular values are floored at this fraction of sigma_max when forming
// the negative powers in the gradient.
inline constexpr double kGradientFloor = 1e-8;

inline bool is_degenerate(double sigma_max, double data_scale) {
  return !(sigma_max > kDegenerateRelative * data_scale);
}

inline double data_scale(const Eigen::Ref<const Eigen::MatrixXd>& data) {
  const double norm = data.norm();
  return norm > 0.0 ? norm : 1.0;
}

struct ClusterDims {
  Eigen::VectorXd dims;
  std::vector<bool> degenerate;
};

inline ClusterDims soft_cluster_dims(const Eigen::Ref<const Eigen::MatrixXd>& data,
                                     const Eigen::Ref<const Eigen::MatrixXd>& weights, Eigen::Index first_row,
                                     const ObjectiveParams& params, DegeneratePolicy policy) {
  const double scale = data_scale(data);
  const Eigen::Index count = weights.rows() - first_row;
  ClusterDims out{Eigen::VectorXd::Zero(count), std::vector<bool>(static_cast<std::size_t>(count), false)};
  for (Eigen::Index k = 0; k < count; ++k) {
    const Eigen::VectorXd sigma = singular_values(scaled_cluster_matrix(data, weights, first_row + k));
    if (sigma.size() == 0 || is_degenerate(sigma.maxCoeff(), scale)) {
      require(policy == DegeneratePolicy::zero, ErrorKind::degenerate_cluster, "scaled cluster matrix is zero");
      out.degenerate[static_cast<std::size_t>(k)] = true;
      continue;
    }
    out.dims[k] = empirical_dimension(sigma, params.eps);
  }
  return out;
}

inline void check_shapes(const Eigen::Ref<const Eigen::MatrixXd>& data,
                         const Eigen::Ref<const Eigen::MatrixXd>& weights, Eigen::Index min_rows) {
  require(data.cols() > 0, ErrorKind::invalid_input, "data has no points");
  require(weights.cols() == data.cols(), ErrorKind::invalid_parameter,
          "membership and data disagree on the number of points");
  require(weights.rows() >= min_rows, ErrorKind::invalid_parameter, "membership has too few rows");
  require_finite(data);
  require(weights.allFinite(), ErrorKind::invalid_input, "membership has non-finite entries");
}

}  // namespace detail

/// Per-cluster empirical dimensions of a soft partition.
inline Eigen::VectorXd soft_cluster_dimensions(const Eigen::Ref<const Eigen::MatrixXd>& data,
                                               const Eigen::Ref<const Eigen::MatrixXd>& weights,
                                               const ObjectiveParams& params,
                                               DegeneratePolicy policy = DegeneratePolicy::raise) {
  params.validate();
  detail::check_shapes(data, weights, 1);
  return detail::soft_cluster_dims(data, weights, 0, params, policy).dims;
}

inline double global_dimension_soft(const Eigen::Ref<const Eigen::MatrixXd>& data,
                                    const Eigen::Ref<const Eigen::MatrixXd>& weights, const ObjectiveParams& params,
                                    DegeneratePolicy policy = DegeneratePolicy::raise) {
  return power_norm(soft_cluster_dimensions(data, weights, params, policy), params.p);
}

inline double global_dimension_soft(const Eigen::Ref<const Eigen::MatrixXd>& data, const MembershipMatrix& m,
                                    const ObjectiveParams& params,
                                    DegeneratePolicy policy = DegeneratePolicy::raise) {
  return global_dimension_soft(data, m.values(), params, policy);
}

/// Empirical dimensions of the (unscaled) clusters of a hard partition.
/// Outliers are ignored; an empty or all-zero cluster is degenerate.
inline Eigen::VectorXd hard_cluster_dimensions(const Eigen::Ref<const Eigen::MatrixXd>& data,
                                               const Partition& partition, const ObjectiveParams& params,
                                               DegeneratePolicy policy = DegeneratePolicy::raise) {
  params.validate();
  detail::require(partition.size() == static_cast<std::size_t>(data.cols()), ErrorKind::invalid_parameter,
                  "partition and data disagree on the number of points");
  detail::require_finite(data);
  const double scale = detail::data_scale(data);
  Eigen::VectorXd dims = Eigen::VectorXd::Zero(partition.clusters);
  for (int k = 0; k < partition.clusters; ++k) {
    const auto members = partition.members(k);
    Eigen::VectorXd sigma;
    if (!members.empty()) sigma = singular_values(gather_columns(data, members));
    if (sigma.size() == 0 || detail::is_degenerate(sigma.maxCoeff(), scale)) {
      detail::require(policy == DegeneratePolicy::zero, ErrorKind::degenerate_cluster, "cluster is empty or zero");
      continue;
    }
    dims[k] = empirical_dimension(sigma, params.eps);
  }
  return dims;
}

inline double global_dimension_hard(const Eigen::Ref<const Eigen::MatrixXd>& data, const Partition& partition,
                                    const ObjectiveParams& params,
                                    DegeneratePolicy policy = DegeneratePolicy::raise) {
  return power_norm(hard_cluster_dimensions(data, partition, params, policy), params.p);
}

/// Row 0 is the outlier group: alpha * sum(M(0, :)) + ||(d_1, ..., d_K)||_p.
inline double global_dimension_outlier(const Eigen::Ref<const Eigen::MatrixXd>& data,
                                       const Eigen::Ref<const Eigen::MatrixXd>& weights, const ObjectiveParams& params,
                                       DegeneratePolicy policy = DegeneratePolicy::raise) {
  params.validate();
  detail::check_shapes(data, weights, 2);
  const auto clusters = detail::soft_cluster_dims(data, weights, 1, params, policy);
  return params.alpha * weights.row(0).sum() + power_norm(clusters.dims, params.p);
}

struct ObjectiveEvaluation {
  double value = 0.0;
  Eigen::VectorXd dims;      // per cluster, excluding any outlier row
  Eigen::MatrixXd gradient;  // same shape as the membership
};

namespace detail {

// Fills gradient rows first_row.. for the dimension term. Returns the
// dimension p-norm.
inline double dimension_term_gradient(const Eigen::Ref<const Eigen::MatrixXd>& data,
                                      const Eigen::Ref<const Eigen::MatrixXd>& weights, Eigen::Index first_row,
                                      const ObjectiveParams& params, DegeneratePolicy policy,
                                      Eigen::VectorXd& dims, Eigen::MatrixXd& gradient) {
  const double scale = data_scale(data);
  const double eps = params.eps;
  const double delta = params.delta();
  const Eigen::Index count = weights.rows() - first_row;

  std::vector<SingularSpectrum> spectra(static_cast<std::size_t>(count));
  std::vector<bool> degenerate(static_cast<std::size_t>(count), false);
  dims = Eigen::VectorXd::Zero(count);
  for (Eigen::Index k = 0; k < count; ++k) {
    auto& spectrum = spectra[static_cast<std::size_t>(k)];
    spectrum = thin_svd(scaled_cluster_matrix(data, weights, first_row + k));
    if (spectrum.sigma.size() == 0 || is_degenerate(spectrum.sigma[0], scale)) {
      require(policy == DegeneratePolicy::zero, ErrorKind::degenerate_cluster, "scaled cluster matrix is zero");
      degenerate[static_cast<std::size_t>(k)] = true;
      continue;
    }
    dims[k] = empirical_dimension(spectrum.sigma, eps);
  }

  const double total = power_norm(dims, params.p);
  for (Eigen::Index k = 0; k < count; ++k) {
    auto row = gradient.row(first_row + k);
    if (degenerate[static_cast<std::size_t>(k)]) {
      row.setZero();
      continue;
    }
    const auto& spectrum = spectra[static_cast<std::size_t>(k)];
    // Work with s = sigma / sigma_max; every factor below is homogeneous, and
    // d(d_eps)/d(sigma_j) = (1 / sigma_max) * d(d_eps)/d(s_j).
    const double top = spectrum.sigma[0];
    const Eigen::VectorXd s =
        (spectrum.sigma / top).unaryExpr([](double x) { return x > kRankTolerance ? x : 0.0; });
    const double norm_eps = power_norm(s, eps);
    const double norm_delta = power_norm(s, delta);
    const double c1 = std::pow(norm_eps, 1.0 - eps) * norm_delta / (norm_delta * norm_delta);
    const double c2 = norm_eps * std::pow(norm_delta, 1.0 - delta) / (norm_delta * norm_delta);
    Eigen::VectorXd diag(s.size());
    for (Eigen::Index j = 0; j < s.size(); ++j) {
      const double sj = std::max(s[j], kGradientFloor);
      diag[j] = (c1 * std::pow(sj, eps - 1.0) - c2 * std::pow(sj, delta - 1.0)) / top;
    }
    // d GD / d d_k = d_k^(p-1) * GD^(1-p), written as a ratio so large p is safe.
    const double chain = std::pow(dims[k] / total, params.p - 1.0);
    const Eigen::MatrixXd projected = diag.asDiagonal() * (spectrum.U.transpose() * data);  // r x N
    row = chain * (spectrum.V.array() * projected.transpose().array()).rowwise().sum().transpose();
  }
  return total;
}

}  // namespace detail

/// GD and its gradient with respect to every membership entry.
inline ObjectiveEvaluation evaluate_with_gradient(const Eigen::Ref<const Eigen::MatrixXd>& data,
                                                  const Eigen::Ref<const Eigen::MatrixXd>& weights,
                                                  const ObjectiveParams& params,
                                                  DegeneratePolicy policy = DegeneratePolicy::raise) {
  params.validate();
  detail::check_shapes(data, weights, 1);
  ObjectiveEvaluation out;
  out.gradient = Eigen::MatrixXd::Zero(weights.rows(), weights.cols());
  out.value = detail::dimension_term_gradient(data, weights, 0, params, policy, out.dims, out.gradient);
  return out;
}

/// Outlier variant: row 0 of the gradient is alpha * M(0, :) and rows 1..K
/// follow the plain gradient restricted to the true clusters.
inline ObjectiveEvaluation evaluate_outlier_with_gradient(const Eigen::Ref<const Eigen::MatrixXd>& data,
                                                          const Eigen::Ref<const Eigen::MatrixXd>& weights,
                                                          const ObjectiveParams& params,
                                                          DegeneratePolicy policy = DegeneratePolicy::raise) {
  params.validate();
  detail::check_shapes(data, weights, 2);
  ObjectiveEvaluation out;
  out.gradient = Eigen::MatrixXd::Zero(weights.rows(), weights.cols());
  const double dimension_term =
      detail::dimension_term_gradient(data, weights, 1, params, policy, out.dims, out.gradient);
  out.gradient.row(0) = params.alpha * weights.row(0);
  out.value = params.alpha * weights.row(0).sum() + dimension_term;
  return out;
}

inline Eigen::MatrixXd gd_gradient(const Eigen::Ref<const Eigen::MatrixXd>& data,
                                   const Eigen::Ref<const Eigen::MatrixXd>& weights, const ObjectiveParams& params,
                                   DegeneratePolicy policy = DegeneratePolicy::raise) {
  return evaluate_with_gradient(data, weights, params, policy).gradient;
}

inline Eigen::MatrixXd gd_gradient_outlier(const Eigen::Ref<const Eigen::MatrixXd>& data,
                                           const Eigen::Ref<const Eigen::MatrixXd>& weights,
                                           const ObjectiveParams& params,
                                           DegeneratePolicy policy = DegeneratePolicy::raise) {
  return evaluate_outlier_with_gradient(data, weights, params, policy).gradient;
}

}  // namespace gdm
