#pragma once

// Singular spectra and the empirical dimension estimator
//
//     d_eps(A) = ||sigma||_eps / ||sigma||_delta,   delta = eps / (1 - eps),
//
// where sigma are the singular values of the data matrix A and ||.||_q is the
// (quasi-)norm (sum sigma_j^q)^(1/q). The estimator is invariant to scaling
// and rotation of the data, never exceeds the dimension of a subspace that
// contains the data, and converges to it for isotropic samples.

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "gdm/error.hpp"

namespace gdm {

struct SingularSpectrum {
  Eigen::VectorXd sigma;  // nonincreasing, length min(D, N)
  Eigen::MatrixXd U;      // D x r
  Eigen::MatrixXd V;      // N x r
};

/// Singular values at or below this fraction of sigma_max count as zero, both
/// for rank and inside the empirical dimension.
inline constexpr double kRankTolerance = 1e-12;

namespace detail {

inline void require_finite(const Eigen::Ref<const Eigen::MatrixXd>& a) {
  require(a.allFinite(), ErrorKind::invalid_input, "matrix has non-finite entries");
}

}  // namespace detail

inline SingularSpectrum thin_svd(const Eigen::Ref<const Eigen::MatrixXd>& a) {
  detail::require_finite(a);
  SingularSpectrum out;
  if (a.rows() == 0 || a.cols() == 0) return out;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
  out.sigma = svd.singularValues();
  out.U = svd.matrixU();
  out.V = svd.matrixV();
  return out;
}

/// Singular values only; cheaper than thin_svd when no vectors are needed.
inline Eigen::VectorXd singular_values(const Eigen::Ref<const Eigen::MatrixXd>& a) {
  detail::require_finite(a);
  if (a.rows() == 0 || a.cols() == 0) return {};
  // JacobiSVD QR-preconditions the tall side, so cost is linear in the
  // larger dimension.
  return Eigen::JacobiSVD<Eigen::MatrixXd>(a).singularValues();
}

inline int numerical_rank(const Eigen::Ref<const Eigen::VectorXd>& sigma,
                          double tolerance = kRankTolerance) {
  if (sigma.size() == 0) return 0;
  const double top = sigma.maxCoeff();
  if (top <= 0.0) return 0;
  return static_cast<int>((sigma.array() > tolerance * top).count());
}

/// eps / (1 - eps); +infinity at eps = 1.
inline double delta_of(double eps) {
  if (eps >= 1.0) return std::numeric_limits<double>::infinity();
  return eps / (1.0 - eps);
}

namespace detail {

// ||x||_q for nonnegative x with max(x) == 1 already factored out.
inline double unit_power_sum_norm(const Eigen::Ref<const Eigen::VectorXd>& scaled, double q) {
  if (std::isinf(q)) return 1.0;
  double sum = 0.0;
  for (Eigen::Index i = 0; i < scaled.size(); ++i) {
    if (scaled[i] > 0.0) sum += std::pow(scaled[i], q);
  }
  return std::pow(sum, 1.0 / q);
}

}  // namespace detail

/// (sum x_i^q)^(1/q) for a nonnegative vector, computed with the maximum
/// factored out so large q does not overflow.
inline double power_norm(const Eigen::Ref<const Eigen::VectorXd>& x, double q) {
  if (x.size() == 0) return 0.0;
  const double top = x.maxCoeff();
  if (top <= 0.0) return 0.0;
  if (std::isinf(q)) return top;
  // Summing in sorted order makes the result independent of entry order.
  Eigen::VectorXd sorted = x / top;
  std::sort(sorted.begin(), sorted.end());
  return top * detail::unit_power_sum_norm(sorted, q);
}

inline double empirical_dimension(const Eigen::Ref<const Eigen::VectorXd>& sigma, double eps) {
  detail::require(eps > 0.0 && eps <= 1.0, ErrorKind::invalid_parameter, "eps must lie in (0, 1]");
  detail::require(sigma.size() > 0 && (sigma.array() >= 0.0).all() && sigma.allFinite(),
                  ErrorKind::invalid_input, "singular values must be finite and nonnegative");
  const double top = sigma.maxCoeff();
  detail::require(top > 0.0, ErrorKind::degenerate_spectrum, "all singular values are zero");
  // Values at the rounding floor of the SVD are noise; raised to a small
  // power they would otherwise push the estimate above the true rank.
  const Eigen::VectorXd scaled = (sigma / top).unaryExpr([](double s) { return s > kRankTolerance ? s : 0.0; });
  return detail::unit_power_sum_norm(scaled, eps) / detail::unit_power_sum_norm(scaled, delta_of(eps));
}

/// Empirical dimension of the columns of a D x N matrix.
inline double empirical_dimension_of(const Eigen::Ref<const Eigen::MatrixXd>& a, double eps) {
  return empirical_dimension(singular_values(a), eps);
}

/// Smallest p above which the natural partition of K equal-dimension (d)
/// subspaces uniquely minimizes rank-based global dimension.
inline double p_lower_bound(int clusters, int dim) {
  detail::require(clusters >= 2, ErrorKind::invalid_parameter, "K must be at least 2");
  detail::require(dim >= 1, ErrorKind::invalid_parameter, "d must be at least 1");
  return std::log(static_cast<double>(clusters)) / std::log1p(1.0 / static_cast<double>(dim));
}

}  // namespace gdm
