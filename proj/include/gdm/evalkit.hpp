#pragma once

// Synthetic data generators, segmentation metrics and the ROC sweep.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "gdm/embedding.hpp"
#include "gdm/error.hpp"
#include "gdm/optimizer.hpp"
#include "gdm/partition.hpp"
#include "gdm/robust.hpp"

namespace gdm {

struct SyntheticSpec {
  int ambient = 9;
  std::vector<int> dims;                // per cluster
  std::vector<int> points_per_cluster;  // per cluster
  double noise_sigma = 0.0;
  int outlier_count = 0;
  double outlier_radius = 1.0;
  std::uint64_t seed = 0;

  void validate() const {
    detail::require(ambient >= 1, ErrorKind::invalid_parameter, "ambient dimension must be positive");
    detail::require(!dims.empty() && dims.size() == points_per_cluster.size(), ErrorKind::invalid_parameter,
                    "dims and points_per_cluster must be nonempty and the same length");
    for (std::size_t k = 0; k < dims.size(); ++k) {
      detail::require(dims[k] >= 1 && dims[k] < ambient, ErrorKind::invalid_parameter,
                      "subspace dimension must lie in [1, ambient)");
      detail::require(points_per_cluster[k] >= dims[k] + 1, ErrorKind::invalid_parameter,
                      "each cluster needs more points than its dimension");
    }
    detail::require(noise_sigma >= 0.0 && outlier_count >= 0 && outlier_radius > 0.0, ErrorKind::invalid_parameter,
                    "noise, outlier count and radius must be nonnegative");
  }
};

struct LabeledData {
  DataMatrix data;
  Partition truth;  // outliers carry Partition::kOutlier
};

/// Haar-distributed D x d orthonormal basis.
inline Eigen::MatrixXd random_orthonormal(int ambient, int dim, Rng& rng) {
  std::normal_distribution<double> gauss;
  Eigen::MatrixXd g(ambient, dim);
  for (Eigen::Index j = 0; j < g.cols(); ++j)
    for (Eigen::Index i = 0; i < g.rows(); ++i) g(i, j) = gauss(rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(ambient, dim);
  // Fix column signs so the result is Haar rather than QR-convention biased.
  const Eigen::MatrixXd r = qr.matrixQR().topRows(dim).triangularView<Eigen::Upper>();
  for (int j = 0; j < dim; ++j)
    if (r(j, j) < 0.0) q.col(j) *= -1.0;
  return q;
}

/// Uniform sample from the ball of the given radius in R^D.
inline Eigen::VectorXd uniform_ball(int ambient, double radius, Rng& rng) {
  std::normal_distribution<double> gauss;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Eigen::VectorXd v(ambient);
  do {
    for (int i = 0; i < ambient; ++i) v[i] = gauss(rng);
  } while (v.norm() == 0.0);
  return v.normalized() * radius * std::pow(unit(rng), 1.0 / ambient);
}

/// Isotropic Gaussian samples on random linear subspaces plus ambient noise,
/// followed by uniform-ball outliers.
inline LabeledData sample_subspace_mixture(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng = make_stream(spec.seed, 0x5a5a);
  std::normal_distribution<double> gauss;
  const int total_inliers = std::accumulate(spec.points_per_cluster.begin(), spec.points_per_cluster.end(), 0);
  const int total = total_inliers + spec.outlier_count;

  LabeledData out;
  out.data.resize(spec.ambient, total);
  std::vector<int> labels;
  labels.reserve(static_cast<std::size_t>(total));
  Eigen::Index col = 0;
  for (std::size_t k = 0; k < spec.dims.size(); ++k) {
    const Eigen::MatrixXd basis = random_orthonormal(spec.ambient, spec.dims[k], rng);
    for (int i = 0; i < spec.points_per_cluster[k]; ++i, ++col) {
      Eigen::VectorXd coeff(spec.dims[k]);
      for (auto& c : coeff) c = gauss(rng);
      Eigen::VectorXd v = basis * coeff;
      if (spec.noise_sigma > 0.0)
        for (auto& x : v) x += spec.noise_sigma * gauss(rng);
      out.data.col(col) = v;
      labels.push_back(static_cast<int>(k));
    }
  }
  for (int i = 0; i < spec.outlier_count; ++i, ++col) {
    out.data.col(col) = uniform_ball(spec.ambient, spec.outlier_radius, rng);
    labels.push_back(Partition::kOutlier);
  }
  out.truth = Partition(std::move(labels), static_cast<int>(spec.dims.size()));
  return out;
}

struct TwoViewSceneSpec {
  std::vector<int> points_per_body{40, 40};
  double depth_min = 4.0;     // body centre depth range in view 1
  double depth_max = 6.0;
  double lateral = 1.0;       // body centre |x|, |y| bound in view 1
  double body_extent = 1.5;   // half-width of each body's point cloud
  double max_rotation_deg = 30.0;
  double max_translation = 1.0;
  double focal = 1.0;
  double image_noise = 0.0;   // Gaussian, in image units
  bool coplanar = false;      // every body's points on one plane
  int outlier_count = 0;      // random correspondences, uniform over the inlier image extent
  std::uint64_t seed = 0;
};

struct RigidMotion {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
};

struct TwoViewScene {
  std::vector<PointCorrespondence> correspondences;
  Partition truth;
  std::vector<RigidMotion> motions;  // per body, view 1 -> view 2 in camera coordinates
  double focal = 1.0;
};

inline Eigen::Matrix3d skew(const Eigen::Vector3d& t) {
  Eigen::Matrix3d s;
  s << 0.0, -t.z(), t.y(), t.z(), 0.0, -t.x(), -t.y(), t.x(), 0.0;
  return s;
}

/// Fundamental matrix of a rigid motion for the pinhole camera diag(f, f, 1)
/// in both views: x2_h' F x_h = 0.
inline Eigen::Matrix3d fundamental_matrix(const RigidMotion& motion, double focal) {
  const Eigen::Matrix3d k_inv = Eigen::Vector3d(1.0 / focal, 1.0 / focal, 1.0).asDiagonal();
  return k_inv.transpose() * skew(motion.translation) * motion.rotation * k_inv;
}

/// vec(F) in the row-major order matching the Kronecker embedding.
inline Eigen::Matrix<double, 9, 1> vectorize_rows(const Eigen::Matrix3d& f) {
  Eigen::Matrix<double, 9, 1> v;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) v[3 * i + j] = f(i, j);
  return v;
}

namespace detail {

inline Eigen::Matrix3d random_rotation(double max_angle_rad, Rng& rng) {
  std::normal_distribution<double> gauss;
  std::uniform_real_distribution<double> angle(0.25 * max_angle_rad, max_angle_rad);
  Eigen::Vector3d axis(gauss(rng), gauss(rng), gauss(rng));
  if (axis.norm() == 0.0) axis = Eigen::Vector3d::UnitZ();
  return Eigen::AngleAxisd(angle(rng), axis.normalized()).toRotationMatrix();
}

}  // namespace detail

/// Random rigid bodies seen by a pinhole camera before and after each body
/// moves with its own rotation and translation.
inline TwoViewScene sample_two_view_scene(const TwoViewSceneSpec& spec) {
  detail::require(!spec.points_per_body.empty(), ErrorKind::invalid_parameter, "need at least one rigid body");
  detail::require(spec.depth_min > 0.0 && spec.depth_max >= spec.depth_min && spec.focal > 0.0,
                  ErrorKind::invalid_parameter, "invalid camera or depth range");
  for (int count : spec.points_per_body)
    detail::require(count >= 1, ErrorKind::invalid_parameter, "every body needs at least one point");

  Rng rng = make_stream(spec.seed, 0x7e11);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::uniform_real_distribution<double> depth(spec.depth_min, spec.depth_max);
  std::normal_distribution<double> gauss;
  constexpr double kMinDepth = 0.1;
  constexpr int kMaxRetries = 1000;

  TwoViewScene scene;
  scene.focal = spec.focal;
  std::vector<int> labels;
  const double max_angle = spec.max_rotation_deg * 3.14159265358979323846 / 180.0;
  for (std::size_t b = 0; b < spec.points_per_body.size(); ++b) {
    const Eigen::Vector3d centre(spec.lateral * unit(rng), spec.lateral * unit(rng), depth(rng));
    RigidMotion motion;
    motion.rotation = detail::random_rotation(max_angle, rng);
    motion.translation = Eigen::Vector3d(unit(rng), unit(rng), unit(rng)) * spec.max_translation;
    // Rotate about the body's own centre so it stays in front of the camera.
    motion.translation += centre - motion.rotation * centre;
    scene.motions.push_back(motion);

    const Eigen::Matrix3d plane = random_orthonormal(3, 3, rng);
    for (int i = 0; i < spec.points_per_body[b]; ++i) {
      int tries = 0;
      while (true) {
        detail::require(++tries <= kMaxRetries, ErrorKind::generation_failed,
                        "could not place a point in front of both cameras");
        Eigen::Vector3d local(unit(rng), unit(rng), spec.coplanar ? 0.0 : unit(rng));
        const Eigen::Vector3d world = centre + spec.body_extent * (plane * local);
        const Eigen::Vector3d moved = motion.rotation * world + motion.translation;
        if (world.z() < kMinDepth || moved.z() < kMinDepth) continue;
        PointCorrespondence pc{spec.focal * world.x() / world.z(), spec.focal * world.y() / world.z(),
                               spec.focal * moved.x() / moved.z(), spec.focal * moved.y() / moved.z()};
        if (spec.image_noise > 0.0) {
          pc.x += spec.image_noise * gauss(rng);
          pc.y += spec.image_noise * gauss(rng);
          pc.x2 += spec.image_noise * gauss(rng);
          pc.y2 += spec.image_noise * gauss(rng);
        }
        scene.correspondences.push_back(pc);
        labels.push_back(static_cast<int>(b));
        break;
      }
    }
  }

  if (spec.outlier_count > 0) {
    Eigen::Vector4d lo = Eigen::Vector4d::Constant(std::numeric_limits<double>::infinity());
    Eigen::Vector4d hi = -lo;
    for (const auto& pc : scene.correspondences) {
      const Eigen::Vector4d v(pc.x, pc.y, pc.x2, pc.y2);
      lo = lo.cwiseMin(v);
      hi = hi.cwiseMax(v);
    }
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    for (int i = 0; i < spec.outlier_count; ++i) {
      Eigen::Vector4d v;
      for (int c = 0; c < 4; ++c) v[c] = lo[c] + (hi[c] - lo[c]) * u01(rng);
      scene.correspondences.push_back({v[0], v[1], v[2], v[3]});
      labels.push_back(Partition::kOutlier);
    }
  }
  scene.truth = Partition(std::move(labels), static_cast<int>(spec.points_per_body.size()));
  return scene;
}

/// Percent of points assigned to the wrong cluster under the best matching
/// of predicted to true labels. Points flagged as outliers in either
/// partition are left out.
inline double misclassification_rate(const Partition& predicted, const Partition& truth) {
  detail::require(predicted.size() == truth.size(), ErrorKind::invalid_parameter,
                  "partitions disagree on the number of points");
  const int labels = std::max(predicted.clusters, truth.clusters);
  detail::require(labels <= 6, ErrorKind::unsupported, "exhaustive label matching supports at most 6 clusters");
  if (labels == 0) return 0.0;

  // confusion(p, t) = number of points with predicted p and true t
  std::vector<std::vector<std::size_t>> confusion(static_cast<std::size_t>(labels),
                                                  std::vector<std::size_t>(static_cast<std::size_t>(labels), 0));
  std::size_t counted = 0;
  for (std::size_t n = 0; n < truth.size(); ++n) {
    if (predicted.is_outlier(n) || truth.is_outlier(n)) continue;
    ++confusion[static_cast<std::size_t>(predicted.labels[n])][static_cast<std::size_t>(truth.labels[n])];
    ++counted;
  }
  if (counted == 0) return 0.0;

  std::vector<int> perm(static_cast<std::size_t>(labels));
  std::iota(perm.begin(), perm.end(), 0);
  std::size_t best_agree = 0;
  do {
    std::size_t agree = 0;
    for (int p = 0; p < labels; ++p)
      agree += confusion[static_cast<std::size_t>(p)][static_cast<std::size_t>(perm[static_cast<std::size_t>(p)])];
    best_agree = std::max(best_agree, agree);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return 100.0 * static_cast<double>(counted - best_agree) / static_cast<double>(counted);
}

struct RocPoint {
  double kappa = 0.0;
  double tpr = 0.0;
  double fpr = 0.0;
};

/// Thresholds an existing Model-Reassign fit at every kappa of the grid.
inline std::vector<RocPoint> roc_curve(const SubspaceFit& fit, const Partition& truth,
                                       const std::vector<double>& kappa_grid) {
  detail::require(!kappa_grid.empty(), ErrorKind::invalid_parameter, "kappa grid is empty");
  detail::require(truth.size() == static_cast<std::size_t>(fit.distances.cols()), ErrorKind::invalid_parameter,
                  "truth and data disagree on the number of points");
  const auto true_outliers = truth.outliers();
  OutlierConfig outliers;
  outliers.mode = OutlierMode::model_reassign;
  std::vector<RocPoint> curve;
  curve.reserve(kappa_grid.size());
  for (double kappa : kappa_grid) {
    outliers.kappa = kappa;
    const Partition part = apply_reassign_threshold(fit, outliers);
    const DetectionRates rates = tpr_fpr(part.outliers(), true_outliers, truth.size());
    curve.push_back({kappa, rates.tpr, rates.fpr});
  }
  return curve;
}

/// One Model-Reassign fit, thresholded at every kappa of the grid.
inline std::vector<RocPoint> roc_sweep(const Eigen::Ref<const Eigen::MatrixXd>& data, const GdmConfig& cfg,
                                       const Partition& truth, const std::vector<double>& kappa_grid,
                                       OutlierConfig outliers = {}) {
  detail::require(!kappa_grid.empty(), ErrorKind::invalid_parameter, "kappa grid is empty");
  detail::require(truth.size() == static_cast<std::size_t>(data.cols()), ErrorKind::invalid_parameter,
                  "truth and data disagree on the number of points");
  outliers.mode = OutlierMode::model_reassign;
  outliers.adaptive_kappa = false;
  return roc_curve(fit_model_reassign(data, cfg, outliers), truth, kappa_grid);
}

}  // namespace gdm
