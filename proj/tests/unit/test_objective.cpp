#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "gdm/objective.hpp"
#include "oracles.hpp"

using gdm::DegeneratePolicy;
using gdm::MembershipMatrix;
using gdm::ObjectiveParams;
using gdm::Partition;

namespace {

gdm::ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const gdm::Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error raised";
  return gdm::ErrorKind::unsupported;
}

// Largest entrywise |analytic - numeric| / |numeric| over the given rows.
double max_relative_error(const Eigen::MatrixXd& analytic, const Eigen::MatrixXd& numeric, Eigen::Index first_row) {
  double worst = 0.0;
  for (Eigen::Index i = first_row; i < numeric.rows(); ++i)
    for (Eigen::Index j = 0; j < numeric.cols(); ++j)
      worst = std::max(worst, std::abs(analytic(i, j) - numeric(i, j)) / std::abs(numeric(i, j)));
  return worst;
}

Eigen::MatrixXd two_lines(double norm_a, double norm_b) {
  // Points on the x axis and on the y axis of R^3.
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(3, 4);
  a(0, 0) = norm_a;
  a(0, 1) = -norm_a;
  a(1, 2) = norm_b;
  a(1, 3) = 2.0 * norm_b;
  return a;
}

}  // namespace

TEST(ScaledClusterMatrix, Examples) {
  Eigen::MatrixXd a(2, 2);
  a << 2, 4, 0, 6;
  Eigen::MatrixXd w(2, 2);
  w << 1, 0.5, 0, 0.5;
  Eigen::MatrixXd want(2, 2);
  want << 2, 2, 0, 3;
  EXPECT_EQ(gdm::scaled_cluster_matrix(a, w, 0), want);

  const Eigen::MatrixXd ones = Eigen::MatrixXd::Ones(1, 2);
  EXPECT_EQ(gdm::scaled_cluster_matrix(a, ones, 0), a);
  const Eigen::MatrixXd zeros = Eigen::MatrixXd::Zero(1, 2);
  EXPECT_EQ(gdm::scaled_cluster_matrix(a, zeros, 0), Eigen::MatrixXd::Zero(2, 2));
  EXPECT_EQ(kind_of([&] { gdm::scaled_cluster_matrix(a, w, 2); }), gdm::ErrorKind::invalid_parameter);
}

TEST(MembershipMatrix, ValidatesColumns) {
  Eigen::MatrixXd bad(2, 2);
  bad << 0.7, 0.5, 0.4, 0.5;
  EXPECT_FALSE(MembershipMatrix::is_valid(bad));
  EXPECT_EQ(kind_of([&] { MembershipMatrix m(bad); }), gdm::ErrorKind::invalid_parameter);
  Eigen::MatrixXd negative(2, 1);
  negative << 1.2, -0.2;
  EXPECT_FALSE(MembershipMatrix::is_valid(negative));
}

TEST(MembershipMatrix, IndicatorOfPartition) {
  const Partition part({0, 1, 1, Partition::kOutlier}, 2);
  const auto m = MembershipMatrix::indicator(part, 0);
  ASSERT_EQ(m.clusters(), 3);
  EXPECT_EQ(m(1, 0), 1.0);
  EXPECT_EQ(m(2, 2), 1.0);
  EXPECT_EQ(m(0, 3), 1.0);
  EXPECT_EQ(kind_of([&] { MembershipMatrix::indicator(part); }), gdm::ErrorKind::invalid_parameter);
}

TEST(GlobalDimensionSoft, SingleRankOneCluster) {
  Eigen::MatrixXd a(3, 4);
  a << 1, 2, -1, 3, 2, 4, -2, 6, 0, 0, 0, 0;
  EXPECT_NEAR(gdm::global_dimension_soft(a, Eigen::MatrixXd::Ones(1, 4), ObjectiveParams{}), 1.0, 1e-12);
}

TEST(GlobalDimensionSoft, TwoOrthogonalLines) {
  const Eigen::MatrixXd a = two_lines(1.0, 1.0);
  Eigen::MatrixXd m(2, 4);
  m << 1, 1, 0, 0, 0, 0, 1, 1;
  const ObjectiveParams params{0.35, 15.0, 0.01};
  EXPECT_NEAR(gdm::global_dimension_soft(a, m, params), oracle::kTwoToOneFifteenth, 1e-12);
}

TEST(GlobalDimensionSoft, NaturalPartitionOfEqualSubspaces) {
  std::mt19937_64 rng(7);
  const int k = 3, d = 2, n = 4000;
  Eigen::MatrixXd a(9, k * n);
  std::vector<int> labels;
  for (int c = 0; c < k; ++c) {
    a.middleCols(c * n, n) = oracle::subspace_sample(9, d, n, rng);
    labels.insert(labels.end(), static_cast<std::size_t>(n), c);
  }
  const Partition part(labels, k);
  const double gd = gdm::global_dimension_soft(a, MembershipMatrix::indicator(part), ObjectiveParams{});
  EXPECT_NEAR(gd, std::pow(3.0, 1.0 / 15.0) * d, 0.1);
}

TEST(GlobalDimensionSoft, DegenerateClusterPolicy) {
  const Eigen::MatrixXd a = two_lines(1.0, 1.0);
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(2, 4);
  m.row(0).setOnes();
  EXPECT_EQ(kind_of([&] { gdm::global_dimension_soft(a, m, ObjectiveParams{}); }),
            gdm::ErrorKind::degenerate_cluster);
  const Eigen::VectorXd dims = gdm::soft_cluster_dimensions(a, m, ObjectiveParams{}, DegeneratePolicy::zero);
  EXPECT_GT(dims[0], 1.0);
  EXPECT_EQ(dims[1], 0.0);
}

TEST(GlobalDimensionSoft, InvariantUnderRowPermutation) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::MatrixXd a = oracle::gaussian_matrix(9, 30, rng);
    const Eigen::MatrixXd m = oracle::interior_membership(3, 30, 0.02, rng);
    Eigen::MatrixXd permuted(3, 30);
    permuted.row(0) = m.row(2);
    permuted.row(1) = m.row(0);
    permuted.row(2) = m.row(1);
    EXPECT_EQ(gdm::global_dimension_soft(a, m, ObjectiveParams{}),
              gdm::global_dimension_soft(a, permuted, ObjectiveParams{}));
  }
}

TEST(GlobalDimensionSoft, MatchesIndependentOracle) {
  std::mt19937_64 rng(19);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::MatrixXd a = oracle::gaussian_matrix(9, 25, rng);
    const Eigen::MatrixXd m = oracle::interior_membership(2, 25, 0.05, rng);
    Eigen::VectorXd dims(2);
    for (int k = 0; k < 2; ++k) dims[k] = oracle::dimension_of(a * m.row(k).asDiagonal(), 0.35);
    EXPECT_NEAR(gdm::global_dimension_soft(a, m, ObjectiveParams{}), oracle::p_norm(dims, 15.0), 1e-10);
  }
}

TEST(GlobalDimensionHard, SinglePointCluster) {
  Eigen::MatrixXd a(3, 1);
  a << 1, 2, 3;
  EXPECT_NEAR(gdm::global_dimension_hard(a, Partition({0}, 1), ObjectiveParams{}), 1.0, 1e-14);
}

TEST(GlobalDimensionHard, EqualsSoftAtIndicator) {
  std::mt19937_64 rng(47);
  std::uniform_int_distribution<int> pick(0, 2);
  for (int trial = 0; trial < 30; ++trial) {
    const Eigen::MatrixXd a = oracle::gaussian_matrix(9, 24, rng);
    std::vector<int> labels(24);
    for (int n = 0; n < 24; ++n) labels[static_cast<std::size_t>(n)] = n < 3 ? n : pick(rng);
    const Partition part(labels, 3);
    EXPECT_NEAR(gdm::global_dimension_hard(a, part, ObjectiveParams{}),
                gdm::global_dimension_soft(a, MembershipMatrix::indicator(part), ObjectiveParams{}), 1e-10);
  }
}

TEST(GlobalDimensionHard, ThreeLinesInThePlane) {
  // Two points on each of three lines through the origin of R^2.
  Eigen::MatrixXd a(2, 6);
  a << 1, 2, 0, 0, 1, -3, 0, 0, 1, 3, 1, -3;
  const Partition natural({0, 0, 1, 1, 2, 2}, 3);
  const Partition single({0, 0, 0, 0, 0, 0}, 1);

  Eigen::VectorXd natural_ranks(3);
  for (int k = 0; k < 3; ++k) natural_ranks[k] = oracle::rank_of(gdm::gather_columns(a, natural.members(k)));
  EXPECT_EQ(oracle::p_norm(natural_ranks, 1.0), 3.0);
  EXPECT_EQ(oracle::rank_of(a), 2);

  const ObjectiveParams p1{0.35, 1.0, 0.0};
  EXPECT_NEAR(gdm::global_dimension_hard(a, natural, p1), 3.0, 1e-12);
  EXPECT_LE(gdm::global_dimension_hard(a, single, p1), 2.0 + 1e-12);
}

TEST(GlobalDimensionHard, EmptyClusterIsDegenerate) {
  const Eigen::MatrixXd a = two_lines(1.0, 1.0);
  EXPECT_EQ(kind_of([&] { gdm::global_dimension_hard(a, Partition({0, 0, 0, 0}, 2), ObjectiveParams{}); }),
            gdm::ErrorKind::degenerate_cluster);
}

TEST(ObjectiveParams, Validation) {
  EXPECT_EQ(kind_of([] { ObjectiveParams{0.0, 15.0, 0.01}.validate(); }), gdm::ErrorKind::invalid_parameter);
  EXPECT_EQ(kind_of([] { ObjectiveParams{1.0, 15.0, 0.01}.validate(); }), gdm::ErrorKind::invalid_parameter);
  EXPECT_EQ(kind_of([] { ObjectiveParams{0.35, 0.0, 0.01}.validate(); }), gdm::ErrorKind::invalid_parameter);
  EXPECT_EQ(kind_of([] { ObjectiveParams{0.35, 15.0, -1.0}.validate(); }), gdm::ErrorKind::invalid_parameter);
  EXPECT_DOUBLE_EQ(ObjectiveParams{}.delta(), 7.0 / 13.0);
}

TEST(Gradient, MatchesFiniteDifferences) {
  const ObjectiveParams params{};
  double worst = 0.0;
  for (int instance = 0; instance < 50; ++instance) {
    std::mt19937_64 rng(500 + static_cast<unsigned>(instance));
    const int k = instance % 2 == 0 ? 2 : 3;
    const Eigen::MatrixXd a = oracle::gaussian_matrix(9, 40, rng);
    const Eigen::MatrixXd m = oracle::interior_membership(k, 40, 0.05, rng);
    const Eigen::MatrixXd g = gdm::gd_gradient(a, m, params);
    const Eigen::MatrixXd fd = oracle::finite_difference_ld(a, m, params.eps, params.p, false, 0.0, 1e-6);
    worst = std::max(worst, max_relative_error(g, fd, 0));
  }
  EXPECT_LT(worst, 1e-5);
}

TEST(Gradient, SingleClusterMatchesDimensionDerivative) {
  std::mt19937_64 rng(61);
  const Eigen::MatrixXd a = oracle::gaussian_matrix(9, 40, rng);
  std::uniform_real_distribution<double> u(0.2, 1.0);
  Eigen::MatrixXd w(1, 40);
  for (auto& x : w.reshaped()) x = u(rng);
  const ObjectiveParams params{};
  // A single row need not be stochastic; the dimension of the scaled matrix
  // is what is being differentiated.
  Eigen::VectorXd dims;
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(1, 40);
  gdm::detail::dimension_term_gradient(a, w, 0, params, DegeneratePolicy::raise, dims, g);
  const Eigen::MatrixXd fd = oracle::finite_difference_ld(a, w, 0.35, 1.0, false, 0.0, 1e-6);
  EXPECT_LT(max_relative_error(g, fd, 0), 1e-5);
}

TEST(Gradient, IdenticalRowsGiveIdenticalGradientRows) {
  std::mt19937_64 rng(67);
  const Eigen::MatrixXd a = oracle::gaussian_matrix(9, 30, rng);
  Eigen::MatrixXd m = oracle::interior_membership(2, 30, 0.05, rng);
  m.row(0) = Eigen::RowVectorXd::Constant(30, 0.5);
  m.row(1) = m.row(0);
  const Eigen::MatrixXd g = gdm::gd_gradient(a, m, ObjectiveParams{});
  EXPECT_LT((g.row(0) - g.row(1)).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Gradient, DegenerateClusterHandling) {
  const Eigen::MatrixXd a = two_lines(1.0, 2.0);
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(2, 4);
  m.row(0).setOnes();
  EXPECT_EQ(kind_of([&] { gdm::gd_gradient(a, m, ObjectiveParams{}); }), gdm::ErrorKind::degenerate_cluster);
  const Eigen::MatrixXd g = gdm::gd_gradient(a, m, ObjectiveParams{}, DegeneratePolicy::zero);
  EXPECT_TRUE(g.allFinite());
  EXPECT_EQ(g.row(1).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Gradient, FiniteAtRankDeficientClusters) {
  const Eigen::MatrixXd a = two_lines(1.0, 1.0);
  Eigen::MatrixXd m(2, 4);
  m << 1, 1, 0, 0, 0, 0, 1, 1;
  EXPECT_TRUE(gdm::gd_gradient(a, m, ObjectiveParams{}).allFinite());
}

TEST(OutlierObjective, ZeroOutlierRowReducesToSoft) {
  std::mt19937_64 rng(71);
  const Eigen::MatrixXd a = oracle::gaussian_matrix(9, 20, rng);
  const Eigen::MatrixXd m = oracle::interior_membership(2, 20, 0.05, rng);
  Eigen::MatrixXd mo = Eigen::MatrixXd::Zero(3, 20);
  mo.bottomRows(2) = m;
  const ObjectiveParams params{};
  EXPECT_NEAR(gdm::global_dimension_outlier(a, mo, params), gdm::global_dimension_soft(a, m, params), 1e-14);
}

TEST(OutlierObjective, AllMassOnOutliersIsDegenerate) {
  std::mt19937_64 rng(73);
  const Eigen::MatrixXd a = oracle::gaussian_matrix(9, 10, rng);
  Eigen::MatrixXd mo = Eigen::MatrixXd::Zero(3, 10);
  mo.row(0).setOnes();
  EXPECT_EQ(kind_of([&] { gdm::global_dimension_outlier(a, mo, ObjectiveParams{}); }),
            gdm::ErrorKind::degenerate_cluster);
}

TEST(OutlierObjective, AddsAlphaTimesOutlierMass) {
  std::mt19937_64 rng(79);
  const Eigen::MatrixXd a = oracle::gaussian_matrix(9, 20, rng);
  Eigen::MatrixXd mo = oracle::interior_membership(3, 20, 0.0, rng);
  mo.row(0) = Eigen::RowVectorXd::Constant(20, 0.5);
  for (Eigen::Index j = 0; j < 20; ++j) mo.col(j).tail(2) *= 0.5 / mo.col(j).tail(2).sum();
  const ObjectiveParams params{0.35, 15.0, 0.01};
  Eigen::VectorXd dims(2);
  for (int k = 0; k < 2; ++k) dims[k] = oracle::dimension_of(a * mo.row(k + 1).asDiagonal(), 0.35);
  EXPECT_NEAR(gdm::global_dimension_outlier(a, mo, params), 0.1 + oracle::p_norm(dims, 15.0), 1e-10);
}

TEST(OutlierGradient, OutlierRowIsAlphaTimesMembership) {
  std::mt19937_64 rng(83);
  const Eigen::MatrixXd a = oracle::gaussian_matrix(9, 20, rng);
  Eigen::MatrixXd mo = oracle::interior_membership(3, 20, 0.05, rng);
  mo(0, 3) = 0.0;
  mo(1, 3) += 0.05;
  mo(0, 4) = 0.5;
  mo.col(4).tail(2) = Eigen::Vector2d(0.25, 0.25);
  const ObjectiveParams params{0.35, 15.0, 0.02};
  const Eigen::MatrixXd g = gdm::gd_gradient_outlier(a, mo, params);
  EXPECT_EQ(g(0, 3), 0.0);
  EXPECT_EQ(g(0, 4), 0.01);
  for (Eigen::Index j = 0; j < 20; ++j) EXPECT_EQ(g(0, j), 0.02 * mo(0, j));
}

TEST(OutlierGradient, ClusterRowsMatchFiniteDifferences) {
  const ObjectiveParams params{0.35, 15.0, 0.01};
  double worst = 0.0;
  for (int instance = 0; instance < 50; ++instance) {
    std::mt19937_64 rng(900 + static_cast<unsigned>(instance));
    const int k = instance % 2 == 0 ? 2 : 3;
    const Eigen::MatrixXd a = oracle::gaussian_matrix(9, 40, rng);
    const Eigen::MatrixXd m = oracle::interior_membership(k + 1, 40, 0.05, rng);
    const Eigen::MatrixXd g = gdm::gd_gradient_outlier(a, m, params);
    const Eigen::MatrixXd fd = oracle::finite_difference_ld(a, m, params.eps, params.p, true, params.alpha, 1e-6);
    worst = std::max(worst, max_relative_error(g, fd, 1));
  }
  EXPECT_LT(worst, 1e-5);
}
