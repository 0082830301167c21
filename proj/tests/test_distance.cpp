#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "splitdiag/distance.hpp"

using namespace splitdiag;

namespace {

double rel(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

Eigen::MatrixXd rows(std::initializer_list<std::initializer_list<double>> r) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(r.size()), static_cast<Eigen::Index>(r.begin()->size()));
  Eigen::Index i = 0;
  for (const auto& row : r) {
    Eigen::Index j = 0;
    for (double v : row) m(i, j++) = v;
    ++i;
  }
  return m;
}

}  // namespace

TEST(Moments, TwoPoints) {
  const auto s = moments(rows({{0, 0}, {2, 2}}));
  EXPECT_EQ(s.mean, Eigen::Vector2d(1, 1));
  EXPECT_EQ(s.cov, Eigen::Matrix2d::Constant(2.0));
  EXPECT_EQ(s.count, 2u);
}

TEST(Moments, ConstantColumn) {
  const auto s = moments(rows({{1}, {1}, {1}}));
  EXPECT_EQ(s.mean(0), 1.0);
  EXPECT_EQ(s.cov(0, 0), 0.0);
}

TEST(Moments, MatchesTwoPassOracle) {
  std::mt19937_64 gen(1);
  const auto m = oracle::random_matrix(gen, 5, 3);
  const auto s = moments(m);
  const auto x = oracle::to_rows(m);
  const auto mu = oracle::mean(x);
  const auto cov = oracle::covariance(x);
  for (int a = 0; a < 3; ++a) {
    EXPECT_NEAR(s.mean(a), mu[a], 1e-12);
    for (int b = 0; b < 3; ++b) EXPECT_NEAR(s.cov(a, b), cov[a][b], 1e-12);
  }
  EXPECT_EQ(s.cov, s.cov.transpose());
}

TEST(Moments, NeedsTwoRows) { EXPECT_THROW(moments(rows({{1, 2}})), Error); }

TEST(PooledCovariance, EqualWeightsIsIdentity) {
  MomentSummary a{Eigen::Vector2d::Zero(), rows({{2, 0.5}, {0.5, 1}}), 10};
  MomentSummary b{Eigen::Vector2d::Ones(), a.cov, 10};
  EXPECT_TRUE(pooled_covariance(a, b).isApprox(a.cov, 1e-15));
}

TEST(PooledCovariance, DirectArithmetic) {
  MomentSummary a{Eigen::VectorXd::Zero(1), rows({{2}}), 3};
  MomentSummary b{Eigen::VectorXd::Zero(1), rows({{4}}), 5};
  EXPECT_NEAR(pooled_covariance(a, b)(0, 0), 10.0 / 3.0, 1e-15);
}

TEST(PooledCovariance, MatchesWeightedSumOracle) {
  std::mt19937_64 gen(2);
  for (int rep = 0; rep < 20; ++rep) {
    const auto x = oracle::random_matrix(gen, 7 + rep, 3);
    const auto y = oracle::random_matrix(gen, 4 + rep, 3);
    const auto p = pooled_covariance(moments(x), moments(y));
    const auto sx = oracle::covariance(oracle::to_rows(x));
    const auto sy = oracle::covariance(oracle::to_rows(y));
    const double nx = static_cast<double>(x.rows());
    const double ny = static_cast<double>(y.rows());
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b)
        EXPECT_NEAR(p(a, b), ((nx - 1) * sx[a][b] + (ny - 1) * sy[a][b]) / (nx + ny - 2), 1e-12);
  }
}

TEST(PooledCovariance, DimensionMismatch) {
  MomentSummary a{Eigen::VectorXd::Zero(1), rows({{2}}), 3};
  MomentSummary b{Eigen::Vector2d::Zero(), Eigen::Matrix2d::Identity(), 3};
  EXPECT_THROW(pooled_covariance(a, b), Error);
}

TEST(Mahalanobis, Examples) {
  const auto identity = SpdFactor::factorize(Eigen::Matrix2d::Identity());
  const Eigen::Vector2d mu(0, 0);
  EXPECT_EQ(mahalanobis_sq(mu, mu, identity), 0.0);
  EXPECT_NEAR(mahalanobis_sq(Eigen::Vector2d(1, 1), mu, identity), 2.0, 1e-15);
  const auto diag = SpdFactor::factorize(Eigen::Vector2d(4, 1).asDiagonal().toDenseMatrix());
  EXPECT_NEAR(mahalanobis_sq(Eigen::Vector2d(1, 0), mu, diag), 0.25, 1e-15);
  EXPECT_THROW(mahalanobis_sq(Eigen::Vector3d(1, 0, 0), Eigen::Vector3d::Zero(), diag), Error);
}

TEST(SpdFactor, RidgeEscalationAndFailure) {
  Eigen::Matrix2d rank_one;
  rank_one << 1, 1, 1, 1;
  const auto f = SpdFactor::factorize(rank_one);
  EXPECT_GT(f.ridge(), 0.0);
  EXPECT_LE(f.ridge(), 1e-6);
  EXPECT_THROW(SpdFactor::factorize(Eigen::Matrix2d::Zero()), DegenerateDataError);
  EXPECT_EQ(SpdFactor::factorize(Eigen::Matrix2d::Identity()).ridge(), 0.0);
}

TEST(LambdaMetric, SelfDistanceClosedForm) {
  std::mt19937_64 gen(3);
  for (int d = 1; d <= 5; ++d) {
    const Eigen::Index n = 10 + 7 * d;
    const auto x = oracle::random_matrix(gen, n, d);
    const auto stat = lambda_metric(x, x);
    const double expected = d * static_cast<double>(n - 1) / static_cast<double>(n);
    EXPECT_LT(rel(stat.lambda, expected), 1e-9);
    EXPECT_LT(rel(oracle::lambda(x, x), expected), 1e-9);
  }
}

TEST(LambdaMetric, SymmetricAndConsistentFields) {
  std::mt19937_64 gen(4);
  const auto x = oracle::random_matrix(gen, 40, 3);
  Eigen::MatrixXd y = oracle::random_matrix(gen, 15, 3);
  y.col(1).array() += 0.7;
  const auto a = lambda_metric(x, y);
  const auto b = lambda_metric(y, x);
  EXPECT_DOUBLE_EQ(a.lambda, b.lambda);
  EXPECT_DOUBLE_EQ(a.d_xy, b.d_yx);
  EXPECT_EQ(a.lambda, (a.d_xy + a.d_yx) / 2.0);
  EXPECT_GE(a.d_xy, 0.0);
  EXPECT_GE(a.d_yx, 0.0);
  EXPECT_EQ(a.dim, 3u);
  EXPECT_EQ(a.regularization_used, 0.0);
}

TEST(LambdaMetric, AffineInvariance) {
  std::mt19937_64 gen(5);
  std::normal_distribution<double> n01;
  for (int rep = 0; rep < 10; ++rep) {
    const int d = 1 + rep % 4;
    const auto x = oracle::random_matrix(gen, 50, d);
    const auto y = oracle::random_matrix(gen, 20, d);
    Eigen::MatrixXd a(d, d);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j) a(i, j) = n01(gen) + (i == j ? 2.0 : 0.0);
    Eigen::RowVectorXd b(d);
    for (int j = 0; j < d; ++j) b(j) = 10.0 * n01(gen);
    const Eigen::MatrixXd xt = (x * a.transpose()).rowwise() + b;
    const Eigen::MatrixXd yt = (y * a.transpose()).rowwise() + b;
    EXPECT_LT(rel(lambda_metric(xt, yt).lambda, lambda_metric(x, y).lambda), 1e-6);
  }
}

TEST(LambdaMetric, MatchesNaiveOracle) {
  std::mt19937_64 gen(6);
  std::uniform_int_distribution<int> dim(1, 3);
  for (int rep = 0; rep < 50; ++rep) {
    const int d = dim(gen);
    std::uniform_int_distribution<int> size(d + 2, 20);
    const auto x = oracle::random_matrix(gen, size(gen), d);
    Eigen::MatrixXd y = oracle::random_matrix(gen, size(gen), d);
    y.array() += 0.3 * rep / 50.0;
    EXPECT_LT(rel(lambda_metric(x, y).lambda, oracle::lambda(x, y)), 1e-9);
  }
}

TEST(LambdaMetric, MonotoneUnderMeanShift) {
  std::mt19937_64 gen(7);
  const auto x = oracle::random_matrix(gen, 60, 3);
  const auto y = oracle::random_matrix(gen, 30, 3);
  const Eigen::RowVector3d dir(0.3, -1.0, 0.5);
  double previous = lambda_metric(x, y).lambda;
  for (double shift : {1.0, 3.0, 9.0}) {
    const Eigen::MatrixXd moved = y.rowwise() + shift * dir;
    const double now = lambda_metric(x, moved).lambda;
    EXPECT_GT(now, previous);
    previous = now;
  }
}

TEST(LambdaMetric, ConstantColumnUsesRidge) {
  std::mt19937_64 gen(8);
  Eigen::MatrixXd x = oracle::random_matrix(gen, 30, 2);
  Eigen::MatrixXd y = oracle::random_matrix(gen, 30, 2);
  x.col(1).setConstant(5.0);
  y.col(1).setConstant(5.0);
  const auto stat = lambda_metric(x, y);
  EXPECT_GT(stat.regularization_used, 0.0);
  EXPECT_TRUE(std::isfinite(stat.lambda));
}

TEST(LambdaMetric, Errors) {
  const Eigen::MatrixXd constant = Eigen::MatrixXd::Constant(10, 2, 3.0);
  EXPECT_THROW(lambda_metric(constant, constant), DegenerateDataError);
  std::mt19937_64 gen(9);
  const auto x = oracle::random_matrix(gen, 10, 2);
  EXPECT_THROW(lambda_metric(x, oracle::random_matrix(gen, 10, 3)), Error);
  EXPECT_THROW(lambda_metric(x, oracle::random_matrix(gen, 3, 2)), Error);
}
