#pragma once

#include <array>
#include <cmath>
#include <cstddef>

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <fmt/format.h>

#include "splitdiag/error.hpp"

namespace splitdiag {

/// Column means and unbiased sample covariance (divisor count - 1) of one partition.
struct MomentSummary {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  std::size_t count = 0;
};

template <typename Derived>
MomentSummary moments(const Eigen::MatrixBase<Derived>& m) {
  if (m.rows() < 2) throw Error(fmt::format("moments need at least 2 rows, got {}", m.rows()));
  MomentSummary s;
  s.count = static_cast<std::size_t>(m.rows());
  s.mean = m.colwise().mean().transpose();
  const Eigen::MatrixXd centered = m.rowwise() - s.mean.transpose();
  s.cov = (centered.transpose() * centered) / static_cast<double>(m.rows() - 1);
  // Exact symmetry; the product above is symmetric only up to rounding.
  s.cov = (0.5 * (s.cov + s.cov.transpose())).eval();
  return s;
}

/// ((n_a - 1) S_a + (n_b - 1) S_b) / (n_a + n_b - 2)
inline Eigen::MatrixXd pooled_covariance(const MomentSummary& a, const MomentSummary& b) {
  if (a.cov.rows() != b.cov.rows() || a.cov.cols() != b.cov.cols())
    throw Error(fmt::format("dimension mismatch: {} vs {}", a.cov.rows(), b.cov.rows()));
  if (a.count + b.count < 3) throw Error("pooled covariance needs at least 3 observations in total");
  const auto wa = static_cast<double>(a.count - 1);
  const auto wb = static_cast<double>(b.count - 1);
  return (wa * a.cov + wb * b.cov) / (wa + wb);
}

/// Cholesky factor of an SPD matrix, with diagonal ridge escalation when the
/// matrix is numerically singular.
class SpdFactor {
 public:
  /// Ridge multipliers, applied as multiplier * trace / d.
  static constexpr std::array<double, 3> kRidgeSteps{1e-10, 1e-8, 1e-6};
  /// Smallest admissible conditional variance ratio L_ii^2 / A_ii.
  static constexpr double kMinPivotRatio = 1e-12;

  static SpdFactor factorize(const Eigen::MatrixXd& a) {
    if (a.rows() != a.cols() || a.rows() == 0) throw Error("factorize needs a non-empty square matrix");
    SpdFactor f;
    if (f.try_factor(a)) return f;
    const double scale = a.trace() / static_cast<double>(a.rows());
    if (scale > 0.0 && std::isfinite(scale)) {
      for (double step : kRidgeSteps) {
        Eigen::MatrixXd ridged = a;
        ridged.diagonal().array() += step * scale;
        if (f.try_factor(ridged)) {
          f.ridge_ = step * scale;
          return f;
        }
      }
    }
    throw DegenerateDataError(fmt::format(
        "pooled covariance ({}x{}) is singular even after ridge {:g}*trace/d; check for constant or collinear columns",
        a.rows(), a.cols(), kRidgeSteps.back()));
  }

  Eigen::Index dim() const noexcept { return llt_.matrixLLT().rows(); }

  /// Ridge magnitude added to the diagonal, 0 when none was needed.
  double ridge() const noexcept { return ridge_; }

  /// Squared norms of L^{-1} v for every column v of `columns`, i.e. v^T A^{-1} v.
  Eigen::VectorXd quadratic_forms(Eigen::MatrixXd columns) const {
    llt_.matrixL().solveInPlace(columns);
    return columns.colwise().squaredNorm().transpose();
  }

  const Eigen::LLT<Eigen::MatrixXd>& llt() const noexcept { return llt_; }

 private:
  bool try_factor(const Eigen::MatrixXd& a) {
    llt_.compute(a);
    if (llt_.info() != Eigen::Success) return false;
    const auto& l = llt_.matrixLLT();
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      const double pivot = l(i, i) * l(i, i);
      if (!std::isfinite(pivot) || !(a(i, i) > 0.0) || pivot < kMinPivotRatio * a(i, i)) return false;
    }
    return true;
  }

  Eigen::LLT<Eigen::MatrixXd> llt_;
  double ridge_ = 0.0;
};

/// (x - mu)^T Sigma^{-1} (x - mu) using a prefactored Sigma.
template <typename DerivedX, typename DerivedMu>
double mahalanobis_sq(const Eigen::MatrixBase<DerivedX>& x, const Eigen::MatrixBase<DerivedMu>& mu,
                      const SpdFactor& factor) {
  if (x.size() != mu.size() || x.size() != factor.dim())
    throw Error(fmt::format("dimension mismatch: x {}, mu {}, factor {}", x.size(), mu.size(), factor.dim()));
  Eigen::VectorXd diff = x - mu;
  factor.llt().matrixL().solveInPlace(diff);
  return diff.squaredNorm();
}

struct LambdaStatistic {
  /// Mean distance of train rows from the test distribution.
  double d_xy = 0.0;
  /// Mean distance of test rows from the train distribution.
  double d_yx = 0.0;
  double lambda = 0.0;
  std::size_t dim = 0;
  double regularization_used = 0.0;
};

/**
 * Split distance between a train matrix and a test matrix (rows are
 * observations). Each row is measured against the other partition's mean
 * under the pooled covariance; the metric is the average of the two
 * directional mean distances. One factorization serves every row.
 */
template <typename DerivedA, typename DerivedB>
LambdaStatistic lambda_metric(const Eigen::MatrixBase<DerivedA>& train, const Eigen::MatrixBase<DerivedB>& test) {
  const auto d = train.cols();
  if (test.cols() != d) throw Error(fmt::format("dimension mismatch: train has {} columns, test {}", d, test.cols()));
  if (d == 0) throw Error("distance metric needs at least one column");
  if (train.rows() < d + 2 || test.rows() < d + 2)
    throw Error(fmt::format("each partition needs at least d + 2 = {} rows (train {}, test {})", d + 2, train.rows(),
                            test.rows()));
  const MomentSummary mx = moments(train);
  const MomentSummary my = moments(test);
  const SpdFactor factor = SpdFactor::factorize(pooled_covariance(mx, my));

  LambdaStatistic out;
  out.dim = static_cast<std::size_t>(d);
  out.regularization_used = factor.ridge();
  out.d_xy = factor.quadratic_forms((train.rowwise() - my.mean.transpose()).transpose()).mean();
  out.d_yx = factor.quadratic_forms((test.rowwise() - mx.mean.transpose()).transpose()).mean();
  out.lambda = (out.d_xy + out.d_yx) / 2.0;
  return out;
}

}  // namespace splitdiag
