#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>
#include <Eigen/QR>
#include <fmt/format.h>

#include "splitdiag/dataset.hpp"
#include "splitdiag/distance.hpp"
#include "splitdiag/error.hpp"
#include "splitdiag/hypothesis.hpp"
#include "splitdiag/parallel.hpp"
#include "splitdiag/rng.hpp"
#include "splitdiag/splitters.hpp"

namespace splitdiag {

/// Linear model "response ~ term + term + ..." with an implicit intercept.
/// Terms use the derived-column grammar: "a", "a:b:c", "a^2".
struct ModelFormula {
  std::string response;
  std::vector<Term> terms;

  static ModelFormula parse(std::string_view text) {
    const auto tilde = text.find('~');
    if (tilde == std::string_view::npos) throw Error(fmt::format("formula '{}' has no '~'", text));
    ModelFormula f;
    f.response = std::string(detail::trim(text.substr(0, tilde)));
    if (f.response.empty()) throw Error(fmt::format("formula '{}' has no response", text));
    if (f.response.find_first_of(":^+") != std::string::npos)
      throw Error(fmt::format("response '{}' must be a plain column name", f.response));
    const auto rhs = detail::trim(text.substr(tilde + 1));
    if (rhs.empty()) throw Error(fmt::format("formula '{}' has no terms", text));
    for (auto part : detail::split_on(rhs, '+')) {
      Term t = parse_term(part);
      for (const auto& existing : f.terms)
        if (existing == t) throw Error(fmt::format("term '{}' appears twice", t.label()));
      if (t.factors.size() == 1 && t.factors[0].power == 1 && t.factors[0].column == f.response)
        throw Error(fmt::format("response '{}' also appears as a term", f.response));
      f.terms.push_back(std::move(t));
    }
    return f;
  }

  std::string str() const {
    std::string out = response + " ~ ";
    for (std::size_t i = 0; i < terms.size(); ++i) {
      if (i > 0) out += " + ";
      out += terms[i].label();
    }
    return out;
  }

  /// Coefficients including the intercept.
  std::size_t parameters() const noexcept { return terms.size() + 1; }
};

/// Response followed by every predictor term as one (possibly derived) column.
inline ColumnSelection selection_for(const Dataset& ds, const ModelFormula& f) {
  std::vector<Term> terms{Term{{Factor{f.response, 1}}}};
  terms.insert(terms.end(), f.terms.begin(), f.terms.end());
  return make_selection(ds, std::move(terms));
}

/// Intercept column followed by one column per term.
inline Eigen::MatrixXd design_matrix(const Dataset& ds, const ModelFormula& f, std::span<const std::size_t> rows) {
  ds.numeric_column(f.response);
  Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(f.parameters()));
  x.col(0).setOnes();
  for (std::size_t t = 0; t < f.terms.size(); ++t) {
    const auto cols = resolve(ds, f.terms[t]);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i] >= ds.rows()) throw Error(fmt::format("row index {} out of range", rows[i]));
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t + 1)) = evaluate(ds, cols, f.terms[t], rows[i]);
    }
  }
  return x;
}

inline Eigen::VectorXd response_vector(const Dataset& ds, const ModelFormula& f, std::span<const std::size_t> rows) {
  const Column& c = ds.numeric_column(f.response);
  Eigen::VectorXd y(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= ds.rows()) throw Error(fmt::format("row index {} out of range", rows[i]));
    y(static_cast<Eigen::Index>(i)) = ds.value(rows[i], c);
  }
  return y;
}

/// Residual sums of squares below this many times n count as a perfect fit.
inline constexpr double kPerfectFitEpsilon = 1e-12;

/// log(rss / n) + 2K / n, or -infinity for a perfect fit.
inline double normalized_aic(double rss, std::size_t n, std::size_t k) {
  const auto nn = static_cast<double>(n);
  if (rss < kPerfectFitEpsilon * nn) return -std::numeric_limits<double>::infinity();
  return std::log(rss / nn) + 2.0 * static_cast<double>(k) / nn;
}

class RankDeficientError : public Error {
 public:
  using Error::Error;
};

struct ModelFit {
  Eigen::VectorXd coefficients;
  /// Parameter count K in the AIC: regression coefficients including the intercept.
  std::size_t k = 0;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  double rss_train = 0.0;
  double rss_test = 0.0;
  double aicn_train = 0.0;
  double aicn_test = 0.0;
  double r2_train = 0.0;
  double r2_test = 0.0;
  std::vector<std::string> warnings;
};

namespace detail {

inline double total_ss(const Eigen::VectorXd& y) { return (y.array() - y.mean()).square().sum(); }

inline double r_squared(double rss, double tss) {
  if (tss > 0.0) return 1.0 - rss / tss;
  return rss == 0.0 ? 1.0 : -std::numeric_limits<double>::infinity();
}

}  // namespace detail

/// OLS on the train rows via column-pivoted QR, scored on both partitions.
inline ModelFit fit_ols(const Eigen::MatrixXd& x_train, const Eigen::VectorXd& y_train, const Eigen::MatrixXd& x_test,
                        const Eigen::VectorXd& y_test) {
  const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x_train);
  if (qr.rank() < x_train.cols())
    throw RankDeficientError(fmt::format("design matrix has rank {} < {} columns (collinear terms)", qr.rank(),
                                         x_train.cols()));
  ModelFit fit;
  fit.coefficients = qr.solve(y_train);
  fit.k = static_cast<std::size_t>(x_train.cols());
  fit.n_train = static_cast<std::size_t>(x_train.rows());
  fit.n_test = static_cast<std::size_t>(x_test.rows());
  fit.rss_train = (y_train - x_train * fit.coefficients).squaredNorm();
  fit.rss_test = (y_test - x_test * fit.coefficients).squaredNorm();
  fit.aicn_train = normalized_aic(fit.rss_train, fit.n_train, fit.k);
  fit.aicn_test = normalized_aic(fit.rss_test, fit.n_test, fit.k);
  fit.r2_train = std::clamp(detail::r_squared(fit.rss_train, detail::total_ss(y_train)), 0.0, 1.0);
  fit.r2_test = detail::r_squared(fit.rss_test, detail::total_ss(y_test));
  if (std::isinf(fit.aicn_train)) fit.warnings.emplace_back("perfect fit on the train partition; AIC_N is -inf");
  if (std::isinf(fit.aicn_test)) fit.warnings.emplace_back("perfect fit on the test partition; AIC_N is -inf");
  return fit;
}

inline ModelFit fit_ols(const Dataset& ds, const ModelFormula& f, const SplitIndices& split) {
  if (split.rows() != ds.rows())
    throw Error(fmt::format("split covers {} rows, dataset has {}", split.rows(), ds.rows()));
  return fit_ols(design_matrix(ds, f, split.train), response_vector(ds, f, split.train),
                 design_matrix(ds, f, split.test), response_vector(ds, f, split.test));
}

struct SweepRow {
  std::size_t sim_index = 0;
  double lambda = 0.0;
  double aicn_train = 0.0;
  double aicn_test = 0.0;
  /// "ok", "perfect_fit", "singular_covariance" or "rank_deficient".
  std::string flag = "ok";
};

/**
 * Split distance and model scores over n_sims seeded random splits. Row j
 * uses the same split as simulation j of the hypothesis test with the same
 * master seed. Failing simulations are flagged, not fatal.
 */
inline std::vector<SweepRow> association_sweep(const Dataset& ds, const ColumnSelection& sel, const ModelFormula& f,
                                               double fraction, std::size_t n_sims, std::uint64_t master_seed,
                                               std::size_t workers = 1) {
  std::vector<SweepRow> rows(n_sims);
  if (n_sims == 0) return rows;
  const NullSimulator sim(view_all(ds, sel), train_size(ds.rows(), fraction));
  std::vector<std::size_t> all(ds.rows());
  std::iota(all.begin(), all.end(), std::size_t{0});
  const Eigen::MatrixXd x = design_matrix(ds, f, all);
  const Eigen::VectorXd y = response_vector(ds, f, all);
  const double nan = std::numeric_limits<double>::quiet_NaN();

  parallel_for(n_sims, workers, [&](std::size_t j) {
    SweepRow& row = rows[j];
    row.sim_index = j;
    const auto [train, test] = sim.partition(rng::stream_seed(master_seed, j));
    try {
      row.lambda = lambda_metric(gather_rows(sim.data(), train), gather_rows(sim.data(), test)).lambda;
    } catch (const DegenerateDataError&) {
      row.lambda = nan;
      row.flag = "singular_covariance";
    }
    try {
      const auto fit = fit_ols(gather_rows(x, train), gather_rows(y, train), gather_rows(x, test), gather_rows(y, test));
      row.aicn_train = fit.aicn_train;
      row.aicn_test = fit.aicn_test;
      if (row.flag == "ok" && (std::isinf(fit.aicn_train) || std::isinf(fit.aicn_test))) row.flag = "perfect_fit";
    } catch (const RankDeficientError&) {
      row.aicn_train = nan;
      row.aicn_test = nan;
      row.flag = "rank_deficient";
    }
  });
  return rows;
}

}  // namespace splitdiag
