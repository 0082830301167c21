#include <cmath>
#include <limits>
#include <random>

#include <gtest/gtest.h>

#include "helpers.hpp"
#include "oracles.hpp"
#include "splitdiag/hypothesis.hpp"
#include "splitdiag/model.hpp"
#include "splitdiag/splitters.hpp"

using namespace splitdiag;
using testing_support::csv;

namespace {

const ModelFormula& abalone_formula() {
  static const auto f = ModelFormula::parse("Rings ~ LongestShell + Diameter + Height");
  return f;
}

/// y = 1 + 2 a - b + noise, plus an unrelated column z.
Dataset noisy_linear(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> n01;
  std::string text = "y,a,b,z\n";
  for (std::size_t i = 0; i < n; ++i) {
    const double a = n01(gen), b = n01(gen), z = n01(gen);
    text += fmt::format("{},{},{},{}\n", 1 + 2 * a - b + 0.5 * n01(gen), a, b, z);
  }
  return csv(text);
}

}  // namespace

TEST(Formula, ParseAndErrors) {
  const auto f = ModelFormula::parse(" price ~ x:y:z + depth ");
  EXPECT_EQ(f.response, "price");
  ASSERT_EQ(f.terms.size(), 2u);
  EXPECT_EQ(f.terms[0].label(), "x:y:z");
  EXPECT_EQ(f.str(), "price ~ x:y:z + depth");
  EXPECT_EQ(f.parameters(), 3u);
  EXPECT_THROW(ModelFormula::parse("price x"), Error);
  EXPECT_THROW(ModelFormula::parse("~ x"), Error);
  EXPECT_THROW(ModelFormula::parse("y ~ "), Error);
  EXPECT_THROW(ModelFormula::parse("y ~ a + a"), Error);
  EXPECT_THROW(ModelFormula::parse("y ~ y"), Error);
  EXPECT_THROW(ModelFormula::parse("y ~ a^0"), Error);
  EXPECT_THROW(ModelFormula::parse("y ~ a + "), Error);
}

TEST(DesignMatrix, Examples) {
  const auto ds = csv("y,a,x,z,w,s\n0,1,2,3,4,p\n0,2,3,4,5,q\n");
  const std::vector<std::size_t> rows{0, 1};
  Eigen::MatrixXd expected(2, 2);
  expected << 1, 1, 1, 2;
  EXPECT_EQ(design_matrix(ds, ModelFormula::parse("y ~ a"), rows), expected);
  const std::vector<std::size_t> first{0};
  EXPECT_EQ(design_matrix(ds, ModelFormula::parse("y ~ x:z:w"), first)(0, 1), 24.0);
  const auto ds3 = csv("y,a\n0,3\n1,1\n");
  EXPECT_EQ(design_matrix(ds3, ModelFormula::parse("y ~ a^2"), first)(0, 1), 9.0);
  EXPECT_THROW(design_matrix(ds, ModelFormula::parse("y ~ s"), rows), Error);
  EXPECT_THROW(design_matrix(ds, ModelFormula::parse("s ~ a"), rows), Error);
  EXPECT_THROW(design_matrix(ds, ModelFormula::parse("y ~ nope"), rows), Error);
}

TEST(SelectionFor, ResponseThenTerms) {
  const auto sel = selection_for(testing_support::abalone(), abalone_formula());
  EXPECT_EQ(sel.names(), (std::vector<std::string>{"Rings", "LongestShell", "Diameter", "Height"}));
}

TEST(NormalizedAic, Arithmetic) {
  EXPECT_DOUBLE_EQ(normalized_aic(100.0, 100, 2), 4.0 / 100.0);
  EXPECT_DOUBLE_EQ(normalized_aic(50.0, 100, 4), std::log(0.5) + 0.08);
  EXPECT_EQ(normalized_aic(0.0, 10, 2), -std::numeric_limits<double>::infinity());
}

TEST(FitOls, ExactFit) {
  const auto ds = csv("y,x\n2,1\n4,2\n6,3\n8,4\n10,5\n12,6\n");
  const auto split = make_split({0, 2, 3, 5}, {1, 4}, 6);
  const auto fit = fit_ols(ds, ModelFormula::parse("y ~ x"), split);
  EXPECT_NEAR(fit.coefficients(0), 0.0, 1e-12);
  EXPECT_NEAR(fit.coefficients(1), 2.0, 1e-12);
  EXPECT_NEAR(fit.rss_train, 0.0, 1e-20);
  EXPECT_EQ(fit.r2_train, 1.0);
  EXPECT_EQ(fit.aicn_train, -std::numeric_limits<double>::infinity());
  EXPECT_EQ(fit.aicn_test, -std::numeric_limits<double>::infinity());
  EXPECT_EQ(fit.warnings.size(), 2u);
}

TEST(FitOls, MatchesNormalEquationsOracle) {
  std::mt19937_64 gen(51);
  std::normal_distribution<double> n01;
  for (int rep = 0; rep < 50; ++rep) {
    const int p = 1 + rep % 5;
    const int n = p + 5 + rep % 40;
    Eigen::MatrixXd x(n, p);
    x.col(0).setOnes();
    x.rightCols(p - 1) = oracle::random_matrix(gen, n, p - 1);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) y(i) = n01(gen) + x.row(i).sum();
    const auto fit = fit_ols(x, y, x.topRows(3), y.head(3));
    const auto beta = oracle::normal_equations(x, y);
    for (int j = 0; j < p; ++j) EXPECT_NEAR(fit.coefficients(j), beta[j], 1e-8);
  }
}

TEST(FitOls, ResidualsAreOrthogonalToTheDesign) {
  const auto ds = noisy_linear(300, 52);
  const auto f = ModelFormula::parse("y ~ a + b + a:b");
  const auto split = random_split(ds.rows(), 0.7, 1);
  const auto fit = fit_ols(ds, f, split);
  const Eigen::MatrixXd x = design_matrix(ds, f, split.train);
  const Eigen::VectorXd resid = response_vector(ds, f, split.train) - x * fit.coefficients;
  const Eigen::VectorXd inner = x.transpose() * resid;
  for (Eigen::Index j = 0; j < x.cols(); ++j) EXPECT_LE(std::abs(inner(j)), 1e-8 * x.col(j).norm() * resid.norm());
}

TEST(FitOls, RowOrderDoesNotChangeAicn) {
  const auto ds = noisy_linear(200, 53);
  const auto f = ModelFormula::parse("y ~ a + b");
  const auto split = random_split(ds.rows(), 0.75, 2);
  const auto fit = fit_ols(ds, f, split);
  auto train = split.train;
  auto test = split.test;
  std::reverse(train.begin(), train.end());
  std::rotate(test.begin(), test.begin() + 7, test.end());
  const auto shuffled = fit_ols(design_matrix(ds, f, train), response_vector(ds, f, train), design_matrix(ds, f, test),
                                response_vector(ds, f, test));
  EXPECT_NEAR(shuffled.aicn_train, fit.aicn_train, 1e-12);
  EXPECT_NEAR(shuffled.aicn_test, fit.aicn_test, 1e-12);
}

TEST(FitOls, IrrelevantTermAccounting) {
  const auto ds = noisy_linear(150, 54);
  const auto split = random_split(ds.rows(), 0.8, 3);
  const auto small = fit_ols(ds, ModelFormula::parse("y ~ a + b"), split);
  const auto big = fit_ols(ds, ModelFormula::parse("y ~ a + b + z"), split);
  EXPECT_LE(big.rss_train, small.rss_train);
  EXPECT_EQ(big.k, small.k + 1);
  const double n = static_cast<double>(small.n_train);
  const double expected = std::log(big.rss_train / n) - std::log(small.rss_train / n) + 2.0 / n;
  EXPECT_NEAR(big.aicn_train - small.aicn_train, expected, 1e-12);
}

TEST(FitOls, TestR2IsCenteredOnTheTestMean) {
  const auto ds = noisy_linear(120, 55);
  const auto f = ModelFormula::parse("y ~ a + b");
  const auto split = random_split(ds.rows(), 0.5, 4);
  const auto fit = fit_ols(ds, f, split);
  const Eigen::VectorXd y = response_vector(ds, f, split.test);
  const double tss = (y.array() - y.mean()).square().sum();
  EXPECT_NEAR(fit.r2_test, 1.0 - fit.rss_test / tss, 1e-12);
  EXPECT_GE(fit.r2_train, 0.0);
  EXPECT_LE(fit.r2_train, 1.0);
}

TEST(FitOls, RankDeficientDesign) {
  const auto ds = csv("y,a,b\n1,1,2\n2,2,4\n3,3,6\n5,4,8\n4,5,10\n");
  const auto split = make_split({0, 1, 2, 3}, {4}, 5);
  EXPECT_THROW(fit_ols(ds, ModelFormula::parse("y ~ a + b"), split), RankDeficientError);
}

TEST(FitOls, AbaloneTrainScoreMagnitude) {
  const auto& ds = testing_support::abalone();
  const auto fit = fit_ols(ds, abalone_formula(), random_split(ds.rows(), 0.8, 0));
  EXPECT_EQ(fit.k, 4u);
  EXPECT_EQ(fit.n_train, 3342u);
  EXPECT_GT(fit.aicn_train, 1.7);
  EXPECT_LT(fit.aicn_train, 2.0);
}

TEST(AssociationSweep, EmptyAndDeterministic) {
  const auto& ds = testing_support::abalone();
  const auto sel = selection_for(ds, abalone_formula());
  EXPECT_TRUE(association_sweep(ds, sel, abalone_formula(), 0.8, 0, 1).empty());
  const auto a = association_sweep(ds, sel, abalone_formula(), 0.8, 50, 9);
  const auto b = association_sweep(ds, sel, abalone_formula(), 0.8, 50, 9, 3);
  ASSERT_EQ(a.size(), 50u);
  TestConfig cfg;
  cfg.n_sims = 100;
  cfg.master_seed = 9;
  const auto null = simulate_null(ds, sel, 0.8, cfg);
  for (std::size_t j = 0; j < a.size(); ++j) {
    EXPECT_EQ(a[j].sim_index, j);
    EXPECT_EQ(a[j].lambda, b[j].lambda);
    EXPECT_EQ(a[j].aicn_test, b[j].aicn_test);
    EXPECT_EQ(a[j].lambda, null[j]);
    EXPECT_EQ(a[j].flag, "ok");
  }
}

TEST(AssociationSweep, DistanceCorrelatesWithTestScore) {
  const auto& ds = testing_support::abalone();
  const auto rows = association_sweep(ds, selection_for(ds, abalone_formula()), abalone_formula(), 0.8, 1000, 0);
  double ml = 0, ma = 0;
  for (const auto& r : rows) ml += r.lambda, ma += r.aicn_test;
  ml /= rows.size();
  ma /= rows.size();
  double sxy = 0, sxx = 0, syy = 0;
  for (const auto& r : rows) {
    sxy += (r.lambda - ml) * (r.aicn_test - ma);
    sxx += (r.lambda - ml) * (r.lambda - ml);
    syy += (r.aicn_test - ma) * (r.aicn_test - ma);
  }
  EXPECT_GT(sxy / std::sqrt(sxx * syy), 0.0);
}

TEST(AssociationSweep, FailuresAreFlaggedNotFatal) {
  // The response is an exact linear function of x, and column c is constant.
  std::string text = "y,x,c\n";
  for (int i = 0; i < 20; ++i) text += fmt::format("{},{},7\n", 3 * i + 1, i);
  const auto ds = csv(text);
  const auto f = ModelFormula::parse("y ~ x");
  const auto perfect = association_sweep(ds, select_columns(ds, std::vector<std::string>{"x"}), f, 0.5, 5, 0);
  for (const auto& r : perfect) EXPECT_EQ(r.flag, "perfect_fit");
  const auto singular = association_sweep(ds, select_columns(ds, std::vector<std::string>{"c"}), f, 0.5, 5, 0);
  for (const auto& r : singular) {
    EXPECT_EQ(r.flag, "singular_covariance");
    EXPECT_TRUE(std::isnan(r.lambda));
  }
  const auto collinear = association_sweep(ds, select_columns(ds, std::vector<std::string>{"x"}),
                                           ModelFormula::parse("y ~ x + c"), 0.5, 5, 0);
  for (const auto& r : collinear) EXPECT_EQ(r.flag, "rank_deficient");
}
