#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <fmt/format.h>

#include "splitdiag/dataset.hpp"
#include "splitdiag/distance.hpp"
#include "splitdiag/error.hpp"
#include "splitdiag/parallel.hpp"
#include "splitdiag/rng.hpp"
#include "splitdiag/splitters.hpp"

namespace splitdiag {

enum class Decision { accept, reject };

inline std::string_view to_string(Decision d) { return d == Decision::accept ? "accept" : "reject"; }

inline Decision parse_decision(std::string_view s) {
  if (s == "accept") return Decision::accept;
  if (s == "reject") return Decision::reject;
  throw Error(fmt::format("unknown decision '{}'", s));
}

struct TestConfig {
  double alpha = 0.05;
  std::size_t n_sims = 1000;
  std::uint64_t master_seed = 0;
  /// Pool the observed statistic into the simulated sample.
  bool include_observed = false;
  /// Upper bound on worker threads; results do not depend on it.
  std::size_t workers = 1;

  void validate() const {
    if (!(alpha > 0.0 && alpha < 1.0)) throw Error(fmt::format("alpha {} is not in (0, 1)", alpha));
    if (n_sims < 100) throw Error(fmt::format("need at least 100 simulations, got {}", n_sims));
    if (alpha * static_cast<double>(n_sims + 1) < 1.0 - 1e-12)
      throw Error(fmt::format("{} simulations cannot resolve a p-value of {}; need alpha * (N + 1) >= 1", n_sims,
                              alpha));
    if (workers == 0) throw Error("worker count must be at least 1");
  }
};

struct TestDecision {
  double threshold_c = 0.0;
  double p_value = 1.0;
  Decision decision = Decision::accept;
};

/// p above this marks a split whose partitions are closer than random splits
/// usually are. Reported, never rejected.
inline constexpr double kSmallDistanceFlagP = 0.99;

namespace detail {

/// 1-based rank of the (1 - alpha) order statistic in a sample of size m.
inline std::size_t threshold_rank(double alpha, std::size_t m) {
  const double r = std::ceil((1.0 - alpha) * static_cast<double>(m) - 1e-9);
  return std::clamp<std::size_t>(static_cast<std::size_t>(std::max(r, 1.0)), 1, m);
}

inline double order_statistic(std::span<const double> sample, std::size_t rank) {
  std::vector<double> copy(sample.begin(), sample.end());
  std::nth_element(copy.begin(), copy.begin() + static_cast<std::ptrdiff_t>(rank - 1), copy.end());
  return copy[rank - 1];
}

}  // namespace detail

/**
 * Monte Carlo decision for an observed statistic against a simulated null
 * sample of size N:
 *   p = (1 + #{null >= observed}) / (N + 1)
 *   c = order statistic of rank ceil((1 - alpha)(N + 1))
 *   reject iff p <= alpha
 */
inline TestDecision decide(std::span<const double> null_sample, double lambda_obs, double alpha) {
  if (null_sample.empty()) throw Error("null sample is empty");
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(fmt::format("alpha {} is not in (0, 1)", alpha));
  const auto n = null_sample.size();
  const auto at_least = static_cast<std::size_t>(
      std::count_if(null_sample.begin(), null_sample.end(), [&](double v) { return v >= lambda_obs; }));
  TestDecision out;
  out.p_value = static_cast<double>(1 + at_least) / static_cast<double>(n + 1);
  out.threshold_c = detail::order_statistic(null_sample, detail::threshold_rank(alpha, n + 1));
  out.decision = out.p_value <= alpha ? Decision::reject : Decision::accept;
  return out;
}

/// Same test when the observed value is already part of `pooled`.
inline TestDecision decide_pooled(std::span<const double> pooled, double lambda_obs, double alpha) {
  if (pooled.empty()) throw Error("null sample is empty");
  const auto m = pooled.size();
  const auto at_least =
      static_cast<std::size_t>(std::count_if(pooled.begin(), pooled.end(), [&](double v) { return v >= lambda_obs; }));
  TestDecision out;
  out.p_value = static_cast<double>(std::max<std::size_t>(at_least, 1)) / static_cast<double>(m);
  out.threshold_c = detail::order_statistic(pooled, detail::threshold_rank(alpha, m));
  out.decision = out.p_value <= alpha ? Decision::reject : Decision::accept;
  return out;
}

/// Gathers `rows` of `data` (in the given order) into a new matrix.
template <typename Derived>
typename Derived::PlainObject gather_rows(const Eigen::MatrixBase<Derived>& data, std::span<const std::size_t> rows) {
  typename Derived::PlainObject out(static_cast<Eigen::Index>(rows.size()), data.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = data.row(static_cast<Eigen::Index>(rows[i]));
  return out;
}

/**
 * Draws random splits of a fixed data matrix at a fixed train size and
 * evaluates the split distance for each. Simulation j uses the seed
 * rng::stream_seed(master_seed, j), and its partition equals
 * random_split(n, k / n, that seed).
 */
class NullSimulator {
 public:
  NullSimulator(Eigen::MatrixXd data, std::size_t train_rows) : data_(std::move(data)), k_(train_rows) {
    const auto n = static_cast<std::size_t>(data_.rows());
    if (k_ == 0 || k_ >= n) throw Error(fmt::format("train size {} leaves an empty partition of {} rows", k_, n));
  }

  std::size_t rows() const noexcept { return static_cast<std::size_t>(data_.rows()); }
  std::size_t train_rows() const noexcept { return k_; }
  const Eigen::MatrixXd& data() const noexcept { return data_; }

  /// Train/test membership of the random split drawn from `seed`, in row order.
  std::pair<std::vector<std::size_t>, std::vector<std::size_t>> partition(std::uint64_t seed) const {
    const auto n = rows();
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    rng::Engine engine(seed);
    rng::partial_shuffle(std::span<std::size_t>(perm), k_, engine);
    std::vector<char> in_train(n, 0);
    for (std::size_t i = 0; i < k_; ++i) in_train[perm[i]] = 1;
    std::pair<std::vector<std::size_t>, std::vector<std::size_t>> out;
    out.first.reserve(k_);
    out.second.reserve(n - k_);
    for (std::size_t i = 0; i < n; ++i) (in_train[i] ? out.first : out.second).push_back(i);
    return out;
  }

  LambdaStatistic evaluate(std::uint64_t seed) const {
    const auto [train, test] = partition(seed);
    return lambda_metric(gather_rows(data_, train), gather_rows(data_, test));
  }

  struct Sample {
    std::vector<double> values;
    std::size_t ridge_count = 0;
  };

  Sample run(std::size_t n_sims, std::uint64_t master_seed, std::size_t workers) const {
    Sample out;
    out.values.assign(n_sims, 0.0);
    std::vector<char> ridged(n_sims, 0);
    parallel_for(n_sims, workers, [&](std::size_t j) {
      try {
        const auto stat = evaluate(rng::stream_seed(master_seed, j));
        out.values[j] = stat.lambda;
        ridged[j] = stat.regularization_used > 0.0 ? 1 : 0;
      } catch (const DegenerateDataError& e) {
        throw DegenerateDataError(fmt::format("simulation {}: {}", j, e.what()));
      }
    });
    out.ridge_count = static_cast<std::size_t>(std::count(ridged.begin(), ridged.end(), 1));
    return out;
  }

 private:
  Eigen::MatrixXd data_;
  std::size_t k_;
};

struct SimulationResult {
  LambdaStatistic observed;
  /// Simulated statistics in simulation order (the observed value is not included).
  std::vector<double> null_sample;
  double threshold_c = 0.0;
  double p_value = 1.0;
  Decision decision = Decision::accept;
  /// Observed split is closer than nearly all random splits (p > 0.99).
  bool unusually_small = false;
  double fraction = 0.0;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  std::vector<std::string> columns;
  TestConfig config;
  /// Simulations whose pooled covariance needed a ridge.
  std::size_t ridge_count = 0;

  double lambda_obs() const noexcept { return observed.lambda; }
};

/// Null distribution of the split distance at `fraction`, in simulation order.
inline std::vector<double> simulate_null(const Dataset& ds, const ColumnSelection& sel, double fraction,
                                         const TestConfig& cfg) {
  cfg.validate();
  const NullSimulator sim(view_all(ds, sel), train_size(ds.rows(), fraction));
  return sim.run(cfg.n_sims, cfg.master_seed, cfg.workers).values;
}

/// Decision for an observed statistic against an existing simulated sample.
inline TestDecision decide_with(const std::vector<double>& null_sample, double lambda_obs, const TestConfig& cfg) {
  if (!cfg.include_observed) return decide(null_sample, lambda_obs, cfg.alpha);
  std::vector<double> pooled(null_sample);
  pooled.push_back(lambda_obs);
  return decide_pooled(pooled, lambda_obs, cfg.alpha);
}

inline SimulationResult assemble_result(const LambdaStatistic& observed, NullSimulator::Sample sample,
                                        const SplitIndices& split, const ColumnSelection& sel,
                                        const TestConfig& cfg) {
  SimulationResult out;
  out.observed = observed;
  out.null_sample = std::move(sample.values);
  out.ridge_count = sample.ridge_count;
  const auto verdict = decide_with(out.null_sample, observed.lambda, cfg);
  out.threshold_c = verdict.threshold_c;
  out.p_value = verdict.p_value;
  out.decision = verdict.decision;
  out.unusually_small = verdict.p_value > kSmallDistanceFlagP;
  out.fraction = split.fraction;
  out.n_train = split.train.size();
  out.n_test = split.test.size();
  out.columns = sel.names();
  out.config = cfg;
  return out;
}

/**
 * Monte Carlo test of a train/test split. The observed split distance is
 * compared with N distances from random splits of the whole dataset at the
 * same train size. Bit-reproducible given the inputs and config; the worker
 * count does not affect the result.
 */
inline SimulationResult run_test(const Dataset& ds, const ColumnSelection& sel, const SplitIndices& split,
                                 const TestConfig& cfg) {
  cfg.validate();
  if (split.rows() != ds.rows())
    throw Error(fmt::format("split covers {} rows, dataset has {}", split.rows(), ds.rows()));
  const NullSimulator sim(view_all(ds, sel), split.train.size());
  const auto observed = lambda_metric(gather_rows(sim.data(), split.train), gather_rows(sim.data(), split.test));
  return assemble_result(observed, sim.run(cfg.n_sims, cfg.master_seed, cfg.workers), split, sel, cfg);
}

}  // namespace splitdiag
