#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <fmt/format.h>

#include "splitdiag/dataset.hpp"
#include "splitdiag/error.hpp"
#include "splitdiag/rng.hpp"

namespace splitdiag {

enum class Strategy { random, stratified, adversarial, cluster, cadex, duplex };

inline std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::random: return "random";
    case Strategy::stratified: return "stratified";
    case Strategy::adversarial: return "adversarial";
    case Strategy::cluster: return "cluster";
    case Strategy::cadex: return "cadex";
    case Strategy::duplex: return "duplex";
  }
  return "?";
}

inline Strategy parse_strategy(std::string_view name) {
  for (auto s : {Strategy::random, Strategy::stratified, Strategy::adversarial, Strategy::cluster, Strategy::cadex,
                 Strategy::duplex})
    if (to_string(s) == name) return s;
  throw Error(fmt::format("unknown split strategy '{}' (expected random, stratified, adversarial, cluster, cadex, duplex)",
                          name));
}

/// Which partition receives the subset picked by Kennard-Stone selection.
enum class SubsetRole { train, test };

struct SplitSpec {
  Strategy strategy = Strategy::random;
  double fraction = 0.8;
  std::uint64_t seed = 0;
  /// Stratum, sort or group column, depending on strategy.
  std::string key_column;
  /// Distance columns for cadex/duplex; all numeric columns when empty.
  std::optional<ColumnSelection> distance_columns;
  SubsetRole subset_role = SubsetRole::test;
};

/// floor(x + 0.5): the single rounding rule used for every partition size.
inline std::size_t round_half_up(double x) { return static_cast<std::size_t>(std::floor(x + 0.5)); }

/// Train size for `n` rows at `fraction`; both sides must be non-empty.
inline std::size_t train_size(std::size_t n, double fraction) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw Error(fmt::format("split fraction {} is not in (0, 1)", fraction));
  if (n < 2) throw Error(fmt::format("cannot split {} rows", n));
  const std::size_t k = round_half_up(fraction * static_cast<double>(n));
  if (k == 0 || k >= n)
    throw Error(fmt::format("fraction {} of {} rows leaves an empty partition", fraction, n));
  return k;
}

namespace detail {

inline SplitIndices from_mask(const std::vector<char>& in_train) {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
  for (std::size_t i = 0; i < in_train.size(); ++i) (in_train[i] ? train : test).push_back(i);
  return make_split(std::move(train), std::move(test), in_train.size());
}

/// Dense group ids for a categorical column (level order) or a numeric column
/// (ascending distinct values).
inline std::vector<std::size_t> group_ids(const Dataset& ds, const Column& c, std::size_t& groups) {
  std::vector<std::size_t> ids(ds.rows());
  if (c.kind == ColumnKind::categorical) {
    const auto& cat = ds.categorical(c);
    for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<std::size_t>(cat.codes[i]);
    groups = cat.levels.size();
    return ids;
  }
  std::map<double, std::size_t> index;
  for (std::size_t i = 0; i < ids.size(); ++i) index.emplace(ds.value(i, c), 0);
  std::size_t next = 0;
  for (auto& [value, id] : index) id = next++;
  for (std::size_t i = 0; i < ids.size(); ++i) ids[i] = index.at(ds.value(i, c));
  groups = index.size();
  return ids;
}

}  // namespace detail

/// Uniformly random train subset of size round(fraction * n).
inline SplitIndices random_split(std::size_t n, double fraction, std::uint64_t seed) {
  const std::size_t k = train_size(n, fraction);
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  rng::Engine engine(seed);
  rng::partial_shuffle(std::span<std::size_t>(perm), k, engine);
  std::vector<std::size_t> train(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(k));
  std::vector<std::size_t> test(perm.begin() + static_cast<std::ptrdiff_t>(k), perm.end());
  return make_split(std::move(train), std::move(test), n);
}

/// Maximum number of distinct values for a numeric stratum column.
inline constexpr std::size_t kMaxNumericStrata = 50;

/// Within each stratum, round(fraction * n_stratum) rows go to train at random.
inline SplitIndices stratified_split(const Dataset& ds, std::string_view stratum_column, double fraction,
                                     std::uint64_t seed, Warnings* warnings = nullptr) {
  train_size(ds.rows(), fraction);
  const Column& c = ds.column(stratum_column);
  std::size_t groups = 0;
  const auto ids = detail::group_ids(ds, c, groups);
  if (c.kind == ColumnKind::numeric && groups > kMaxNumericStrata)
    throw Error(fmt::format("numeric stratum column '{}' has {} distinct values (limit {})", c.name, groups,
                            kMaxNumericStrata));
  std::vector<std::vector<std::size_t>> members(groups);
  for (std::size_t i = 0; i < ids.size(); ++i) members[ids[i]].push_back(i);

  rng::Engine engine(seed);
  std::vector<char> in_train(ds.rows(), 0);
  for (std::size_t g = 0; g < groups; ++g) {
    auto& rows = members[g];
    if (rows.empty()) continue;
    const std::size_t k = round_half_up(fraction * static_cast<double>(rows.size()));
    if (k == 0 || k == rows.size()) {
      const bool to_train = fraction >= 0.5;
      warn(warnings, fmt::format("stratum {} of '{}' ({} rows) cannot populate both sides; all rows go to {}", g,
                                 c.name, rows.size(), to_train ? "train" : "test"));
      for (auto r : rows) in_train[r] = to_train ? 1 : 0;
      continue;
    }
    rng::partial_shuffle(std::span<std::size_t>(rows), k, engine);
    for (std::size_t i = 0; i < k; ++i) in_train[rows[i]] = 1;
  }
  return detail::from_mask(in_train);
}

/// Sort ascending on a numeric column (stable); the lowest round(fraction * n) rows train.
inline SplitIndices adversarial_split(const Dataset& ds, std::string_view sort_column, double fraction) {
  const std::size_t k = train_size(ds.rows(), fraction);
  const Column& c = ds.numeric_column(sort_column);
  std::vector<std::size_t> order(ds.rows());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return ds.value(a, c) < ds.value(b, c); });
  std::vector<std::size_t> train(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
  std::vector<std::size_t> test(order.begin() + static_cast<std::ptrdiff_t>(k), order.end());
  return make_split(std::move(train), std::move(test), ds.rows());
}

/// Whole groups go to train in random order until train holds at least
/// fraction * n rows; the last remaining group always stays in test.
inline SplitIndices cluster_split(const Dataset& ds, std::string_view group_column, double fraction,
                                  std::uint64_t seed) {
  train_size(ds.rows(), fraction);
  const Column& c = ds.column(group_column);
  std::size_t groups = 0;
  const auto ids = detail::group_ids(ds, c, groups);
  if (groups < 2) throw Error(fmt::format("cluster split needs at least 2 groups in '{}', found {}", c.name, groups));
  std::vector<std::size_t> sizes(groups, 0);
  for (auto g : ids) ++sizes[g];

  std::vector<std::size_t> order(groups);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng::Engine engine(seed);
  rng::partial_shuffle(std::span<std::size_t>(order), groups, engine);

  const double target = fraction * static_cast<double>(ds.rows());
  std::vector<char> group_in_train(groups, 0);
  std::size_t taken = 0;
  for (std::size_t i = 0; i + 1 < groups && static_cast<double>(taken) < target; ++i) {
    group_in_train[order[i]] = 1;
    taken += sizes[order[i]];
  }
  std::vector<char> in_train(ds.rows(), 0);
  for (std::size_t i = 0; i < ids.size(); ++i) in_train[i] = group_in_train[ids[i]];
  return detail::from_mask(in_train);
}

// ---------------------------------------------------------------------------
// Deterministic max-min distance splitters.

namespace detail {

/// Selected columns, each centered and scaled to unit sample variance.
/// Zero-variance columns are only centered.
inline Eigen::MatrixXd standardized(const Dataset& ds, const ColumnSelection& sel) {
  Eigen::MatrixXd z = view_all(ds, sel);
  const Eigen::RowVectorXd mean = z.colwise().mean();
  z.rowwise() -= mean;
  for (Eigen::Index j = 0; j < z.cols(); ++j) {
    const double sd = std::sqrt(z.col(j).squaredNorm() / static_cast<double>(z.rows() - 1));
    if (sd > 0.0) z.col(j) /= sd;
  }
  return z;
}

/// Max-min Euclidean distance selection over row-major points.
class MaxMinSelector {
 public:
  explicit MaxMinSelector(const Eigen::MatrixXd& points) : pts_(points.transpose()), n_(points.rows()) {}

  std::size_t size() const noexcept { return static_cast<std::size_t>(n_); }

  /// Farthest pair among rows with available[i] set; lowest (i, j) wins ties.
  /// Coincident candidates are an error unless `allow_coincident`.
  std::pair<std::size_t, std::size_t> farthest_pair(const std::vector<char>& available,
                                                    bool allow_coincident = false) const {
    double best = -1.0;
    std::pair<std::size_t, std::size_t> pair{0, 0};
    const Eigen::Index dim = pts_.rows();
    const double* data = pts_.data();
    for (Eigen::Index i = 0; i < n_; ++i) {
      if (!available[static_cast<std::size_t>(i)]) continue;
      const double* pi = data + i * dim;
      for (Eigen::Index j = i + 1; j < n_; ++j) {
        if (!available[static_cast<std::size_t>(j)]) continue;
        const double* pj = data + j * dim;
        double d = 0.0;
        for (Eigen::Index k = 0; k < dim; ++k) d += (pj[k] - pi[k]) * (pj[k] - pi[k]);
        if (d > best) {
          best = d;
          pair = {static_cast<std::size_t>(i), static_cast<std::size_t>(j)};
        }
      }
    }
    if (best <= 0.0 && !allow_coincident) throw Error("all candidate points coincide; max-min distance selection is undefined");
    return pair;
  }

  /// Squared distance of every row to `row`.
  Eigen::VectorXd distances_to(std::size_t row) const {
    return (pts_.colwise() - pts_.col(static_cast<Eigen::Index>(row))).colwise().squaredNorm().transpose();
  }

  /// Available row with the largest value of `min_dist`; lowest index wins ties.
  static std::size_t argmax(const Eigen::VectorXd& min_dist, const std::vector<char>& available) {
    double best = -1.0;
    std::size_t arg = min_dist.size();
    for (Eigen::Index i = 0; i < min_dist.size(); ++i) {
      if (available[static_cast<std::size_t>(i)] && min_dist(i) > best) {
        best = min_dist(i);
        arg = static_cast<std::size_t>(i);
      }
    }
    return arg;
  }

 private:
  Eigen::MatrixXd pts_;  // d x n, one column per row
  Eigen::Index n_;
};

/// Kennard-Stone selection of `count` rows: start from the farthest pair, then
/// repeatedly add the row whose nearest selected row is farthest away.
inline std::vector<std::size_t> kennard_stone(const MaxMinSelector& sel, std::size_t count) {
  const std::size_t n = sel.size();
  std::vector<char> available(n, 1);
  const auto [a, b] = sel.farthest_pair(available);
  std::vector<std::size_t> chosen{a};
  available[a] = 0;
  if (count == 1) return chosen;
  chosen.push_back(b);
  available[b] = 0;
  Eigen::VectorXd min_dist = sel.distances_to(a).cwiseMin(sel.distances_to(b));
  while (chosen.size() < count) {
    const std::size_t next = MaxMinSelector::argmax(min_dist, available);
    chosen.push_back(next);
    available[next] = 0;
    min_dist = min_dist.cwiseMin(sel.distances_to(next));
  }
  return chosen;
}

}  // namespace detail

/**
 * CADEX (Kennard-Stone) split on standardized Euclidean distance.
 *
 * With role == train the K-S subset of round(fraction * n) rows is the
 * training set. With role == test the K-S subset of n - round(fraction * n)
 * rows is the test set, which is how deterministic subsamplers are compared
 * against random splitting.
 */
inline SplitIndices cadex_split(const Dataset& ds, const ColumnSelection& sel, double fraction,
                                SubsetRole role = SubsetRole::test) {
  const std::size_t n = ds.rows();
  const std::size_t k = train_size(n, fraction);
  const detail::MaxMinSelector selector(detail::standardized(ds, sel));
  const std::size_t count = role == SubsetRole::train ? k : n - k;
  const auto chosen = detail::kennard_stone(selector, count);
  std::vector<char> in_train(n, role == SubsetRole::train ? 0 : 1);
  for (auto r : chosen) in_train[r] = role == SubsetRole::train ? 1 : 0;
  return detail::from_mask(in_train);
}

/**
 * DUPLEX split on standardized Euclidean distance. The farthest pair seeds
 * train, the farthest remaining pair seeds test, then the sides alternately
 * take the remaining row farthest from themselves until test holds
 * n - round(fraction * n) rows. Leftover rows go to train. A side with
 * capacity 1 takes a single point instead of a pair.
 */
inline SplitIndices duplex_split(const Dataset& ds, const ColumnSelection& sel, double fraction) {
  const std::size_t n = ds.rows();
  const std::size_t k = train_size(n, fraction);
  const std::size_t m = n - k;
  const detail::MaxMinSelector selector(detail::standardized(ds, sel));
  std::vector<char> available(n, 1);
  std::vector<char> in_train(n, 1);
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  const double inf = std::numeric_limits<double>::infinity();
  Eigen::VectorXd to_train = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(n), inf);
  Eigen::VectorXd to_test = to_train;

  auto take = [&](std::size_t row, bool train_side) {
    available[row] = 0;
    in_train[row] = train_side ? 1 : 0;
    auto& dist = train_side ? to_train : to_test;
    dist = dist.cwiseMin(selector.distances_to(row));
    ++(train_side ? n_train : n_test);
  };

  const auto [a, b] = selector.farthest_pair(available);
  take(a, true);
  take(b, k >= 2);
  if (n_test == 0) {
    if (m >= 2) {
      const auto [c, d] = selector.farthest_pair(available, true);
      take(c, false);
      take(d, false);
    } else {
      take(detail::MaxMinSelector::argmax(to_train, available), false);
    }
  }
  bool train_turn = true;
  while (n_test < m) {
    const bool side = train_turn && n_train < k;
    take(detail::MaxMinSelector::argmax(side ? to_train : to_test, available), side);
    train_turn = !train_turn;
  }
  return detail::from_mask(in_train);
}

/// Dispatches on spec.strategy.
inline SplitIndices make_split(const Dataset& ds, const SplitSpec& spec, Warnings* warnings = nullptr) {
  auto key = [&]() -> const std::string& {
    if (spec.key_column.empty())
      throw Error(fmt::format("strategy '{}' needs a key column", to_string(spec.strategy)));
    return spec.key_column;
  };
  auto distance_columns = [&] { return spec.distance_columns ? *spec.distance_columns : select_columns(ds); };
  switch (spec.strategy) {
    case Strategy::random: return random_split(ds.rows(), spec.fraction, spec.seed);
    case Strategy::stratified: return stratified_split(ds, key(), spec.fraction, spec.seed, warnings);
    case Strategy::adversarial: return adversarial_split(ds, key(), spec.fraction);
    case Strategy::cluster: return cluster_split(ds, key(), spec.fraction, spec.seed);
    case Strategy::cadex: return cadex_split(ds, distance_columns(), spec.fraction, spec.subset_role);
    case Strategy::duplex: return duplex_split(ds, distance_columns(), spec.fraction);
  }
  throw Error("unhandled strategy");
}

// ---------------------------------------------------------------------------
// Two-column split files: row_index,partition

inline void write_split_csv(const SplitIndices& split, std::ostream& out) {
  std::vector<char> in_train(split.rows(), 0);
  for (auto r : split.train) in_train[r] = 1;
  out << "row_index,partition\n";
  for (std::size_t i = 0; i < in_train.size(); ++i) out << i << ',' << (in_train[i] ? "train" : "test") << '\n';
}

inline void write_split_csv(const SplitIndices& split, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(fmt::format("cannot write '{}'", path.string()));
  write_split_csv(split, out);
}

inline SplitIndices read_split_csv(std::istream& in, std::size_t n) {
  detail::CsvReader reader(in, ',');
  std::vector<std::string> fields;
  if (!reader.next(fields) || fields.size() != 2 || detail::trim(fields[0]) != "row_index" ||
      detail::trim(fields[1]) != "partition")
    throw Error("split file must start with the header 'row_index,partition'");
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
  while (reader.next(fields)) {
    if (detail::is_blank_record(fields)) continue;
    if (fields.size() != 2) throw Error(fmt::format("split file line {}: expected 2 fields", reader.line()));
    const auto idx_text = detail::trim(fields[0]);
    std::size_t idx = 0;
    const auto [ptr, ec] = std::from_chars(idx_text.data(), idx_text.data() + idx_text.size(), idx);
    if (ec != std::errc{} || ptr != idx_text.data() + idx_text.size())
      throw Error(fmt::format("split file line {}: bad row index '{}'", reader.line(), idx_text));
    const auto part = detail::trim(fields[1]);
    if (part == "train") train.push_back(idx);
    else if (part == "test") test.push_back(idx);
    else throw Error(fmt::format("split file line {}: partition must be train or test, got '{}'", reader.line(), part));
  }
  return make_split(std::move(train), std::move(test), n);
}

inline SplitIndices read_split_csv(const std::filesystem::path& path, std::size_t n) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(fmt::format("cannot read split file '{}'", path.string()));
  return read_split_csv(in, n);
}

}  // namespace splitdiag
