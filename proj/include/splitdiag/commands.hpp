#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "splitdiag/dataset.hpp"
#include "splitdiag/error.hpp"
#include "splitdiag/hypothesis.hpp"
#include "splitdiag/model.hpp"
#include "splitdiag/report.hpp"
#include "splitdiag/splitters.hpp"

namespace splitdiag {

/// Exit status contract of the command-line front end.
enum ExitCode : int { kExitAccept = 0, kExitError = 1, kExitReject = 2 };

struct RunConfig {
  std::filesystem::path data;
  char delimiter = ',';
  std::vector<std::string> columns;
  std::string formula;
  std::vector<std::string> strategies;
  double fraction = 0.8;
  /// Seed of the observed split for seeded strategies; defaults to `seed`.
  std::optional<std::uint64_t> split_seed;
  std::string key;
  SubsetRole subset_role = SubsetRole::test;
  std::filesystem::path split_file;
  double alpha = 0.05;
  std::size_t sims = 1000;
  std::uint64_t seed = 0;
  std::filesystem::path out = ".";
  bool plot = false;
  std::size_t workers = 1;
  bool elide_null = false;

  TestConfig test_config() const {
    TestConfig cfg;
    cfg.alpha = alpha;
    cfg.n_sims = sims;
    cfg.master_seed = seed;
    cfg.workers = workers;
    return cfg;
  }
};

namespace detail {

struct Session {
  Dataset ds;
  std::optional<ModelFormula> formula;
  ColumnSelection selection;
};

inline Session open_session(const RunConfig& cfg, std::ostream& log) {
  if (cfg.data.empty()) throw Error("no dataset given; pass --data PATH");
  if (!std::filesystem::exists(cfg.data)) throw Error(fmt::format("dataset '{}' does not exist", cfg.data.string()));
  CsvOptions opts;
  opts.delimiter = cfg.delimiter;
  Dataset ds = load_csv(cfg.data, opts);
  if (ds.dropped_rows() > 0)
    log << fmt::format("warning: dropped {} rows with missing or non-finite values\n", ds.dropped_rows());
  std::optional<ModelFormula> formula;
  if (!cfg.formula.empty()) formula = ModelFormula::parse(cfg.formula);
  std::optional<ColumnSelection> sel;
  if (!cfg.columns.empty()) {
    sel = select_columns(ds, cfg.columns);
  } else if (formula) {
    sel = selection_for(ds, *formula);
  } else {
    sel = select_columns(ds);
    for (const auto& c : ds.columns())
      if (c.kind == ColumnKind::categorical)
        log << fmt::format("warning: categorical column '{}' is excluded from the distance metric\n", c.name);
  }
  if (formula) {
    std::vector<std::size_t> first{0};
    design_matrix(ds, *formula, first);
  }
  return Session{std::move(ds), std::move(formula), std::move(*sel)};
}

inline bool is_seeded(Strategy s) {
  return s == Strategy::random || s == Strategy::stratified || s == Strategy::cluster;
}

struct ObservedSplit {
  std::string label;
  std::optional<std::uint64_t> seed;
  SplitIndices split;
};

inline ObservedSplit strategy_split(const Session& s, const RunConfig& cfg, const std::string& name,
                                    std::ostream& log) {
  SplitSpec spec;
  spec.strategy = parse_strategy(name);
  spec.fraction = cfg.fraction;
  spec.seed = cfg.split_seed.value_or(cfg.seed);
  spec.key_column = cfg.key;
  spec.distance_columns = s.selection;
  spec.subset_role = cfg.subset_role;
  Warnings warnings;
  ObservedSplit out{name, is_seeded(spec.strategy) ? std::optional(spec.seed) : std::nullopt,
                    make_split(s.ds, spec, &warnings)};
  for (const auto& w : warnings.messages) log << "warning: " << w << '\n';
  return out;
}

inline ObservedSplit file_split(const Session& s, const RunConfig& cfg) {
  return ObservedSplit{"file:" + cfg.split_file.filename().string(), std::nullopt,
                       read_split_csv(cfg.split_file, s.ds.rows())};
}

/// The single split source of diagnose/split/sweep.
inline ObservedSplit single_split(const Session& s, const RunConfig& cfg, std::ostream& log) {
  const bool has_file = !cfg.split_file.empty();
  if (has_file == !cfg.strategies.empty() || cfg.strategies.size() > 1)
    throw Error("give exactly one split source: --strategy NAME or --split-file PATH");
  return has_file ? file_split(s, cfg) : strategy_split(s, cfg, cfg.strategies.front(), log);
}

inline void ensure_out_dir(const RunConfig& cfg) {
  std::error_code ec;
  std::filesystem::create_directories(cfg.out, ec);
  if (ec) throw Error(fmt::format("cannot create output directory '{}': {}", cfg.out.string(), ec.message()));
}

template <typename Fn>
int guarded(std::ostream& err, Fn&& fn) {
  try {
    return fn();
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitError;
  }
}

}  // namespace detail

/// Tests one split; writes report.json, null_sample.csv and optionally simulation.svg.
/// Returns 0 on accept, 2 on reject, 1 on error.
inline int cmd_diagnose(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  return detail::guarded(err, [&] {
    const auto s = detail::open_session(cfg, err);
    const auto observed = detail::single_split(s, cfg, err);
    const auto test_cfg = cfg.test_config();
    const auto result = run_test(s.ds, s.selection, observed.split, test_cfg);
    std::optional<ModelFit> fit;
    if (s.formula) fit = fit_ols(s.ds, *s.formula, observed.split);

    detail::ensure_out_dir(cfg);
    json report = to_json(result, !cfg.elide_null);
    report["dataset"] = s.ds.name();
    report["rows"] = s.ds.rows();
    report["split_source"] = observed.label;
    if (observed.seed) report["split_seed"] = *observed.seed;
    if (fit) {
      report["formula"] = s.formula->str();
      report["model"] = to_json(*fit);
    }
    write_text_file(cfg.out / "report.json", report.dump(2) + "\n");
    std::ostringstream csv;
    write_null_sample_csv(result.null_sample, csv);
    write_text_file(cfg.out / "null_sample.csv", csv.str());
    if (cfg.plot)
      write_text_file(cfg.out / "simulation.svg",
                      null_histogram_svg(result.null_sample, result.lambda_obs(), result.threshold_c,
                                         fmt::format("{}: {} split", s.ds.name(), observed.label)));

    const Verdict v = make_verdict(observed.label, observed.seed, result, fit ? &*fit : nullptr);
    out << format_table(std::span(&v, 1));
    out << (result.decision == Decision::accept ? "Accept Null Hypothesis" : "Reject Null Hypothesis")
        << " (\"accept\" means the test failed to reject; it is not proof of similarity)\n";
    if (result.unusually_small)
      out << "note: the split distance is smaller than almost every random split; the test set may be "
             "over-representative and flatter model performance\n";
    return result.decision == Decision::accept ? kExitAccept : kExitReject;
  });
}

/// Produces split.csv for one strategy and prints partition sizes.
inline int cmd_split(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  return detail::guarded(err, [&] {
    const auto s = detail::open_session(cfg, err);
    if (cfg.strategies.size() != 1) throw Error("split needs exactly one --strategy");
    const auto observed = detail::strategy_split(s, cfg, cfg.strategies.front(), err);
    detail::ensure_out_dir(cfg);
    std::ostringstream csv;
    write_split_csv(observed.split, csv);
    write_text_file(cfg.out / "split.csv", csv.str());
    out << fmt::format("{}: train {} rows, test {} rows (fraction {:.4f})\n", observed.label,
                       observed.split.train.size(), observed.split.test.size(), observed.split.fraction);
    return kExitAccept;
  });
}

/// Diagnoses several splits against a shared null sample; writes comparison.csv.
inline int cmd_compare(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  return detail::guarded(err, [&] {
    const auto s = detail::open_session(cfg, err);
    if (cfg.strategies.empty() && cfg.split_file.empty())
      throw Error("compare needs --strategy a,b,... and/or --split-file PATH");
    const auto test_cfg = cfg.test_config();
    test_cfg.validate();
    const Eigen::MatrixXd data = view_all(s.ds, s.selection);
    // Null samples keyed by train size; every strategy at the same size shares one.
    std::map<std::size_t, NullSimulator::Sample> nulls;

    std::vector<Verdict> rows;
    auto diagnose = [&](const std::string& label, auto&& produce) {
      try {
        const detail::ObservedSplit observed = produce();
        const std::size_t k = observed.split.train.size();
        auto it = nulls.find(k);
        if (it == nulls.end()) {
          const NullSimulator sim(data, k);
          it = nulls.emplace(k, sim.run(test_cfg.n_sims, test_cfg.master_seed, test_cfg.workers)).first;
        }
        const auto stat =
            lambda_metric(gather_rows(data, observed.split.train), gather_rows(data, observed.split.test));
        const auto result = assemble_result(stat, it->second, observed.split, s.selection, test_cfg);
        std::optional<ModelFit> fit;
        if (s.formula) fit = fit_ols(s.ds, *s.formula, observed.split);
        rows.push_back(make_verdict(observed.label, observed.seed, result, fit ? &*fit : nullptr));
      } catch (const std::exception& e) {
        Verdict v;
        v.label = label;
        v.error = e.what();
        rows.push_back(std::move(v));
      }
    };
    for (const auto& name : cfg.strategies)
      diagnose(name, [&] { return detail::strategy_split(s, cfg, name, err); });
    if (!cfg.split_file.empty())
      diagnose("file:" + cfg.split_file.filename().string(), [&] { return detail::file_split(s, cfg); });

    detail::ensure_out_dir(cfg);
    std::ostringstream csv;
    write_comparison_csv(rows, csv);
    write_text_file(cfg.out / "comparison.csv", csv.str());
    out << format_table(rows);
    return kExitAccept;
  });
}

/// Distance/model-performance association over random splits; writes sweep.csv and optionally sweep.svg.
inline int cmd_sweep(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  return detail::guarded(err, [&] {
    if (cfg.formula.empty()) throw Error("sweep needs --formula \"y ~ a + b\"");
    const auto s = detail::open_session(cfg, err);
    std::optional<detail::ObservedSplit> observed;
    if (!cfg.strategies.empty() || !cfg.split_file.empty()) observed = detail::single_split(s, cfg, err);
    const double fraction = observed ? observed->split.fraction : cfg.fraction;
    const auto rows =
        association_sweep(s.ds, s.selection, *s.formula, fraction, cfg.sims, cfg.seed, std::max<std::size_t>(cfg.workers, 1));

    detail::ensure_out_dir(cfg);
    std::ostringstream csv;
    write_sweep_csv(rows, csv);
    write_text_file(cfg.out / "sweep.csv", csv.str());
    std::optional<std::pair<double, double>> highlight;
    if (observed) {
      const auto stat = lambda_metric(view(s.ds, s.selection, observed->split.train),
                                      view(s.ds, s.selection, observed->split.test));
      const auto fit = fit_ols(s.ds, *s.formula, observed->split);
      highlight = std::pair{stat.lambda, fit.aicn_test};
      out << fmt::format("observed split ({}): lambda {:.3f}, aicn_train {:.3f}, aicn_test {:.3f}\n", observed->label,
                         stat.lambda, fit.aicn_train, fit.aicn_test);
    }
    if (cfg.plot)
      write_text_file(cfg.out / "sweep.svg",
                      sweep_scatter_svg(rows, highlight, fmt::format("{}: {}", s.ds.name(), s.formula->str())));
    const auto flagged = std::count_if(rows.begin(), rows.end(), [](const SweepRow& r) { return r.flag != "ok"; });
    out << fmt::format("{} simulated splits written ({} flagged)\n", rows.size(), flagged);
    return kExitAccept;
  });
}

}  // namespace splitdiag
