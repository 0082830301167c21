#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <fmt/format.h>
#include <json.hpp>

#include "splitdiag/error.hpp"
#include "splitdiag/hypothesis.hpp"
#include "splitdiag/model.hpp"

namespace splitdiag {

using json = nlohmann::json;

// Shortest round-trip text for a double; non-finite values spelled "inf", "-inf", "nan".
inline std::string format_real(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return fmt::format("{}", v);
}

namespace detail {

inline json real_to_json(double v) {
  if (std::isfinite(v)) return v;
  return format_real(v);
}

inline double real_from_json(const json& j) {
  if (j.is_number()) return j.get<double>();
  const auto s = j.get<std::string>();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  throw Error(fmt::format("expected a number, got '{}'", s));
}

}  // namespace detail

/// Hypothesis-test result as a JSON document. The null sample is elided
/// (null_sample omitted, count kept) when include_null_sample is false.
inline json to_json(const SimulationResult& r, bool include_null_sample = true) {
  json j;
  j["lambda_obs"] = r.observed.lambda;
  j["d_xy"] = r.observed.d_xy;
  j["d_yx"] = r.observed.d_yx;
  j["dim"] = r.observed.dim;
  j["regularization_used"] = r.observed.regularization_used;
  j["threshold_c"] = r.threshold_c;
  j["p_value"] = r.p_value;
  j["decision"] = std::string(to_string(r.decision));
  j["verdict"] = r.decision == Decision::accept ? "Accept Null Hypothesis" : "Reject Null Hypothesis";
  j["unusually_small"] = r.unusually_small;
  j["fraction"] = r.fraction;
  j["n_train"] = r.n_train;
  j["n_test"] = r.n_test;
  j["columns"] = r.columns;
  j["ridge_count"] = r.ridge_count;
  j["config"] = {{"alpha", r.config.alpha},
                 {"n_sims", r.config.n_sims},
                 {"master_seed", r.config.master_seed},
                 {"include_observed", r.config.include_observed}};
  j["null_sample_size"] = r.null_sample.size();
  if (include_null_sample) j["null_sample"] = r.null_sample;
  return j;
}

inline SimulationResult simulation_result_from_json(const json& j) {
  SimulationResult r;
  r.observed.lambda = j.at("lambda_obs").get<double>();
  r.observed.d_xy = j.at("d_xy").get<double>();
  r.observed.d_yx = j.at("d_yx").get<double>();
  r.observed.dim = j.at("dim").get<std::size_t>();
  r.observed.regularization_used = j.at("regularization_used").get<double>();
  r.threshold_c = j.at("threshold_c").get<double>();
  r.p_value = j.at("p_value").get<double>();
  r.decision = parse_decision(j.at("decision").get<std::string>());
  r.unusually_small = j.at("unusually_small").get<bool>();
  r.fraction = j.at("fraction").get<double>();
  r.n_train = j.at("n_train").get<std::size_t>();
  r.n_test = j.at("n_test").get<std::size_t>();
  r.columns = j.at("columns").get<std::vector<std::string>>();
  r.ridge_count = j.at("ridge_count").get<std::size_t>();
  const auto& c = j.at("config");
  r.config.alpha = c.at("alpha").get<double>();
  r.config.n_sims = c.at("n_sims").get<std::size_t>();
  r.config.master_seed = c.at("master_seed").get<std::uint64_t>();
  r.config.include_observed = c.at("include_observed").get<bool>();
  if (j.contains("null_sample")) r.null_sample = j.at("null_sample").get<std::vector<double>>();
  return r;
}

inline json to_json(const ModelFit& fit) {
  json coef = json::array();
  for (Eigen::Index i = 0; i < fit.coefficients.size(); ++i) coef.push_back(fit.coefficients(i));
  return json{{"coefficients", coef},
              {"k", fit.k},
              {"n_train", fit.n_train},
              {"n_test", fit.n_test},
              {"rss_train", fit.rss_train},
              {"rss_test", fit.rss_test},
              {"aicn_train", detail::real_to_json(fit.aicn_train)},
              {"aicn_test", detail::real_to_json(fit.aicn_test)},
              {"r2_train", fit.r2_train},
              {"r2_test", detail::real_to_json(fit.r2_test)},
              {"warnings", fit.warnings}};
}

inline ModelFit model_fit_from_json(const json& j) {
  ModelFit fit;
  const auto coef = j.at("coefficients").get<std::vector<double>>();
  fit.coefficients = Eigen::Map<const Eigen::VectorXd>(coef.data(), static_cast<Eigen::Index>(coef.size()));
  fit.k = j.at("k").get<std::size_t>();
  fit.n_train = j.at("n_train").get<std::size_t>();
  fit.n_test = j.at("n_test").get<std::size_t>();
  fit.rss_train = j.at("rss_train").get<double>();
  fit.rss_test = j.at("rss_test").get<double>();
  fit.aicn_train = detail::real_from_json(j.at("aicn_train"));
  fit.aicn_test = detail::real_from_json(j.at("aicn_test"));
  fit.r2_train = j.at("r2_train").get<double>();
  fit.r2_test = detail::real_from_json(j.at("r2_test"));
  fit.warnings = j.at("warnings").get<std::vector<std::string>>();
  return fit;
}

// ---------------------------------------------------------------------------
// CSV outputs.

inline void write_null_sample_csv(std::span<const double> sample, std::ostream& out) {
  out << "lambda\n";
  for (double v : sample) out << format_real(v) << '\n';
}

inline std::vector<double> read_null_sample_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || detail::trim(line) != "lambda") throw Error("null sample CSV must start with 'lambda'");
  std::vector<double> out;
  while (std::getline(in, line)) {
    const auto cell = detail::trim(line);
    if (cell.empty()) continue;
    const auto v = detail::parse_real(cell);
    if (!v) throw Error(fmt::format("bad value '{}' in null sample CSV", cell));
    out.push_back(*v);
  }
  return out;
}

inline void write_sweep_csv(std::span<const SweepRow> rows, std::ostream& out) {
  out << "sim_index,lambda,aicn_train,aicn_test,flag\n";
  for (const auto& r : rows)
    out << r.sim_index << ',' << format_real(r.lambda) << ',' << format_real(r.aicn_train) << ','
        << format_real(r.aicn_test) << ',' << r.flag << '\n';
}

inline void write_text_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(fmt::format("cannot write '{}'", path.string()));
  out << content;
  if (!out) throw Error(fmt::format("failed writing '{}'", path.string()));
}

// ---------------------------------------------------------------------------
// Verdict rows.

/// One row of the conclusion table for a diagnosed split.
struct Verdict {
  std::string label;
  std::optional<std::uint64_t> seed;
  double lambda = 0.0;
  double threshold_c = 0.0;
  double p_value = 1.0;
  std::optional<double> aicn_train;
  std::optional<double> aicn_test;
  Decision decision = Decision::accept;
  bool unusually_small = false;
  /// Set when this row could not be computed.
  std::string error;

  std::string conclusion() const {
    if (!error.empty()) return "Error";
    return decision == Decision::accept ? "Accepted" : "Rejected";
  }
};

inline Verdict make_verdict(std::string label, std::optional<std::uint64_t> seed, const SimulationResult& r,
                            const ModelFit* fit = nullptr) {
  Verdict v;
  v.label = std::move(label);
  v.seed = seed;
  v.lambda = r.observed.lambda;
  v.threshold_c = r.threshold_c;
  v.p_value = r.p_value;
  v.decision = r.decision;
  v.unusually_small = r.unusually_small;
  if (fit != nullptr) {
    v.aicn_train = fit->aicn_train;
    v.aicn_test = fit->aicn_test;
  }
  return v;
}

inline const std::vector<std::string>& verdict_header() {
  static const std::vector<std::string> header{"split", "seed", "lambda", "threshold_c", "p_value", "aicn_train",
                                               "aicn_test", "conclusion"};
  return header;
}

inline std::vector<std::string> verdict_cells(const Verdict& v) {
  auto opt = [](const std::optional<double>& x) { return x ? fmt::format("{:.3f}", *x) : std::string("-"); };
  if (!v.error.empty())
    return {v.label, v.seed ? std::to_string(*v.seed) : "-", "-", "-", "-", "-", "-", "Error: " + v.error};
  std::string conclusion = v.conclusion();
  if (v.unusually_small) conclusion += " (unusually small distance)";
  return {v.label,
          v.seed ? std::to_string(*v.seed) : "-",
          fmt::format("{:.3f}", v.lambda),
          fmt::format("{:.3f}", v.threshold_c),
          fmt::format("{:.3g}", v.p_value),
          opt(v.aicn_train),
          opt(v.aicn_test),
          conclusion};
}

/// Space-aligned table, one verdict per line.
inline std::string format_table(std::span<const Verdict> rows) {
  std::vector<std::vector<std::string>> cells{verdict_header()};
  for (const auto& v : rows) cells.push_back(verdict_cells(v));
  std::vector<std::size_t> width(cells[0].size(), 0);
  for (const auto& r : cells)
    for (std::size_t j = 0; j < r.size(); ++j) width[j] = std::max(width[j], r[j].size());
  std::string out;
  for (const auto& r : cells) {
    for (std::size_t j = 0; j < r.size(); ++j) {
      out += r[j];
      if (j + 1 < r.size()) out += std::string(width[j] - r[j].size() + 2, ' ');
    }
    out += '\n';
  }
  return out;
}

inline void write_comparison_csv(std::span<const Verdict> rows, std::ostream& out) {
  out << "split,seed,lambda,threshold_c,p_value,aicn_train,aicn_test,conclusion,error\n";
  auto opt = [](const std::optional<double>& x) { return x ? format_real(*x) : std::string(); };
  for (const auto& v : rows) {
    const bool ok = v.error.empty();
    out << detail::csv_escape(v.label, ',') << ',' << (v.seed ? std::to_string(*v.seed) : "") << ','
        << (ok ? format_real(v.lambda) : "") << ',' << (ok ? format_real(v.threshold_c) : "") << ','
        << (ok ? format_real(v.p_value) : "") << ',' << opt(v.aicn_train) << ',' << opt(v.aicn_test) << ','
        << v.conclusion() << ',' << detail::csv_escape(v.error, ',') << '\n';
  }
}

// ---------------------------------------------------------------------------
// SVG plots. Fixed-precision coordinates keep the files byte-reproducible.

namespace svg {

struct Frame {
  double width = 720;
  double height = 420;
  double left = 70;
  double right = 20;
  double top = 40;
  double bottom = 55;
  double x_min = 0, x_max = 1, y_min = 0, y_max = 1;

  double px(double x) const { return left + (x - x_min) / (x_max - x_min) * (width - left - right); }
  double py(double y) const { return height - bottom - (y - y_min) / (y_max - y_min) * (height - top - bottom); }
};

inline std::string escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

inline std::pair<double, double> padded_range(double lo, double hi) {
  if (!(hi > lo)) {
    lo -= 0.5;
    hi += 0.5;
  }
  const double pad = 0.05 * (hi - lo);
  return {lo - pad, hi + pad};
}

inline std::string open(const Frame& f, std::string_view title, std::string_view x_label, std::string_view y_label) {
  std::string s = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0:.0f}\" height=\"{1:.0f}\" viewBox=\"0 0 {0:.0f} {1:.0f}\" "
      "font-family=\"sans-serif\" font-size=\"12\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n",
      f.width, f.height);
  s += fmt::format("<text x=\"{:.1f}\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">{}</text>\n", f.width / 2,
                   escape(title));
  const double x0 = f.left;
  const double x1 = f.width - f.right;
  const double y0 = f.height - f.bottom;
  const double y1 = f.top;
  s += fmt::format("<path d=\"M{:.1f} {:.1f} H{:.1f} M{:.1f} {:.1f} V{:.1f}\" stroke=\"black\" fill=\"none\"/>\n", x0,
                   y0, x1, x0, y0, y1);
  for (int i = 0; i <= 5; ++i) {
    const double xv = f.x_min + (f.x_max - f.x_min) * i / 5.0;
    const double yv = f.y_min + (f.y_max - f.y_min) * i / 5.0;
    s += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"middle\">{:.3g}</text>\n", f.px(xv), y0 + 18, xv);
    s += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"end\">{:.3g}</text>\n", x0 - 6, f.py(yv) + 4, yv);
  }
  s += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" text-anchor=\"middle\">{}</text>\n", (x0 + x1) / 2, f.height - 12,
                   escape(x_label));
  s += fmt::format(
      "<text x=\"16\" y=\"{0:.1f}\" text-anchor=\"middle\" transform=\"rotate(-90 16 {0:.1f})\">{1}</text>\n",
      (y0 + y1) / 2, escape(y_label));
  return s;
}

inline std::string vline(const Frame& f, double x, std::string_view color, std::string_view label, bool dashed) {
  return fmt::format(
      "<line x1=\"{0:.1f}\" y1=\"{1:.1f}\" x2=\"{0:.1f}\" y2=\"{2:.1f}\" stroke=\"{3}\" stroke-width=\"2\"{4}/>\n"
      "<text x=\"{5:.1f}\" y=\"{6:.1f}\" fill=\"{3}\">{7}</text>\n",
      f.px(x), f.height - f.bottom, f.top, color, dashed ? " stroke-dasharray=\"6 4\"" : "", f.px(x) + 4, f.top + 12,
      escape(label));
}

}  // namespace svg

/// Histogram of the simulated null sample with the observed distance and the
/// rejection threshold marked.
inline std::string null_histogram_svg(std::span<const double> sample, double lambda_obs, double threshold_c,
                                      std::string_view title, std::size_t bins = 40) {
  if (sample.empty()) throw Error("cannot plot an empty null sample");
  double lo = *std::min_element(sample.begin(), sample.end());
  double hi = *std::max_element(sample.begin(), sample.end());
  lo = std::min({lo, lambda_obs, threshold_c});
  hi = std::max({hi, lambda_obs, threshold_c});
  const auto [x_min, x_max] = svg::padded_range(lo, hi);
  std::vector<std::size_t> counts(bins, 0);
  const double width = (x_max - x_min) / static_cast<double>(bins);
  for (double v : sample) {
    auto b = static_cast<std::size_t>((v - x_min) / width);
    ++counts[std::min(b, bins - 1)];
  }
  svg::Frame f;
  f.x_min = x_min;
  f.x_max = x_max;
  f.y_max = static_cast<double>(*std::max_element(counts.begin(), counts.end())) * 1.1;
  std::string s = svg::open(f, title, "distance metric (lambda)", "simulated splits");
  for (std::size_t b = 0; b < bins; ++b) {
    if (counts[b] == 0) continue;
    const double x0 = f.px(x_min + width * static_cast<double>(b));
    const double x1 = f.px(x_min + width * static_cast<double>(b + 1));
    const double y = f.py(static_cast<double>(counts[b]));
    s += fmt::format("<rect x=\"{:.1f}\" y=\"{:.1f}\" width=\"{:.1f}\" height=\"{:.1f}\" fill=\"#4a7ebb\"/>\n", x0, y,
                     std::max(x1 - x0 - 1.0, 0.5), f.height - f.bottom - y);
  }
  s += svg::vline(f, threshold_c, "#555555", fmt::format("c = {:.3f}", threshold_c), true);
  s += svg::vline(f, lambda_obs, "#d9541e", fmt::format("observed = {:.3f}", lambda_obs), false);
  s += "</svg>\n";
  return s;
}

/// Scatter of distance against test AIC_N over a sweep, observed split highlighted.
inline std::string sweep_scatter_svg(std::span<const SweepRow> rows, std::optional<std::pair<double, double>> observed,
                                     std::string_view title) {
  double x_lo = std::numeric_limits<double>::infinity();
  double x_hi = -x_lo;
  double y_lo = x_lo;
  double y_hi = -x_lo;
  auto extend = [&](double x, double y) {
    if (!std::isfinite(x) || !std::isfinite(y)) return;
    x_lo = std::min(x_lo, x);
    x_hi = std::max(x_hi, x);
    y_lo = std::min(y_lo, y);
    y_hi = std::max(y_hi, y);
  };
  for (const auto& r : rows) extend(r.lambda, r.aicn_test);
  if (observed) extend(observed->first, observed->second);
  if (!std::isfinite(x_lo)) x_lo = x_hi = y_lo = y_hi = 0.0;
  svg::Frame f;
  std::tie(f.x_min, f.x_max) = svg::padded_range(x_lo, x_hi);
  std::tie(f.y_min, f.y_max) = svg::padded_range(y_lo, y_hi);
  std::string s = svg::open(f, title, "distance metric (lambda)", "normalized AIC (test)");
  for (const auto& r : rows) {
    if (!std::isfinite(r.lambda) || !std::isfinite(r.aicn_test)) continue;
    s += fmt::format("<circle cx=\"{:.1f}\" cy=\"{:.1f}\" r=\"2.5\" fill=\"#4a7ebb\" fill-opacity=\"0.6\"/>\n",
                     f.px(r.lambda), f.py(r.aicn_test));
  }
  if (observed && std::isfinite(observed->first) && std::isfinite(observed->second)) {
    s += fmt::format("<circle cx=\"{:.1f}\" cy=\"{:.1f}\" r=\"6\" fill=\"#d9541e\" stroke=\"black\"/>\n",
                     f.px(observed->first), f.py(observed->second));
    s += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" fill=\"#d9541e\">observed split</text>\n",
                     f.px(observed->first) + 9, f.py(observed->second) - 8);
  }
  s += "</svg>\n";
  return s;
}

}  // namespace splitdiag
