// Command-line front end: splitdiag diagnose | split | compare | sweep

#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "splitdiag/commands.hpp"

int main(int argc, char** argv) {
  using namespace splitdiag;

  CLI::App app{
      "Train/test split diagnostics: compares a split's Mahalanobis-based distance with random re-splits.\n"
      "Exit status: 0 accept, 2 reject (diagnose), 1 error.\n"
      "Settings come from command-line flags, then from --config FILE (key=value lines), then defaults."};
  app.set_config("--config", "", "key=value config file; command-line flags take precedence");
  app.require_subcommand(1, 1);
  app.fallthrough();

  RunConfig cfg;
  std::string data;
  std::string split_file;
  std::string out_dir = ".";
  std::string delimiter = ",";
  std::uint64_t split_seed = 0;
  SubsetRole role = SubsetRole::test;

  app.add_option("--data", data, "dataset CSV with a header row");
  app.add_option("--delimiter", delimiter, "CSV field delimiter")->capture_default_str();
  app.add_option("--columns", cfg.columns, "columns entering the distance, e.g. a,b,x:y:z,c^2")->delimiter(',');
  app.add_option("--formula", cfg.formula, "linear model, e.g. \"y ~ a + b:c\"");
  app.add_option("--strategy", cfg.strategies,
                 "random|stratified|adversarial|cluster|cadex|duplex (compare takes a comma list)")
      ->delimiter(',');
  app.add_option("--fraction", cfg.fraction, "train fraction")->capture_default_str()->check(CLI::Range(0.0, 1.0));
  auto* split_seed_opt = app.add_option("--split-seed", split_seed, "seed of the observed split (defaults to --seed)");
  app.add_option("--key", cfg.key, "stratum / sort / group column for stratified, adversarial and cluster splits");
  app.add_option("--subset-role", role, "partition receiving the cadex subset")
      ->transform(CLI::CheckedTransformer(std::map<std::string, SubsetRole>{{"train", SubsetRole::train},
                                                                            {"test", SubsetRole::test}}))
      ->option_text("train|test [test]");
  app.add_option("--split-file", split_file, "externally produced split (row_index,partition CSV)");
  app.add_option("--alpha", cfg.alpha, "significance level")->capture_default_str();
  app.add_option("--sims", cfg.sims, "number of simulated random splits")->capture_default_str();
  app.add_option("--seed", cfg.seed, "master seed")->capture_default_str();
  app.add_option("--out", out_dir, "output directory")->capture_default_str();
  app.add_flag("--plot", cfg.plot, "write SVG plots");
  app.add_option("--workers", cfg.workers, "worker threads (results do not depend on it)")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  app.add_flag("--elide-null-sample", cfg.elide_null, "leave the null sample out of report.json");

  auto* diagnose = app.add_subcommand("diagnose", "test one split; writes report.json, null_sample.csv");
  auto* split = app.add_subcommand("split", "produce split.csv with one strategy");
  auto* compare = app.add_subcommand("compare", "diagnose several strategies against a shared null sample");
  auto* sweep = app.add_subcommand("sweep", "distance vs model performance over random splits (needs --formula)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitError;
  }

  if (delimiter.size() != 1) {
    std::cerr << "error: --delimiter must be a single character\n";
    return kExitError;
  }
  cfg.delimiter = delimiter[0];
  cfg.data = data;
  cfg.split_file = split_file;
  cfg.out = out_dir;
  cfg.subset_role = role;
  if (split_seed_opt->count() > 0) cfg.split_seed = split_seed;

  if (diagnose->parsed()) return cmd_diagnose(cfg, std::cout, std::cerr);
  if (split->parsed()) return cmd_split(cfg, std::cout, std::cerr);
  if (compare->parsed()) return cmd_compare(cfg, std::cout, std::cerr);
  if (sweep->parsed()) return cmd_sweep(cfg, std::cout, std::cerr);
  return kExitError;
}
