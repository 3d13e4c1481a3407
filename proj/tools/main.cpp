// Command-line harness: preprocessing, single runs, benchmark grids, the
// identity verification suite, and figure re-export.
//
// Exit codes: 0 success, 1 validation error, 2 runtime divergence,
// 3 verification failure.

#include <CLI11.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "spiderem/bench.hpp"
#include "spiderem/config.hpp"
#include "spiderem/data.hpp"
#include "spiderem/diagnostics.hpp"
#include "spiderem/verify.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kValidationError = 1;
constexpr int kDivergence = 2;
constexpr int kVerificationFailure = 3;

std::string env_or(const char* name, const std::string& fallback) {
  const char* v = std::getenv(name);
  return v ? std::string(v) : fallback;
}

int env_workers(int from_spec) {
  const char* v = std::getenv("SPIDEREM_WORKERS");
  if (!v) return from_spec;
  return std::atoi(v);
}

int report_violations(const std::vector<std::string>& violations) {
  std::cerr << "spec validation failed:\n";
  for (const auto& v : violations) std::cerr << "  - " << v << '\n';
  return kValidationError;
}

int cmd_prep(const std::string& input, bool drop_constant, long pca_dim, bool whiten,
             const std::string& out_path, bool has_header) {
  if (pca_dim < 0) {
    std::cerr << "--pca requires a positive dimension\n";
    return kValidationError;
  }
  spiderem::Dataset data;
  try {
    data = spiderem::load_csv(input, has_header);
  } catch (const std::exception& e) {
    std::cerr << e.what() << '\n';
    return kValidationError;
  }
  if (pca_dim > 0 && pca_dim > data.d()) {
    std::cerr << "--pca " << pca_dim << " exceeds the data dimension " << data.d()
              << '\n';
    return kValidationError;
  }
  try {
    if (drop_constant) data = spiderem::drop_constant_columns(data, 0.0);
    if (pca_dim > 0) {
      auto [projected, record] = spiderem::pca_project(data, pca_dim, whiten);
      data = std::move(projected);
      const std::string stem =
          (std::filesystem::path(out_path).parent_path() /
           std::filesystem::path(out_path).stem())
              .string() +
          "_projection";
      spiderem::save_projection(record, stem);
      std::cout << "projection bundle written to " << stem << "_*.csv\n";
    }
    spiderem::save_csv(data, out_path);
  } catch (const std::exception& e) {
    std::cerr << e.what() << '\n';
    return kValidationError;
  }
  std::cout << "wrote " << data.n() << " x " << data.d() << " to " << out_path << '\n';
  std::cout << "provenance: " << data.provenance << '\n';
  return kOk;
}

int cmd_fit(const std::string& spec_path, const std::string& strategy,
            std::uint64_t seed_override, bool has_seed_override,
            const std::string& out_path) {
  spiderem::ExperimentSpec spec;
  try {
    spec = spiderem::load_spec(spec_path);
  } catch (const std::exception& e) {
    std::cerr << e.what() << '\n';
    return kValidationError;
  }
  if (has_seed_override) spec.seed = seed_override;
  if (!strategy.empty()) spec.strategies = {strategy};
  const auto violations = spec.validate();
  if (!violations.empty()) return report_violations(violations);
  if (spec.strategies.size() != 1) {
    std::cerr << "fit runs exactly one strategy; pass --strategy\n";
    return kValidationError;
  }
  try {
    const spiderem::GmmModel model = spiderem::build_model(spec);
    if (const auto issues = spiderem::validate_against_model(spec, model); !issues.empty())
      return report_violations(issues);
    const auto theta0 = spiderem::replication_init(spec, model, 0);
    const auto s0 = model.init_stat(theta0);
    const auto outcome =
        spiderem::run_single(spec, model, spec.strategies[0], 0, 0, theta0, s0);
    if (outcome.failed) {
      std::cerr << "run failed: " << outcome.error << '\n';
      return kDivergence;
    }
    const std::string out =
        out_path.empty() ? env_or("SPIDEREM_OUT", ".") + "/trace.csv" : out_path;
    spiderem::write_trace_csv(outcome.trace, out);
    spiderem::write_trace_log(outcome.trace, out + ".log",
                              spec.strategies[0] + " seed=" + std::to_string(spec.seed));
    std::cout << "trace written to " << out << '\n';
    if (spec.termination == "randomized" && !outcome.trace.epoch_end_stats.empty()) {
      spiderem::Rng term_rng = spiderem::split_rng(
          spiderem::run_seed(spec, 0, 0), spiderem::streams::kTermination);
      const auto [epoch, stat] = spiderem::randomized_terminate(outcome.trace, term_rng);
      std::cout << "randomized termination: epoch " << epoch << ", ||h||^2 = "
                << spiderem::h_norm_sq(model, stat) << '\n';
    }
    if (outcome.trace.diverged) {
      std::cerr << "diverged at epoch " << outcome.trace.diverged_epoch << '\n';
      return kDivergence;
    }
  } catch (const std::exception& e) {
    std::cerr << e.what() << '\n';
    return kDivergence;
  }
  return kOk;
}

int cmd_bench(const std::string& spec_path, bool keep_traces) {
  spiderem::ExperimentSpec spec;
  try {
    spec = spiderem::load_spec(spec_path);
  } catch (const std::exception& e) {
    std::cerr << e.what() << '\n';
    return kValidationError;
  }
  const auto violations = spec.validate();
  if (!violations.empty()) return report_violations(violations);
  spec.out_dir = env_or("SPIDEREM_OUT", spec.out_dir);
  spec.workers = env_workers(spec.workers);
  try {
    const spiderem::GmmModel model = spiderem::build_model(spec);
    if (const auto issues = spiderem::validate_against_model(spec, model); !issues.empty())
      return report_violations(issues);
    std::vector<spiderem::RunOutcome> outcomes;
    const auto result = spiderem::run_bench(spec, model, &outcomes);
    spiderem::export_bench(result, spec.out_dir);
    long failures = 0;
    for (const auto& oc : outcomes) {
      if (oc.failed || oc.trace.diverged) {
        ++failures;
        std::cerr << "run " << oc.strategy << "/rep" << oc.replication
                  << (oc.failed ? (" failed: " + oc.error) : " diverged") << '\n';
      }
      if (keep_traces && !oc.failed) {
        const std::string path = spec.out_dir + "/trace_" + oc.strategy + "_rep" +
                                 std::to_string(oc.replication) + ".csv";
        spiderem::write_trace_csv(oc.trace, path);
      }
    }
    std::cout << "bench results written to " << spec.out_dir << '\n';
    if (failures > 0)
      std::cout << failures << " run(s) diverged; counted in the n_diverged column\n";
  } catch (const std::exception& e) {
    std::cerr << e.what() << '\n';
    return kDivergence;
  }
  return kOk;
}

int cmd_verify(const std::string& suite, double trials, std::uint64_t seed) {
  spiderem::VerifyOptions opts;
  opts.seed = seed;
  opts.trials = static_cast<long>(trials);
  std::vector<spiderem::CheckResult> results;
  try {
    if (suite == "bias") results = spiderem::verify_bias(opts);
    else if (suite == "variance") results = spiderem::verify_variance(opts);
    else if (suite == "geom") results = spiderem::verify_geom(opts);
    else if (suite == "counters") results = spiderem::verify_counters(opts);
    else if (suite == "all") results = spiderem::verify_all(opts);
    else {
      std::cerr << "unknown suite: " << suite
                << " (expected bias|variance|geom|counters|all)\n";
      return kValidationError;
    }
  } catch (const std::exception& e) {
    std::cerr << e.what() << '\n';
    return kVerificationFailure;
  }
  bool all_pass = true;
  for (const auto& r : results) {
    std::printf("[%s] %-55s observed=%.6g threshold=%.6g (%s)\n",
                r.pass ? "PASS" : "FAIL", r.name.c_str(), r.observed, r.threshold,
                r.detail.c_str());
    all_pass = all_pass && r.pass;
  }
  std::printf("%zu check(s), %s\n", results.size(), all_pass ? "all passed" : "FAILURES");
  return all_pass ? kOk : kVerificationFailure;
}

int cmd_plot(const std::string& bench_csv, const std::string& out_dir) {
  std::ifstream in(bench_csv);
  if (!in) {
    std::cerr << "cannot open " << bench_csv << '\n';
    return kValidationError;
  }
  std::string line;
  if (!std::getline(in, line) ||
      line != "strategy,epoch,cum_ce,q50_h2,mean_negF,n_diverged") {
    std::cerr << bench_csv << ": unexpected header\n";
    return kValidationError;
  }
  std::map<std::string, std::size_t> index;
  spiderem::BenchResult result;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string name, cell;
    std::getline(ss, name, ',');
    std::vector<double> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(std::atof(cell.c_str()));
    if (cells.size() != 5) {
      std::cerr << bench_csv << ": malformed row: " << line << '\n';
      return kValidationError;
    }
    if (!index.count(name)) {
      index[name] = result.series.size();
      result.series.push_back({name, {}, {}, {}, {}});
    }
    auto& s = result.series[index[name]];
    s.mean_cum_ce.push_back(cells[1]);
    s.q50_h2.push_back(cells[2]);
    s.mean_neg_f.push_back(cells[3]);
    s.n_diverged.push_back(static_cast<long>(cells[4]));
  }
  if (result.series.empty()) {
    std::cerr << bench_csv << ": no data rows\n";
    return kValidationError;
  }
  result.epochs = static_cast<long>(result.series.front().q50_h2.size());
  try {
    spiderem::export_bench(result, out_dir);
  } catch (const std::exception& e) {
    std::cerr << e.what() << '\n';
    return kValidationError;
  }
  std::cout << "figures written to " << out_dir << '\n';
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"variance-reduced stochastic EM toolkit"};
  app.require_subcommand(1);

  // prep
  auto* prep = app.add_subcommand("prep", "preprocess a CSV dataset");
  std::string prep_input, prep_out = "prep_out.csv";
  bool prep_drop = false, prep_whiten = false, prep_header = false;
  long prep_pca = 0;
  prep->add_option("input", prep_input, "input CSV path")->required();
  prep->add_flag("--drop-constant", prep_drop, "remove zero-variance columns");
  prep->add_option("--pca", prep_pca, "project onto this many principal components");
  prep->add_flag("--whiten", prep_whiten, "scale projected columns to unit variance");
  prep->add_flag("--header", prep_header, "input file has a header row");
  prep->add_option("--out", prep_out, "output CSV path");

  // fit
  auto* fit = app.add_subcommand("fit", "run one strategy and write its trace");
  std::string fit_spec, fit_strategy, fit_out;
  std::uint64_t fit_seed = 0;
  bool fit_has_seed = false;
  fit->add_option("spec", fit_spec, "experiment spec file")->required();
  fit->add_option("--strategy", fit_strategy, "strategy name");
  auto* fit_seed_opt = fit->add_option("--seed", fit_seed, "seed override");
  fit->add_option("--out", fit_out, "trace CSV path");

  // bench
  auto* bench = app.add_subcommand("bench", "run the full strategy x replication grid");
  std::string bench_spec;
  bool bench_traces = false;
  bench->add_option("spec", bench_spec, "experiment spec file")->required();
  bench->add_flag("--traces", bench_traces, "also write per-run trace files");

  // verify
  auto* verify = app.add_subcommand("verify", "run the identity verification suite");
  std::string verify_suite = "all";
  double verify_trials = 1e5;
  std::uint64_t verify_seed = 20240101;
  verify->add_option("--suite", verify_suite, "bias|variance|geom|counters|all");
  verify->add_option("--trials", verify_trials, "Monte-Carlo trial count");
  verify->add_option("--seed", verify_seed, "verification seed");

  // plot
  auto* plot = app.add_subcommand("plot", "re-export figures from a bench.csv");
  std::string plot_csv, plot_out = "plots";
  plot->add_option("bench_csv", plot_csv, "bench.csv produced by bench")->required();
  plot->add_option("--out", plot_out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kValidationError;
  }

  if (prep->parsed())
    return cmd_prep(prep_input, prep_drop, prep_pca, prep_whiten, prep_out, prep_header);
  if (fit->parsed()) {
    fit_has_seed = fit_seed_opt->count() > 0;
    return cmd_fit(fit_spec, fit_strategy, fit_seed, fit_has_seed, fit_out);
  }
  if (bench->parsed()) return cmd_bench(bench_spec, bench_traces);
  if (verify->parsed()) return cmd_verify(verify_suite, verify_trials, verify_seed);
  if (plot->parsed()) return cmd_plot(plot_csv, plot_out);
  return kValidationError;
}
