// Benchmark grid: strategy x replication fan-out over a bounded worker pool,
// aggregation across replications, and the run-trace file format.
//
// Seeding layout: the dataset and the per-replication initial parameters
// depend only on (spec seed, replication), so every strategy of a
// replication starts from the same statistic; each run then owns isolated
// streams derived from (spec seed, strategy index, replication).
#pragma once

#include <atomic>
#include <cmath>
#include <fstream>
#include <string>
#include <thread>
#include <vector>

#include "spiderem/config.hpp"
#include "spiderem/data.hpp"
#include "spiderem/diagnostics.hpp"
#include "spiderem/gmm.hpp"
#include "spiderem/solvers.hpp"

namespace spiderem {

using GmmTrace = RunTrace<GmmParams>;

inline GmmModel build_model(const ExperimentSpec& spec) {
  Dataset data;
  if (spec.dataset == "synth") {
    data = synth_gmm(spec.synth_g, spec.synth_d, spec.synth_n, spec.synth_sep,
                     mix_seed({spec.seed, 0xDA7AULL}))
               .data;
  } else {
    data = load_csv(spec.dataset, spec.csv_has_header);
  }
  return GmmModel(std::move(data), spec.model_g, spec.cov_floor);
}

// Config invariants that need the dataset size (for CSV sources it is only
// known after ingestion); checked before any run starts.
inline std::vector<std::string> validate_against_model(const ExperimentSpec& spec,
                                                       const GmmModel& model) {
  RunConfig cfg;
  cfg.batch_size = spec.b;
  cfg.with_replacement = spec.with_replacement;
  cfg.k_out = spec.k_out;
  cfg.warmstart_epochs = spec.warmstart_epochs;
  cfg.diag_every = spec.diag_every;
  cfg.steps.gamma_inner = spec.gamma;
  cfg.steps.gamma_reset = spec.gamma_reset;
  cfg.steps.alpha = spec.alpha;
  return cfg.violations(model.example_count());
}

inline std::uint64_t run_seed(const ExperimentSpec& spec, long strategy_index,
                              long replication) {
  return mix_seed({spec.seed, 0x57A7ULL, static_cast<std::uint64_t>(strategy_index),
                   static_cast<std::uint64_t>(replication)});
}

// Shared initial parameters per replication (strategy-independent).
inline GmmParams replication_init(const ExperimentSpec& spec, const GmmModel& model,
                                  long replication) {
  Rng rng = split_rng(mix_seed({spec.seed, 0xA11CEULL,
                                static_cast<std::uint64_t>(replication)}),
                      streams::kInit);
  return model.init_params(rng);
}

inline RunConfig make_run_config(const ExperimentSpec& spec, const std::string& strategy,
                                 long strategy_index, long replication,
                                 const GmmModel& model, const StatVector& s_init) {
  RunConfig cfg;
  cfg.batch_size = spec.b;
  cfg.with_replacement = spec.with_replacement;
  cfg.k_out = spec.k_out;
  cfg.warmstart_epochs = spec.warmstart_epochs;
  cfg.seed = run_seed(spec, strategy_index, replication);
  cfg.diag_every = spec.diag_every;
  cfg.termination = spec.termination == "randomized" ? Termination::RandomizedUniform
                                                     : Termination::None;
  cfg.steps.gamma_inner = spec.gamma;
  cfg.steps.gamma_reset = spec.gamma_reset;
  cfg.steps.alpha = spec.alpha;
  if (const auto it = spec.overrides.find(strategy); it != spec.overrides.end()) {
    if (it->second.gamma) cfg.steps.gamma_inner = *it->second.gamma;
    if (it->second.gamma_reset) cfg.steps.gamma_reset = *it->second.gamma_reset;
    if (it->second.alpha) cfg.steps.alpha = *it->second.alpha;
  }
  if (strategy != "online-em" && strategy != "batch-em") {
    const auto def = spider_strategy(strategy, model.example_count(), cfg.batch_size);
    cfg.schedule = def.schedule;
    cfg.reset = def.reset;
  }
  // The auto step-size rule resolves to a concrete gamma before the run.
  if (cfg.steps.alpha) {
    const double lips = estimate_lipschitz(model, s_init, 16, 0.05, cfg.seed);
    if (lips > 0.0) cfg.steps.gamma_inner = *cfg.steps.alpha / lips;
    cfg.steps.alpha.reset();
  }
  return cfg;
}

struct RunOutcome {
  std::string strategy;
  long replication = 0;
  GmmTrace trace;
  bool failed = false;
  std::string error;
};

// One strategy/replication run, dispatched by strategy name.
inline RunOutcome run_single(const ExperimentSpec& spec, const GmmModel& model,
                             const std::string& strategy, long strategy_index,
                             long replication, const GmmParams& theta_init,
                             const StatVector& s_init) {
  RunOutcome out;
  out.strategy = strategy;
  out.replication = replication;
  try {
    const RunConfig cfg =
        make_run_config(spec, strategy, strategy_index, replication, model, s_init);
    if (strategy == "online-em") {
      out.trace = online_em_run(model, s_init, cfg);
    } else if (strategy == "batch-em") {
      out.trace = batch_em_run(model, theta_init, spec.k_out, 0.0);
    } else {
      out.trace = gspider_run(model, s_init, cfg);
    }
  } catch (const std::exception& e) {
    out.failed = true;
    out.error = e.what();
  }
  return out;
}

namespace detail {

template <typename Fn>
void parallel_for(long count, int workers, Fn&& fn) {
  if (workers <= 0) {
    const unsigned hw = std::thread::hardware_concurrency();
    workers = hw == 0 ? 1 : static_cast<int>(hw);
  }
  workers = static_cast<int>(std::min<long>(workers, count));
  if (workers <= 1) {
    for (long i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<long> next{0};
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      while (true) {
        const long i = next.fetch_add(1);
        if (i >= count) break;
        fn(i);
      }
    });
  for (auto& t : pool) t.join();
}

}  // namespace detail

// Aggregates completed runs into per-strategy series. Replication order is
// immaterial: medians sort their inputs and means accumulate in replication
// index order.
inline BenchResult aggregate_bench(const std::vector<std::string>& strategies,
                                   long replications, long k_out,
                                   const std::vector<RunOutcome>& outcomes) {
  BenchResult result;
  result.epochs = k_out;
  result.replications = replications;
  for (std::size_t si = 0; si < strategies.size(); ++si) {
    StrategySeries series;
    series.name = strategies[si];
    for (long e = 0; e < k_out; ++e) {
      std::vector<double> h2s, fs, ces;
      long diverged = 0;
      for (long r = 0; r < replications; ++r) {
        const auto& oc = outcomes[si * static_cast<std::size_t>(replications) +
                                  static_cast<std::size_t>(r)];
        const bool has_epoch =
            !oc.failed && static_cast<long>(oc.trace.epochs.size()) > e;
        if (!has_epoch) {
          ++diverged;
          continue;
        }
        const auto& rec = oc.trace.epochs[static_cast<std::size_t>(e)];
        if (!std::isfinite(rec.h2) || !std::isfinite(rec.objective)) {
          ++diverged;
          continue;
        }
        h2s.push_back(rec.h2);
        fs.push_back(rec.objective);
        ces.push_back(static_cast<double>(rec.cum_ce));
      }
      const double nan = std::numeric_limits<double>::quiet_NaN();
      series.q50_h2.push_back(h2s.empty() ? nan : quantile(h2s, 0.5));
      double f_mean = 0.0, ce_mean = 0.0;
      for (double v : fs) f_mean += v;
      for (double v : ces) ce_mean += v;
      series.mean_neg_f.push_back(fs.empty() ? nan : -f_mean / static_cast<double>(fs.size()));
      series.mean_cum_ce.push_back(ces.empty() ? nan : ce_mean / static_cast<double>(ces.size()));
      series.n_diverged.push_back(diverged);
    }
    result.series.push_back(std::move(series));
  }
  return result;
}

// Full strategy x replication grid. Slots are preassigned so results do not
// depend on worker scheduling.
inline BenchResult run_bench(const ExperimentSpec& spec, const GmmModel& model,
                             std::vector<RunOutcome>* traces_out = nullptr) {
  std::vector<GmmParams> inits;
  std::vector<StatVector> init_stats;
  inits.reserve(static_cast<std::size_t>(spec.replications));
  for (long r = 0; r < spec.replications; ++r) {
    inits.push_back(replication_init(spec, model, r));
    init_stats.push_back(model.init_stat(inits.back()));
  }
  const long jobs = static_cast<long>(spec.strategies.size()) * spec.replications;
  std::vector<RunOutcome> outcomes(static_cast<std::size_t>(jobs));
  detail::parallel_for(jobs, spec.workers, [&](long j) {
    const long si = j / spec.replications;
    const long r = j % spec.replications;
    outcomes[static_cast<std::size_t>(j)] =
        run_single(spec, model, spec.strategies[static_cast<std::size_t>(si)], si, r,
                   inits[static_cast<std::size_t>(r)],
                   init_stats[static_cast<std::size_t>(r)]);
  });
  BenchResult result =
      aggregate_bench(spec.strategies, spec.replications, spec.k_out, outcomes);
  if (traces_out) *traces_out = std::move(outcomes);
  return result;
}

// Run-trace CSV: one row per epoch, warmstart phase first. Wall-clock times
// are deliberately absent (they go to the sidecar log) so identical seeds
// give byte-identical files.
inline void write_trace_csv(const GmmTrace& trace, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write trace file: " + path);
  out << "phase,epoch,xi,xi_clamped,reset_size,h2,objective,cum_ce,cum_opt\n";
  const auto row = [&out](const EpochRecord& r) {
    out << (r.warmstart ? "warmstart" : "main") << ',' << r.epoch << ',' << r.xi << ','
        << (r.xi_clamped ? 1 : 0) << ',' << r.reset_size << ','
        << detail::fmt_double(r.h2) << ',' << detail::fmt_double(r.objective) << ','
        << r.cum_ce << ',' << r.cum_opt << '\n';
  };
  for (const auto& r : trace.warmstart_records) row(r);
  for (const auto& r : trace.epochs) row(r);
}

inline void write_trace_log(const GmmTrace& trace, const std::string& path,
                            const std::string& provenance) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write trace log: " + path);
  out << "# sidecar log (timestamps and wall-clock live here, not in the CSV)\n";
  out << "provenance: " << provenance << '\n';
  out << "warmstart_ce: " << trace.warmstart_ce << '\n';
  out << "diverged: " << (trace.diverged ? "yes" : "no") << '\n';
  for (const auto& r : trace.epochs)
    out << "epoch " << r.epoch << " wall_seconds " << r.wall_seconds << '\n';
}

}  // namespace spiderem
