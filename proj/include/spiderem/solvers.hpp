// Optimization algorithms in the sufficient-statistic space: batch EM,
// Online-EM, and the variance-reduced SPIDER-EM family with constant or
// geometric epoch lengths and full or subsampled estimator resets.
//
// Counter conventions, matched by the closed forms below:
//   ce  += batch size for every mini-batch expectation term evaluated
//          (inner steps touch each index twice), += reset batch size for
//          every estimator reset including the initial one;
//   opt += 1 per inner iteration and += 1 per in-loop estimator reset
//          (the reset performed before epoch 1 is initialization).
// End-of-epoch diagnostics (||h||^2 and the objective) are never charged.
// With a constant epoch length k_in and full resets the final counters are
//   ce  = n + n k_out + 2 b k_in k_out,   opt = k_out + k_in k_out.
#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "spiderem/model.hpp"
#include "spiderem/rng.hpp"
#include "spiderem/samplers.hpp"

namespace spiderem {

// Estimator reset rule at epoch starts. Full recomputes the exact mean over
// all n examples; Fraction and Growth average over a fresh without-replacement
// subsample, leaving a perturbation on the estimator.
struct ResetPolicy {
  enum class Kind { Full, Fraction, Growth };

  Kind kind = Kind::Full;
  double fraction = 1.0;    // Fraction
  double growth_c1 = 20.0;  // Growth: size_t(epoch) = min(n, max(c1 t^2, n/c2))
  double growth_c2 = 50.0;

  static ResetPolicy full() { return {}; }
  static ResetPolicy fraction_of(double f) {
    ResetPolicy p;
    p.kind = Kind::Fraction;
    p.fraction = f;
    p.validate();
    return p;
  }
  static ResetPolicy growth(double c1, double c2) {
    ResetPolicy p;
    p.kind = Kind::Growth;
    p.growth_c1 = c1;
    p.growth_c2 = c2;
    p.validate();
    return p;
  }

  // Subsample size for the reset starting epoch t (1-based), rounded to the
  // nearest integer in [1, n].
  long reset_size(long epoch, long n) const {
    double raw = static_cast<double>(n);
    switch (kind) {
      case Kind::Full: return n;
      case Kind::Fraction: raw = fraction * static_cast<double>(n); break;
      case Kind::Growth: {
        const double t = static_cast<double>(epoch);
        raw = std::min(static_cast<double>(n),
                       std::max(growth_c1 * t * t, static_cast<double>(n) / growth_c2));
        break;
      }
    }
    const long rounded = static_cast<long>(std::llround(raw));
    return std::clamp(rounded, 1L, n);
  }

  void validate() const {
    if (kind == Kind::Fraction && !(fraction > 0.0 && fraction <= 1.0))
      throw std::invalid_argument("reset fraction must lie in (0, 1]");
    if (kind == Kind::Growth && (!(growth_c1 > 0.0) || !(growth_c2 > 0.0)))
      throw std::invalid_argument("reset growth constants must be > 0");
  }
};

// Step sizes: a constant inner step, an optional step applied right after
// each reset (default 0), and an optional auto rule gamma = alpha / L that
// the harness resolves before launching a run.
struct StepSchedule {
  double gamma_inner = 0.01;
  double gamma_reset = 0.0;
  std::optional<double> alpha;

  void validate() const {
    if (!(gamma_inner > 0.0)) throw std::invalid_argument("gamma_inner must be > 0");
    if (gamma_reset < 0.0) throw std::invalid_argument("gamma_reset must be >= 0");
    if (alpha && !(*alpha > 0.0)) throw std::invalid_argument("alpha must be > 0");
  }
};

// Epoch-length rule. Constant and Geometric resolve to the same schedule at
// every epoch; GeometricGrowth matches the mean inner-loop count to the
// growing reset size, E[len at t] = min(n, max(c1 t^2, n/c2)) / (2 b).
struct ScheduleRule {
  enum class Kind { Constant, Geometric, GeometricGrowth };

  Kind kind = Kind::Constant;
  long k_in = 1;
  double rho = 0.5;
  long cap = 1;
  double growth_c1 = 20.0;
  double growth_c2 = 50.0;

  static ScheduleRule constant(long k) {
    ScheduleRule r;
    r.kind = Kind::Constant;
    r.k_in = k;
    return r;
  }
  static ScheduleRule geometric(double rho, long cap) {
    ScheduleRule r;
    r.kind = Kind::Geometric;
    r.rho = rho;
    r.cap = cap;
    return r;
  }
  static ScheduleRule geometric_with_mean(double mean) {
    const EpochSchedule s = EpochSchedule::geometric_with_mean(mean);
    return geometric(s.rho, s.cap);
  }
  static ScheduleRule geometric_growth(double c1, double c2) {
    ScheduleRule r;
    r.kind = Kind::GeometricGrowth;
    r.growth_c1 = c1;
    r.growth_c2 = c2;
    return r;
  }

  EpochSchedule at_epoch(long t, long n, long b) const {
    switch (kind) {
      case Kind::Constant: return EpochSchedule::constant(k_in);
      case Kind::Geometric: return EpochSchedule::geometric(rho, cap);
      case Kind::GeometricGrowth: {
        const double tt = static_cast<double>(t);
        const double size = std::min(static_cast<double>(n),
                                     std::max(growth_c1 * tt * tt,
                                              static_cast<double>(n) / growth_c2));
        return EpochSchedule::geometric_with_mean(size / (2.0 * static_cast<double>(b)));
      }
    }
    throw std::logic_error("unreachable");
  }

  void validate() const {
    switch (kind) {
      case Kind::Constant:
        EpochSchedule::constant(k_in);
        break;
      case Kind::Geometric:
        EpochSchedule::geometric(rho, cap);
        break;
      case Kind::GeometricGrowth:
        if (!(growth_c1 > 0.0) || !(growth_c2 > 0.0))
          throw std::invalid_argument("schedule growth constants must be > 0");
        break;
    }
  }
};

enum class Termination { None, RandomizedUniform };

struct RunConfig {
  long batch_size = 1;
  bool with_replacement = true;
  long k_out = 1;
  ScheduleRule schedule = ScheduleRule::constant(1);
  ResetPolicy reset = ResetPolicy::full();
  StepSchedule steps;
  long warmstart_epochs = 0;
  std::uint64_t seed = 0;
  long diag_every = 1;
  Termination termination = Termination::None;

  std::vector<std::string> violations(long n) const {
    std::vector<std::string> out;
    if (k_out < 1) out.push_back("k_out must be >= 1");
    if (warmstart_epochs < 0) out.push_back("warmstart_epochs must be >= 0");
    if (batch_size < 1) out.push_back("batch size must be >= 1");
    if (!with_replacement && batch_size > n)
      out.push_back("batch size exceeds n for sampling without replacement");
    if (diag_every < 1) out.push_back("diag_every must be >= 1");
    try {
      schedule.validate();
    } catch (const std::exception& e) {
      out.push_back(e.what());
    }
    try {
      reset.validate();
    } catch (const std::exception& e) {
      out.push_back(e.what());
    }
    try {
      steps.validate();
    } catch (const std::exception& e) {
      out.push_back(e.what());
    }
    return out;
  }

  void validate(long n) const {
    const auto v = violations(n);
    if (!v.empty()) {
      std::string msg = "invalid run config:";
      for (const auto& s : v) msg += "\n  - " + s;
      throw std::invalid_argument(msg);
    }
  }
};

struct EpochRecord {
  long epoch = 0;  // 1-based within its phase
  bool warmstart = false;
  long xi = 0;
  bool xi_clamped = false;
  long reset_size = 0;  // size of the reset performed inside this epoch body
  double h2 = std::numeric_limits<double>::quiet_NaN();
  double objective = std::numeric_limits<double>::quiet_NaN();
  std::int64_t cum_ce = 0;   // within phase
  std::int64_t cum_opt = 0;  // within phase
  double wall_seconds = 0.0;
};

template <typename ParamsT>
struct RunTrace {
  std::vector<EpochRecord> warmstart_records;
  std::vector<EpochRecord> epochs;
  std::vector<StatVector> epoch_end_stats;  // main phase, one per epoch
  StatVector final_stat;
  ParamsT final_params;
  std::int64_t warmstart_ce = 0;
  std::int64_t warmstart_opt = 0;
  bool diverged = false;
  long diverged_epoch = 0;  // 0 = none
};

namespace detail {

inline double elapsed_seconds(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - since).count();
}

inline long sqrt_batch(long n) {
  return static_cast<long>(std::ceil(std::sqrt(static_cast<double>(n))));
}

// One Online-EM phase: each update averages a fresh mini-batch expectation
// at the current parameters and relaxes the statistic toward it.
template <LatentModel M>
void online_em_phase(const M& model, StatVector& s, long epochs, long updates_per_epoch,
                     long batch_size, bool with_replacement, double gamma, Rng& batch_rng,
                     std::vector<EpochRecord>& records, Counters& counters,
                     bool warmstart_phase, long diag_every, bool& diverged,
                     long& diverged_epoch,
                     std::vector<StatVector>* epoch_end_stats = nullptr) {
  const long n = model.example_count();
  const BatchSpec spec{batch_size, with_replacement};
  for (long e = 1; e <= epochs; ++e) {
    const auto t0 = std::chrono::steady_clock::now();
    bool blew_up = false;
    for (long u = 0; u < updates_per_epoch; ++u) {
      const auto p = model.t_map(s);
      counters.opt += 1;
      const auto batch = draw_minibatch(batch_rng, n, spec);
      const StatVector mean = average_expectation(model, p, batch, &counters);
      s += gamma * (mean - s);
      if (!all_finite(s)) {
        blew_up = true;
        break;
      }
    }
    EpochRecord rec;
    rec.epoch = e;
    rec.warmstart = warmstart_phase;
    rec.xi = updates_per_epoch;
    rec.cum_ce = counters.ce;
    rec.cum_opt = counters.opt;
    const bool diag = (e % diag_every == 0) && !blew_up;
    if (diag) {
      const auto p_diag = model.t_map(s);  // diagnostics, uncounted
      rec.h2 = mean_field_at(model, p_diag, s).squaredNorm();
      rec.objective = model.objective(p_diag);
    }
    rec.wall_seconds = elapsed_seconds(t0);
    records.push_back(rec);
    if (epoch_end_stats) epoch_end_stats->push_back(s);
    if (!all_finite(s) || (diag && !std::isfinite(rec.h2))) {
      diverged = true;
      diverged_epoch = e;
      break;
    }
  }
}

}  // namespace detail

/// Batch EM in the statistic space: s <- full-pass expectation at T(s).
/// Iterates until the mean-field norm falls to tol or max_iter is reached;
/// tol = 0 disables the tolerance stop and runs max_iter iterations.
/// Every iteration charges exactly n CE; the initial expectation pass at
/// theta_init charges n as well.
template <LatentModel M>
RunTrace<typename M::Params> batch_em_run(const M& model,
                                          const typename M::Params& theta_init,
                                          long max_iter, double tol) {
  if (max_iter < 1) throw std::invalid_argument("max_iter must be >= 1");
  RunTrace<typename M::Params> trace;
  Counters counters;
  StatVector s = full_expectation(model, theta_init, &counters);
  typename M::Params theta = theta_init;
  for (long k = 1; k <= max_iter; ++k) {
    const auto t0 = std::chrono::steady_clock::now();
    theta = model.t_map(s);
    counters.opt += 1;
    const StatVector s_next = full_expectation(model, theta, &counters);
    const double h2 = (s_next - s).squaredNorm();  // h(s) = s_bar(T(s)) - s
    s = s_next;
    EpochRecord rec;
    rec.epoch = k;
    rec.xi = 1;
    rec.h2 = h2;
    rec.objective = model.objective(theta);
    rec.cum_ce = counters.ce;
    rec.cum_opt = counters.opt;
    rec.wall_seconds = detail::elapsed_seconds(t0);
    trace.epochs.push_back(rec);
    trace.epoch_end_stats.push_back(s);
    if (!all_finite(s)) {
      trace.diverged = true;
      trace.diverged_epoch = k;
      break;
    }
    if (tol > 0.0 && std::sqrt(h2) <= tol) break;
  }
  trace.final_stat = s;
  trace.final_params = theta;
  return trace;
}

/// Online-EM: stochastic-approximation updates with the mean field estimated
/// on a fresh mini-batch each step. One epoch is ceil(sqrt(n)) updates of
/// batch size config.batch_size. Accepts gamma_inner in [0, 1]; gamma = 0 is
/// the degenerate constant-iterate case.
template <LatentModel M>
RunTrace<typename M::Params> online_em_run(const M& model, const StatVector& s_init,
                                           const RunConfig& config) {
  const long n = model.example_count();
  // Same config checks as the config owns, except that the degenerate
  // constant-iterate step gamma = 0 is accepted here.
  auto issues = config.violations(n);
  std::erase_if(issues, [](const std::string& m) { return m == "gamma_inner must be > 0"; });
  if (!issues.empty()) throw std::invalid_argument("invalid run config: " + issues.front());
  if (!(config.steps.gamma_inner >= 0.0 && config.steps.gamma_inner <= 1.0))
    throw std::invalid_argument("online EM requires gamma_inner in [0, 1]");
  RunTrace<typename M::Params> trace;
  StatVector s = s_init;
  const long updates = detail::sqrt_batch(n);

  if (config.warmstart_epochs > 0) {
    Rng warm_rng = split_rng(config.seed, streams::kWarmstart);
    Counters warm;
    detail::online_em_phase(model, s, config.warmstart_epochs, updates,
                            detail::sqrt_batch(n), config.with_replacement, 0.01,
                            warm_rng, trace.warmstart_records, warm, true,
                            config.diag_every, trace.diverged, trace.diverged_epoch);
    trace.warmstart_ce = warm.ce;
    trace.warmstart_opt = warm.opt;
  }

  Counters counters;
  if (!trace.diverged) {
    Rng batch_rng = split_rng(config.seed, streams::kBatch);
    detail::online_em_phase(model, s, config.k_out, updates, config.batch_size,
                            config.with_replacement, config.steps.gamma_inner,
                            batch_rng, trace.epochs, counters, false,
                            config.diag_every, trace.diverged, trace.diverged_epoch,
                            &trace.epoch_end_stats);
  }
  trace.final_stat = s;
  if (all_finite(s)) trace.final_params = model.t_map(s);
  return trace;
}

/// The variance-reduced EM solver. Per epoch: reset the running estimator
/// from a full or subsampled expectation pass at the hand-off statistic,
/// optionally take a gamma_reset step, then run a constant or geometric
/// number of inner corrections, each evaluating the current and previous
/// parameter expectations on the same mini-batch.
template <LatentModel M>
RunTrace<typename M::Params> gspider_run(const M& model, const StatVector& s_init,
                                         const RunConfig& config) {
  const long n = model.example_count();
  config.validate(n);
  RunTrace<typename M::Params> trace;
  StatVector s_start = s_init;

  if (config.warmstart_epochs > 0) {
    Rng warm_rng = split_rng(config.seed, streams::kWarmstart);
    Counters warm;
    const long updates = detail::sqrt_batch(n);
    detail::online_em_phase(model, s_start, config.warmstart_epochs, updates,
                            detail::sqrt_batch(n), config.with_replacement, 0.01,
                            warm_rng, trace.warmstart_records, warm, true,
                            config.diag_every, trace.diverged, trace.diverged_epoch);
    trace.warmstart_ce = warm.ce;
    trace.warmstart_opt = warm.opt;
    if (trace.diverged) {
      trace.final_stat = s_start;
      if (all_finite(s_start)) trace.final_params = model.t_map(s_start);
      return trace;
    }
  }

  Rng batch_rng = split_rng(config.seed, streams::kBatch);
  Rng reset_rng = split_rng(config.seed, streams::kReset);
  Rng length_rng = split_rng(config.seed, streams::kEpochLength);
  Counters counters;
  const double gamma = config.steps.gamma_inner;
  const double gamma0 = config.steps.gamma_reset;
  const BatchSpec inner_spec{config.batch_size, config.with_replacement};

  // Averages per-example expectations over a reset subsample (ascending
  // order; the full policy never touches the reset stream).
  auto reset_estimate = [&](long epoch, const typename M::Params& params) {
    const long size = config.reset.reset_size(epoch, n);
    if (size == n) return std::pair<StatVector, long>(
        full_expectation(model, params, &counters), n);
    const auto idx = draw_minibatch(reset_rng, n, BatchSpec{size, false});
    return std::pair<StatVector, long>(
        average_expectation(model, params, idx, &counters), size);
  };

  StatVector s_handoff = s_start;                     // S_hat_{t,-1}
  typename M::Params theta_handoff = model.t_map(s_handoff);  // initialization, not counted
  auto [estimator, reset_size0] = reset_estimate(1, theta_handoff);
  (void)reset_size0;
  // The first epoch starts from the raw initial statistic; the gamma_reset
  // step applies only after in-loop resets.
  StatVector s_cur = s_handoff;  // S_hat_{1,0} = S_hat_{1,-1}
  bool stepped = false;          // whether s_cur was displaced from the hand-off

  for (long t = 1; t <= config.k_out; ++t) {
    const auto t0 = std::chrono::steady_clock::now();
    const EpochSchedule schedule = config.schedule.at_epoch(t, n, config.batch_size);
    const EpochDraw draw = draw_epoch_length(length_rng, schedule);

    // Inner index k = 0 pairs T(S_hat_{t,0}) with the hand-off parameters
    // T(S_hat_{t,-1}), per the degenerate-epoch convention.
    typename M::Params theta_prev = theta_handoff;
    typename M::Params theta_cur = stepped ? model.t_map(s_cur) : theta_handoff;

    bool blew_up = false;
    for (long k = 0; k < draw.length; ++k) {
      const auto batch = draw_minibatch(batch_rng, n, inner_spec);
      StatVector correction = StatVector::Zero(model.stat_dim());
      for (long i : batch) detail::add_expectation(model, i, theta_cur, correction);
      StatVector previous_term = StatVector::Zero(model.stat_dim());
      for (long i : batch) detail::add_expectation(model, i, theta_prev, previous_term);
      counters.ce += 2 * static_cast<std::int64_t>(batch.size());
      estimator += (correction - previous_term) / static_cast<double>(batch.size());
      const StatVector s_next = s_cur + gamma * (estimator - s_cur);
      counters.opt += 1;
      theta_prev = std::move(theta_cur);
      s_cur = s_next;
      if (!all_finite(s_cur)) {
        blew_up = true;
        break;
      }
      if (k + 1 < draw.length) theta_cur = model.t_map(s_cur);
    }

    if (blew_up) {
      EpochRecord rec;
      rec.epoch = t;
      rec.xi = draw.length;
      rec.xi_clamped = draw.clamped;
      rec.cum_ce = counters.ce;
      rec.cum_opt = counters.opt;
      rec.wall_seconds = detail::elapsed_seconds(t0);
      trace.epochs.push_back(rec);
      trace.epoch_end_stats.push_back(s_cur);
      trace.diverged = true;
      trace.diverged_epoch = t;
      s_handoff = s_cur;
      break;
    }

    // Epoch boundary: hand off, reset the estimator for epoch t+1 (counted
    // as one optimization step), record diagnostics.
    s_handoff = s_cur;  // S_hat_{t+1,-1} = S_hat_{t,xi_t}
    theta_handoff = model.t_map(s_handoff);
    counters.opt += 1;
    auto [next_estimator, next_reset_size] = reset_estimate(t + 1, theta_handoff);

    EpochRecord rec;
    rec.epoch = t;
    rec.xi = draw.length;
    rec.xi_clamped = draw.clamped;
    rec.reset_size = next_reset_size;
    rec.cum_ce = counters.ce;
    rec.cum_opt = counters.opt;
    if (t % config.diag_every == 0) {
      if (config.reset.kind == ResetPolicy::Kind::Full) {
        rec.h2 = (next_estimator - s_handoff).squaredNorm();  // exact reset reused
      } else {
        rec.h2 = mean_field_at(model, theta_handoff, s_handoff).squaredNorm();
      }
      rec.objective = model.objective(theta_handoff);
    }
    rec.wall_seconds = detail::elapsed_seconds(t0);
    trace.epochs.push_back(rec);
    trace.epoch_end_stats.push_back(s_handoff);

    if (!all_finite(s_handoff) ||
        (t % config.diag_every == 0 && !std::isfinite(rec.h2))) {
      trace.diverged = true;
      trace.diverged_epoch = t;
      break;
    }

    estimator = std::move(next_estimator);
    stepped = gamma0 > 0.0;
    s_cur = stepped ? StatVector(s_handoff + gamma0 * (estimator - s_handoff))
                    : s_handoff;
  }

  trace.final_stat = s_handoff;
  trace.final_params = theta_handoff;
  return trace;
}

// The named strategy grid: reset policy crossed with epoch-length rule.
//   full-*  exact reset;  half-*  half-sample reset;  quad-*  growing reset
//   *-ctt   constant ceil(n/(2b)) inner loops
//   *-geom  geometric lengths, mean matched to the constant counterpart
//           (for quad-geom the mean grows with the reset size)
struct StrategyDef {
  ScheduleRule schedule;
  ResetPolicy reset;
};

inline StrategyDef spider_strategy(std::string_view name, long n, long b) {
  if (n < 1 || b < 1) throw std::invalid_argument("spider_strategy: n and b must be >= 1");
  const long k_in_constant = (n + 2 * b - 1) / (2 * b);  // ceil(n / 2b)
  const double mean_length = static_cast<double>(n) / (2.0 * static_cast<double>(b));
  StrategyDef def;
  if (name == "full-ctt") {
    def.schedule = ScheduleRule::constant(k_in_constant);
    def.reset = ResetPolicy::full();
  } else if (name == "half-ctt") {
    def.schedule = ScheduleRule::constant(k_in_constant);
    def.reset = ResetPolicy::fraction_of(0.5);
  } else if (name == "quad-ctt") {
    def.schedule = ScheduleRule::constant(k_in_constant);
    def.reset = ResetPolicy::growth(20.0, 50.0);
  } else if (name == "full-geom") {
    def.schedule = ScheduleRule::geometric_with_mean(mean_length);
    def.reset = ResetPolicy::full();
  } else if (name == "half-geom") {
    def.schedule = ScheduleRule::geometric_with_mean(mean_length);
    def.reset = ResetPolicy::fraction_of(0.5);
  } else if (name == "quad-geom") {
    def.schedule = ScheduleRule::geometric_growth(20.0, 50.0);
    def.reset = ResetPolicy::growth(20.0, 50.0);
  } else {
    throw std::invalid_argument("unknown strategy: " + std::string(name));
  }
  return def;
}

inline const std::vector<std::string>& spider_strategy_names() {
  static const std::vector<std::string> names = {"full-ctt",  "half-ctt",
                                                 "quad-ctt",  "full-geom",
                                                 "half-geom", "quad-geom"};
  return names;
}

/// Randomized termination: pick an epoch uniformly from {1, ..., k_out} and
/// return the stored end-of-epoch statistic, without recomputation.
template <typename ParamsT>
std::pair<long, StatVector> randomized_terminate(const RunTrace<ParamsT>& trace,
                                                 Rng& rng) {
  if (trace.epoch_end_stats.empty())
    throw std::invalid_argument("randomized_terminate: empty trace");
  const long k_out = static_cast<long>(trace.epoch_end_stats.size());
  const long t = 1 + static_cast<long>(rng.next_below(static_cast<std::uint64_t>(k_out)));
  return {t, trace.epoch_end_stats[static_cast<std::size_t>(t - 1)]};
}

}  // namespace spiderem
