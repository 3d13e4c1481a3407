// Identity checks behind the `verify` command: the martingale bias identity
// of the variance-reduced update, the with-replacement variance equality,
// the geometric stopping identity, and the complexity-counter closed forms.
// Exact variants enumerate every batch; stochastic variants run Monte Carlo
// with fixed seeds and report deviations in standard-error units.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "spiderem/data.hpp"
#include "spiderem/gmm.hpp"
#include "spiderem/model.hpp"
#include "spiderem/samplers.hpp"
#include "spiderem/solvers.hpp"

namespace spiderem {

struct CheckResult {
  std::string name;
  bool pass = false;
  double observed = 0.0;   // deviation in the units of the threshold
  double threshold = 0.0;
  std::string detail;
};

struct VerifyOptions {
  std::uint64_t seed = 20240101;
  long trials = 100000;
};

namespace detail {

// All ordered with-replacement batches of size b over {0..n-1}.
template <typename Fn>
void for_each_batch(long n, long b, Fn&& fn) {
  std::vector<long> digits(static_cast<std::size_t>(b), 0);
  while (true) {
    fn(static_cast<const std::vector<long>&>(digits));
    long pos = b - 1;
    while (pos >= 0 && ++digits[static_cast<std::size_t>(pos)] == n) {
      digits[static_cast<std::size_t>(pos)] = 0;
      --pos;
    }
    if (pos < 0) break;
  }
}

inline GmmModel toy_model(long n_prefix = 4) {
  Dataset d;
  d.values.resize(n_prefix, 1);
  const double vals[4] = {-2.0, -1.0, 1.0, 2.0};
  for (long i = 0; i < n_prefix; ++i) d.values(i, 0) = vals[i];
  d.provenance = "toy";
  return GmmModel(std::move(d), 2);
}

inline GmmParams toy_params(const GmmModel& model, double m0, double m1, double w0,
                            double var) {
  Eigen::VectorXd w(2);
  w << w0, 1.0 - w0;
  Eigen::MatrixXd mu(1, 2);
  mu << m0, m1;
  Eigen::MatrixXd cov(1, 1);
  cov << var;
  return model.make_params(w, mu, cov);
}

// Fixed (S_hat_prev, S_hat_cur, estimator) triple reachable by the solver.
struct UpdateFixture {
  StatVector s_prev, s_cur, estimator;
};

template <LatentModel M>
UpdateFixture make_fixture(const M& model, const typename M::Params& start) {
  UpdateFixture f;
  f.s_prev = full_expectation(model, start, nullptr);
  const StatVector em_image = full_expectation(model, model.t_map(f.s_prev), nullptr);
  f.s_cur = f.s_prev + 0.3 * (em_image - f.s_prev);
  f.estimator = em_image;  // any fixed value works; use the reachable one
  return f;
}

inline CheckResult componentwise_sigma_check(const std::string& name,
                                             const Eigen::VectorXd& mean,
                                             const Eigen::VectorXd& expected,
                                             const Eigen::VectorXd& se,
                                             double sigmas) {
  double worst = 0.0;
  bool pass = true;
  for (long c = 0; c < mean.size(); ++c) {
    const double diff = std::abs(mean[c] - expected[c]);
    if (se[c] > 0.0) {
      worst = std::max(worst, diff / se[c]);
      if (diff > sigmas * se[c]) pass = false;
    } else if (diff > 1e-12) {
      pass = false;
      worst = std::max(worst, sigmas + diff);  // zero-variance component drifted
    }
  }
  CheckResult r;
  r.name = name;
  r.pass = pass;
  r.observed = worst;
  r.threshold = sigmas;
  r.detail = "max componentwise deviation in standard errors";
  return r;
}

}  // namespace detail

// Expectation of D under the geometric law on {1,2,...} with success
// probability 1-rho, by truncated summation (long double accumulation).
inline long double geometric_expectation(long double rho, long terms,
                                         const std::function<long double(long)>& d) {
  long double sum = 0.0L;
  long double weight = 1.0L - rho;  // (1-rho) rho^(k-1) at k=1
  for (long k = 1; k <= terms; ++k) {
    sum += weight * d(k);
    weight *= rho;
  }
  return sum;
}

inline long double truncated_geometric_mean(long double rho, long cap) {
  // E[min(Xi, cap)] = (1 - rho^cap) / (1 - rho)
  return (1.0L - std::pow(rho, static_cast<long double>(cap))) / (1.0L - rho);
}

inline long double truncated_geometric_var(long double rho, long cap) {
  const long double c = static_cast<long double>(cap);
  const long double rc = std::pow(rho, c);
  const long double mean = (1.0L - rc) / (1.0L - rho);
  // sum_{k=1..cap} k rho^(k-1) = (1 - (cap+1) rho^cap + cap rho^(cap+1)) / (1-rho)^2
  const long double sum_k = (1.0L - (c + 1.0L) * rc + c * rc * rho) /
                            ((1.0L - rho) * (1.0L - rho));
  const long double second = 2.0L * sum_k - mean;  // E[min^2] via survival sums
  return second - mean * mean;
}

// ---------------------------------------------------------------------------
// Bias identity: averaged over mini-batches, the next running estimator is
// the current one plus the exact mean-field difference between the last two
// iterates. Exact over all 16 batches of the 4-point toy mixture, and Monte
// Carlo componentwise on a larger synthetic problem.
inline std::vector<CheckResult> verify_bias(const VerifyOptions& opts) {
  std::vector<CheckResult> out;
  {
    const GmmModel model = detail::toy_model();
    const auto fixture =
        detail::make_fixture(model, detail::toy_params(model, -1.5, 1.2, 0.4, 0.8));
    const auto theta_prev = model.t_map(fixture.s_prev);
    const auto theta_cur = model.t_map(fixture.s_cur);
    const long n = model.example_count();
    const long b = 2;
    StatVector mean = StatVector::Zero(model.stat_dim());
    long count = 0;
    detail::for_each_batch(n, b, [&](const std::vector<long>& batch) {
      StatVector next = fixture.estimator;
      for (long i : batch)
        next += (model.per_example_expectation(i, theta_cur) -
                 model.per_example_expectation(i, theta_prev)) /
                static_cast<double>(b);
      mean += next;
      ++count;
    });
    mean /= static_cast<double>(count);
    const StatVector expected = fixture.estimator +
                                full_expectation(model, theta_cur, nullptr) -
                                full_expectation(model, theta_prev, nullptr);
    CheckResult r;
    r.name = "bias/exact-enumeration(n=4,b=2)";
    r.observed = (mean - expected).cwiseAbs().maxCoeff();
    r.threshold = 1e-12;
    r.pass = r.observed <= r.threshold;
    r.detail = "max abs deviation over all 16 batches";
    out.push_back(r);
  }
  {
    const auto synth = synth_gmm(3, 2, 200, 5.0, opts.seed);
    const GmmModel model(synth.data, 3);
    Rng init_rng = split_rng(opts.seed, streams::kInit);
    const auto fixture = detail::make_fixture(model, model.init_params(init_rng));
    const auto theta_prev = model.t_map(fixture.s_prev);
    const auto theta_cur = model.t_map(fixture.s_cur);
    const long n = model.example_count();
    const long b = 10;
    const long trials = std::max<long>(opts.trials, 1000);
    Rng rng = split_rng(opts.seed, streams::kBatch);
    const StatVector expected = fixture.estimator +
                                full_expectation(model, theta_cur, nullptr) -
                                full_expectation(model, theta_prev, nullptr);
    // accumulate deviations from the expected value; this keeps the running
    // sums near zero so the componentwise test is not polluted by the
    // rounding of 10^5-term accumulations
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(model.stat_dim());
    Eigen::VectorXd sum_sq = Eigen::VectorXd::Zero(model.stat_dim());
    const BatchSpec spec{b, true};
    for (long m = 0; m < trials; ++m) {
      const auto batch = draw_minibatch(rng, n, spec);
      StatVector next = fixture.estimator;
      for (long i : batch)
        next += (model.per_example_expectation(i, theta_cur) -
                 model.per_example_expectation(i, theta_prev)) /
                static_cast<double>(b);
      const StatVector dev = next - expected;
      sum += dev;
      sum_sq += dev.cwiseProduct(dev);
    }
    const Eigen::VectorXd mean_dev = sum / static_cast<double>(trials);
    Eigen::VectorXd var =
        (sum_sq - sum.cwiseProduct(sum) / static_cast<double>(trials)) /
        static_cast<double>(trials - 1);
    var = var.cwiseMax(0.0);
    const Eigen::VectorXd se = (var / static_cast<double>(trials)).cwiseSqrt();
    out.push_back(detail::componentwise_sigma_check(
        "bias/monte-carlo(n=200,b=10,M=" + std::to_string(trials) + ")", mean_dev,
        Eigen::VectorXd::Zero(model.stat_dim()), se, 5.0));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Variance equality for with-replacement sampling, exact over enumerations:
// both for raw fixed vectors (mean unbiasedness included) and for the
// solver's correction differences on toy mixtures.
inline std::vector<CheckResult> verify_variance(const VerifyOptions&) {
  std::vector<CheckResult> out;

  const auto check_vectors = [&out](const std::string& name,
                                    const std::vector<Eigen::VectorXd>& x, long b) {
    const long n = static_cast<long>(x.size());
    Eigen::VectorXd x_bar = Eigen::VectorXd::Zero(x[0].size());
    for (const auto& v : x) x_bar += v;
    x_bar /= static_cast<double>(n);
    Eigen::VectorXd mean_of_means = Eigen::VectorXd::Zero(x[0].size());
    double second_moment = 0.0;
    long count = 0;
    detail::for_each_batch(n, b, [&](const std::vector<long>& batch) {
      Eigen::VectorXd m = Eigen::VectorXd::Zero(x[0].size());
      for (long i : batch) m += x[static_cast<std::size_t>(i)];
      m /= static_cast<double>(b);
      mean_of_means += m;
      second_moment += (m - x_bar).squaredNorm();
      ++count;
    });
    mean_of_means /= static_cast<double>(count);
    second_moment /= static_cast<double>(count);
    double scatter = 0.0;
    for (const auto& v : x) scatter += (v - x_bar).squaredNorm();
    scatter /= static_cast<double>(n);
    const double expected_var = scatter / static_cast<double>(b);

    CheckResult mean_check;
    mean_check.name = name + "/mean-unbiased";
    mean_check.observed = (mean_of_means - x_bar).cwiseAbs().maxCoeff();
    mean_check.threshold = 1e-12;
    mean_check.pass = mean_check.observed <= mean_check.threshold;
    mean_check.detail = "enumerated batch mean vs full mean";
    out.push_back(mean_check);

    CheckResult var_check;
    var_check.name = name + "/variance-equality";
    var_check.observed = std::abs(second_moment - expected_var);
    var_check.threshold = 1e-12;
    var_check.pass = var_check.observed <= var_check.threshold;
    var_check.detail = "enumerated variance vs (1/b) scatter";
    out.push_back(var_check);
  };

  // Raw vectors, every (n, b) with n <= 4, b <= 3.
  std::vector<Eigen::VectorXd> xs;
  for (long i = 0; i < 4; ++i) {
    Eigen::VectorXd v(2);
    v << 0.5 * static_cast<double>(i * i) - 1.0, std::sin(static_cast<double>(i) + 0.5);
    xs.push_back(v);
  }
  for (long n = 1; n <= 4; ++n)
    for (long b = 1; b <= 3; ++b)
      check_vectors("variance/vectors(n=" + std::to_string(n) + ",b=" + std::to_string(b) + ")",
                    std::vector<Eigen::VectorXd>(xs.begin(), xs.begin() + n), b);

  // Solver correction differences on the toy mixture.
  for (long b : {2L, 3L}) {
    const GmmModel model = detail::toy_model();
    const auto fixture =
        detail::make_fixture(model, detail::toy_params(model, -1.2, 0.9, 0.55, 1.1));
    const auto theta_prev = model.t_map(fixture.s_prev);
    const auto theta_cur = model.t_map(fixture.s_cur);
    std::vector<Eigen::VectorXd> deltas;
    for (long i = 0; i < model.example_count(); ++i)
      deltas.push_back(model.per_example_expectation(i, theta_cur) -
                       model.per_example_expectation(i, theta_prev));
    check_vectors("variance/estimator-deltas(n=4,b=" + std::to_string(b) + ")", deltas, b);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Geometric stopping identity E[D_{Xi-1}] = rho E[D_Xi] + (1-rho) D_0:
// truncated analytic summation (exact) and Monte Carlo against the sampler.
inline std::vector<CheckResult> verify_geom(const VerifyOptions& opts) {
  std::vector<CheckResult> out;
  struct NamedSeq {
    std::string name;
    std::function<long double(long)> d;
  };
  const std::vector<NamedSeq> seqs = {
      {"D=k", [](long k) { return static_cast<long double>(k); }},
      {"D=k^2", [](long k) { return static_cast<long double>(k) * static_cast<long double>(k); }},
      {"D=2^-k", [](long k) { return std::pow(0.5L, static_cast<long double>(k)); }}};

  for (const auto& seq : seqs)
    for (double rho : {0.3, 0.9}) {
      const long terms = 4000;
      const long double lhs = geometric_expectation(
          static_cast<long double>(rho), terms, [&](long k) { return seq.d(k - 1); });
      const long double rhs =
          static_cast<long double>(rho) *
              geometric_expectation(static_cast<long double>(rho), terms, seq.d) +
          (1.0L - static_cast<long double>(rho)) * seq.d(0);
      CheckResult r;
      r.name = "geom/analytic(" + seq.name + ",rho=" + std::to_string(rho).substr(0, 3) + ")";
      r.observed = static_cast<double>(std::fabs(lhs - rhs));
      r.threshold = 1e-12;
      r.pass = r.observed <= r.threshold;
      r.detail = "truncated summation, both sides";
      out.push_back(r);
    }

  struct McCase {
    std::string name;
    std::function<long double(long)> d;
    double rho;
    long cap;
  };
  const std::vector<McCase> mc_cases = {
      {"D=k^2,rho=0.5,cap=200", seqs[1].d, 0.5, 200},
      {"D=k,rho=0.3", seqs[0].d, 0.3, 0},
      {"D=2^-k,rho=0.9", seqs[2].d, 0.9, 0}};
  const long draws = std::max<long>(opts.trials, 10000);
  std::uint64_t stream = 100;
  for (const auto& c : mc_cases) {
    const EpochSchedule schedule =
        c.cap > 0 ? EpochSchedule::geometric(c.rho, c.cap)
                  : EpochSchedule::geometric_with_mean(1.0 / (1.0 - c.rho));
    Rng rng = split_rng(opts.seed, stream++);
    // Paired statistic X = D(len-1) - rho D(len); E[X] = (1-rho) D(0).
    double sum = 0.0, sum_sq = 0.0;
    for (long m = 0; m < draws; ++m) {
      const long len = draw_epoch_length(rng, schedule).length;
      const double x = static_cast<double>(c.d(len - 1)) -
                       c.rho * static_cast<double>(c.d(len));
      sum += x;
      sum_sq += x * x;
    }
    const double mean = sum / static_cast<double>(draws);
    const double var =
        std::max(0.0, (sum_sq - sum * sum / static_cast<double>(draws)) /
                          static_cast<double>(draws - 1));
    const double se = std::sqrt(var / static_cast<double>(draws));
    const double expected = (1.0 - c.rho) * static_cast<double>(c.d(0));
    CheckResult r;
    r.name = "geom/monte-carlo(" + c.name + ",M=" + std::to_string(draws) + ")";
    r.observed = se > 0.0 ? std::abs(mean - expected) / se
                          : std::abs(mean - expected);
    r.threshold = 4.0;
    r.pass = se > 0.0 ? r.observed <= r.threshold
                      : std::abs(mean - expected) <= 1e-12;
    r.detail = "deviation in standard errors";
    out.push_back(r);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Counter closed forms: exact for constant schedules, in expectation for
// geometric schedules.
inline std::vector<CheckResult> verify_counters(const VerifyOptions& opts) {
  std::vector<CheckResult> out;
  Rng cfg_rng = split_rng(opts.seed, 555);
  for (int c = 0; c < 5; ++c) {
    const long n = 20 + static_cast<long>(cfg_rng.next_below(100));
    const long b = 1 + static_cast<long>(cfg_rng.next_below(
                           static_cast<std::uint64_t>(std::min<long>(n, 15))));
    const long k_in = 1 + static_cast<long>(cfg_rng.next_below(8));
    const long k_out = 1 + static_cast<long>(cfg_rng.next_below(5));
    const auto synth = synth_gmm(2, 2, n, 4.0, opts.seed + static_cast<std::uint64_t>(c));
    const GmmModel model(synth.data, 2);
    Rng init_rng = split_rng(opts.seed, 556 + static_cast<std::uint64_t>(c));
    const auto theta0 = model.init_params(init_rng);
    RunConfig cfg;
    cfg.batch_size = b;
    cfg.k_out = k_out;
    cfg.schedule = ScheduleRule::constant(k_in);
    cfg.reset = ResetPolicy::full();
    cfg.steps.gamma_inner = 0.3;
    cfg.seed = opts.seed + 1000 + static_cast<std::uint64_t>(c);
    const auto trace = gspider_run(model, model.init_stat(theta0), cfg);
    const std::int64_t expected_ce = n + n * k_out + 2 * b * k_in * k_out;
    const std::int64_t expected_opt = k_out + k_in * k_out;
    CheckResult r;
    r.name = "counters/constant(n=" + std::to_string(n) + ",b=" + std::to_string(b) +
             ",k_in=" + std::to_string(k_in) + ",k_out=" + std::to_string(k_out) + ")";
    const std::int64_t ce = trace.epochs.back().cum_ce;
    const std::int64_t op = trace.epochs.back().cum_opt;
    r.observed = static_cast<double>(std::abs(ce - expected_ce) + std::abs(op - expected_opt));
    r.threshold = 0.0;
    r.pass = (ce == expected_ce) && (op == expected_opt);
    r.detail = "ce=" + std::to_string(ce) + " expected=" + std::to_string(expected_ce) +
               ", opt=" + std::to_string(op) + " expected=" + std::to_string(expected_opt);
    out.push_back(r);
  }
  {
    // Geometric schedule: mean of the final CE count over replications.
    const long n = 60, b = 5, k_out = 3;
    const double mean_len = 6.0;
    const EpochSchedule sched = EpochSchedule::geometric_with_mean(mean_len);
    const auto synth = synth_gmm(2, 2, n, 4.0, opts.seed + 77);
    const GmmModel model(synth.data, 2);
    Rng init_rng = split_rng(opts.seed, 600);
    const auto s0 = model.init_stat(model.init_params(init_rng));
    const long reps = 200;
    double sum_ce = 0.0;
    for (long r = 0; r < reps; ++r) {
      RunConfig cfg;
      cfg.batch_size = b;
      cfg.k_out = k_out;
      cfg.schedule = ScheduleRule::geometric(sched.rho, sched.cap);
      cfg.reset = ResetPolicy::full();
      cfg.steps.gamma_inner = 0.3;
      cfg.seed = mix_seed({opts.seed, 9000, static_cast<std::uint64_t>(r)});
      const auto trace = gspider_run(model, s0, cfg);
      sum_ce += static_cast<double>(trace.epochs.back().cum_ce);
    }
    const double mean_ce = sum_ce / static_cast<double>(reps);
    const double exp_len = static_cast<double>(truncated_geometric_mean(sched.rho, sched.cap));
    const double var_len = static_cast<double>(truncated_geometric_var(sched.rho, sched.cap));
    const double expected =
        static_cast<double>(n + n * k_out) + 2.0 * b * k_out * exp_len;
    const double sd_run = 2.0 * b * std::sqrt(static_cast<double>(k_out) * var_len);
    const double se = sd_run / std::sqrt(static_cast<double>(reps));
    CheckResult r;
    r.name = "counters/geometric(mean over 200 runs of 3 epochs)";
    r.observed = std::abs(mean_ce - expected) / se;
    r.threshold = 4.0;
    r.pass = r.observed <= r.threshold;
    r.detail = "mean ce=" + std::to_string(mean_ce) + " expected=" + std::to_string(expected);
    out.push_back(r);
  }
  return out;
}

inline std::vector<CheckResult> verify_all(const VerifyOptions& opts) {
  std::vector<CheckResult> out;
  for (auto&& v : {verify_bias(opts), verify_variance(opts), verify_geom(opts),
                   verify_counters(opts)})
    out.insert(out.end(), v.begin(), v.end());
  return out;
}

}  // namespace spiderem
