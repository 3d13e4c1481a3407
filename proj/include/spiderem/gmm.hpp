// Gaussian mixture model with component means and one shared full
// covariance, expressed in the sufficient-statistic space.
//
// Statistic layout for g components in dimension d (q = g + g*d + d(d+1)/2):
//   block 1  [g]          mean responsibilities per component
//   block 2  [g*d]        responsibility-weighted observation per component
//   block 3  [d(d+1)/2]   svec of the empirical second moment y y^T
// svec stores the upper triangle (row r <= col c) column-major, entries once.
#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>

#include "spiderem/data.hpp"
#include "spiderem/model.hpp"
#include "spiderem/rng.hpp"

namespace spiderem {

inline long svec_dim(long d) { return d * (d + 1) / 2; }

inline Eigen::VectorXd svec(const Eigen::MatrixXd& m) {
  const long d = m.rows();
  Eigen::VectorXd v(svec_dim(d));
  long idx = 0;
  for (long c = 0; c < d; ++c)
    for (long r = 0; r <= c; ++r) v[idx++] = m(r, c);
  return v;
}

inline Eigen::MatrixXd smat(const Eigen::VectorXd& v, long d) {
  if (v.size() != svec_dim(d)) throw std::invalid_argument("smat: length mismatch");
  Eigen::MatrixXd m(d, d);
  long idx = 0;
  for (long c = 0; c < d; ++c)
    for (long r = 0; r <= c; ++r) {
      m(r, c) = v[idx];
      m(c, r) = v[idx];
      ++idx;
    }
  return m;
}

// Normalized exponential of log-weights with max subtraction; invariant
// under adding a common constant to every entry.
inline Eigen::VectorXd softmax_from_log(const Eigen::VectorXd& logits) {
  const double top = logits.maxCoeff();
  Eigen::VectorXd r = (logits.array() - top).exp();
  return r / r.sum();
}

inline double log_sum_exp(const Eigen::VectorXd& logits) {
  const double top = logits.maxCoeff();
  return top + std::log((logits.array() - top).exp().sum());
}

struct GmmStatLayout {
  long g = 0;
  long d = 0;

  long dim() const { return g + g * d + svec_dim(d); }
  long weight_offset() const { return 0; }
  long mean_offset(long j) const { return g + j * d; }
  long moment_offset() const { return g + g * d; }
};

// Mixture parameters plus cached Cholesky-derived quantities. The caches are
// computed once per t_map call and reused for every density evaluation of
// the mini-batch; construct through GmmModel::make_params so they are always
// consistent.
struct GmmParams {
  Eigen::VectorXd weights;     // g, simplex
  Eigen::MatrixXd means;       // d x g, one column per component
  Eigen::MatrixXd covariance;  // d x d, shared, SPD
  double cov_jitter = 0.0;     // lambda added by the feasibility repair

  Eigen::MatrixXd precision;   // covariance^{-1}
  Eigen::MatrixXd prec_means;  // precision * means
  Eigen::VectorXd mean_quad;   // mu_j' precision mu_j
  Eigen::VectorXd log_weights;
  double log_norm = 0.0;       // 0.5 (d log 2pi + log det covariance)

  long component_count() const { return weights.size(); }
  long dim() const { return means.rows(); }
};

class GmmModel {
 public:
  using Params = GmmParams;

  static constexpr double kWeightFloor = 1e-8;

  GmmModel(Dataset data, long components, double covariance_floor = 1e-8)
      : data_(std::move(data)), cov_floor_(covariance_floor) {
    data_.validate();
    if (components < 1) throw std::invalid_argument("component count must be >= 1");
    if (!(covariance_floor > 0)) throw std::invalid_argument("covariance floor must be > 0");
    layout_.g = components;
    layout_.d = data_.d();
    // Block 3 of every per-example statistic is svec(y y^T), independent of
    // the parameters; precompute it once.
    yy_svec_.resize(data_.n(), svec_dim(layout_.d));
    for (long i = 0; i < data_.n(); ++i) {
      long idx = 0;
      for (long c = 0; c < layout_.d; ++c)
        for (long r = 0; r <= c; ++r)
          yy_svec_(i, idx++) = data_.values(i, r) * data_.values(i, c);
    }
  }

  long example_count() const { return data_.n(); }
  long stat_dim() const { return layout_.dim(); }
  long component_count() const { return layout_.g; }
  long dim() const { return layout_.d; }
  const Dataset& data() const { return data_; }
  const GmmStatLayout& layout() const { return layout_; }
  double covariance_floor() const { return cov_floor_; }

  /// Posterior component probabilities of one observation, evaluated in the
  /// log domain with max subtraction.
  Eigen::VectorXd posterior_responsibilities(const Params& p,
                                             const Eigen::VectorXd& y) const {
    return softmax_from_log(component_logits(p, y));
  }

  /// Posterior expectation of the sufficient statistic of example i.
  StatVector per_example_expectation(long i, const Params& p) const {
    StatVector s = StatVector::Zero(stat_dim());
    add_per_example_expectation(i, p, s);
    return s;
  }

  // Allocation-light accumulation form used by the solvers.
  void add_per_example_expectation(long i, const Params& p, StatVector& acc) const {
    check_example(i);
    check_params(p);
    const long g = layout_.g;
    const long d = layout_.d;
    const auto y = data_.values.row(i).transpose();
    const Eigen::VectorXd r = posterior_responsibilities(p, y);
    acc.head(g) += r;
    for (long j = 0; j < g; ++j) acc.segment(layout_.mean_offset(j), d) += r[j] * y;
    acc.segment(layout_.moment_offset(), svec_dim(d)) += yy_svec_.row(i);
  }

  /// Averaged negated log-density of the observations under the mixture.
  double objective(const Params& p) const {
    check_params(p);
    double total = 0.0;
    for (long i = 0; i < data_.n(); ++i)
      total += log_sum_exp(component_logits(p, data_.values.row(i).transpose()));
    return p.log_norm - total / static_cast<double>(data_.n());
  }

  /// M-step in statistic space: weights from block 1, means from block 2,
  /// shared covariance from block 3 minus the between-component part.
  /// Feasibility repair first: block-1 entries clipped to >= 1e-8 and
  /// renormalized, covariance symmetrized and floored.
  Params t_map(const StatVector& s) const {
    if (s.size() != stat_dim())
      throw std::invalid_argument("t_map: statistic length mismatch");
    if (!s.allFinite())
      throw std::invalid_argument("t_map: statistic has non-finite entries");
    const long g = layout_.g;
    const long d = layout_.d;
    Eigen::VectorXd w = s.head(g);
    if (!(w.sum() > 0.0))
      throw std::domain_error("t_map: weight block sums to <= 0, unrepairable");
    w = w.cwiseMax(kWeightFloor);
    w /= w.sum();
    Eigen::MatrixXd mu(d, g);
    for (long j = 0; j < g; ++j)
      mu.col(j) = s.segment(layout_.mean_offset(j), d) / w[j];
    Eigen::MatrixXd cov = smat(s.segment(layout_.moment_offset(), svec_dim(d)), d);
    for (long j = 0; j < g; ++j)
      cov.noalias() -= w[j] * mu.col(j) * mu.col(j).transpose();
    return make_params(std::move(w), std::move(mu), std::move(cov));
  }

  /// Builds consistent parameters from raw pieces: renormalizes weights,
  /// symmetrizes the covariance, applies the smallest jitter from
  /// {0, 1e-8, 1e-6, 1e-4, ...} that keeps the floored Cholesky feasible,
  /// then fills the cached precision/determinant quantities.
  Params make_params(Eigen::VectorXd weights, Eigen::MatrixXd means,
                     Eigen::MatrixXd covariance) const {
    const long g = layout_.g;
    const long d = layout_.d;
    if (weights.size() != g || means.rows() != d || means.cols() != g ||
        covariance.rows() != d || covariance.cols() != d)
      throw std::invalid_argument("make_params: dimension mismatch");
    if (!(weights.minCoeff() > 0.0))
      throw std::invalid_argument("make_params: weights must be positive");
    weights /= weights.sum();

    Params p;
    p.weights = std::move(weights);
    p.means = std::move(means);
    p.covariance = 0.5 * (covariance + covariance.transpose());
    p.cov_jitter = floor_covariance(p.covariance);

    Eigen::LLT<Eigen::MatrixXd> llt(p.covariance);
    if (llt.info() != Eigen::Success)
      throw std::domain_error("make_params: covariance repair failed");
    p.precision = llt.solve(Eigen::MatrixXd::Identity(d, d));
    const double log_det =
        2.0 * Eigen::MatrixXd(llt.matrixL()).diagonal().array().log().sum();
    p.log_norm = 0.5 * (static_cast<double>(d) * std::log(2.0 * kPi) + log_det);
    p.prec_means = p.precision * p.means;
    p.mean_quad.resize(g);
    for (long j = 0; j < g; ++j)
      p.mean_quad[j] = p.means.col(j).dot(p.prec_means.col(j));
    p.log_weights = p.weights.array().log();
    return p;
  }

  /// k-means++-style seeding: means picked from the data with squared-distance
  /// weighting, uniform weights, covariance set to the empirical data
  /// covariance.
  Params init_params(Rng& rng) const {
    const long n = data_.n();
    const long d = layout_.d;
    const long g = layout_.g;
    Eigen::MatrixXd centers(d, g);
    Eigen::VectorXd dist2 = Eigen::VectorXd::Constant(n, std::numeric_limits<double>::infinity());
    long first = static_cast<long>(rng.next_below(static_cast<std::uint64_t>(n)));
    centers.col(0) = data_.values.row(first).transpose();
    for (long j = 1; j < g; ++j) {
      for (long i = 0; i < n; ++i) {
        const double dd =
            (data_.values.row(i).transpose() - centers.col(j - 1)).squaredNorm();
        dist2[i] = std::min(dist2[i], dd);
      }
      const double total = dist2.sum();
      long pick;
      if (total > 0.0) {
        const double u = rng.next_real() * total;
        double cum = 0.0;
        pick = n - 1;
        for (long i = 0; i < n; ++i) {
          cum += dist2[i];
          if (u < cum) { pick = i; break; }
        }
      } else {
        pick = static_cast<long>(rng.next_below(static_cast<std::uint64_t>(n)));
      }
      centers.col(j) = data_.values.row(pick).transpose();
    }
    Eigen::VectorXd w = Eigen::VectorXd::Constant(g, 1.0 / static_cast<double>(g));
    Eigen::MatrixXd cov;
    if (n > 1) {
      Eigen::MatrixXd centered = data_.values.rowwise() - data_.values.colwise().mean();
      cov = (centered.transpose() * centered) / static_cast<double>(n - 1);
    } else {
      cov = Eigen::MatrixXd::Identity(d, d);
    }
    return make_params(std::move(w), std::move(centers), std::move(cov));
  }

  /// Statistic consistent with a parameter value: the full-pass average of
  /// per-example expectations. Not charged to any CE budget.
  StatVector init_stat(const Params& p) const {
    return full_expectation(*this, p, nullptr);
  }

 private:
  static constexpr double kPi = 3.14159265358979323846;

  Eigen::VectorXd component_logits(const Params& p, const Eigen::VectorXd& y) const {
    const double y_quad = y.dot(p.precision * y);
    Eigen::VectorXd logits = p.log_weights + p.prec_means.transpose() * y;
    logits.array() -= 0.5 * (y_quad + p.mean_quad.array());
    return logits;
  }

  // Smallest lambda in {0, 1e-8, 1e-6, ...} such that cov + lambda I stays
  // factorizable above the floor; cov is updated in place.
  double floor_covariance(Eigen::MatrixXd& cov) const {
    const long d = cov.rows();
    const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(d, d);
    double lambda = 0.0;
    for (int attempt = 0; attempt < 14; ++attempt) {
      Eigen::MatrixXd probe = cov + (lambda - cov_floor_) * eye;
      Eigen::LLT<Eigen::MatrixXd> llt(probe);
      if (llt.info() == Eigen::Success) {
        if (lambda > 0.0) cov += lambda * eye;
        return lambda;
      }
      lambda = lambda == 0.0 ? 1e-8 : lambda * 100.0;
    }
    throw std::domain_error("covariance repair exhausted the jitter ladder");
  }

  void check_example(long i) const {
    if (i < 0 || i >= data_.n())
      throw std::out_of_range("example index out of range");
  }

  void check_params(const Params& p) const {
    if (p.component_count() != layout_.g || p.dim() != layout_.d)
      throw std::invalid_argument("parameter dimensions do not match the model");
  }

  Dataset data_;
  GmmStatLayout layout_;
  double cov_floor_;
  Eigen::MatrixXd yy_svec_;  // n x d(d+1)/2
};

// Invariant check used by tests and the harness: simplex weights, symmetric
// covariance with smallest eigenvalue at or above the floor.
inline void validate_params(const GmmModel& model, const GmmParams& p) {
  if (p.weights.minCoeff() < 0.0 || std::abs(p.weights.sum() - 1.0) > 1e-12)
    throw std::runtime_error("weights are not a simplex vector");
  const Eigen::MatrixXd asym = p.covariance - p.covariance.transpose();
  if (asym.cwiseAbs().maxCoeff() > 1e-12)
    throw std::runtime_error("covariance is not symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(p.covariance);
  if (eig.eigenvalues().minCoeff() < model.covariance_floor() - 1e-10)
    throw std::runtime_error("covariance eigenvalue below the floor");
}

/// Empirical Lipschitz surrogate for the per-example maps s -> s_bar_i(T(s)):
/// the largest secant slope over random probe pairs near a reference
/// statistic, maximized over sampled example indices. Suggests a step size;
/// never gates correctness.
template <LatentModel M>
double estimate_lipschitz(const M& model, const StatVector& reference,
                          int probe_count, double radius, std::uint64_t seed) {
  if (probe_count < 2) throw std::invalid_argument("probe_count must be >= 2");
  if (reference.size() != model.stat_dim())
    throw std::invalid_argument("reference statistic length mismatch");
  Rng rng = split_rng(seed, streams::kProbe);
  const long n = model.example_count();
  const long q = model.stat_dim();
  const long index_samples = std::min<long>(n, 8);
  double best = 0.0;
  for (int probe = 0; probe < probe_count; ++probe) {
    StatVector a = reference;
    StatVector b = reference;
    for (long k = 0; k < q; ++k) {
      a[k] += radius * rng.next_normal();
      b[k] += radius * rng.next_normal();
    }
    const double denom = (a - b).norm();
    if (denom == 0.0) continue;  // degenerate pair, excluded
    const auto pa = model.t_map(a);
    const auto pb = model.t_map(b);
    for (long k = 0; k < index_samples; ++k) {
      const long i = (n <= index_samples)
                         ? k
                         : static_cast<long>(rng.next_below(static_cast<std::uint64_t>(n)));
      const double num = (model.per_example_expectation(i, pa) -
                          model.per_example_expectation(i, pb))
                             .norm();
      best = std::max(best, num / denom);
    }
  }
  return best;
}

}  // namespace spiderem
