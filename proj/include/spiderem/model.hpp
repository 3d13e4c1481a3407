// Contract satisfied by any curved-exponential-family latent-variable model,
// plus the model-agnostic expectation-space operations built on it.
//
// A model works in the space R^q of sufficient statistics. It must expose:
//   - example_count(), stat_dim()
//   - t_map(s): the unique parameter maximizer given a statistic (M-step)
//   - per_example_expectation(i, params): the posterior expectation of the
//     sufficient statistic of example i (one conditional expectation, "CE")
//   - objective(params): the averaged per-example loss
// Implementations must be deterministic and safely shareable read-only.
#pragma once

#include <Eigen/Dense>

#include <concepts>
#include <cstdint>
#include <vector>

namespace spiderem {

// Point in the sufficient-statistic space R^q.
using StatVector = Eigen::VectorXd;

// Cost accounting. ce counts per-example conditional-expectation evaluations
// (one unit per example index per call); opt counts parameter-update steps.
// Diagnostics never touch these.
struct Counters {
  std::int64_t ce = 0;
  std::int64_t opt = 0;
};

template <typename M>
concept LatentModel = requires(const M& m, const typename M::Params& p,
                               const StatVector& s, long i) {
  typename M::Params;
  { m.example_count() } -> std::convertible_to<long>;
  { m.stat_dim() } -> std::convertible_to<long>;
  { m.t_map(s) } -> std::same_as<typename M::Params>;
  { m.per_example_expectation(i, p) } -> std::same_as<StatVector>;
  { m.objective(p) } -> std::convertible_to<double>;
};

inline bool all_finite(const StatVector& s) { return s.allFinite(); }

namespace detail {

// Adds the per-example expectation of example i into acc, using the model's
// allocation-free hook when it provides one.
template <LatentModel M>
inline void add_expectation(const M& model, long i, const typename M::Params& p,
                            StatVector& acc) {
  if constexpr (requires { model.add_per_example_expectation(i, p, acc); }) {
    model.add_per_example_expectation(i, p, acc);
  } else {
    acc += model.per_example_expectation(i, p);
  }
}

}  // namespace detail

// Mean of per-example expectations over an index list. Accumulates in the
// order given (callers pass ascending indices in deterministic mode).
template <LatentModel M>
StatVector average_expectation(const M& model, const typename M::Params& params,
                               const std::vector<long>& indices,
                               Counters* counters = nullptr) {
  StatVector acc = StatVector::Zero(model.stat_dim());
  for (long i : indices) detail::add_expectation(model, i, params, acc);
  if (counters) counters->ce += static_cast<std::int64_t>(indices.size());
  acc /= static_cast<double>(indices.size());
  return acc;
}

// Full pass over all n examples, ascending index order.
template <LatentModel M>
StatVector full_expectation(const M& model, const typename M::Params& params,
                            Counters* counters = nullptr) {
  const long n = model.example_count();
  StatVector acc = StatVector::Zero(model.stat_dim());
  for (long i = 0; i < n; ++i) detail::add_expectation(model, i, params, acc);
  if (counters) counters->ce += n;
  acc /= static_cast<double>(n);
  return acc;
}

// Mean field evaluated at a precomputed parameter value.
template <LatentModel M>
StatVector mean_field_at(const M& model, const typename M::Params& params,
                         const StatVector& s, Counters* counters = nullptr) {
  return full_expectation(model, params, counters) - s;
}

/// Mean field h(s): the averaged posterior expectation after one M-step,
/// minus s. Its roots are the fixed points of EM. One full pass over the
/// data; charges n CE when a counter is supplied.
template <LatentModel M>
StatVector mean_field(const M& model, const StatVector& s,
                      Counters* counters = nullptr) {
  return mean_field_at(model, model.t_map(s), s, counters);
}

/// Averaged loss F at a parameter value (plus a penalty when the model has
/// one; the bundled backends are penalty-free).
template <LatentModel M>
double objective(const M& model, const typename M::Params& params) {
  return model.objective(params);
}

}  // namespace spiderem
