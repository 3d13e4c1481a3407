// Mini-batch index sampling and (possibly random) epoch lengths.
#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "spiderem/rng.hpp"

namespace spiderem {

struct BatchSpec {
  long size = 1;
  bool with_replacement = true;

  void validate(long n) const {
    if (size < 1) throw std::invalid_argument("batch size must be >= 1");
    if (!with_replacement && size > n)
      throw std::invalid_argument(
          "batch size exceeds n for sampling without replacement");
    if (n < 1) throw std::invalid_argument("sampling requires n >= 1");
  }
};

// Number of inner iterations per epoch: deterministic, or geometric on
// {1,2,...} with success probability 1-rho, clamped at cap.
struct EpochSchedule {
  enum class Kind { Constant, Geometric };

  Kind kind = Kind::Constant;
  long k_in = 1;     // Constant
  double rho = 0.5;  // Geometric: P(len = k) = (1-rho) rho^(k-1)
  long cap = 1;      // Geometric: draws above cap are clamped

  static EpochSchedule constant(long k) {
    EpochSchedule s;
    s.kind = Kind::Constant;
    s.k_in = k;
    s.validate();
    return s;
  }

  static EpochSchedule geometric(double rho, long cap) {
    EpochSchedule s;
    s.kind = Kind::Geometric;
    s.rho = rho;
    s.cap = cap;
    s.validate();
    return s;
  }

  // Geometric schedule with E[len] = mean_length and the default cap
  // 50 * ceil(mean); means at or below 1 collapse to length 1.
  static EpochSchedule geometric_with_mean(double mean_length) {
    double mean = std::max(mean_length, 1.0);
    double rho = 1.0 - 1.0 / mean;
    rho = std::clamp(rho, 1e-12, 1.0 - 1e-12);
    const long cap = 50 * static_cast<long>(std::ceil(mean));
    return geometric(rho, std::max<long>(cap, 1));
  }

  double mean_length() const {
    return kind == Kind::Constant ? static_cast<double>(k_in)
                                  : 1.0 / (1.0 - rho);
  }

  void validate() const {
    if (kind == Kind::Constant) {
      if (k_in < 1) throw std::invalid_argument("constant epoch length must be >= 1");
    } else {
      if (!(rho > 0.0 && rho < 1.0))
        throw std::invalid_argument("geometric rho must lie in (0,1)");
      if (cap < 1) throw std::invalid_argument("geometric cap must be >= 1");
    }
  }
};

struct EpochDraw {
  long length = 1;
  bool clamped = false;
};

// Uniform mini-batch of indices in [0, n). With replacement: b iid uniform
// draws. Without replacement: uniform b-subset, returned in ascending order;
// b == n short-circuits to the full index set without consuming randomness.
inline std::vector<long> draw_minibatch(Rng& rng, long n, const BatchSpec& spec) {
  spec.validate(n);
  std::vector<long> out(static_cast<std::size_t>(spec.size));
  if (spec.with_replacement) {
    for (auto& v : out) v = static_cast<long>(rng.next_below(static_cast<std::uint64_t>(n)));
    return out;
  }
  if (spec.size == n) {
    std::iota(out.begin(), out.end(), 0L);
    return out;
  }
  // Partial Fisher-Yates over a scratch index array.
  std::vector<long> pool(static_cast<std::size_t>(n));
  std::iota(pool.begin(), pool.end(), 0L);
  for (long k = 0; k < spec.size; ++k) {
    const long j = k + static_cast<long>(rng.next_below(static_cast<std::uint64_t>(n - k)));
    std::swap(pool[static_cast<std::size_t>(k)], pool[static_cast<std::size_t>(j)]);
  }
  out.assign(pool.begin(), pool.begin() + spec.size);
  std::sort(out.begin(), out.end());
  return out;
}

// Draw one epoch length. Geometric draws use inverse-CDF transform so the
// law is exact: len = 1 + floor(log(u)/log(rho)), u uniform on (0,1].
inline EpochDraw draw_epoch_length(Rng& rng, const EpochSchedule& schedule) {
  schedule.validate();
  if (schedule.kind == EpochSchedule::Kind::Constant)
    return {schedule.k_in, false};
  const double u = rng.next_real_open();
  const double raw = 1.0 + std::floor(std::log(u) / std::log(schedule.rho));
  long len = 1;
  bool clamped = false;
  if (!(raw < static_cast<double>(schedule.cap) + 0.5)) {
    len = schedule.cap;
    clamped = true;
  } else if (raw > 1.0) {
    len = static_cast<long>(raw);
  }
  return {len, clamped};
}

}  // namespace spiderem
