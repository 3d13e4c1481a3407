#include <doctest.h>

#include "spiderem/verify.hpp"

using namespace spiderem;

namespace {

void expect_all_pass(const std::vector<CheckResult>& results) {
  CHECK_FALSE(results.empty());
  for (const auto& r : results) {
    INFO(r.name, " observed=", r.observed, " threshold=", r.threshold);
    CHECK(r.pass);
  }
}

}  // namespace

TEST_SUITE_BEGIN("verify");

TEST_CASE("bias identity suite passes") {
  VerifyOptions opts;
  opts.trials = 30000;
  expect_all_pass(verify_bias(opts));
}

TEST_CASE("variance equality suite passes") {
  expect_all_pass(verify_variance(VerifyOptions{}));
}

TEST_CASE("geometric stopping suite passes") {
  VerifyOptions opts;
  opts.trials = 200000;
  expect_all_pass(verify_geom(opts));
}

TEST_CASE("counter closed-form suite passes") {
  expect_all_pass(verify_counters(VerifyOptions{}));
}

TEST_CASE("truncated geometric moments match the naive series") {
  const long double rho = 0.7L;
  const long cap = 150;
  long double mean = 0.0L, second = 0.0L, weight = 1.0L - rho;
  for (long k = 1; k <= 20000; ++k) {
    const long double v = static_cast<long double>(std::min(k, cap));
    mean += weight * v;
    second += weight * v * v;
    weight *= rho;
  }
  CHECK(static_cast<double>(std::fabs(truncated_geometric_mean(rho, cap) - mean)) <= 1e-12);
  CHECK(static_cast<double>(std::fabs(truncated_geometric_var(rho, cap) -
                                      (second - mean * mean))) <= 1e-10);
}

TEST_SUITE_END();
