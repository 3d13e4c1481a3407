#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <vector>

#include "oracles.hpp"
#include "spiderem/samplers.hpp"

using namespace spiderem;

TEST_SUITE_BEGIN("samplers");

TEST_CASE("minibatch without replacement at b = n is the full index set") {
  Rng rng = split_rng(1, streams::kBatch);
  const auto batch = draw_minibatch(rng, 7, BatchSpec{7, false});
  std::vector<long> expected = {0, 1, 2, 3, 4, 5, 6};
  CHECK(batch == expected);
  // and consumes no randomness
  Rng fresh = split_rng(1, streams::kBatch);
  CHECK(rng.next_u64() == fresh.next_u64());
}

TEST_CASE("minibatch rejects invalid sizes") {
  Rng rng(3);
  CHECK_THROWS_AS(draw_minibatch(rng, 5, BatchSpec{0, true}), std::invalid_argument);
  CHECK_THROWS_AS(draw_minibatch(rng, 5, BatchSpec{6, false}), std::invalid_argument);
}

TEST_CASE("with-replacement marginals are uniform (binomial oracle)") {
  Rng rng = split_rng(42, streams::kBatch);
  const long draws = 300000;
  std::vector<long> counts(3, 0);
  for (long m = 0; m < draws; ++m) {
    const auto batch = draw_minibatch(rng, 3, BatchSpec{1, true});
    counts[static_cast<std::size_t>(batch[0])]++;
  }
  const double p = 1.0 / 3.0;
  const double sigma = std::sqrt(p * (1 - p) / static_cast<double>(draws));
  for (long c : counts) {
    const double freq = static_cast<double>(c) / static_cast<double>(draws);
    CHECK(std::abs(freq - p) <= 4 * sigma);
  }
}

TEST_CASE("without-replacement marginals are uniform") {
  Rng rng = split_rng(7, streams::kBatch);
  const long draws = 100000;
  std::vector<long> counts(5, 0);
  for (long m = 0; m < draws; ++m)
    for (long i : draw_minibatch(rng, 5, BatchSpec{2, false}))
      counts[static_cast<std::size_t>(i)]++;
  const double p = 2.0 / 5.0;
  const double sigma = std::sqrt(p * (1 - p) / static_cast<double>(draws));
  for (long c : counts) {
    const double freq = static_cast<double>(c) / static_cast<double>(draws);
    CHECK(std::abs(freq - p) <= 4 * sigma);
  }
  // ascending order contract
  const auto batch = draw_minibatch(rng, 10, BatchSpec{4, false});
  CHECK(std::is_sorted(batch.begin(), batch.end()));
}

TEST_CASE("constant epoch length is deterministic") {
  Rng rng(5);
  const auto schedule = EpochSchedule::constant(9);
  for (int i = 0; i < 5; ++i) {
    const auto draw = draw_epoch_length(rng, schedule);
    CHECK(draw.length == 9);
    CHECK_FALSE(draw.clamped);
  }
}

TEST_CASE("geometric with vanishing rho returns 1") {
  Rng rng = split_rng(11, streams::kEpochLength);
  const auto schedule = EpochSchedule::geometric(1e-12, 100);
  for (int i = 0; i < 200; ++i) CHECK(draw_epoch_length(rng, schedule).length == 1);
}

TEST_CASE("geometric draws above the cap are clamped") {
  Rng rng = split_rng(13, streams::kEpochLength);
  const auto schedule = EpochSchedule::geometric(0.9, 5);
  bool saw_clamp = false;
  for (int i = 0; i < 2000; ++i) {
    const auto draw = draw_epoch_length(rng, schedule);
    CHECK(draw.length <= 5);
    CHECK(draw.length >= 1);
    saw_clamp = saw_clamp || draw.clamped;
  }
  CHECK(saw_clamp);  // P(Xi > 5) = 0.9^5 is large
}

TEST_CASE("geometric mean matches 1/(1-rho) (exact-moment oracle)") {
  // mean number of inner loops is (1-rho)^{-1} = k_in
  const double k_in = 7.0;
  const double rho = 1.0 - 1.0 / k_in;
  const auto schedule = EpochSchedule::geometric_with_mean(k_in);
  CHECK(schedule.rho == doctest::Approx(rho).epsilon(1e-12));
  Rng rng = split_rng(17, streams::kEpochLength);
  const long draws = 1000000;
  double sum = 0;
  for (long i = 0; i < draws; ++i)
    sum += static_cast<double>(draw_epoch_length(rng, schedule).length);
  const double mean = sum / static_cast<double>(draws);
  const double var = rho / ((1 - rho) * (1 - rho));  // untruncated; cap tail ~ rho^350
  const double sigma = std::sqrt(var / static_cast<double>(draws));
  CHECK(std::abs(mean - k_in) <= 4 * sigma);
}

TEST_CASE("geometric stopping identity, Monte Carlo (paired estimator)") {
  // D_k = k^2, rho = 0.5, cap = 200; X = D(len-1) - rho D(len) has mean
  // (1-rho) D(0) = 0.5 * 0.
  const double rho = 0.5;
  const auto schedule = EpochSchedule::geometric(rho, 200);
  Rng rng = split_rng(23, streams::kEpochLength);
  const long draws = 1000000;
  double sum = 0, sum_sq = 0;
  for (long i = 0; i < draws; ++i) {
    const double len = static_cast<double>(draw_epoch_length(rng, schedule).length);
    const double x = (len - 1) * (len - 1) - rho * len * len;
    sum += x;
    sum_sq += x * x;
  }
  const double mean = sum / draws;
  const double var = (sum_sq - sum * sum / draws) / (draws - 1);
  const double se = std::sqrt(var / draws);
  CHECK(std::abs(mean - 0.0) <= 4 * se);

  // truncated analytic summation form, exact
  const auto d = [](long k) { return static_cast<long double>(k) * static_cast<long double>(k); };
  const long double lhs = oracles::geom_series(0.5L, 3000, [&](long k) { return d(k - 1); });
  const long double rhs = 0.5L * oracles::geom_series(0.5L, 3000, d) + 0.5L * d(0);
  CHECK(static_cast<double>(std::fabs(lhs - rhs)) <= 1e-12);
}

TEST_CASE("split streams are reproducible and distinct") {
  Rng a = split_rng(99, 1);
  Rng b = split_rng(99, 1);
  bool same = true;
  for (int i = 0; i < 100; ++i) same = same && (a.next_u64() == b.next_u64());
  CHECK(same);

  Rng c = split_rng(99, 1);
  Rng d = split_rng(99, 2);
  bool differ = false;
  for (int i = 0; i < 100; ++i) differ = differ || (c.next_u64() != d.next_u64());
  CHECK(differ);
}

TEST_CASE("30 replication streams have pairwise distinct sequences") {
  std::vector<std::vector<std::uint64_t>> heads;
  for (std::uint64_t id = 0; id < 30; ++id) {
    Rng r = split_rng(2024, id);
    std::vector<std::uint64_t> h(8);
    for (auto& v : h) v = r.next_u64();
    heads.push_back(h);
  }
  for (std::size_t a = 0; a < heads.size(); ++a)
    for (std::size_t b = a + 1; b < heads.size(); ++b) CHECK(heads[a] != heads[b]);
}

TEST_CASE("schedule invariants are enforced") {
  CHECK_THROWS_AS(EpochSchedule::constant(0), std::invalid_argument);
  CHECK_THROWS_AS(EpochSchedule::geometric(0.0, 5), std::invalid_argument);
  CHECK_THROWS_AS(EpochSchedule::geometric(1.0, 5), std::invalid_argument);
  CHECK_THROWS_AS(EpochSchedule::geometric(0.5, 0), std::invalid_argument);
}

TEST_SUITE_END();
