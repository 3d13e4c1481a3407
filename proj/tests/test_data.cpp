#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "spiderem/data.hpp"
#include "spiderem/gmm.hpp"
#include "spiderem/solvers.hpp"

using namespace spiderem;

namespace {

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& name, const std::string& contents)
      : path("data_tmp_" + name) {
    std::ofstream out(path);
    out << contents;
  }
  ~TempFile() { std::filesystem::remove(path); }
};

}  // namespace

TEST_SUITE_BEGIN("data");

TEST_CASE("csv parsing: shapes, errors with positions, round trip") {
  {
    TempFile f("basic.csv", "1,2\n3,4\n");
    const auto d = load_csv(f.path, false);
    CHECK(d.n() == 2);
    CHECK(d.d() == 2);
    CHECK(d.values(1, 0) == 3.0);
  }
  {
    TempFile f("ragged.csv", "1,2\n3,4,5\n");
    CHECK_THROWS_WITH_AS(load_csv(f.path, false),
                         doctest::Contains("ragged row 2"), std::runtime_error);
  }
  {
    TempFile f("alpha.csv", "1,2\n3,x\n");
    CHECK_THROWS_WITH_AS(load_csv(f.path, false),
                         doctest::Contains("row 2, column 2"), std::runtime_error);
  }
  {
    TempFile f("empty.csv", "");
    CHECK_THROWS_AS(load_csv(f.path, false), std::runtime_error);
  }
  {
    TempFile f("header.csv", "a,b\n1.5,2.5\n");
    const auto d = load_csv(f.path, true);
    CHECK(d.n() == 1);
    CHECK(d.values(0, 1) == 2.5);
  }
  {
    // write-then-load round trip
    Rng rng(5);
    Dataset d;
    d.values.resize(13, 4);
    for (long i = 0; i < d.n(); ++i)
      for (long j = 0; j < d.d(); ++j) d.values(i, j) = rng.next_normal() * 1e3;
    const std::string path = "data_tmp_roundtrip.csv";
    save_csv(d, path);
    const auto back = load_csv(path, false);
    CHECK((back.values - d.values).cwiseAbs().maxCoeff() <= 1e-15);
    std::filesystem::remove(path);
  }
}

TEST_CASE("constant column removal") {
  Dataset d;
  d.values.resize(4, 3);
  d.values << 1, 7, 0.1, 2, 7, 0.4, 3, 7, -0.2, 4, 7, 0.9;
  d.provenance = "unit";
  std::vector<long> removed;
  const auto out = drop_constant_columns(d, 0.0, &removed);
  CHECK(out.d() == 2);
  CHECK(removed == std::vector<long>{1});
  CHECK(out.provenance.find("dropped 1") != std::string::npos);

  // tol = 0 with no exactly-constant columns is the identity
  const auto same = drop_constant_columns(out, 0.0);
  CHECK(same.d() == out.d());
  CHECK((same.values - out.values).cwiseAbs().maxCoeff() == 0.0);

  Dataset all_const;
  all_const.values = Eigen::MatrixXd::Constant(3, 2, 5.0);
  all_const.provenance = "unit";
  CHECK_THROWS_AS(drop_constant_columns(all_const, 0.0), std::runtime_error);
}

TEST_CASE("sparse corpus: removed count equals a per-column variance scan") {
  // image-like rows with an always-zero border
  Rng rng(7);
  const long n = 50, d = 36;
  Dataset data;
  data.values = Eigen::MatrixXd::Zero(n, d);
  for (long i = 0; i < n; ++i)
    for (long j = 0; j < d; ++j) {
      const bool border = (j % 6 == 0) || (j % 6 == 5) || j < 6 || j >= 30;
      if (!border) data.values(i, j) = rng.next_real();
    }
  data.provenance = "sparse";
  long expected_removed = 0;
  for (long j = 0; j < d; ++j) {
    const double mean = data.values.col(j).mean();
    const double var =
        (data.values.col(j).array() - mean).square().sum() / static_cast<double>(n - 1);
    if (var <= 0.0) ++expected_removed;
  }
  std::vector<long> removed;
  (void)drop_constant_columns(data, 0.0, &removed);
  CHECK(static_cast<long>(removed.size()) == expected_removed);
  CHECK(expected_removed > 0);
}

TEST_CASE("pca: axis-aligned data projects onto the leading axes") {
  // six points whose sample covariance is exactly diag(3, 2, 1)
  const double a = std::sqrt(7.5), b = std::sqrt(5.0), c = std::sqrt(2.5);
  Dataset d;
  d.values.resize(6, 3);
  d.values << a, 0, 0, -a, 0, 0, 0, b, 0, 0, -b, 0, 0, 0, c, 0, 0, -c;
  d.provenance = "axis";
  const auto [projected, record] = pca_project(d, 2);
  CHECK(record.eigenvalues[0] == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(record.eigenvalues[1] == doctest::Approx(2.0).epsilon(1e-12));
  // sign convention makes the eigenvectors +e1, +e2
  CHECK(record.components(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(record.components(1, 1) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK((projected.values.col(0) - d.values.col(0)).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((projected.values.col(1) - d.values.col(1)).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("pca: projected variances, decorrelation, isometry, errors") {
  const auto synth = synth_gmm(3, 6, 300, 4.0, 77);
  const auto& data = synth.data;
  const auto [projected, record] = pca_project(data, 4);

  for (long j = 0; j < 4; ++j) {
    const double mean = projected.values.col(j).mean();
    const double var = (projected.values.col(j).array() - mean).square().sum() /
                       static_cast<double>(data.n() - 1);
    CHECK(std::abs(var - record.eigenvalues[j]) <= 1e-8);
  }
  Eigen::MatrixXd centered =
      projected.values.rowwise() - projected.values.colwise().mean();
  Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(data.n() - 1);
  const double trace = cov.trace();
  for (long i = 0; i < 4; ++i)
    for (long j = 0; j < 4; ++j)
      if (i != j) CHECK(std::abs(cov(i, j)) <= 1e-8 * trace);

  // full-rank projection is an isometry
  const auto [rotated, full_record] = pca_project(data, data.d());
  for (long i = 0; i < 20; ++i) {
    const double before = (data.values.row(i) - data.values.row(i + 1)).norm();
    const double after = (rotated.values.row(i) - rotated.values.row(i + 1)).norm();
    CHECK(std::abs(before - after) <= 1e-8);
  }

  CHECK_THROWS_AS(pca_project(data, data.d() + 1), std::invalid_argument);

  // whitening rescales to unit variance
  const auto [white, wrec] = pca_project(data, 3, true);
  for (long j = 0; j < 3; ++j) {
    const double mean = white.values.col(j).mean();
    const double var = (white.values.col(j).array() - mean).square().sum() /
                       static_cast<double>(data.n() - 1);
    CHECK(var == doctest::Approx(1.0).epsilon(1e-8));
  }
}

TEST_CASE("projection records are pure affine maps and serialize losslessly") {
  const auto synth = synth_gmm(2, 5, 100, 4.0, 11);
  const auto [projected, record] = pca_project(synth.data, 3);
  const auto once = apply_projection(record, synth.data);
  const auto twice = apply_projection(record, synth.data);
  CHECK((once.values - twice.values).cwiseAbs().maxCoeff() == 0.0);
  CHECK((once.values - projected.values).cwiseAbs().maxCoeff() == 0.0);

  save_projection(record, "data_tmp_proj");
  const auto loaded = load_projection("data_tmp_proj");
  CHECK((loaded.means - record.means).cwiseAbs().maxCoeff() <= 1e-15);
  CHECK((loaded.components - record.components).cwiseAbs().maxCoeff() <= 1e-15);
  CHECK((loaded.eigenvalues - record.eigenvalues).cwiseAbs().maxCoeff() <= 1e-15);
  CHECK(loaded.whiten == record.whiten);
  for (const char* suffix : {"_means.csv", "_eigenvalues.csv", "_components.csv",
                             "_manifest.txt"})
    std::filesystem::remove(std::string("data_tmp_proj") + suffix);
}

TEST_CASE("synthetic mixtures: determinism, CLT mean check, recovery") {
  const auto a = synth_gmm(2, 3, 500, 5.0, 42);
  const auto b = synth_gmm(2, 3, 500, 5.0, 42);
  CHECK((a.data.values - b.data.values).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.means - b.means).cwiseAbs().maxCoeff() == 0.0);

  // g = 1: iid sample, mean within 4 sigma / sqrt(n) of the truth
  const long n = 4000;
  const auto single = synth_gmm(1, 2, n, 3.0, 9);
  for (long k = 0; k < 2; ++k) {
    const double sample_mean = single.data.values.col(k).mean();
    CHECK(std::abs(sample_mean - single.means(k, 0)) <=
          4.0 / std::sqrt(static_cast<double>(n)));
  }

  // separation floor holds
  const auto spread = synth_gmm(4, 3, 10, 6.0, 1);
  for (long i = 0; i < 4; ++i)
    for (long j = i + 1; j < 4; ++j)
      CHECK((spread.means.col(i) - spread.means.col(j)).norm() >= 6.0 - 1e-9);

  // well-separated recovery: batch EM from seeded init lands on the truth
  const auto hard = synth_gmm(3, 2, 1500, 8.0, 123);
  const GmmModel model(hard.data, 3);
  Rng rng = split_rng(123, streams::kInit);
  const auto trace = batch_em_run(model, model.init_params(rng), 400, 1e-9);
  std::vector<bool> used(3, false);
  for (long j = 0; j < 3; ++j) {
    double best = std::numeric_limits<double>::infinity();
    long arg = -1;
    for (long k = 0; k < 3; ++k) {
      if (used[static_cast<std::size_t>(k)]) continue;
      const double dist = (trace.final_params.means.col(k) - hard.means.col(j)).norm();
      if (dist < best) {
        best = dist;
        arg = k;
      }
    }
    used[static_cast<std::size_t>(arg)] = true;
    CHECK(best <= 0.2);
  }

  CHECK_THROWS_AS(synth_gmm(0, 2, 10, 1.0, 1), std::invalid_argument);
  CHECK_THROWS_AS(synth_gmm(2, 2, 10, 0.0, 1), std::invalid_argument);
}

TEST_SUITE_END();
