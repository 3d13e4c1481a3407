// Shared fixtures for the unit suites.
#pragma once

#include <Eigen/Dense>

#include "spiderem/data.hpp"
#include "spiderem/gmm.hpp"
#include "spiderem/model.hpp"

namespace support {

// The 4-point, 2-component, 1-d mixture used throughout.
inline spiderem::Dataset toy_dataset(long n_prefix = 4) {
  spiderem::Dataset d;
  d.values.resize(n_prefix, 1);
  const double vals[4] = {-2.0, -1.0, 1.0, 2.0};
  for (long i = 0; i < n_prefix; ++i) d.values(i, 0) = vals[i];
  d.provenance = "toy";
  return d;
}

inline spiderem::GmmModel toy_model(long n_prefix = 4) {
  return spiderem::GmmModel(toy_dataset(n_prefix), 2);
}

inline spiderem::GmmParams toy_params(const spiderem::GmmModel& model, double m0,
                                      double m1, double w0, double var) {
  Eigen::VectorXd w(2);
  w << w0, 1.0 - w0;
  Eigen::MatrixXd mu(1, 2);
  mu << m0, m1;
  Eigen::MatrixXd cov(1, 1);
  cov << var;
  return model.make_params(w, mu, cov);
}

// Minimal model satisfying the latent-model contract, with an affine
// per-example map. contraction < 1 converges; > 1 diverges. Used to pin
// counter arithmetic without mixture-model cost.
struct AffineModel {
  struct Params {
    spiderem::StatVector s;
  };

  long n = 100;
  double contraction = 0.5;
  Eigen::VectorXd target = Eigen::VectorXd::Zero(3);

  long example_count() const { return n; }
  long stat_dim() const { return target.size(); }

  Params t_map(const spiderem::StatVector& s) const {
    if (!s.allFinite()) throw std::invalid_argument("non-finite statistic");
    return {s};
  }

  spiderem::StatVector per_example_expectation(long i, const Params& p) const {
    // offsets average to zero over the n examples
    const double offset =
        static_cast<double>(2 * i + 1 - n) / static_cast<double>(n);
    return target + contraction * (p.s - target) +
           offset * Eigen::VectorXd::Ones(target.size());
  }

  double objective(const Params& p) const { return 0.5 * (p.s - target).squaredNorm(); }
};

}  // namespace support
