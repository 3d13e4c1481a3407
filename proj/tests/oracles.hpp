// Test-side oracles: independent implementations used to compute expected
// values. Nothing here may call into the code paths under test.
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

namespace oracles {

inline constexpr long double kPiL = 3.14159265358979323846264338328L;

// Direct density evaluation in long double, no log-domain tricks.
inline long double gauss1d(long double y, long double mu, long double var) {
  const long double z = (y - mu);
  return std::exp(-0.5L * z * z / var) / std::sqrt(2.0L * kPiL * var);
}

inline long double gauss2d(long double y0, long double y1, long double m0,
                           long double m1, long double c00, long double c01,
                           long double c11) {
  const long double det = c00 * c11 - c01 * c01;
  const long double d0 = y0 - m0, d1 = y1 - m1;
  const long double quad = (c11 * d0 * d0 - 2.0L * c01 * d0 * d1 + c00 * d1 * d1) / det;
  return std::exp(-0.5L * quad) / (2.0L * kPiL * std::sqrt(det));
}

// Mixture responsibilities for a 1-d observation, direct ratio.
inline std::vector<long double> responsibilities_1d(const std::vector<long double>& w,
                                                    const std::vector<long double>& mu,
                                                    long double var, long double y) {
  std::vector<long double> r(w.size());
  long double total = 0.0L;
  for (std::size_t j = 0; j < w.size(); ++j) {
    r[j] = w[j] * gauss1d(y, mu[j], var);
    total += r[j];
  }
  for (auto& v : r) v /= total;
  return r;
}

// Averaged negated mixture log-density for 1-d data, direct summation.
inline long double objective_1d(const std::vector<long double>& w,
                                const std::vector<long double>& mu, long double var,
                                const std::vector<long double>& data) {
  long double total = 0.0L;
  for (long double y : data) {
    long double density = 0.0L;
    for (std::size_t j = 0; j < w.size(); ++j) density += w[j] * gauss1d(y, mu[j], var);
    total += std::log(density);
  }
  return -total / static_cast<long double>(data.size());
}

// One full EM iteration for a 1-d two-component mixture with a shared
// variance, written directly in parameter space.
struct ToyEmParams {
  long double w0, mu0, mu1, var;
};

inline ToyEmParams em_step_1d(const ToyEmParams& p, const std::vector<long double>& data) {
  const long double n = static_cast<long double>(data.size());
  long double sum_r0 = 0, sum_r0y = 0, sum_r1y = 0, sum_y2 = 0;
  for (long double y : data) {
    const long double a = p.w0 * gauss1d(y, p.mu0, p.var);
    const long double b = (1.0L - p.w0) * gauss1d(y, p.mu1, p.var);
    const long double r0 = a / (a + b);
    sum_r0 += r0;
    sum_r0y += r0 * y;
    sum_r1y += (1.0L - r0) * y;
    sum_y2 += y * y;
  }
  ToyEmParams next;
  next.w0 = sum_r0 / n;
  next.mu0 = sum_r0y / sum_r0;
  next.mu1 = sum_r1y / (n - sum_r0);
  next.var = sum_y2 / n - next.w0 * next.mu0 * next.mu0 -
             (1.0L - next.w0) * next.mu1 * next.mu1;
  return next;
}

// Hand-rolled Nelder-Mead with restarts; enough precision for smooth
// low-dimensional problems.
inline Eigen::VectorXd nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f,
                                   Eigen::VectorXd x0, double scale, long max_eval) {
  const long n = x0.size();
  struct Point {
    Eigen::VectorXd x;
    double fx;
  };
  auto run = [&](Eigen::VectorXd start, double step) {
    std::vector<Point> simplex;
    simplex.push_back({start, f(start)});
    for (long i = 0; i < n; ++i) {
      Eigen::VectorXd x = start;
      x[i] += step;
      simplex.push_back({x, f(x)});
    }
    long evals = n + 1;
    while (evals < max_eval) {
      std::sort(simplex.begin(), simplex.end(),
                [](const Point& a, const Point& b) { return a.fx < b.fx; });
      if (std::abs(simplex.back().fx - simplex.front().fx) < 1e-15) break;
      Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
      for (long i = 0; i < n; ++i) centroid += simplex[static_cast<std::size_t>(i)].x;
      centroid /= static_cast<double>(n);
      const Point& worst = simplex.back();
      Eigen::VectorXd xr = centroid + (centroid - worst.x);
      const double fr = f(xr);
      ++evals;
      if (fr < simplex.front().fx) {
        Eigen::VectorXd xe = centroid + 2.0 * (centroid - worst.x);
        const double fe = f(xe);
        ++evals;
        simplex.back() = fe < fr ? Point{xe, fe} : Point{xr, fr};
      } else if (fr < simplex[simplex.size() - 2].fx) {
        simplex.back() = {xr, fr};
      } else {
        Eigen::VectorXd xc = centroid + 0.5 * (worst.x - centroid);
        const double fc = f(xc);
        ++evals;
        if (fc < worst.fx) {
          simplex.back() = {xc, fc};
        } else {
          for (std::size_t i = 1; i < simplex.size(); ++i) {
            simplex[i].x = simplex.front().x + 0.5 * (simplex[i].x - simplex.front().x);
            simplex[i].fx = f(simplex[i].x);
            ++evals;
          }
        }
      }
    }
    std::sort(simplex.begin(), simplex.end(),
              [](const Point& a, const Point& b) { return a.fx < b.fx; });
    return simplex.front().x;
  };
  Eigen::VectorXd best = x0;
  double step = scale;
  for (int restart = 0; restart < 4; ++restart) {
    best = run(best, step);
    step *= 0.03;
  }
  return best;
}

// Least-squares slope of y against 0..m-1.
inline double ls_slope(const std::vector<double>& y) {
  const double m = static_cast<double>(y.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double x = static_cast<double>(i);
    sx += x;
    sy += y[i];
    sxx += x * x;
    sxy += x * y[i];
  }
  return (m * sxy - sx * sy) / (m * sxx - sx * sx);
}

// E[D(K)] for K geometric on {1,2,...} with success probability 1-rho,
// truncated long-double summation.
inline long double geom_series(long double rho, long terms,
                               const std::function<long double(long)>& d) {
  long double sum = 0.0L, weight = 1.0L - rho;
  for (long k = 1; k <= terms; ++k) {
    sum += weight * d(k);
    weight *= rho;
  }
  return sum;
}

}  // namespace oracles
