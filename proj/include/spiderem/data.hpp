// Dataset ingestion (CSV), preprocessing (constant-column removal, PCA) and
// synthetic Gaussian-mixture data generation.
#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "spiderem/rng.hpp"

namespace spiderem {

namespace detail {

// %.17g round-trips doubles exactly through text.
inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

struct Dataset {
  Eigen::MatrixXd values;  // n x d, one row per example
  std::string provenance;

  long n() const { return values.rows(); }
  long d() const { return values.cols(); }

  void validate() const {
    if (n() < 1 || d() < 1)
      throw std::invalid_argument("dataset must have n >= 1 rows and d >= 1 columns");
    if (!values.allFinite())
      throw std::invalid_argument("dataset contains non-finite entries");
  }
};

// Parse a rectangular numeric CSV; one row per example. Ragged rows, empty
// bodies and non-numeric cells are reported with their position.
inline Dataset load_csv(const std::string& path, bool has_header = false) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  long line_no = 0;
  long expected_cols = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (has_header && line_no == 1) continue;
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    long col = 0;
    while (std::getline(ss, cell, ',')) {
      ++col;
      const char* begin = cell.c_str();
      char* end = nullptr;
      const double v = std::strtod(begin, &end);
      while (end && *end == ' ') ++end;
      if (end == begin || (end && *end != '\0'))
        throw std::runtime_error(path + ": non-numeric cell at row " +
                                 std::to_string(line_no) + ", column " +
                                 std::to_string(col));
      if (!std::isfinite(v))
        throw std::runtime_error(path + ": non-finite value at row " +
                                 std::to_string(line_no) + ", column " +
                                 std::to_string(col));
      row.push_back(v);
    }
    if (expected_cols < 0) expected_cols = static_cast<long>(row.size());
    if (static_cast<long>(row.size()) != expected_cols)
      throw std::runtime_error(path + ": ragged row " + std::to_string(line_no) +
                               " has " + std::to_string(row.size()) +
                               " cells, expected " + std::to_string(expected_cols));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::runtime_error(path + ": no data rows");
  Dataset ds;
  ds.values.resize(static_cast<long>(rows.size()), expected_cols);
  for (long i = 0; i < ds.n(); ++i)
    for (long j = 0; j < ds.d(); ++j)
      ds.values(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  ds.provenance = "loaded from " + path;
  ds.validate();
  return ds;
}

inline void save_csv(const Dataset& data, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write file: " + path);
  for (long i = 0; i < data.n(); ++i) {
    for (long j = 0; j < data.d(); ++j) {
      if (j) out << ',';
      out << detail::fmt_double(data.values(i, j));
    }
    out << '\n';
  }
}

// Remove columns whose sample variance is <= tol. Removed indices (relative
// to the input) are appended to the provenance note and optionally returned.
inline Dataset drop_constant_columns(const Dataset& data, double tol = 0.0,
                                     std::vector<long>* removed = nullptr) {
  data.validate();
  const long n = data.n();
  std::vector<long> keep, dropped;
  for (long j = 0; j < data.d(); ++j) {
    const double mean = data.values.col(j).mean();
    const double ss = (data.values.col(j).array() - mean).square().sum();
    const double var = n > 1 ? ss / static_cast<double>(n - 1) : 0.0;
    if (var <= tol)
      dropped.push_back(j);
    else
      keep.push_back(j);
  }
  if (keep.empty())
    throw std::runtime_error("all columns are constant at the given tolerance");
  Dataset out;
  out.values.resize(n, static_cast<long>(keep.size()));
  for (std::size_t k = 0; k < keep.size(); ++k)
    out.values.col(static_cast<long>(k)) = data.values.col(keep[k]);
  std::string note = data.provenance + "; dropped " +
                     std::to_string(dropped.size()) + " constant column(s)";
  if (!dropped.empty()) {
    note += " [";
    for (std::size_t k = 0; k < dropped.size(); ++k)
      note += (k ? "," : "") + std::to_string(dropped[k]);
    note += "]";
  }
  out.provenance = std::move(note);
  if (removed) *removed = std::move(dropped);
  return out;
}

// Affine projection fitted by pca_project: x -> (x - means)^T components,
// optionally scaled to unit variance per retained direction.
struct ProjectionRecord {
  Eigen::VectorXd means;        // d
  Eigen::MatrixXd components;   // d x m, columns ordered by descending eigenvalue
  Eigen::VectorXd eigenvalues;  // m, descending
  bool whiten = false;
};

inline Dataset apply_projection(const ProjectionRecord& record, const Dataset& data) {
  if (data.d() != record.means.size())
    throw std::invalid_argument("projection record dimension mismatch");
  Dataset out;
  Eigen::MatrixXd centered = data.values.rowwise() - record.means.transpose();
  out.values = centered * record.components;
  if (record.whiten) {
    for (long j = 0; j < out.values.cols(); ++j) {
      const double scale = std::sqrt(std::max(record.eigenvalues[j], 1e-300));
      out.values.col(j) /= scale;
    }
  }
  out.provenance = data.provenance + "; projected to " +
                   std::to_string(out.values.cols()) + " components" +
                   (record.whiten ? " (whitened)" : "");
  return out;
}

// Center by column means and project onto the top target_dim eigenvectors of
// the sample covariance (descending eigenvalue order). Sign convention: the
// largest-magnitude entry of each eigenvector is made positive.
inline std::pair<Dataset, ProjectionRecord> pca_project(const Dataset& data,
                                                        long target_dim,
                                                        bool whiten = false) {
  data.validate();
  if (target_dim < 1 || target_dim > data.d())
    throw std::invalid_argument("pca target dimension must lie in [1, d]");
  if (data.n() < 2)
    throw std::invalid_argument("pca requires at least two examples");
  ProjectionRecord record;
  record.whiten = whiten;
  record.means = data.values.colwise().mean();
  Eigen::MatrixXd centered = data.values.rowwise() - record.means.transpose();
  Eigen::MatrixXd cov =
      (centered.transpose() * centered) / static_cast<double>(data.n() - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success)
    throw std::runtime_error("covariance eigendecomposition failed");
  record.components.resize(data.d(), target_dim);
  record.eigenvalues.resize(target_dim);
  for (long k = 0; k < target_dim; ++k) {
    const long src = data.d() - 1 - k;  // solver returns ascending order
    Eigen::VectorXd v = eig.eigenvectors().col(src);
    long arg_max = 0;
    v.cwiseAbs().maxCoeff(&arg_max);
    if (v[arg_max] < 0) v = -v;
    record.components.col(k) = v;
    record.eigenvalues[k] = eig.eigenvalues()[src];
  }
  Dataset projected = apply_projection(record, data);
  projected.provenance = data.provenance + "; pca to " +
                         std::to_string(target_dim) + " components" +
                         (whiten ? " (whitened)" : "");
  return {std::move(projected), std::move(record)};
}

// Serialize a projection record as a CSV bundle plus a small manifest.
inline void save_projection(const ProjectionRecord& record, const std::string& stem) {
  auto write_matrix = [](const Eigen::MatrixXd& m, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write file: " + path);
    for (long i = 0; i < m.rows(); ++i) {
      for (long j = 0; j < m.cols(); ++j) {
        if (j) out << ',';
        out << detail::fmt_double(m(i, j));
      }
      out << '\n';
    }
  };
  write_matrix(record.means.transpose(), stem + "_means.csv");
  write_matrix(record.eigenvalues.transpose(), stem + "_eigenvalues.csv");
  write_matrix(record.components, stem + "_components.csv");
  std::ofstream manifest(stem + "_manifest.txt");
  if (!manifest) throw std::runtime_error("cannot write file: " + stem + "_manifest.txt");
  manifest << "input_dim = " << record.means.size() << '\n'
           << "target_dim = " << record.eigenvalues.size() << '\n'
           << "whiten = " << (record.whiten ? "true" : "false") << '\n'
           << "files = means, eigenvalues, components\n";
}

inline ProjectionRecord load_projection(const std::string& stem) {
  auto read_matrix = [](const std::string& path) {
    return load_csv(path, false).values;
  };
  ProjectionRecord record;
  record.means = read_matrix(stem + "_means.csv").row(0).transpose();
  record.eigenvalues = read_matrix(stem + "_eigenvalues.csv").row(0).transpose();
  record.components = read_matrix(stem + "_components.csv");
  std::ifstream manifest(stem + "_manifest.txt");
  if (!manifest) throw std::runtime_error("cannot open manifest: " + stem + "_manifest.txt");
  std::string line;
  while (std::getline(manifest, line))
    if (line.rfind("whiten", 0) == 0)
      record.whiten = line.find("true") != std::string::npos;
  return record;
}

// Synthetic mixture sample with known ground truth. Component means are
// random directions rescaled so every pairwise distance is at least
// separation * sqrt(largest covariance eigenvalue); shared identity
// covariance, uniform weights.
struct SynthGmm {
  Dataset data;
  Eigen::VectorXd weights;      // g
  Eigen::MatrixXd means;        // d x g
  Eigen::MatrixXd covariance;   // d x d
};

inline SynthGmm synth_gmm(long g, long d, long n, double separation,
                          std::uint64_t seed) {
  if (g < 1 || d < 1 || n < 1) throw std::invalid_argument("synth_gmm: g, d, n must be >= 1");
  if (!(separation > 0)) throw std::invalid_argument("synth_gmm: separation must be > 0");
  Rng rng = split_rng(seed, streams::kSynth);
  SynthGmm out;
  out.weights = Eigen::VectorXd::Constant(g, 1.0 / static_cast<double>(g));
  out.covariance = Eigen::MatrixXd::Identity(d, d);
  out.means.resize(d, g);
  for (long j = 0; j < g; ++j) {
    Eigen::VectorXd dir(d);
    double norm = 0.0;
    do {
      for (long k = 0; k < d; ++k) dir[k] = rng.next_normal();
      norm = dir.norm();
    } while (norm < 1e-12);
    out.means.col(j) = dir / norm;
  }
  if (g > 1) {
    double min_dist = std::numeric_limits<double>::infinity();
    for (long a = 0; a < g; ++a)
      for (long b = a + 1; b < g; ++b)
        min_dist = std::min(min_dist, (out.means.col(a) - out.means.col(b)).norm());
    if (min_dist < 1e-9) throw std::runtime_error("synth_gmm: degenerate mean draw");
    out.means *= separation / min_dist;  // identity covariance: sqrt(lambda_max) = 1
  }
  out.data.values.resize(n, d);
  for (long i = 0; i < n; ++i) {
    long z = 0;
    const double u = rng.next_real();
    double cum = 0.0;
    for (long j = 0; j < g; ++j) {
      cum += out.weights[j];
      if (u < cum) { z = j; break; }
      z = j;
    }
    for (long k = 0; k < d; ++k)
      out.data.values(i, k) = out.means(k, z) + rng.next_normal();
  }
  out.data.provenance = "synthetic gmm (g=" + std::to_string(g) +
                        ", d=" + std::to_string(d) + ", n=" + std::to_string(n) +
                        ", seed=" + std::to_string(seed) + ")";
  return out;
}

}  // namespace spiderem
