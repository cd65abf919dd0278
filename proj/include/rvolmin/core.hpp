#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace rvolmin {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

constexpr double kSimplexTol = 1e-12;

// Basis/coefficient pair: X (M x L) is approximated by basis (M x K) times
// coeffs (K x L), where every column of coeffs lies on the unit simplex.
struct FactorModel {
  Matrix basis;   // M x K
  Matrix coeffs;  // K x L
};

struct MetricConfig {
  double mse_floor_db = -150.0;
};

inline bool is_simplex_column(const Eigen::Ref<const Vector>& c, double tol = kSimplexTol) {
  if ((c.array() < 0.0).any()) return false;
  return std::abs(c.sum() - 1.0) <= tol;
}

inline bool has_feasible_columns(const Matrix& coeffs, double tol = kSimplexTol) {
  for (Index l = 0; l < coeffs.cols(); ++l) {
    if (!is_simplex_column(coeffs.col(l), tol)) return false;
  }
  return true;
}

/// Euclidean projection onto the unit simplex {u >= 0, sum(u) = 1}.
/// Sort-then-threshold; exact up to floating point, O(K log K).
inline Vector project_simplex(const Eigen::Ref<const Vector>& v) {
  const Index k = v.size();
  if (k < 1) throw std::invalid_argument("project_simplex: empty vector");
  if (!v.allFinite()) throw std::invalid_argument("project_simplex: non-finite input");

  std::vector<double> u(v.data(), v.data() + k);
  std::sort(u.begin(), u.end(), std::greater<double>());

  double cumsum = 0.0;
  double theta = 0.0;
  Index rho = 0;
  for (Index i = 0; i < k; ++i) {
    cumsum += u[static_cast<std::size_t>(i)];
    const double candidate = (cumsum - 1.0) / static_cast<double>(i + 1);
    if (u[static_cast<std::size_t>(i)] - candidate > 0.0) {
      rho = i;
      theta = candidate;
    }
  }
  (void)rho;

  Vector out(k);
  for (Index i = 0; i < k; ++i) out[i] = std::max(v[i] - theta, 0.0);
  return out;
}

namespace detail {

// Power iteration on a PSD operator H (K x K), started from the column-norm
// vector so the iterate overlaps the dominant eigenvector generically.
// ||H v|| / ||v|| never exceeds the spectral norm, so the estimate is a
// lower bound and the caller must inflate/cap it.
inline double psd_power_estimate(const Matrix& h, int iters) {
  const Index k = h.rows();
  Vector v = h.colwise().norm().transpose();
  if (v.norm() == 0.0) return 0.0;
  v.normalize();
  double est = 0.0;
  for (int it = 0; it < iters; ++it) {
    Vector w = h * v;
    const double n = w.norm();
    if (n == 0.0) return 0.0;
    est = n;
    v = w / n;
  }
  return est;
}

}  // namespace detail

/// Certified upper bound on the spectral norm of a symmetric PSD matrix:
/// min(||H||_F, (1 + delta) * power-iteration estimate), Frobenius-capped
/// because the raw power estimate lower-bounds the true norm.
inline double psd_norm_bound(const Matrix& h, double delta = 0.05, int iters = 50) {
  if (!h.allFinite()) throw std::invalid_argument("psd_norm_bound: non-finite input");
  const double frob = h.norm();
  if (frob == 0.0) return 0.0;
  const double est = detail::psd_power_estimate(h, iters);
  if (est <= 0.0) return frob;
  return std::min(frob, (1.0 + delta) * est);
}

/// Certified upper bound on ||B^T B||_2. Returns 0 for an all-zero B.
inline double spectral_bound(const Matrix& b, double delta = 0.05, int iters = 50) {
  if (!b.allFinite()) throw std::invalid_argument("spectral_bound: non-finite input");
  if (b.size() == 0) throw std::invalid_argument("spectral_bound: empty matrix");
  return psd_norm_bound(Matrix(b.transpose() * b), delta, iters);
}

namespace detail {

// O(n^3) Hungarian algorithm (potential/augmenting-path form) for a square
// min-cost assignment. Returns row -> column.
inline std::vector<Index> min_cost_assignment(const Matrix& cost) {
  const Index n = cost.rows();
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(static_cast<std::size_t>(n) + 1, 0.0);
  std::vector<double> v(static_cast<std::size_t>(n) + 1, 0.0);
  std::vector<Index> match(static_cast<std::size_t>(n) + 1, 0);  // column -> row (1-based)
  std::vector<Index> way(static_cast<std::size_t>(n) + 1, 0);

  for (Index i = 1; i <= n; ++i) {
    match[0] = i;
    Index j0 = 0;
    std::vector<double> minv(static_cast<std::size_t>(n) + 1, inf);
    std::vector<bool> used(static_cast<std::size_t>(n) + 1, false);
    do {
      used[static_cast<std::size_t>(j0)] = true;
      const Index i0 = match[static_cast<std::size_t>(j0)];
      double best = inf;
      Index j1 = 0;
      for (Index j = 1; j <= n; ++j) {
        if (used[static_cast<std::size_t>(j)]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[static_cast<std::size_t>(i0)] -
                           v[static_cast<std::size_t>(j)];
        if (cur < minv[static_cast<std::size_t>(j)]) {
          minv[static_cast<std::size_t>(j)] = cur;
          way[static_cast<std::size_t>(j)] = j0;
        }
        if (minv[static_cast<std::size_t>(j)] < best) {
          best = minv[static_cast<std::size_t>(j)];
          j1 = j;
        }
      }
      for (Index j = 0; j <= n; ++j) {
        if (used[static_cast<std::size_t>(j)]) {
          u[static_cast<std::size_t>(match[static_cast<std::size_t>(j)])] += best;
          v[static_cast<std::size_t>(j)] -= best;
        } else {
          minv[static_cast<std::size_t>(j)] -= best;
        }
      }
      j0 = j1;
    } while (match[static_cast<std::size_t>(j0)] != 0);
    do {
      const Index j1 = way[static_cast<std::size_t>(j0)];
      match[static_cast<std::size_t>(j0)] = match[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }

  std::vector<Index> row_to_col(static_cast<std::size_t>(n), 0);
  for (Index j = 1; j <= n; ++j) {
    row_to_col[static_cast<std::size_t>(match[static_cast<std::size_t>(j)] - 1)] = j - 1;
  }
  return row_to_col;
}

inline Matrix unit_columns(const Matrix& a, const char* who) {
  Matrix out = a;
  for (Index k = 0; k < a.cols(); ++k) {
    const double n = a.col(k).norm();
    if (n == 0.0) throw std::invalid_argument(std::string(who) + ": all-zero column");
    out.col(k) /= n;
  }
  return out;
}

}  // namespace detail

struct MseResult {
  double mse_linear;
  double mse_db;
};

/// Permutation-matched MSE between two column-normalized bases:
///   min over permutations pi of (1/K) sum_k ||a_k - a_hat_{pi(k)}||^2.
/// The per-pair costs are independent, so an optimal assignment gives the
/// exact minimum for any K.
inline MseResult permutation_matched_mse(const Matrix& a_true, const Matrix& a_est,
                                         const MetricConfig& cfg = {}) {
  if (a_true.rows() != a_est.rows() || a_true.cols() != a_est.cols()) {
    throw std::invalid_argument("permutation_matched_mse: shape mismatch");
  }
  if (!a_true.allFinite() || !a_est.allFinite()) {
    throw std::invalid_argument("permutation_matched_mse: non-finite input");
  }
  const Index k = a_true.cols();
  const Matrix an = detail::unit_columns(a_true, "permutation_matched_mse");
  const Matrix en = detail::unit_columns(a_est, "permutation_matched_mse");

  Matrix cost(k, k);
  for (Index i = 0; i < k; ++i) {
    for (Index j = 0; j < k; ++j) cost(i, j) = (an.col(i) - en.col(j)).squaredNorm();
  }
  const auto assign = detail::min_cost_assignment(cost);
  double total = 0.0;
  for (Index i = 0; i < k; ++i) total += cost(i, assign[static_cast<std::size_t>(i)]);
  const double mse = total / static_cast<double>(k);
  const double db = mse > 0.0 ? std::max(10.0 * std::log10(mse), cfg.mse_floor_db)
                              : cfg.mse_floor_db;
  return {mse, db};
}

/// Empirical SNR in dB: mean column power of `clean` over mean column power
/// of `noise`. A zero noise power yields +infinity.
inline double snr_db(const Matrix& clean, const Matrix& noise) {
  if (clean.rows() != noise.rows() || clean.cols() != noise.cols()) {
    throw std::invalid_argument("snr_db: shape mismatch");
  }
  const double ps = clean.squaredNorm() / static_cast<double>(clean.cols());
  const double pn = noise.squaredNorm() / static_cast<double>(noise.cols());
  if (pn == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(ps / pn);
}

/// Empirical SOR in dB: mean clean column power (over all L) over mean
/// outlier column power (over the outlier index set only).
inline double sor_db(const Matrix& clean, const Matrix& outliers,
                     const std::vector<Index>& outlier_set) {
  if (clean.rows() != outliers.rows() || clean.cols() != outliers.cols()) {
    throw std::invalid_argument("sor_db: shape mismatch");
  }
  if (outlier_set.empty()) throw std::invalid_argument("sor_db: empty outlier set");
  const double ps = clean.squaredNorm() / static_cast<double>(clean.cols());
  double po = 0.0;
  for (const Index l : outlier_set) {
    if (l < 0 || l >= outliers.cols()) throw std::invalid_argument("sor_db: index out of range");
    po += outliers.col(l).squaredNorm();
  }
  po /= static_cast<double>(outlier_set.size());
  if (po == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(ps / po);
}

}  // namespace rvolmin
