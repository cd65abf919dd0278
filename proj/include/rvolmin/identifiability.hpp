#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "rvolmin/core.hpp"
#include "rvolmin/solver.hpp"

namespace rvolmin {

// Coefficient columns on the unit simplex (N x L). The tolerance governs
// feasibility checks, extremeness decisions, and facet side tests.
struct CoeffCloud {
  Matrix s;
  double tolerance = 1e-9;
};

struct ScatterReport {
  double gamma = 0.0;                  // +inf when conv(S) covers the whole simplex
  double threshold = 0.0;              // 1/sqrt(N-1)
  bool sufficiently_scattered = false; // gamma > threshold, strictly
  double centroid_distance = 0.0;      // d; +inf when no interior facet exists
  Index interior_facet_count = 0;
  Index extreme_point_count = 0;
};

// Facet of conv(S) within the hyperplane {1^T x = 1}: `normal` is the unit
// in-plane normal (1^T normal = 0) oriented so every cloud point satisfies
// normal . s <= offset. Since normal is in-plane, `offset` equals the
// signed distance from the simplex centroid to the facet's affine hull.
struct Facet {
  Vector normal;
  double offset = 0.0;
  bool on_simplex_boundary = false;
};

namespace detail {

inline void check_cloud(const CoeffCloud& cloud) {
  const Index n = cloud.s.rows();
  if (n < 2) throw std::invalid_argument("CoeffCloud: N must be >= 2");
  if (!cloud.s.allFinite()) throw std::invalid_argument("CoeffCloud: non-finite entries");
  const double tol = std::max(cloud.tolerance, 1e-12);
  for (Index l = 0; l < cloud.s.cols(); ++l) {
    if ((cloud.s.col(l).array() < -tol).any() ||
        std::abs(cloud.s.col(l).sum() - 1.0) > tol) {
      throw std::invalid_argument("CoeffCloud: column off the unit simplex");
    }
  }
}

// Collapse near-duplicate columns so extremeness is decided between
// distinct points; returns indices of unique representatives.
inline std::vector<Index> unique_columns(const Matrix& s, double tol) {
  std::vector<Index> keep;
  for (Index l = 0; l < s.cols(); ++l) {
    bool dup = false;
    for (const Index r : keep) {
      if ((s.col(l) - s.col(r)).lpNorm<Eigen::Infinity>() <= tol) {
        dup = true;
        break;
      }
    }
    if (!dup) keep.push_back(l);
  }
  return keep;
}

// Orthonormal basis of the direction space {z : 1^T z = 0} of the simplex
// hyperplane, as the last N-1 columns of a Householder Q applied to 1.
inline Matrix hyperplane_basis(Index n) {
  Matrix ones = Matrix::Ones(n, 1);
  Eigen::HouseholderQR<Matrix> qr(ones);
  Matrix q = qr.householderQ();
  return q.rightCols(n - 1);
}

}  // namespace detail

/// Indices of columns that are not a convex combination of the remaining
/// columns (within cloud.tolerance), decided by a long-run projected-gradient
/// least-squares fit of each column against the others.
inline std::vector<Index> extreme_points(const CoeffCloud& cloud) {
  detail::check_cloud(cloud);
  const Matrix& s = cloud.s;
  const Index n = s.rows();
  if (s.cols() < n) throw std::invalid_argument("extreme_points: need L >= N columns");

  const auto uniq = detail::unique_columns(s, 1e-12);
  std::vector<Index> extremes;
  for (std::size_t j = 0; j < uniq.size(); ++j) {
    if (uniq.size() == 1) {
      extremes.push_back(uniq[j]);
      continue;
    }
    Matrix others(n, static_cast<Index>(uniq.size()) - 1);
    Index col = 0;
    for (std::size_t r = 0; r < uniq.size(); ++r) {
      if (r == j) continue;
      others.col(col++) = s.col(uniq[r]);
    }
    const Vector theta = simplex_least_squares(others, s.col(uniq[j]));
    const double resid = (s.col(uniq[j]) - others * theta).norm();
    if (resid > cloud.tolerance) extremes.push_back(uniq[j]);
  }
  return extremes;
}

namespace detail {

// Enumerate the supporting facets of conv(extreme points) inside the simplex
// hyperplane. Requires the extreme points to affinely span the hyperplane.
inline std::vector<Facet> enumerate_facets(const CoeffCloud& cloud,
                                           const std::vector<Index>& extreme) {
  const Matrix& s = cloud.s;
  const Index n = s.rows();
  const Index ne = static_cast<Index>(extreme.size());
  if (n > 5) throw std::invalid_argument("facet enumeration supports N <= 5 only");
  if (ne > 60) throw std::invalid_argument("facet enumeration capped at 60 extreme points");
  if (ne < n) throw std::invalid_argument("facet enumeration: degenerate extreme set");
  const double tol = std::max(cloud.tolerance, 1e-12);

  const Matrix q = hyperplane_basis(n);
  const Vector centroid = Vector::Constant(n, 1.0 / static_cast<double>(n));
  Matrix y(n - 1, ne);  // in-plane coordinates relative to the simplex centroid
  for (Index j = 0; j < ne; ++j) {
    y.col(j) = q.transpose() * (s.col(extreme[static_cast<std::size_t>(j)]) - centroid);
  }

  {
    Matrix diffs(n - 1, ne - 1);
    for (Index j = 1; j < ne; ++j) diffs.col(j - 1) = y.col(j) - y.col(0);
    Eigen::JacobiSVD<Matrix> svd(diffs);
    const auto& sv = svd.singularValues();
    if (sv.size() < n - 1 || sv[n - 2] <= 1e-10 * std::max(sv[0], 1.0)) {
      throw std::invalid_argument("facet enumeration: extreme points do not span the hyperplane");
    }
  }

  std::vector<Facet> facets;
  std::vector<Index> pick(static_cast<std::size_t>(n - 1));
  // subsets of size N-1 in lexicographic order
  for (Index i = 0; i < n - 1; ++i) pick[static_cast<std::size_t>(i)] = i;
  while (true) {
    do {  // process current subset
      Matrix diffs(n - 2, n - 1);
      for (Index r = 1; r < n - 1; ++r) {
        diffs.row(r - 1) =
            (y.col(pick[static_cast<std::size_t>(r)]) - y.col(pick[0])).transpose();
      }
      Vector nu;
      if (n == 2) {
        nu = Vector::Ones(1);  // facets are single points on a line
      } else {
        Eigen::JacobiSVD<Matrix> svd(diffs, Eigen::ComputeFullV);
        const auto& sv = svd.singularValues();
        if (sv[n - 3] <= 1e-10 * std::max(sv[0], 1.0)) break;  // affinely dependent subset
        nu = svd.matrixV().col(n - 2);
      }
      const double off = nu.dot(y.col(pick[0]));

      double lo = 0.0, hi = 0.0;
      for (Index j = 0; j < ne; ++j) {
        const double t = nu.dot(y.col(j)) - off;
        lo = std::min(lo, t);
        hi = std::max(hi, t);
      }
      if (lo < -tol && hi > tol) break;  // points on both sides: not a facet
      double sign = (hi > tol) ? -1.0 : 1.0;
      Vector normal = sign * (q * nu);
      double offset = sign * off;

      bool boundary = false;
      for (Index i = 0; i < n && !boundary; ++i) {
        bool all_zero = true;
        for (const Index p : pick) {
          if (std::abs(s(i, extreme[static_cast<std::size_t>(p)])) > tol) {
            all_zero = false;
            break;
          }
        }
        boundary = all_zero;
      }

      bool seen = false;
      for (const Facet& f : facets) {
        if (std::abs(f.normal.dot(normal) - 1.0) < 1e-7 && std::abs(f.offset - offset) < 1e-7) {
          seen = true;
          break;
        }
      }
      if (!seen) facets.push_back({normal, offset, boundary});
    } while (false);

    // advance subset
    Index i = n - 2;
    while (i >= 0 && pick[static_cast<std::size_t>(i)] == ne - (n - 1) + i) --i;
    if (i < 0) break;
    ++pick[static_cast<std::size_t>(i)];
    for (Index j = i + 1; j < n - 1; ++j) {
      pick[static_cast<std::size_t>(j)] = pick[static_cast<std::size_t>(j - 1)] + 1;
    }
  }
  return facets;
}

}  // namespace detail

/// Facets of conv(S) whose affine hull does not coincide with a simplex
/// boundary facet {x_i = 0}. Combinatorial enumeration; N <= 5.
inline std::vector<Facet> interior_facets(const CoeffCloud& cloud) {
  const auto extreme = extreme_points(cloud);
  auto facets = detail::enumerate_facets(cloud, extreme);
  std::vector<Facet> interior;
  for (auto& f : facets) {
    if (!f.on_simplex_boundary) interior.push_back(std::move(f));
  }
  return interior;
}

/// Scattering radius gamma = sup{r : R(r) is contained in conv(S)} where
/// R(r) is the radius-r ball slice of the unit simplex, and the Theorem-2
/// style certificate gamma > 1/sqrt(N-1). For the facet at in-plane
/// distance d from the simplex centroid the critical radius is
/// sqrt(d^2 + 1/N); no interior facet means gamma is infinite.
inline ScatterReport scattering_radius(const CoeffCloud& cloud) {
  const Index n = cloud.s.rows();
  const double inf = std::numeric_limits<double>::infinity();
  const auto extreme = extreme_points(cloud);
  const auto facets = detail::enumerate_facets(cloud, extreme);
  const double tol = std::max(cloud.tolerance, 1e-12);

  ScatterReport report;
  report.threshold = 1.0 / std::sqrt(static_cast<double>(n - 1));
  report.extreme_point_count = static_cast<Index>(extreme.size());

  double d = inf;
  Index interior_count = 0;
  bool centroid_outside = false;
  for (const Facet& f : facets) {
    if (f.offset < -tol) centroid_outside = true;
    if (!f.on_simplex_boundary) {
      ++interior_count;
      d = std::min(d, std::max(f.offset, 0.0));
    }
  }
  report.interior_facet_count = interior_count;

  if (centroid_outside) {
    report.gamma = 0.0;
    report.centroid_distance = 0.0;
    report.sufficiently_scattered = false;
    return report;
  }
  report.centroid_distance = d;
  report.gamma = std::isinf(d) ? inf : std::sqrt(d * d + 1.0 / static_cast<double>(n));
  report.sufficiently_scattered = report.gamma > report.threshold;
  return report;
}

}  // namespace rvolmin
