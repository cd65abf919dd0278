#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>

#include <Eigen/Dense>

#include "rvolmin/core.hpp"

namespace rvolmin {

enum class RegularizerKind {
  LogDet,     // log det(B^T B + tau I), tau > 0 keeps it bounded below
  Det,        // det(B^T B)
  TraceDist,  // sum_{i<j} ||b_i - b_j||^2 == Tr(G B^T B), G = K I - 1 1^T
};

struct Regularizer {
  RegularizerKind kind = RegularizerKind::LogDet;
  double tau = 1e-8;

  static Regularizer log_det(double tau) {
    if (!(tau > 0.0)) throw std::invalid_argument("Regularizer: tau must be > 0");
    return {RegularizerKind::LogDet, tau};
  }
  static Regularizer det() { return {RegularizerKind::Det, 0.0}; }
  static Regularizer trace_dist() { return {RegularizerKind::TraceDist, 0.0}; }
};

// G = K I - 1 1^T; PSD with eigenvalues {K (multiplicity K-1), 0}.
inline Matrix pairwise_distance_gram(Index k) {
  return static_cast<double>(k) * Matrix::Identity(k, k) - Matrix::Ones(k, k);
}

/// Volume measure of the simplex spanned by the columns of B.
inline double vol_value(const Matrix& b, const Regularizer& reg) {
  if (!b.allFinite()) throw std::invalid_argument("vol_value: non-finite input");
  const Matrix gram = b.transpose() * b;
  switch (reg.kind) {
    case RegularizerKind::LogDet: {
      const Matrix e = gram + reg.tau * Matrix::Identity(b.cols(), b.cols());
      const Matrix chol = e.llt().matrixL();
      return 2.0 * chol.diagonal().array().log().sum();
    }
    case RegularizerKind::Det:
      return gram.determinant();
    case RegularizerKind::TraceDist:
      return (pairwise_distance_gram(b.cols()) * gram).trace();
  }
  throw std::logic_error("vol_value: unknown regularizer");
}

/// Majorizer matrix F for the volume term, anchored at b_current:
///   LogDet    -> (B^T B + tau I)^{-1}   (tight quadratic upper bound)
///   TraceDist -> G (the term already is Tr(G B^T B), no surrogate needed)
///   Det       -> none; the B-update falls back to gradient + Armijo.
/// When cond_out is given it receives the condition estimate of the
/// inverted matrix (LogDet only).
inline std::optional<Matrix> majorizer(const Matrix& b_current, const Regularizer& reg,
                                       double* cond_out = nullptr) {
  if (!b_current.allFinite()) throw std::invalid_argument("majorizer: non-finite input");
  switch (reg.kind) {
    case RegularizerKind::LogDet: {
      const Index k = b_current.cols();
      const Matrix e = b_current.transpose() * b_current + reg.tau * Matrix::Identity(k, k);
      Eigen::SelfAdjointEigenSolver<Matrix> eig(e);
      const auto& ev = eig.eigenvalues();
      if (cond_out) *cond_out = ev[k - 1] / std::max(ev[0], std::numeric_limits<double>::min());
      return Matrix(eig.eigenvectors() * ev.cwiseInverse().asDiagonal() *
                    eig.eigenvectors().transpose());
    }
    case RegularizerKind::TraceDist:
      return pairwise_distance_gram(b_current.cols());
    case RegularizerKind::Det:
      return std::nullopt;
  }
  throw std::logic_error("majorizer: unknown regularizer");
}

/// Gradient of det(B^T B) with respect to B: 2 det(B^T B) B (B^T B)^{-1}.
/// Throws if B^T B is numerically singular.
inline Matrix det_gradient(const Matrix& b) {
  const Matrix gram = b.transpose() * b;
  Eigen::FullPivLU<Matrix> lu(gram);
  if (!lu.isInvertible()) throw std::runtime_error("det_gradient: singular B^T B");
  const double d = lu.determinant();
  return 2.0 * d * b * lu.inverse();
}

}  // namespace rvolmin
