#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rvolmin/core.hpp"
#include "rvolmin/regularizers.hpp"
#include "rvolmin/rng.hpp"

namespace rvolmin {

// Thrown when an iterate produces a non-finite objective.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class BasisConstraint { Unconstrained, Nonnegative };
enum class TerminationReason { Tolerance, MaxIter };

struct SolverConfig {
  double p = 0.5;           // residual exponent in (0, 2]
  double lambda = 0.5;      // volume regularization weight, >= 0
  double epsilon = 1e-12;   // smoothing term inside the robust fit
  double tau = 1e-8;        // log-det shift, > 0
  RegularizerKind regularizer = RegularizerKind::LogDet;
  BasisConstraint basis_constraint = BasisConstraint::Unconstrained;
  bool extrapolate = true;
  int max_iter = 1000;
  double tol = 1e-5;        // absolute objective change
  double safety_delta = 0.05;
  std::uint64_t rng_seed = 0;

  Regularizer reg() const {
    if (regularizer == RegularizerKind::LogDet) return Regularizer::log_det(tau);
    return {regularizer, tau};
  }

  void validate() const {
    if (!(p > 0.0 && p <= 2.0)) throw std::invalid_argument("SolverConfig: p must be in (0, 2]");
    if (lambda < 0.0) throw std::invalid_argument("SolverConfig: lambda must be >= 0");
    if (epsilon < 0.0) throw std::invalid_argument("SolverConfig: epsilon must be >= 0");
    if (p < 1.0 && epsilon <= 0.0) {
      throw std::invalid_argument("SolverConfig: epsilon must be > 0 when p < 1");
    }
    if (!(tau > 0.0)) throw std::invalid_argument("SolverConfig: tau must be > 0");
    if (max_iter < 0) throw std::invalid_argument("SolverConfig: max_iter must be >= 0");
    if (tol < 0.0) throw std::invalid_argument("SolverConfig: tol must be >= 0");
  }
};

struct SolverState {
  FactorModel model;
  Vector weights;                      // length L, positive
  std::optional<Matrix> majorizer_f;   // K x K, absent for the Det regularizer
  double q = 1.0;                      // extrapolation scalar, q^1 = 1
  Matrix coeffs_prev;                  // previous C iterate
  std::vector<double> objective_history;
  int iteration = 0;
};

struct SolveReport {
  FactorModel model;
  Vector weights;
  std::vector<double> objective_history;
  int iterations_used = 0;
  TerminationReason termination = TerminationReason::MaxIter;
  double wall_time_s = 0.0;
  std::vector<std::string> warnings;
};

// Conjugate-style penalty from the variational form of the robust loss:
//   (x^2 + eps)^{p/2} = min_{w >= 0} w x^2 + phi_p(w),
//   phi_p(w) = (2-p)/2 * ((2/p) w)^{p/(p-2)} + eps w.
inline double robust_weight_penalty(double w, double p, double epsilon) {
  if (p >= 2.0) {
    // p -> 2 limit: the barrier pins the minimizer at w = 1
    return w < 1.0 ? std::numeric_limits<double>::infinity() : epsilon * w;
  }
  return 0.5 * (2.0 - p) * std::pow((2.0 / p) * w, p / (p - 2.0)) + epsilon * w;
}

/// Per-column robust weights: w_l = (p/2) (||x_l - B c_l||^2 + eps)^{(p-2)/2}.
/// With p = 2, eps = 0 this is identically one and the solver reduces to
/// plain volume-regularized quadratic fitting.
inline Vector update_weights(const Matrix& x, const Matrix& b, const Matrix& c, double p,
                             double epsilon) {
  const Matrix resid = x - b * c;
  Vector w(x.cols());
  for (Index l = 0; l < x.cols(); ++l) {
    w[l] = 0.5 * p * std::pow(resid.col(l).squaredNorm() + epsilon, 0.5 * (p - 2.0));
  }
  return w;
}

/// Objective of the robust volume-regularized fit:
///   sum_l (1/2)(||x_l - B c_l||^2 + eps)^{p/2} + (lambda/2) vol(B).
inline double objective(const Matrix& x, const Matrix& b, const Matrix& c,
                        const SolverConfig& cfg) {
  if (!has_feasible_columns(c)) throw std::invalid_argument("objective: infeasible C columns");
  const Matrix resid = x - b * c;
  double fit = 0.0;
  for (Index l = 0; l < x.cols(); ++l) {
    fit += 0.5 * std::pow(resid.col(l).squaredNorm() + cfg.epsilon, 0.5 * cfg.p);
  }
  return fit + 0.5 * cfg.lambda * vol_value(b, cfg.reg());
}

namespace detail {

// One projected-gradient step per column of Z on f(c) = 1/2 ||x - B c||^2,
// step size 1/step_bound.
inline Matrix step_columns_onto_simplex(const Matrix& x, const Matrix& b, const Matrix& z,
                                        double step_bound) {
  const double lt = std::max(step_bound, 1e-300);
  const Matrix grad = b.transpose() * (b * z - x);
  const Matrix pre = z - grad / lt;
  Matrix out(z.rows(), z.cols());
  for (Index l = 0; l < z.cols(); ++l) out.col(l) = project_simplex(pre.col(l));
  return out;
}

}  // namespace detail

/// C-block update: one projected-gradient step per column with certified
/// step bound L^t >= ||B^T B||_2, taken from the current point or from the
/// Nesterov extrapolation point. Advances the extrapolation bookkeeping.
inline Matrix update_C(const Matrix& x, SolverState& state, const SolverConfig& cfg) {
  const Matrix& b = state.model.basis;
  const Matrix& c = state.model.coeffs;
  const double lt = spectral_bound(b, cfg.safety_delta);

  Matrix c_new;
  if (cfg.extrapolate) {
    const double q_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * state.q * state.q));
    const double beta = (state.q - 1.0) / q_next;
    const Matrix y = c + beta * (c - state.coeffs_prev);
    c_new = detail::step_columns_onto_simplex(x, b, y, lt);
    state.q = q_next;
  } else {
    c_new = detail::step_columns_onto_simplex(x, b, c, lt);
  }
  state.coeffs_prev = c;
  return c_new;
}

namespace detail {

inline Matrix project_basis(const Matrix& b, BasisConstraint constraint) {
  if (constraint == BasisConstraint::Nonnegative) return b.cwiseMax(0.0);
  return b;
}

// Weighted fit plus exact det volume term; used by the Armijo path.
inline double det_surrogate_value(const Matrix& x, const Matrix& b, const Matrix& c,
                                  const Vector& w, double lambda) {
  const Matrix resid = x - b * c;
  double v = 0.0;
  for (Index l = 0; l < x.cols(); ++l) v += 0.5 * w[l] * resid.col(l).squaredNorm();
  return v + 0.5 * lambda * Matrix(b.transpose() * b).determinant();
}

// Solve B (S) = R for B given symmetric PSD S, falling back to a
// regularized pseudo-inverse when S is numerically singular.
inline Matrix solve_basis_system(const Matrix& r, const Matrix& s, bool* warned) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(s);
  const auto& ev = eig.eigenvalues();
  const Index k = s.rows();
  const double vmax = std::max(ev[k - 1], 0.0);
  const double floor = vmax * 1e-14;
  if (ev[0] <= floor || vmax == 0.0 || vmax / std::max(ev[0], 1e-300) > 1e12) {
    if (warned) *warned = true;
    Vector inv(k);
    for (Index i = 0; i < k; ++i) inv[i] = ev[i] > floor ? 1.0 / ev[i] : 0.0;
    const Matrix pinv = eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose();
    return r * pinv;
  }
  return s.ldlt().solve(r.transpose()).transpose();
}

}  // namespace detail

/// B-block update. Closed form for the unconstrained log-det/trace cases;
/// one certified projected-gradient step for the nonnegative cases; a
/// projected gradient step with Armijo backtracking for the det regularizer
/// (its volume term has no global quadratic upper bound).
inline Matrix update_B(const Matrix& x, SolverState& state, const SolverConfig& cfg,
                       bool* conditioning_warning = nullptr) {
  const Matrix& b = state.model.basis;
  const Matrix& c = state.model.coeffs;
  const Vector& w = state.weights;

  const Matrix cw = c * w.asDiagonal();
  const Matrix cwc = cw * c.transpose();        // K x K
  const Matrix xwc = x * (cw.transpose());      // M x K

  if (cfg.regularizer == RegularizerKind::Det) {
    Matrix vol_grad;
    bool singular = false;
    try {
      vol_grad = det_gradient(b);
    } catch (const std::runtime_error&) {
      singular = true;  // fall back to a log-det majorizer step this iteration
    }
    if (!singular) {
      const Matrix grad = b * cwc - xwc + 0.5 * cfg.lambda * vol_grad;
      const double mu = std::max(psd_norm_bound(cwc, cfg.safety_delta), 1e-300);
      const double g0 = detail::det_surrogate_value(x, b, c, w, cfg.lambda);
      double step = 1.0 / mu;
      constexpr double sigma = 1e-4;
      for (int halvings = 0; halvings < 60; ++halvings) {
        const Matrix cand = detail::project_basis(b - step * grad, cfg.basis_constraint);
        const double decrease = (grad.array() * (cand - b).array()).sum();
        const double g1 = detail::det_surrogate_value(x, cand, c, w, cfg.lambda);
        if (std::isfinite(g1) && g1 <= g0 + sigma * decrease) return cand;
        step *= 0.5;
      }
      return b;  // no acceptable step; keep the iterate (still monotone)
    }
  }

  Matrix f;
  if (state.majorizer_f) {
    f = *state.majorizer_f;
  } else {
    // Det fallback after a singular gradient: majorize log det(B^T B + tau I).
    f = *majorizer(b, Regularizer::log_det(cfg.tau));
  }
  const Matrix sys = cwc + cfg.lambda * f;

  if (cfg.basis_constraint == BasisConstraint::Nonnegative) {
    const double mu = std::max(psd_norm_bound(sys, cfg.safety_delta), 1e-300);
    const Matrix grad = b * sys - xwc;
    return (b - grad / mu).cwiseMax(0.0);
  }
  return detail::solve_basis_system(xwc, sys, conditioning_warning);
}

enum class InitKind { Random, DataColumns, Provided };

struct Init {
  InitKind kind = InitKind::DataColumns;
  std::optional<FactorModel> model;  // required for Provided

  static Init random() { return {InitKind::Random, std::nullopt}; }
  static Init data_columns() { return {InitKind::DataColumns, std::nullopt}; }
  static Init provided(FactorModel m) { return {InitKind::Provided, std::move(m)}; }
};

/// Build a feasible starting model. Random and DataColumns draw from the
/// canonical seeded stream; Provided passes through after projecting each
/// coefficient column onto the simplex.
inline FactorModel init_model(const Matrix& x, Index k, const Init& init, std::uint64_t seed) {
  const Index m = x.rows();
  const Index l = x.cols();
  switch (init.kind) {
    case InitKind::Random: {
      SplitMix64 rng(seed);
      Matrix b(m, k);
      for (Index j = 0; j < k; ++j) {
        for (Index i = 0; i < m; ++i) b(i, j) = rng.next_double();
      }
      return {b, Matrix::Constant(k, l, 1.0 / static_cast<double>(k))};
    }
    case InitKind::DataColumns: {
      if (k > l) throw std::invalid_argument("init_model: DataColumns requires K <= L");
      SplitMix64 rng(seed);
      const auto cols = rng.sample_without_replacement(l, k);
      Matrix b(m, k);
      for (Index j = 0; j < k; ++j) b.col(j) = x.col(cols[static_cast<std::size_t>(j)]);
      return {b, Matrix::Constant(k, l, 1.0 / static_cast<double>(k))};
    }
    case InitKind::Provided: {
      if (!init.model) throw std::invalid_argument("init_model: missing provided model");
      FactorModel out = *init.model;
      if (out.basis.rows() != m || out.basis.cols() != k || out.coeffs.rows() != k ||
          out.coeffs.cols() != l) {
        throw std::invalid_argument("init_model: provided model has wrong shape");
      }
      for (Index j = 0; j < l; ++j) {
        if (!is_simplex_column(out.coeffs.col(j))) {
          out.coeffs.col(j) = project_simplex(out.coeffs.col(j));
        }
      }
      return out;
    }
  }
  throw std::logic_error("init_model: unknown init kind");
}

using IterationObserver = std::function<void(const SolverState&)>;

/// Robust volume-minimization solve: inexact block coordinate descent with
/// per-iteration order C -> B -> weights -> majorizer. The first B-update
/// runs with W = I and F = I. Stops when the absolute objective change
/// drops below tol or after max_iter iterations.
inline SolveReport solve(const Matrix& x, Index k, const Init& init, const SolverConfig& cfg,
                         const IterationObserver& observer = {}) {
  cfg.validate();
  if (!x.allFinite()) throw std::invalid_argument("solve: non-finite data");
  if (k < 1 || k > std::min(x.rows(), x.cols())) {
    throw std::invalid_argument("solve: K must satisfy 1 <= K <= min(M, L)");
  }
  const auto t_start = std::chrono::steady_clock::now();
  const Index l = x.cols();

  SolverState state;
  state.model = init_model(x, k, init, cfg.rng_seed);
  state.weights = Vector::Ones(l);
  state.majorizer_f = cfg.regularizer == RegularizerKind::Det
                          ? std::nullopt
                          : std::make_optional<Matrix>(Matrix::Identity(k, k));
  state.coeffs_prev = state.model.coeffs;

  bool conditioning = false;
  double ill_majorizer_cond = 0.0;

  double obj = objective(x, state.model.basis, state.model.coeffs, cfg);
  if (!std::isfinite(obj)) {
    throw NumericError("solve: non-finite initial objective; check data scaling and config");
  }
  state.objective_history.push_back(obj);
  if (observer) observer(state);

  TerminationReason reason = TerminationReason::MaxIter;
  int used = 0;
  for (int t = 1; t <= cfg.max_iter; ++t) {
    state.model.coeffs = update_C(x, state, cfg);
    state.model.basis = update_B(x, state, cfg, &conditioning);

    state.weights = update_weights(x, state.model.basis, state.model.coeffs, cfg.p, cfg.epsilon);
    if (cfg.regularizer != RegularizerKind::Det) {
      double cond = 0.0;
      state.majorizer_f = majorizer(state.model.basis, cfg.reg(), &cond);
      ill_majorizer_cond = std::max(ill_majorizer_cond, cond);
    }

    const double prev = obj;
    obj = objective(x, state.model.basis, state.model.coeffs, cfg);
    if (!std::isfinite(obj)) {
      throw NumericError("solve: non-finite objective at iteration " + std::to_string(t));
    }
    state.objective_history.push_back(obj);
    state.iteration = t;
    used = t;
    if (observer) observer(state);

    if (std::abs(obj - prev) < cfg.tol) {
      reason = TerminationReason::Tolerance;
      break;
    }
  }

  SolveReport report;
  report.model = std::move(state.model);
  report.weights = std::move(state.weights);
  report.objective_history = std::move(state.objective_history);
  report.iterations_used = used;
  report.termination = reason;
  report.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  if (conditioning) {
    report.warnings.push_back("basis system numerically singular; regularized pseudo-inverse used");
  }
  if (ill_majorizer_cond > 1e12) {
    report.warnings.push_back("log-det majorizer condition estimate exceeded 1e12");
  }
  return report;
}

/// Long-run simplex-constrained least squares min_theta ||a theta - y||_2
/// via extrapolated projected gradient with adaptive restart. Shared by the
/// identifiability extreme-point test.
inline Vector simplex_least_squares(const Matrix& a, const Vector& y, int max_iter = 20000) {
  const Index n = a.cols();
  if (n < 1) throw std::invalid_argument("simplex_least_squares: empty system");
  const double lip = std::max(spectral_bound(a), 1e-300);
  Vector theta = Vector::Constant(n, 1.0 / static_cast<double>(n));
  Vector theta_prev = theta;
  double q = 1.0;
  for (int t = 0; t < max_iter; ++t) {
    const double q_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * q * q));
    const Vector z = theta + ((q - 1.0) / q_next) * (theta - theta_prev);
    const Vector grad = a.transpose() * (a * z - y);
    const Vector next = project_simplex(z - grad / lip);
    const double move = (next - theta).lpNorm<Eigen::Infinity>();
    // restart the momentum when it points against the last step
    if ((next - theta).dot(theta - theta_prev) < 0.0) {
      q = 1.0;
    } else {
      q = q_next;
    }
    theta_prev = theta;
    theta = next;
    if (move < 1e-16) break;
  }
  return theta;
}

}  // namespace rvolmin
