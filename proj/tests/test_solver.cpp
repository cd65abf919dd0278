#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "oracles.hpp"
#include "rvolmin/solver.hpp"

using namespace rvolmin;

namespace {

Matrix random_matrix(SplitMix64& rng, Index m, Index k, double lo = 0.0, double hi = 1.0) {
  Matrix b(m, k);
  for (Index i = 0; i < b.size(); ++i) b(i) = lo + (hi - lo) * rng.next_double();
  return b;
}

Matrix random_simplex_columns(SplitMix64& rng, Index k, Index l) {
  Matrix s(k, l);
  for (Index j = 0; j < l; ++j) s.col(j) = rng.next_simplex_point(k);
  return s;
}

}  // namespace

TEST_CASE("update_weights closed form") {
  Matrix x(2, 3);
  x << 1.0, 2.0, 0.0, 0.0, 1.0, 0.5;
  Matrix b = Matrix::Identity(2, 2);
  Matrix c(2, 3);
  c << 0.5, 0.5, 0.5, 0.5, 0.5, 0.5;

  SECTION("p = 2 gives unit weights regardless of residuals") {
    const Vector w = update_weights(x, b, c, 2.0, 0.0);
    REQUIRE((w - Vector::Ones(3)).lpNorm<Eigen::Infinity>() == 0.0);
  }

  SECTION("p = 0.5 direct evaluation") {
    // squared residual 4 -> w = 0.25 * 4^{-0.75}
    Matrix x1(1, 1), b1(1, 1), c1(1, 1);
    x1 << 3.0;
    b1 << 1.0;
    c1 << 1.0;
    const Vector w = update_weights(x1, b1, c1, 0.5, 0.0);
    REQUIRE(w[0] == Catch::Approx(0.25 * std::pow(4.0, -0.75)).epsilon(1e-14));
    REQUIRE(w[0] == Catch::Approx(0.0883883476).epsilon(1e-8));
  }

  SECTION("zero residual with epsilon floor") {
    Matrix x1(1, 1), b1(1, 1), c1(1, 1);
    x1 << 1.0;
    b1 << 1.0;
    c1 << 1.0;
    const Vector w = update_weights(x1, b1, c1, 0.5, 1e-12);
    REQUIRE(w[0] == Catch::Approx(2.5e8).epsilon(1e-10));
  }
}

TEST_CASE("objective matches hand evaluation and a scripted oracle") {
  SECTION("perfect fit vanishes") {
    const Matrix x = Matrix::Identity(2, 2);
    SolverConfig cfg;
    cfg.p = 2.0;
    cfg.epsilon = 0.0;
    cfg.lambda = 1.0;
    cfg.tau = 1e-300;
    REQUIRE(objective(x, Matrix::Identity(2, 2), Matrix::Identity(2, 2), cfg) ==
            Catch::Approx(0.0).margin(1e-12));
  }

  SECTION("single-column p = 1 case") {
    Matrix x(2, 1);
    x << 1.0, 0.0;
    Matrix c(2, 1);
    c << 0.0, 1.0;
    SolverConfig cfg;
    cfg.p = 1.0;
    cfg.epsilon = 0.0;
    cfg.lambda = 0.0;
    REQUIRE(objective(x, Matrix::Identity(2, 2), c, cfg) ==
            Catch::Approx(0.5 * std::sqrt(2.0)).epsilon(1e-12));
  }

  SECTION("random instance against a direct formula evaluation") {
    SplitMix64 rng(31);
    const Index m = 6, k = 3, l = 9;
    const Matrix x = random_matrix(rng, m, l);
    const Matrix b = random_matrix(rng, m, k);
    const Matrix c = random_simplex_columns(rng, k, l);
    SolverConfig cfg;
    cfg.p = 0.5;
    cfg.epsilon = 1e-12;
    cfg.lambda = 0.7;
    cfg.tau = 1e-8;

    double expect = 0.0;
    for (Index j = 0; j < l; ++j) {
      expect += 0.5 * std::pow((x.col(j) - b * c.col(j)).squaredNorm() + cfg.epsilon, 0.25);
    }
    Eigen::SelfAdjointEigenSolver<Matrix> eig(
        Matrix(b.transpose() * b + cfg.tau * Matrix::Identity(k, k)));
    expect += 0.5 * cfg.lambda * eig.eigenvalues().array().log().sum();
    REQUIRE(objective(x, b, c, cfg) == Catch::Approx(expect).margin(1e-10));
  }

  SECTION("infeasible coefficients are rejected") {
    Matrix c(2, 1);
    c << 0.6, 0.6;
    SolverConfig cfg;
    REQUIRE_THROWS_AS(objective(Matrix::Identity(2, 2).eval(), Matrix::Identity(2, 2).eval(),
                                c, cfg),
                      std::invalid_argument);
  }
}

TEST_CASE("C step: pinned hand example") {
  Matrix x(2, 1);
  x << 1.0, 0.0;
  const Matrix b = Matrix::Identity(2, 2);
  Matrix c(2, 1);
  c << 0.5, 0.5;
  const Matrix out = detail::step_columns_onto_simplex(x, b, c, 1.0);
  REQUIRE(out(0, 0) == Catch::Approx(1.0).margin(1e-14));
  REQUIRE(out(1, 0) == Catch::Approx(0.0).margin(1e-14));
}

TEST_CASE("C step: constrained minimizer is a fixed point") {
  SplitMix64 rng(37);
  const Index m = 6, k = 4;
  const Matrix b = random_matrix(rng, m, k);
  Matrix x(m, 3);
  for (Index j = 0; j < 3; ++j) x.col(j) = random_matrix(rng, m, 1);
  Matrix c_star(k, 3);
  for (Index j = 0; j < 3; ++j) c_star.col(j) = oracle::qp_simplex_least_squares(b, x.col(j));
  const Matrix stepped = detail::step_columns_onto_simplex(x, b, c_star, spectral_bound(b));
  REQUIRE((stepped - c_star).lpNorm<Eigen::Infinity>() < 1e-9);
}

TEST_CASE("update_C iterated with fixed basis reaches the QP oracle") {
  SplitMix64 rng(41);
  for (int trial = 0; trial < 5; ++trial) {
    const Index m = 6, k = 4, l = 8;
    const Matrix b = random_matrix(rng, m, k, 0.1, 1.0);
    const Matrix x = random_matrix(rng, m, l);

    SolverConfig cfg;
    cfg.extrapolate = true;
    SolverState state;
    state.model.basis = b;
    state.model.coeffs = Matrix::Constant(k, l, 1.0 / static_cast<double>(k));
    state.coeffs_prev = state.model.coeffs;
    for (int it = 0; it < 5000; ++it) state.model.coeffs = update_C(x, state, cfg);

    for (Index j = 0; j < l; ++j) {
      const Vector expect = oracle::qp_simplex_least_squares(b, x.col(j));
      REQUIRE((state.model.coeffs.col(j) - expect).lpNorm<Eigen::Infinity>() < 1e-6);
    }
  }
}

TEST_CASE("update_B closed-form special cases") {
  SplitMix64 rng(43);

  SECTION("identity coefficients and no regularization return X") {
    const Index m = 5, k = 3;
    const Matrix x = random_matrix(rng, m, k);
    SolverConfig cfg;
    cfg.lambda = 0.0;
    SolverState state;
    state.model.basis = random_matrix(rng, m, k);
    state.model.coeffs = Matrix::Identity(k, k);
    state.weights = Vector::Ones(k);
    state.majorizer_f = Matrix::Identity(k, k);
    const Matrix b = update_B(x, state, cfg);
    REQUIRE((b - x).lpNorm<Eigen::Infinity>() < 1e-10);
  }

  SECTION("K = 1 with all-ones coefficients gives the column mean") {
    const Index m = 4, l = 7;
    const Matrix x = random_matrix(rng, m, l);
    SolverConfig cfg;
    cfg.lambda = 0.0;
    SolverState state;
    state.model.basis = random_matrix(rng, m, 1);
    state.model.coeffs = Matrix::Ones(1, l);
    state.weights = Vector::Ones(l);
    state.majorizer_f = Matrix::Identity(1, 1);
    const Matrix b = update_B(x, state, cfg);
    REQUIRE((b - x.rowwise().mean()).lpNorm<Eigen::Infinity>() < 1e-12);
  }

  SECTION("nonnegative projection clamps entrywise") {
    Matrix z(1, 2);
    z << -1.0, 2.0;
    const Matrix p = detail::project_basis(z, BasisConstraint::Nonnegative);
    REQUIRE(p(0, 0) == 0.0);
    REQUIRE(p(0, 1) == 2.0);
  }
}

TEST_CASE("solve: rank-1 data with equal columns") {
  SplitMix64 rng(47);
  const Index m = 6, l = 12;
  const Vector v = random_matrix(rng, m, 1).col(0) + Vector::Constant(m, 0.2);
  Matrix x(m, l);
  for (Index j = 0; j < l; ++j) x.col(j) = v;

  SolverConfig cfg;
  cfg.p = 2.0;
  cfg.epsilon = 0.0;
  cfg.lambda = 0.0;
  cfg.extrapolate = false;
  cfg.tol = 1e-14;
  const SolveReport rep = solve(x, 1, Init::data_columns(), cfg);
  REQUIRE((rep.model.basis.col(0) - v).lpNorm<Eigen::Infinity>() < 1e-8);
  REQUIRE((rep.model.coeffs - Matrix::Ones(1, l)).lpNorm<Eigen::Infinity>() < 1e-10);
}

TEST_CASE("solve: noiseless pure-pixel recovery") {
  SplitMix64 rng(53);
  const Index m = 12, k = 3, l = 60;
  const Matrix a = random_matrix(rng, m, k);
  Matrix s(k, l);
  s.leftCols(k) = Matrix::Identity(k, k);
  for (Index j = k; j < l; ++j) s.col(j) = rng.next_simplex_point(k);
  const Matrix x = a * s;

  SolverConfig cfg;
  cfg.p = 2.0;
  cfg.epsilon = 0.0;
  cfg.lambda = 1e-3;
  cfg.max_iter = 3000;
  cfg.tol = 1e-12;
  cfg.rng_seed = 5;
  const SolveReport rep = solve(x, k, Init::data_columns(), cfg);
  const auto mse = permutation_matched_mse(a, rep.model.basis);
  REQUIRE(mse.mse_db <= -40.0);
}

TEST_CASE("solve: p = 2 weights stay at one and iterates stay feasible") {
  SplitMix64 rng(59);
  const Matrix x = random_matrix(rng, 8, 30);
  SolverConfig cfg;
  cfg.p = 2.0;
  cfg.epsilon = 0.0;
  cfg.lambda = 0.3;
  cfg.max_iter = 60;
  cfg.tol = 0.0;
  bool weights_ok = true;
  bool feasible_ok = true;
  const SolveReport rep = solve(x, 3, Init::data_columns(), cfg, [&](const SolverState& st) {
    if ((st.weights.array() != 1.0).any()) weights_ok = false;
    if (!has_feasible_columns(st.model.coeffs)) feasible_ok = false;
  });
  REQUIRE(weights_ok);
  REQUIRE(feasible_ok);
  REQUIRE((rep.weights - Vector::Ones(30)).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("solve: objective is monotone without extrapolation") {
  SplitMix64 rng(61);
  const std::vector<RegularizerKind> regs = {RegularizerKind::LogDet, RegularizerKind::TraceDist,
                                             RegularizerKind::Det};
  const std::vector<BasisConstraint> cons = {BasisConstraint::Unconstrained,
                                             BasisConstraint::Nonnegative};
  for (int inst = 0; inst < 4; ++inst) {
    const Index m = 5 + static_cast<Index>(rng.next_u64() % 6);
    const Index k = 2 + static_cast<Index>(rng.next_u64() % 3);
    const Index l = 25 + static_cast<Index>(rng.next_u64() % 30);
    const Matrix a = random_matrix(rng, m, k);
    Matrix x = a * random_simplex_columns(rng, k, l);
    for (Index i = 0; i < x.size(); ++i) x(i) += 0.05 * (rng.next_gaussian());
    for (const auto reg : regs) {
      for (const auto con : cons) {
        SolverConfig cfg;
        cfg.p = 0.5;
        cfg.lambda = 0.2;
        cfg.regularizer = reg;
        cfg.basis_constraint = con;
        cfg.extrapolate = false;
        cfg.max_iter = 120;
        cfg.tol = 0.0;
        cfg.rng_seed = rng.next_u64();
        const SolveReport rep = solve(x, k, Init::data_columns(), cfg);
        for (std::size_t t = 1; t < rep.objective_history.size(); ++t) {
          const double prev = rep.objective_history[t - 1];
          const double cur = rep.objective_history[t];
          REQUIRE(cur <= prev + 1e-9 * (1.0 + std::abs(prev)));
        }
      }
    }
  }
}

TEST_CASE("solve: majorization inequalities hold along the run") {
  SplitMix64 rng(67);
  const Index m = 6, k = 3, l = 20;
  const Matrix a = random_matrix(rng, m, k);
  Matrix x = a * random_simplex_columns(rng, k, l);
  for (Index i = 0; i < x.size(); ++i) x(i) += 0.1 * rng.next_gaussian();

  SolverConfig cfg;
  cfg.p = 0.5;
  cfg.lambda = 0.4;
  cfg.extrapolate = false;
  cfg.tol = 0.0;

  SolverState state;
  state.model = init_model(x, k, Init::data_columns(), 3);
  state.weights = Vector::Ones(l);
  state.majorizer_f = Matrix::Identity(k, k);
  state.coeffs_prev = state.model.coeffs;

  for (int t = 0; t < 40; ++t) {
    const Matrix b_old = state.model.basis;
    const Matrix c_old = state.model.coeffs;
    const double lt = spectral_bound(b_old);
    const Vector w = state.weights;
    const Matrix f = *state.majorizer_f;

    state.model.coeffs = update_C(x, state, cfg);
    state.model.basis = update_B(x, state, cfg);

    // u_C(C_new; B_old) >= v(B_old, C_new)
    double u_c = 0.5 * cfg.lambda * vol_value(b_old, cfg.reg());
    for (Index j = 0; j < l; ++j) {
      const Vector r = x.col(j) - b_old * c_old.col(j);
      const Vector grad = b_old.transpose() * (b_old * c_old.col(j) - x.col(j));
      const Vector dc = state.model.coeffs.col(j) - c_old.col(j);
      const double quad = 0.5 * r.squaredNorm() + grad.dot(dc) + 0.5 * lt * dc.squaredNorm();
      u_c += 0.5 * std::pow(2.0 * quad + cfg.epsilon, 0.5 * cfg.p);
    }
    REQUIRE(u_c >= objective(x, b_old, state.model.coeffs, cfg) - 1e-9);

    // u_B(B_new; C_new, w, F) >= v(B_new, C_new)
    const Matrix& b_new = state.model.basis;
    double u_b = 0.0;
    for (Index j = 0; j < l; ++j) {
      u_b += 0.5 * w[j] * (x.col(j) - b_new * state.model.coeffs.col(j)).squaredNorm() +
             0.5 * robust_weight_penalty(w[j], cfg.p, cfg.epsilon);
    }
    const Matrix e = b_new.transpose() * b_new + cfg.tau * Matrix::Identity(k, k);
    u_b += 0.5 * cfg.lambda *
           ((f * e).trace() - std::log(f.determinant()) - static_cast<double>(k));
    REQUIRE(u_b >= objective(x, b_new, state.model.coeffs, cfg) - 1e-9);

    state.weights = update_weights(x, b_new, state.model.coeffs, cfg.p, cfg.epsilon);
    state.majorizer_f = majorizer(b_new, cfg.reg());
  }
}

TEST_CASE("solve: bounded iterates and stationarity at termination") {
  SplitMix64 rng(71);
  const Index m = 8, k = 3, l = 40;
  const Matrix a = random_matrix(rng, m, k);
  Matrix s(k, l);
  s.leftCols(k) = Matrix::Identity(k, k);
  for (Index j = k; j < l; ++j) s.col(j) = rng.next_simplex_point(k);
  const Matrix x = a * s;

  SolverConfig cfg;
  cfg.p = 2.0;
  cfg.epsilon = 0.0;
  cfg.lambda = 1e-3;
  cfg.extrapolate = false;
  cfg.max_iter = 5000;
  cfg.tol = 0.0;
  cfg.rng_seed = 17;

  double max_sigma = 0.0;
  const SolveReport rep = solve(x, k, Init::data_columns(), cfg, [&](const SolverState& st) {
    Eigen::JacobiSVD<Matrix> svd(st.model.basis);
    max_sigma = std::max(max_sigma, svd.singularValues()[0]);
  });
  REQUIRE(max_sigma <= 1e6);

  const Matrix& b = rep.model.basis;
  const Matrix& c = rep.model.coeffs;
  double pg_c = 0.0;
  for (Index j = 0; j < l; ++j) {
    const Vector grad = b.transpose() * (b * c.col(j) - x.col(j));
    pg_c = std::max(pg_c, (c.col(j) - project_simplex(c.col(j) - grad)).norm());
  }
  REQUIRE(pg_c <= 1e-4);

  const Vector w = update_weights(x, b, c, cfg.p, cfg.epsilon);
  const Matrix f = *majorizer(b, cfg.reg());
  const Matrix grad_b =
      b * (c * w.asDiagonal() * c.transpose() + cfg.lambda * f) - x * w.asDiagonal() * c.transpose();
  REQUIRE(grad_b.norm() <= 1e-4);
}

TEST_CASE("solve: crafted junk columns get downweighted") {
  SplitMix64 rng(73);
  const Index m = 10, k = 3, l = 80;
  const Matrix a = random_matrix(rng, m, k);
  Matrix s(k, l);
  for (Index j = 0; j < l; ++j) s.col(j) = rng.next_simplex_point(k);
  Matrix x = a * s;
  std::vector<Index> junk = {3, 17, 44, 61};
  for (const Index j : junk) x.col(j) = 30.0 * random_matrix(rng, m, 1);

  SolverConfig cfg;
  cfg.p = 0.5;
  cfg.lambda = 0.1;
  cfg.max_iter = 400;
  const SolveReport rep = solve(x, k, Init::data_columns(), cfg);

  std::vector<double> clean_w;
  for (Index j = 0; j < l; ++j) {
    if (std::find(junk.begin(), junk.end(), j) == junk.end()) clean_w.push_back(rep.weights[j]);
  }
  std::sort(clean_w.begin(), clean_w.end());
  const double clean_median = clean_w[clean_w.size() / 2];
  for (const Index j : junk) REQUIRE(rep.weights[j] < clean_median);
}

TEST_CASE("init_model strategies") {
  SplitMix64 rng(79);
  const Matrix x = random_matrix(rng, 4, 9);

  SECTION("provided feasible model passes through unchanged") {
    FactorModel m{random_matrix(rng, 4, 2), random_simplex_columns(rng, 2, 9)};
    const FactorModel out = init_model(x, 2, Init::provided(m), 0);
    REQUIRE((out.basis - m.basis).lpNorm<Eigen::Infinity>() == 0.0);
    REQUIRE((out.coeffs - m.coeffs).lpNorm<Eigen::Infinity>() == 0.0);
  }

  SECTION("provided infeasible column is repaired by projection") {
    FactorModel m{random_matrix(rng, 4, 2), Matrix::Constant(2, 9, 0.6)};
    const FactorModel out = init_model(x, 2, Init::provided(m), 0);
    for (Index j = 0; j < 9; ++j) {
      REQUIRE(out.coeffs(0, j) == Catch::Approx(0.5).margin(1e-14));
      REQUIRE(out.coeffs(1, j) == Catch::Approx(0.5).margin(1e-14));
    }
  }

  SECTION("data-columns init is deterministic under a fixed seed") {
    const FactorModel m1 = init_model(x, 3, Init::data_columns(), 1234);
    const FactorModel m2 = init_model(x, 3, Init::data_columns(), 1234);
    REQUIRE((m1.basis - m2.basis).lpNorm<Eigen::Infinity>() == 0.0);
    REQUIRE((m1.coeffs.array() == 1.0 / 3.0).all());
  }

  SECTION("data-columns init requires K <= L") {
    const Matrix tiny = random_matrix(rng, 6, 2);
    REQUIRE_THROWS_AS(init_model(tiny, 3, Init::data_columns(), 0), std::invalid_argument);
  }

  SECTION("random init draws the basis from the seeded stream") {
    const FactorModel m1 = init_model(x, 2, Init::random(), 9);
    const FactorModel m2 = init_model(x, 2, Init::random(), 9);
    REQUIRE((m1.basis - m2.basis).lpNorm<Eigen::Infinity>() == 0.0);
    REQUIRE(m1.basis.minCoeff() >= 0.0);
    REQUIRE(m1.basis.maxCoeff() <= 1.0);
  }
}

TEST_CASE("solve input validation") {
  SplitMix64 rng(83);
  const Matrix x = random_matrix(rng, 4, 6);
  SolverConfig cfg;
  REQUIRE_THROWS_AS(solve(x, 5, Init::data_columns(), cfg), std::invalid_argument);

  SolverConfig bad = cfg;
  bad.p = 2.5;
  REQUIRE_THROWS_AS(solve(x, 2, Init::data_columns(), bad), std::invalid_argument);

  bad = cfg;
  bad.p = 0.5;
  bad.epsilon = 0.0;
  REQUIRE_THROWS_AS(solve(x, 2, Init::data_columns(), bad), std::invalid_argument);

  Matrix with_nan = x;
  with_nan(1, 1) = std::numeric_limits<double>::quiet_NaN();
  REQUIRE_THROWS_AS(solve(with_nan, 2, Init::data_columns(), cfg), std::invalid_argument);
}
