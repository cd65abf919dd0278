#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "rvolmin/core.hpp"
#include "rvolmin/rng.hpp"
#include "rvolmin/solver.hpp"

namespace rvolmin {

enum class BasisKind { Uniform, IllConditioned };

struct SynthSpec {
  Index m = 50;
  Index k = 5;
  Index l = 1000;
  double snr_db = std::numeric_limits<double>::infinity();
  double sor_db = std::numeric_limits<double>::infinity();
  Index n_outliers = 0;
  double purity_level = 0.85;  // max coefficient entry, in (1/K, 1]
  BasisKind basis_kind = BasisKind::Uniform;
  std::vector<double> singular_values;  // replaces the spectrum when IllConditioned
  std::uint64_t rng_seed = 0;

  void validate() const {
    if (m < 1 || k < 1 || l < 1) throw std::invalid_argument("SynthSpec: empty dimensions");
    if (k > std::min(m, l)) throw std::invalid_argument("SynthSpec: K must be <= min(M, L)");
    if (n_outliers < 0 || n_outliers > l) {
      throw std::invalid_argument("SynthSpec: n_outliers must be in [0, L]");
    }
    if (!(purity_level > 1.0 / static_cast<double>(k)) || purity_level > 1.0) {
      throw std::invalid_argument("SynthSpec: purity_level must be in (1/K, 1]");
    }
    if (basis_kind == BasisKind::IllConditioned) {
      if (static_cast<Index>(singular_values.size()) != k) {
        throw std::invalid_argument("SynthSpec: need K singular values for IllConditioned");
      }
      for (const double s : singular_values) {
        if (!(s > 0.0)) throw std::invalid_argument("SynthSpec: singular values must be > 0");
      }
    }
  }
};

struct SynthInstance {
  Matrix x;        // M x L, observed data
  Matrix a_true;   // M x K
  Matrix s_true;   // K x L, simplex columns with max entry <= purity_level
  std::vector<Index> outlier_indices;
  double realized_snr_db = std::numeric_limits<double>::infinity();
  double realized_sor_db = std::numeric_limits<double>::infinity();
};

/// Draw one synthetic instance: uniform basis (optionally with a prescribed
/// spectrum), simplex coefficients rejected to the purity bound, Gaussian
/// noise scaled so the empirical SNR hits the target exactly, and outlier
/// columns that replace the nominal data, scaled to the exact empirical SOR.
inline SynthInstance gen_instance(const SynthSpec& spec) {
  spec.validate();
  SplitMix64 rng(spec.rng_seed);
  const Index m = spec.m, k = spec.k, l = spec.l;

  Matrix a(m, k);
  for (Index j = 0; j < k; ++j) {
    for (Index i = 0; i < m; ++i) a(i, j) = rng.next_double();
  }
  if (spec.basis_kind == BasisKind::IllConditioned) {
    Eigen::JacobiSVD<Matrix> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
    Vector sigma(k);
    for (Index j = 0; j < k; ++j) sigma[j] = spec.singular_values[static_cast<std::size_t>(j)];
    a = svd.matrixU() * sigma.asDiagonal() * svd.matrixV().transpose();
  }

  Matrix s(k, l);
  std::uint64_t draws = 0;
  const std::uint64_t max_draws = 1000000ULL * static_cast<std::uint64_t>(l);
  for (Index j = 0; j < l; ++j) {
    while (true) {
      if (++draws > max_draws) {
        throw std::invalid_argument("gen_instance: purity rejection sampling budget exhausted");
      }
      const Vector cand = rng.next_simplex_point(k);
      if (cand.maxCoeff() <= spec.purity_level) {
        s.col(j) = cand;
        break;
      }
    }
  }

  const Matrix clean = a * s;
  const double signal_power = clean.squaredNorm() / static_cast<double>(l);

  Matrix noise = Matrix::Zero(m, l);
  if (std::isfinite(spec.snr_db)) {
    for (Index j = 0; j < l; ++j) {
      for (Index i = 0; i < m; ++i) noise(i, j) = rng.next_gaussian();
    }
    const double raw = noise.squaredNorm() / static_cast<double>(l);
    const double target = signal_power / std::pow(10.0, spec.snr_db / 10.0);
    noise *= std::sqrt(target / raw);
  }

  SynthInstance inst;
  inst.a_true = a;
  inst.s_true = s;
  inst.x = clean + noise;
  inst.realized_snr_db = snr_db(clean, noise);

  if (spec.n_outliers > 0) {
    inst.outlier_indices = rng.sample_without_replacement(l, spec.n_outliers);
    std::sort(inst.outlier_indices.begin(), inst.outlier_indices.end());
    Matrix raw(m, spec.n_outliers);
    for (Index j = 0; j < spec.n_outliers; ++j) {
      for (Index i = 0; i < m; ++i) raw(i, j) = rng.next_double();
    }
    double scale = 0.0;
    if (std::isfinite(spec.sor_db)) {
      const double raw_power = raw.squaredNorm() / static_cast<double>(spec.n_outliers);
      const double target = signal_power / std::pow(10.0, spec.sor_db / 10.0);
      scale = std::sqrt(target / raw_power);
    }
    Matrix outliers = Matrix::Zero(m, l);
    for (Index j = 0; j < spec.n_outliers; ++j) {
      outliers.col(inst.outlier_indices[static_cast<std::size_t>(j)]) = scale * raw.col(j);
      inst.x.col(inst.outlier_indices[static_cast<std::size_t>(j)]) = scale * raw.col(j);
    }
    inst.realized_sor_db = sor_db(clean, outliers, inst.outlier_indices);
  }
  return inst;
}

enum class SweepAxis { Snr, Sor, K, NOutliers, Lambda, P };

inline const char* sweep_axis_name(SweepAxis axis) {
  switch (axis) {
    case SweepAxis::Snr: return "snr_db";
    case SweepAxis::Sor: return "sor_db";
    case SweepAxis::K: return "k";
    case SweepAxis::NOutliers: return "n_outliers";
    case SweepAxis::Lambda: return "lambda";
    case SweepAxis::P: return "p";
  }
  return "unknown";
}

struct TrialRecord {
  Index axis_index = 0;
  int trial_index = 0;
  std::uint64_t seed = 0;
  double mse_linear = 0.0;
  double mse_db = 0.0;
  int iterations = 0;
  double wall_s = 0.0;
  bool failed = false;
  std::string detail;  // termination reason or failure message
};

struct SweepResult {
  SweepAxis axis = SweepAxis::Snr;
  std::vector<double> values;
  std::vector<double> mean_mse_db;
  std::vector<double> median_mse_db;
  std::vector<int> trial_counts;
  std::vector<int> failure_counts;
  std::vector<double> mean_wall_s;
  std::vector<TrialRecord> trials;  // ordered by (axis_index, trial_index)
};

namespace detail {

inline void apply_axis(SweepAxis axis, double value, SynthSpec& spec, SolverConfig& cfg) {
  switch (axis) {
    case SweepAxis::Snr: spec.snr_db = value; break;
    case SweepAxis::Sor: spec.sor_db = value; break;
    case SweepAxis::K: spec.k = static_cast<Index>(std::llround(value)); break;
    case SweepAxis::NOutliers: spec.n_outliers = static_cast<Index>(std::llround(value)); break;
    case SweepAxis::Lambda: cfg.lambda = value; break;
    case SweepAxis::P: cfg.p = value; break;
  }
}

inline double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace detail

/// Monte-Carlo sweep: for each axis value and trial, generate an instance
/// with a derived per-trial seed, solve, and score the estimated basis
/// against the ground truth. Trials are independent and keyed by
/// (axis_index, trial_index), so results do not depend on execution order.
inline SweepResult run_sweep(const SynthSpec& base_spec, SweepAxis axis,
                             const std::vector<double>& values, int trials,
                             const SolverConfig& solver_config,
                             InitKind init = InitKind::DataColumns, int jobs = 1) {
  if (trials < 1) throw std::invalid_argument("run_sweep: trials must be >= 1");
  if (values.empty()) throw std::invalid_argument("run_sweep: empty axis");

  SweepResult result;
  result.axis = axis;
  result.values = values;
  const std::size_t n_tasks = values.size() * static_cast<std::size_t>(trials);
  result.trials.resize(n_tasks);

  const auto run_task = [&](std::size_t task) {
    const Index ai = static_cast<Index>(task / static_cast<std::size_t>(trials));
    const int ti = static_cast<int>(task % static_cast<std::size_t>(trials));
    SynthSpec spec = base_spec;
    SolverConfig cfg = solver_config;
    detail::apply_axis(axis, values[static_cast<std::size_t>(ai)], spec, cfg);
    const std::uint64_t seed = mix_seed(base_spec.rng_seed, static_cast<std::uint64_t>(ai),
                                        static_cast<std::uint64_t>(ti));
    spec.rng_seed = seed;
    cfg.rng_seed = mix_seed(seed, 0x1417, 0);

    TrialRecord rec;
    rec.axis_index = ai;
    rec.trial_index = ti;
    rec.seed = seed;
    try {
      const SynthInstance inst = gen_instance(spec);
      const SolveReport rep = solve(inst.x, spec.k, Init{init, std::nullopt}, cfg);
      const MseResult mse = permutation_matched_mse(inst.a_true, rep.model.basis);
      rec.mse_linear = mse.mse_linear;
      rec.mse_db = mse.mse_db;
      rec.iterations = rep.iterations_used;
      rec.wall_s = rep.wall_time_s;
      rec.detail = rep.termination == TerminationReason::Tolerance ? "tolerance" : "max_iter";
    } catch (const std::exception& e) {
      rec.failed = true;
      rec.detail = e.what();
    }
    result.trials[task] = rec;
  };

  const int workers = std::max(1, jobs);
  if (workers == 1) {
    for (std::size_t t = 0; t < n_tasks; ++t) run_task(t);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int wkr = 0; wkr < workers; ++wkr) {
      pool.emplace_back([&] {
        while (true) {
          const std::size_t t = next.fetch_add(1);
          if (t >= n_tasks) return;
          run_task(t);
        }
      });
    }
    for (auto& th : pool) th.join();
  }

  for (std::size_t ai = 0; ai < values.size(); ++ai) {
    std::vector<double> ok_db;
    int failures = 0;
    double wall = 0.0;
    for (int ti = 0; ti < trials; ++ti) {
      const TrialRecord& rec = result.trials[ai * static_cast<std::size_t>(trials) +
                                             static_cast<std::size_t>(ti)];
      if (rec.failed) {
        ++failures;
      } else {
        ok_db.push_back(rec.mse_db);
      }
      wall += rec.wall_s;
    }
    double mean = std::numeric_limits<double>::quiet_NaN();
    if (!ok_db.empty()) {
      mean = 0.0;
      for (const double v : ok_db) mean += v;
      mean /= static_cast<double>(ok_db.size());
    }
    result.mean_mse_db.push_back(mean);
    result.median_mse_db.push_back(detail::median(ok_db));
    result.trial_counts.push_back(trials);
    result.failure_counts.push_back(failures);
    result.mean_wall_s.push_back(wall / static_cast<double>(trials));
  }
  return result;
}

}  // namespace rvolmin
