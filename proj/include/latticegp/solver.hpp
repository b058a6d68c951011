/*
 * Copyright 2026 The latticegp Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "latticegp/common.hpp"
#include "latticegp/filter.hpp"
#include "latticegp/model.hpp"
#include "latticegp/oracle.hpp"

namespace latticegp {

/// Relative-residual conjugate gradients settings.
struct CGConfig {
  double tolerance = 0.01;
  int max_iterations = 500;
  // Convergence is not tested before this many iterations (an exactly zero
  // residual still stops the column).
  int min_iterations = 0;

  void validate() const {
    if (!(tolerance > 0.0)) throw std::invalid_argument("CGConfig: tolerance must be positive");
    if (max_iterations < 1) throw std::invalid_argument("CGConfig: max_iterations must be >= 1");
    if (min_iterations < 0) throw std::invalid_argument("CGConfig: min_iterations must be >= 0");
  }
};

/// CG found a direction with p^T A p <= 0.
class IndefiniteOperatorError : public SolverError {
 public:
  using SolverError::SolverError;
};

struct SolveReport {
  Matrix solution;
  std::vector<int> iterations;
  std::vector<double> residual;
  std::vector<bool> converged;
  // Per-column CG step sizes and direction updates; they define the Lanczos
  // tridiagonal of the solve.
  std::vector<std::vector<double>> alphas;
  std::vector<std::vector<double>> betas;

  bool all_converged() const { return std::all_of(converged.begin(), converged.end(), [](bool c) { return c; }); }
  int max_iterations_used() const { return iterations.empty() ? 0 : *std::max_element(iterations.begin(), iterations.end()); }
};

/// Solves A X = B column by column, batching every active column through one
/// `apply` call per iteration. `apply` maps an n x c matrix to A times it.
template <typename Apply>
SolveReport cg_solve(Apply&& apply, const Matrix& b, const CGConfig& cfg, const Matrix* x0 = nullptr) {
  cfg.validate();
  const Index n = b.rows();
  const Index c = b.cols();
  const auto cs = static_cast<std::size_t>(c);
  SolveReport report;
  report.iterations.assign(cs, 0);
  report.residual.assign(cs, 0.0);
  report.converged.assign(cs, false);
  report.alphas.assign(cs, {});
  report.betas.assign(cs, {});

  Matrix x = Matrix::Zero(n, c);
  Matrix r = b;
  if (x0) {
    require_shape(x0->rows() == n && x0->cols() == c, "cg_solve: initial guess shape mismatch");
    x = *x0;
    r -= apply(x);
  }
  std::vector<double> bnorm(cs), rz(cs);
  std::vector<bool> active(cs, false);
  for (Index j = 0; j < c; ++j) {
    const auto js = static_cast<std::size_t>(j);
    bnorm[js] = b.col(j).norm();
    if (bnorm[js] == 0.0) {
      x.col(j).setZero();
      report.converged[js] = true;
      continue;
    }
    rz[js] = r.col(j).squaredNorm();
    report.residual[js] = std::sqrt(rz[js]) / bnorm[js];
    if (!std::isfinite(report.residual[js])) throw SolverError("cg_solve: non-finite residual at iteration 0");
    if (rz[js] == 0.0 || (cfg.min_iterations == 0 && report.residual[js] <= cfg.tolerance))
      report.converged[js] = true;
    else
      active[js] = true;
  }

  Matrix p = r;
  for (Index j = 0; j < c; ++j)
    if (!active[static_cast<std::size_t>(j)]) p.col(j).setZero();

  for (int it = 1; it <= cfg.max_iterations; ++it) {
    if (std::none_of(active.begin(), active.end(), [](bool a) { return a; })) break;
    const Matrix q = apply(p);
    for (Index j = 0; j < c; ++j) {
      const auto js = static_cast<std::size_t>(j);
      if (!active[js]) continue;
      const double curvature = p.col(j).dot(q.col(j));
      if (!std::isfinite(curvature))
        throw SolverError("cg_solve: diverged (non-finite curvature) at iteration " + std::to_string(it));
      if (curvature <= 0.0)
        throw IndefiniteOperatorError("cg_solve: non-positive curvature at iteration " + std::to_string(it));
      const double step = rz[js] / curvature;
      x.col(j).noalias() += step * p.col(j);
      r.col(j).noalias() -= step * q.col(j);
      const double rz_new = r.col(j).squaredNorm();
      if (!std::isfinite(rz_new)) throw SolverError("cg_solve: diverged at iteration " + std::to_string(it));
      report.alphas[js].push_back(step);
      report.iterations[js] = it;
      report.residual[js] = std::sqrt(rz_new) / bnorm[js];
      if (rz_new == 0.0 || (it >= cfg.min_iterations && report.residual[js] <= cfg.tolerance)) {
        report.converged[js] = true;
        active[js] = false;
        p.col(j).setZero();
        continue;
      }
      const double beta = rz_new / rz[js];
      report.betas[js].push_back(beta);
      p.col(j) = r.col(j) + beta * p.col(j);
      rz[js] = rz_new;
    }
  }
  report.solution = std::move(x);
  return report;
}

/// Rademacher probe vectors, reproducible from the seed.
struct ProbeSet {
  Matrix vectors;
  std::uint64_t seed = 0;

  Index count() const { return vectors.cols(); }
};

inline ProbeSet make_probes(Index n, Index count, std::uint64_t seed) {
  ProbeSet probes;
  probes.seed = seed;
  probes.vectors.resize(n, count);
  std::mt19937_64 rng(seed);
  for (Index i = 0; i < n; ++i)
    for (Index t = 0; t < count; ++t) probes.vectors(i, t) = (rng() >> 63) ? 1.0 : -1.0;
  return probes;
}

/// Gauss quadrature estimate of z^T log(A) z from a Lanczos tridiagonal.
inline double lanczos_quadrature(const std::vector<double>& diag, const std::vector<double>& offdiag, double z_sq_norm) {
  const auto k = static_cast<Index>(diag.size());
  if (k == 0) return 0.0;
  const Eigen::VectorXd d = Eigen::Map<const Eigen::VectorXd>(diag.data(), k);
  const Eigen::VectorXd e = k > 1 ? Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(offdiag.data(), k - 1)) : Eigen::VectorXd();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig;
  eig.computeFromTridiagonal(d, e, Eigen::ComputeEigenvectors);
  const Eigen::VectorXd& lambda = eig.eigenvalues();
  if (lambda.minCoeff() <= 0.0) throw SolverError("lanczos: non-positive Ritz value; operator is not positive definite");
  double acc = 0.0;
  for (Index i = 0; i < k; ++i) {
    const double tau = eig.eigenvectors()(0, i);
    acc += tau * tau * std::log(lambda(i));
  }
  return z_sq_norm * acc;
}

/// Lanczos tridiagonal implied by the CG coefficients of one column, cut to
/// at most `max_steps` steps.
inline double cg_quadrature(const std::vector<double>& alphas, const std::vector<double>& betas, double z_sq_norm,
                            std::size_t max_steps = std::numeric_limits<std::size_t>::max()) {
  const std::size_t k = std::min(alphas.size(), max_steps);
  std::vector<double> diag(k), off(k > 0 ? k - 1 : 0);
  for (std::size_t i = 0; i < k; ++i) {
    diag[i] = 1.0 / alphas[i] + (i > 0 ? betas[i - 1] / alphas[i - 1] : 0.0);
    if (i + 1 < k) off[i] = std::sqrt(betas[i]) / alphas[i];
  }
  return lanczos_quadrature(diag, off, z_sq_norm);
}

struct LogdetEstimate {
  double value = 0.0;
  double std_error = 0.0;
  std::vector<double> per_probe;
};

inline LogdetEstimate summarize_probes(std::vector<double> per_probe) {
  LogdetEstimate est;
  const double count = static_cast<double>(per_probe.size());
  if (per_probe.empty()) return est;
  double mean = 0.0;
  for (double v : per_probe) mean += v;
  mean /= count;
  double var = 0.0;
  for (double v : per_probe) var += (v - mean) * (v - mean);
  est.value = mean;
  est.std_error = per_probe.size() > 1 ? std::sqrt(var / (count - 1.0) / count) : 0.0;
  est.per_probe = std::move(per_probe);
  return est;
}

/// Stochastic Lanczos quadrature for log det A. Probe columns run as one
/// batch. Full reorthogonalization is used while the Krylov basis fits in
/// `reorth_budget` doubles; past that the plain three-term recurrence runs.
template <typename Apply>
LogdetEstimate logdet_slq(Apply&& apply, Index n, const ProbeSet& probes, int lanczos_steps,
                          std::size_t reorth_budget = std::size_t{1} << 25) {
  require_shape(probes.vectors.rows() == n, "logdet_slq: probe length mismatch");
  if (lanczos_steps < 1) throw std::invalid_argument("logdet_slq: need at least one Lanczos step");
  const Index count = probes.count();
  const auto ts = static_cast<std::size_t>(count);
  const int steps = static_cast<int>(std::min<Index>(lanczos_steps, n));
  const bool reorth = static_cast<std::size_t>(n) * ts * static_cast<std::size_t>(steps) <= reorth_budget;

  std::vector<double> norms(ts);
  Matrix q(n, count);
  for (Index t = 0; t < count; ++t) {
    norms[static_cast<std::size_t>(t)] = probes.vectors.col(t).squaredNorm();
    q.col(t) = probes.vectors.col(t) / std::sqrt(norms[static_cast<std::size_t>(t)]);
  }
  Matrix q_prev = Matrix::Zero(n, count);
  std::vector<Matrix> basis;
  if (reorth) basis.push_back(q);
  std::vector<std::vector<double>> diag(ts), off(ts);
  std::vector<bool> active(ts, true);
  std::vector<double> beta_prev(ts, 0.0);

  for (int k = 0; k < steps; ++k) {
    Matrix w = apply(q);
    for (Index t = 0; t < count; ++t) {
      const auto tt = static_cast<std::size_t>(t);
      if (!active[tt]) continue;
      const double a = q.col(t).dot(w.col(t));
      if (!std::isfinite(a)) throw SolverError("logdet_slq: non-finite Lanczos coefficient");
      diag[tt].push_back(a);
      w.col(t) -= a * q.col(t) + beta_prev[tt] * q_prev.col(t);
      if (reorth) {
        for (int pass = 0; pass < 2; ++pass)
          for (const Matrix& v : basis) w.col(t) -= v.col(t).dot(w.col(t)) * v.col(t);
      }
      const double b = w.col(t).norm();
      if (k + 1 == steps || b <= 1e-10 * std::max(1.0, std::abs(a))) {
        active[tt] = false;
        w.col(t).setZero();
        continue;
      }
      off[tt].push_back(b);
      w.col(t) /= b;
      beta_prev[tt] = b;
    }
    if (std::none_of(active.begin(), active.end(), [](bool x) { return x; })) break;
    q_prev = q;
    q = w;
    for (Index t = 0; t < count; ++t)
      if (!active[static_cast<std::size_t>(t)]) q.col(t).setZero();
    if (reorth) basis.push_back(q);
  }

  std::vector<double> per_probe(ts);
  for (std::size_t t = 0; t < ts; ++t) per_probe[t] = lanczos_quadrature(diag[t], off[t], norms[t]);
  return summarize_probes(std::move(per_probe));
}

/// Applies (K + noise I) for any operator exposing apply().
template <typename Op>
auto shifted_apply(const Op& op, double noise) {
  return [&op, noise](const Matrix& v) -> Matrix {
    Matrix out = op.apply(v);
    out.noalias() += noise * v;
    return out;
  };
}

/// CG on (K + noise I). If the operator shows negative curvature the solve
/// restarts once with the symmetrized blur (`op` is switched in place); a
/// second failure is fatal.
template <typename Op>
SolveReport solve_shifted(Op& op, double noise, const Matrix& b, const CGConfig& cfg, const Matrix* x0 = nullptr) {
  try {
    return cg_solve(shifted_apply(op, noise), b, cfg, x0);
  } catch (const IndefiniteOperatorError& first) {
    if (op.is_symmetrized())
      throw SolverError(std::string(first.what()) + "; operator is symmetric, no fallback left");
    op = op.symmetrized();
    try {
      return cg_solve(shifted_apply(op, noise), b, cfg, x0);
    } catch (const IndefiniteOperatorError& second) {
      throw SolverError(std::string(second.what()) + " (persists after symmetrizing the blur)");
    }
  }
}

struct MllEstimate {
  double value = 0.0;
  double quadratic = 0.0;  // y^T (K + noise I)^{-1} y
  double logdet = 0.0;
  double logdet_std_error = 0.0;
  bool converged = true;
  int cg_iterations = 0;
};

/// -1/2 y^T A^{-1} y - 1/2 log det A - n/2 log 2 pi with A = K + noise I.
template <typename Op>
MllEstimate mll(Op& op, double noise, const Vector& y, const ProbeSet& probes, const CGConfig& cfg, int lanczos_steps) {
  require_shape(y.size() == op.n(), "mll: target length mismatch");
  MllEstimate out;
  const Matrix ycol = Eigen::Map<const Matrix>(y.data(), y.size(), 1);
  const SolveReport solve = solve_shifted(op, noise, ycol, cfg);
  out.converged = solve.all_converged();
  out.cg_iterations = solve.max_iterations_used();
  out.quadratic = y.dot(Eigen::Map<const Vector>(solve.solution.data(), y.size()));
  const LogdetEstimate ld = logdet_slq(shifted_apply(op, noise), op.n(), probes, lanczos_steps);
  out.logdet = ld.value;
  out.logdet_std_error = ld.std_error;
  const double n = static_cast<double>(y.size());
  out.value = -0.5 * out.quadratic - 0.5 * out.logdet - 0.5 * n * std::log(2.0 * M_PI);
  return out;
}

/// MLL of a model's hyperparameters on its own training data.
inline MllEstimate mll(const GPModel& model, const Vector& y, const ProbeSet& probes, const CGConfig& cfg,
                       int lanczos_steps = 100) {
  LatticeOperator op(model.x_train, model.kernel, model.lattice);
  return mll(op, model.kernel.noise_variance, y, probes, cfg, lanczos_steps);
}

inline Vector column(const Matrix& m, Index j) { return m.col(j); }

/// alpha = (K~ + noise I)^{-1} y over the training-only lattice.
inline SolveReport training_solve(GPModel& model, const CGConfig& cfg) {
  LatticeOperator op(model.x_train, model.kernel, model.lattice);
  const Matrix ycol = Eigen::Map<const Matrix>(model.y_train.data(), model.y_train.size(), 1);
  SolveReport report = solve_shifted(op, model.kernel.noise_variance, ycol, cfg);
  if (op.is_symmetrized()) model.lattice.symmetrize = true;
  model.alpha = column(report.solution, 0);
  model.fitted = true;
  return report;
}

/// Predictive mean at standardized test inputs, in standardized target
/// units. Test vertices join the training lattice, so alpha is re-solved on
/// the shared lattice (warm-started from the cached solve).
inline Vector predictive_mean_standardized(const GPModel& model, const Matrix& x_test, const CGConfig& cfg = {}) {
  model.require_fitted();
  require_shape(x_test.cols() == model.dim(), "predictive_mean: test dimension mismatch");
  if (x_test.rows() == 0) return Vector();
  LatticeOperator op(model.x_train, model.kernel, model.lattice, &x_test);
  const Matrix ycol = Eigen::Map<const Matrix>(model.y_train.data(), model.y_train.size(), 1);
  const Matrix warm = Eigen::Map<const Matrix>(model.alpha.data(), model.alpha.size(), 1);
  const SolveReport report = solve_shifted(op, model.kernel.noise_variance, ycol, cfg, &warm);
  return column(op.cross_mvm(report.solution), 0);
}

/// Predictive mean in original target units for raw test inputs.
inline Vector predictive_mean(const GPModel& model, const Matrix& x_test_raw, const CGConfig& cfg = {}) {
  return model.stats.restore_y(predictive_mean_standardized(model, model.stats.apply_x(x_test_raw), cfg));
}

struct PredictiveVariance {
  Vector variance;          // latent variance, standardized units, floored
  Index floored_count = 0;  // entries that were negative before flooring
};

inline constexpr double kVarianceFloor = 1e-12;

/// How the blocks of the predictive variance are formed.
///   kLatticeCross: outputscale k(0) - K~_*X (K~ + noise I)^{-1} K~_X*
///   kLattice:      K~_** - K~_*X (K~ + noise I)^{-1} K~_X*
///   kExactCross:   outputscale k(0) - K_*X (K~ + noise I)^{-1} K_X*
/// The lattice blocks come from one lattice over training and test rows.
enum class VarianceRoute { kLatticeCross, kLattice, kExactCross };

inline std::string to_string(VarianceRoute r) {
  switch (r) {
    case VarianceRoute::kLatticeCross: return "lattice-cross";
    case VarianceRoute::kLattice: return "lattice";
    case VarianceRoute::kExactCross: return "exact-cross";
  }
  return "?";
}

inline VarianceRoute parse_variance_route(const std::string& s) {
  if (s == "lattice-cross") return VarianceRoute::kLatticeCross;
  if (s == "lattice") return VarianceRoute::kLattice;
  if (s == "exact-cross") return VarianceRoute::kExactCross;
  throw std::invalid_argument("unknown variance route '" + s + "' (expected lattice-cross, lattice or exact-cross)");
}

/// Latent predictive variance in standardized units; test points run in
/// batches through one multi-column solve each.
inline PredictiveVariance predictive_variance_standardized(const GPModel& model, const Matrix& x_test,
                                                           const CGConfig& cfg = {},
                                                           VarianceRoute route = VarianceRoute::kLatticeCross,
                                                           Index batch = 256) {
  model.require_fitted();
  require_shape(x_test.cols() == model.dim(), "predictive_variance: test dimension mismatch");
  if (batch < 1) throw std::invalid_argument("predictive_variance: batch must be >= 1");
  const bool exact = route == VarianceRoute::kExactCross;
  LatticeOperator op(model.x_train, model.kernel, model.lattice, exact ? nullptr : &x_test);
  const double prior = model.kernel.outputscale * model.kernel.profile().value(0.0);
  PredictiveVariance out;
  out.variance.resize(x_test.rows());
  for (Index begin = 0; begin < x_test.rows(); begin += batch) {
    const Index count = std::min(batch, x_test.rows() - begin);
    Matrix cols, rows;
    Vector self = Vector::Constant(count, prior);
    if (exact) {
      cols = cross_kernel_matrix(model.x_train, x_test.middleRows(begin, count), model.kernel);
      rows = cols;
    } else {
      LatticeOperator::TestBlock block = op.test_block(begin, count);
      cols = std::move(block.train_cols);
      rows = std::move(block.test_rows);
      if (route == VarianceRoute::kLattice) self = block.diagonal;
    }
    const SolveReport report = solve_shifted(op, model.kernel.noise_variance, cols, cfg);
    for (Index t = 0; t < count; ++t) {
      const double v = self(t) - rows.col(t).dot(report.solution.col(t));
      if (v < 0.0) ++out.floored_count;
      out.variance(begin + t) = std::max(v, kVarianceFloor);
    }
  }
  return out;
}

/// Mean Gaussian negative log density of y under N(mean, var_total).
inline double gaussian_nll(const Vector& mean, const Vector& var_total, const Vector& y) {
  require_shape(mean.size() == y.size() && var_total.size() == y.size(), "gaussian_nll: length mismatch");
  if (y.size() == 0) throw std::invalid_argument("gaussian_nll: empty input");
  double acc = 0.0;
  for (Index i = 0; i < y.size(); ++i) {
    const double s2 = var_total(i);
    const double e = y(i) - mean(i);
    acc += 0.5 * std::log(2.0 * M_PI * s2) + 0.5 * e * e / s2;
  }
  return acc / static_cast<double>(y.size());
}

inline double rmse(const Vector& a, const Vector& b) {
  require_shape(a.size() == b.size(), "rmse: length mismatch");
  if (a.size() == 0) throw std::invalid_argument("rmse: empty input");
  return std::sqrt((a - b).squaredNorm() / static_cast<double>(a.size()));
}

/// Test NLL in standardized units (predictive variance plus noise).
inline double test_nll_standardized(const GPModel& model, const Matrix& x_test, const Vector& y_test,
                                    const CGConfig& cfg = {}, VarianceRoute route = VarianceRoute::kLatticeCross) {
  const Vector mean = predictive_mean_standardized(model, x_test, cfg);
  const PredictiveVariance var = predictive_variance_standardized(model, x_test, cfg, route);
  return gaussian_nll(mean, var.variance.array() + model.kernel.noise_variance, y_test);
}

inline double test_nll(const GPModel& model, const Matrix& x_test_raw, const Vector& y_test_raw, const CGConfig& cfg = {},
                       VarianceRoute route = VarianceRoute::kLatticeCross) {
  return test_nll_standardized(model, model.stats.apply_x(x_test_raw), model.stats.apply_y(y_test_raw), cfg, route);
}

}  // namespace latticegp
