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

#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include "latticegp/filter.hpp"
#include "latticegp/model.hpp"
#include "latticegp/oracle.hpp"
#include "latticegp/solver.hpp"

namespace latticegp {

struct TrainConfig {
  double learning_rate = 0.1;
  int max_epochs = 100;
  int probes = 16;
  std::uint64_t seed = 0;
  double noise_floor = 1e-4;
  int patience = 10;
  CGConfig cg_train{1.0, 500, 10};
  CGConfig cg_eval{0.01, 500};
  // Lanczos steps kept from each probe solve for the MLL estimate.
  int lanczos_steps = 100;
  // Starting point; defaults to lengthscales sqrt(d)/2, outputscale 1, noise 0.1.
  std::optional<StationaryKernelSpec> initial;

  void validate() const {
    if (!(learning_rate > 0.0)) throw std::invalid_argument("TrainConfig: learning rate must be positive");
    if (max_epochs < 0) throw std::invalid_argument("TrainConfig: max_epochs must be non-negative");
    if (probes < 1) throw std::invalid_argument("TrainConfig: need at least one probe");
    if (!(noise_floor > 0.0)) throw std::invalid_argument("TrainConfig: noise floor must be positive");
    if (lanczos_steps < 1) throw std::invalid_argument("TrainConfig: lanczos_steps must be >= 1");
    cg_train.validate();
    cg_eval.validate();
  }
};

struct EpochRecord {
  int epoch = 0;
  double mll = 0.0;
  double validation_rmse = 0.0;
  Vector lengthscales;
  double outputscale = 0.0;
  double noise = 0.0;
  int cg_iterations = 0;
  bool cg_converged = true;
  double seconds = 0.0;
};

struct TrainTrace {
  std::vector<EpochRecord> epochs;
  int best_epoch = -1;

  double best_validation_rmse() const {
    return best_epoch < 0 ? std::numeric_limits<double>::quiet_NaN()
                          : epochs[static_cast<std::size_t>(best_epoch)].validation_rmse;
  }
};

class TrainingError : public std::runtime_error {
 public:
  TrainingError(const std::string& what, TrainTrace trace) : std::runtime_error(what), trace_(std::move(trace)) {}
  const TrainTrace& trace() const { return trace_; }

 private:
  TrainTrace trace_;
};

// ---------------------------------------------------------------------------
// Hyperparameter vector: (log lengthscale_1..d, log outputscale, log noise)
// ---------------------------------------------------------------------------

inline Vector pack_log_params(const StationaryKernelSpec& k) {
  const Index d = k.dim();
  Vector p(d + 2);
  p.head(d) = k.lengthscales.array().log();
  p(d) = std::log(k.outputscale);
  p(d + 1) = std::log(k.noise_variance);
  return p;
}

inline StationaryKernelSpec unpack_log_params(const Vector& p, KernelFamily family) {
  const Index d = p.size() - 2;
  return {family, p.head(d).array().exp(), std::exp(p(d)), std::exp(p(d + 1))};
}

inline StationaryKernelSpec default_initial_kernel(KernelFamily family, Index d) {
  return StationaryKernelSpec::isotropic(family, d, std::sqrt(static_cast<double>(d)) / 2.0, 1.0, 0.1);
}

/// Stochastic MLL gradient with respect to the log hyperparameters.
struct MllGradient {
  Vector gradient;
  Vector std_error;  // probe standard error of each component
  double mll = std::numeric_limits<double>::quiet_NaN();
  bool converged = true;
  int cg_iterations = 0;
  Vector alpha;
};

/// dMLL/dtheta = 1/2 alpha^T dK alpha - 1/2 tr((K+noise I)^{-1} dK), the trace
/// by Hutchinson probes w_t^T dK z_t with w_t = (K+noise I)^{-1} z_t. Every
/// lengthscale contraction goes through the operator's input gradient and
/// the chain rule d/dlog l_j = -sum_n x_nj d/dx_nj. The MLL value uses the
/// Lanczos tridiagonals implied by the probe solves.
template <typename Op>
MllGradient mll_gradients(Op& op, double noise, const Vector& y, const ProbeSet& probes, const CGConfig& cfg,
                          int lanczos_steps = 100) {
  const Index n = op.n();
  const Index d = op.dim();
  const Index count = probes.count();
  require_shape(y.size() == n && probes.vectors.rows() == n, "mll_gradients: length mismatch");

  Matrix rhs(n, count + 1);
  rhs.col(0) = y;
  rhs.rightCols(count) = probes.vectors;
  const SolveReport solve = solve_shifted(op, noise, rhs, cfg);

  MllGradient out;
  out.converged = solve.all_converged();
  out.cg_iterations = solve.max_iterations_used();
  out.alpha = solve.solution.col(0);
  const Matrix& sol = solve.solution;

  // Channel 0 pairs (alpha, alpha); channel t pairs (z_t, w_t).
  Matrix v(n, count + 1), g(n, count + 1);
  v.col(0) = out.alpha;
  g.col(0) = out.alpha;
  v.rightCols(count) = probes.vectors;
  g.rightCols(count) = sol.rightCols(count);

  const Matrix kv = op.apply(v);
  const std::vector<Matrix> grads = op.input_gradient_channels(v, g);
  const Matrix& x = op.normalized_inputs();

  const auto contraction = [&](Index ch) {
    Vector per(d + 2);
    const Matrix& gr = grads[static_cast<std::size_t>(ch)];
    for (Index j = 0; j < d; ++j) per(j) = -(x.col(j).array() * gr.col(j).array()).sum();
    per(d) = g.col(ch).dot(kv.col(ch));
    per(d + 1) = noise * g.col(ch).dot(v.col(ch));
    return per;
  };

  const Vector quad = contraction(0);
  Matrix trace_terms(count, d + 2);
  for (Index t = 0; t < count; ++t) trace_terms.row(t) = contraction(t + 1).transpose();
  const Vector trace_mean = trace_terms.colwise().mean().transpose();
  out.gradient = 0.5 * quad - 0.5 * trace_mean;
  out.std_error = Vector::Zero(d + 2);
  if (count > 1) {
    for (Index c = 0; c < d + 2; ++c) {
      const double var = (trace_terms.col(c).array() - trace_mean(c)).square().sum() / static_cast<double>(count - 1);
      out.std_error(c) = 0.5 * std::sqrt(var / static_cast<double>(count));
    }
  }

  try {
    std::vector<double> per_probe;
    for (Index t = 0; t < count; ++t) {
      const auto col = static_cast<std::size_t>(t + 1);
      per_probe.push_back(cg_quadrature(solve.alphas[col], solve.betas[col], probes.vectors.col(t).squaredNorm(),
                                        static_cast<std::size_t>(lanczos_steps)));
    }
    const double logdet = summarize_probes(per_probe).value;
    out.mll = -0.5 * y.dot(out.alpha) - 0.5 * logdet - 0.5 * static_cast<double>(n) * std::log(2.0 * M_PI);
  } catch (const SolverError&) {
    out.mll = std::numeric_limits<double>::quiet_NaN();
  }
  return out;
}

/// First-order adaptive moment update (ascent on the objective).
class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  Vector ascent_step(const Vector& grad) {
    if (m_.size() != grad.size()) {
      m_ = Vector::Zero(grad.size());
      v_ = Vector::Zero(grad.size());
      t_ = 0;
    }
    ++t_;
    m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
    v_ = beta2_ * v_ + (1.0 - beta2_) * grad.cwiseAbs2();
    const double c1 = 1.0 - std::pow(beta1_, t_);
    const double c2 = 1.0 - std::pow(beta2_, t_);
    return lr_ * (m_ / c1).array() / ((v_ / c2).array().sqrt() + eps_);
  }

 private:
  double lr_, beta1_, beta2_, eps_;
  Vector m_, v_;
  int t_ = 0;
};

// ---------------------------------------------------------------------------
// Engines: how to build the kernel operator and predict for validation
// ---------------------------------------------------------------------------

struct LatticeEngine {
  LatticeConfig config;

  LatticeOperator build(const Matrix& x, const StationaryKernelSpec& kernel) const { return {x, kernel, config}; }

  Vector predict_mean(const Matrix& x, const Vector& y, const StationaryKernelSpec& kernel, const Matrix& x_test,
                      const CGConfig& cfg) const {
    GPModel model;
    model.kernel = kernel;
    model.lattice = config;
    model.x_train = x;
    model.y_train = y;
    model.alpha = Vector::Zero(y.size());
    model.stats = Standardization::identity(x.cols());
    model.fitted = true;
    return predictive_mean_standardized(model, x_test, cfg);
  }
};

struct ExactEngine {
  ExactKernelOperator build(const Matrix& x, const StationaryKernelSpec& kernel) const { return {x, kernel}; }

  Vector predict_mean(const Matrix& x, const Vector& y, const StationaryKernelSpec& kernel, const Matrix& x_test,
                      const CGConfig& cfg) const {
    ExactKernelOperator op(x, kernel);
    const Matrix ycol = Eigen::Map<const Matrix>(y.data(), y.size(), 1);
    const SolveReport solve = solve_shifted(op, kernel.noise_variance, ycol, cfg);
    return cross_kernel_matrix(x_test, x, kernel) * solve.solution.col(0);
  }
};

struct DataSplit {
  Matrix x;
  Vector y;
};

struct FitResult {
  GPModel model;
  TrainTrace trace;
};

/// Maximizes the MLL with Adam on log hyperparameters. Every epoch rebuilds
/// the operator (lengthscales move the embedding), records the MLL estimate
/// and validation RMSE of the current hyperparameters, then steps. The
/// returned model carries the snapshot with the lowest validation RMSE.
template <typename Engine = LatticeEngine>
FitResult fit(const DataSplit& train, const DataSplit& validation, KernelFamily family, const TrainConfig& cfg,
              Engine engine = {}) {
  cfg.validate();
  require_shape(train.x.rows() == train.y.size() && validation.x.rows() == validation.y.size(),
                "fit: inputs and targets disagree in length");
  require_shape(validation.x.cols() == train.x.cols(), "fit: validation dimension mismatch");
  const Index d = train.x.cols();
  StationaryKernelSpec kernel = cfg.initial ? *cfg.initial : default_initial_kernel(family, d);
  kernel.family = family;
  kernel.noise_variance = std::max(kernel.noise_variance, cfg.noise_floor);
  kernel.validate(cfg.noise_floor);

  Vector params = pack_log_params(kernel);
  const double log_floor = std::log(cfg.noise_floor);
  Adam adam(cfg.learning_rate);
  TrainTrace trace;
  StationaryKernelSpec best = kernel;
  double best_rmse = std::numeric_limits<double>::infinity();
  int failures = 0;

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    const StationaryKernelSpec current = unpack_log_params(params, family);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lengthscales = current.lengthscales;
    rec.outputscale = current.outputscale;
    rec.noise = current.noise_variance;
    const ProbeSet probes = make_probes(train.x.rows(), cfg.probes, cfg.seed + static_cast<std::uint64_t>(epoch) * 7919ULL);

    std::optional<MllGradient> grad;
    try {
      auto op = engine.build(train.x, current);
      grad = mll_gradients(op, current.noise_variance, train.y, probes, cfg.cg_train, cfg.lanczos_steps);
      if constexpr (std::is_same_v<Engine, LatticeEngine>) {
        if (op.is_symmetrized()) engine.config.symmetrize = true;
      }
      rec.mll = grad->mll;
      rec.cg_iterations = grad->cg_iterations;
      rec.cg_converged = grad->converged;
      const Vector pred = engine.predict_mean(train.x, train.y, current, validation.x, cfg.cg_eval);
      rec.validation_rmse = rmse(pred, validation.y);
    } catch (const SolverError&) {
      ++failures;
      rec.mll = std::numeric_limits<double>::quiet_NaN();
      rec.validation_rmse = std::numeric_limits<double>::infinity();
      rec.cg_converged = false;
      grad.reset();
    }
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    trace.epochs.push_back(rec);

    if (rec.validation_rmse < best_rmse) {
      best_rmse = rec.validation_rmse;
      best = current;
      trace.best_epoch = epoch;
    }
    if (trace.best_epoch >= 0 && epoch - trace.best_epoch >= cfg.patience) break;
    if (!grad) continue;
    params += adam.ascent_step(grad->gradient);
    params(d + 1) = std::max(params(d + 1), log_floor);
  }
  if (cfg.max_epochs > 0 && failures == static_cast<int>(trace.epochs.size()))
    throw TrainingError("fit: conjugate gradients failed in every epoch", trace);

  FitResult result;
  result.trace = std::move(trace);
  GPModel& model = result.model;
  model.kernel = best;
  model.x_train = train.x;
  model.y_train = train.y;
  model.stats = Standardization::identity(d);
  model.validation_rmse = result.trace.best_validation_rmse();
  if constexpr (std::is_same_v<Engine, LatticeEngine>) {
    model.lattice = engine.config;
    training_solve(model, cfg.cg_eval);
  } else {
    ExactKernelOperator op(train.x, best);
    const Matrix ycol = Eigen::Map<const Matrix>(train.y.data(), train.y.size(), 1);
    model.alpha = solve_shifted(op, best.noise_variance, ycol, cfg.cg_eval).solution.col(0);
    model.fitted = true;
  }
  return result;
}

}  // namespace latticegp
