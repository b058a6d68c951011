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

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "latticegp/filter.hpp"
#include "latticegp/kernels.hpp"
#include "latticegp/lattice.hpp"

namespace latticegp {

// Dense brute-force references. Nothing here touches the lattice filtering
// path except dense_lattice_reconstruction, which rebuilds it from scratch
// as explicit matrices.

inline Matrix normalize_inputs(const Matrix& x, const Vector& lengthscales) {
  require_shape(x.cols() == lengthscales.size(), "normalize_inputs: dimension mismatch");
  const Eigen::RowVectorXd inv = lengthscales.cwiseInverse().transpose();
  return x.array().rowwise() * inv.array();
}

/// Exact K V, streamed in row blocks so no n x n storage is needed.
inline Matrix exact_mvm(const Matrix& x, const Matrix& values, const StationaryKernelSpec& kernel,
                        Index block_rows = 256) {
  require_shape(values.rows() == x.rows(), "exact_mvm: value rows do not match inputs");
  const Matrix z = normalize_inputs(x, kernel.lengthscales);
  const KernelProfile profile = kernel.profile();
  const Index n = x.rows();
  Matrix out(n, values.cols());
  const Index blocks = (n + block_rows - 1) / block_rows;
#pragma omp parallel for schedule(dynamic)
  for (Index b = 0; b < blocks; ++b) {
    const Index begin = b * block_rows;
    const Index end = std::min(n, begin + block_rows);
    Eigen::VectorXd krow(n);
    for (Index i = begin; i < end; ++i) {
      for (Index j = 0; j < n; ++j) krow(j) = profile.value((z.row(i) - z.row(j)).squaredNorm());
      out.row(i).noalias() = kernel.outputscale * (krow.transpose() * values);
    }
  }
  return out;
}

/// K(A, B) with outputscale applied.
inline Eigen::MatrixXd cross_kernel_matrix(const Matrix& a, const Matrix& b, const StationaryKernelSpec& kernel) {
  const Matrix za = normalize_inputs(a, kernel.lengthscales);
  const Matrix zb = normalize_inputs(b, kernel.lengthscales);
  const KernelProfile profile = kernel.profile();
  Eigen::MatrixXd k(a.rows(), b.rows());
#pragma omp parallel for schedule(static)
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < b.rows(); ++j) k(i, j) = kernel.outputscale * profile.value((za.row(i) - zb.row(j)).squaredNorm());
  return k;
}

/// Dense K(X, X), plus noise on the diagonal when `shifted`.
inline Eigen::MatrixXd dense_kernel_matrix(const Matrix& x, const StationaryKernelSpec& kernel, bool shifted = false) {
  Eigen::MatrixXd k = cross_kernel_matrix(x, x, kernel);
  k = 0.5 * (k + k.transpose()).eval();
  if (shifted) k.diagonal().array() += kernel.noise_variance;
  return k;
}

/// Cholesky factor of a symmetric matrix, retrying with jitter 1e-8 .. 1e-4.
struct CholeskyResult {
  Eigen::LLT<Eigen::MatrixXd> llt;
  double jitter = 0.0;
};

inline CholeskyResult cholesky_with_jitter(const Eigen::MatrixXd& a) {
  CholeskyResult result;
  result.llt.compute(a);
  if (result.llt.info() == Eigen::Success) return result;
  const double scale = std::max(1.0, a.diagonal().cwiseAbs().mean());
  for (double jitter = 1e-8; jitter <= 1e-4 * 1.0001; jitter *= 10.0) {
    Eigen::MatrixXd shifted = a;
    shifted.diagonal().array() += jitter * scale;
    result.llt.compute(shifted);
    if (result.llt.info() == Eigen::Success) {
      result.jitter = jitter * scale;
      return result;
    }
  }
  throw SolverError("cholesky: matrix is not positive definite even with jitter 1e-4");
}

inline double logdet_from_cholesky(const Eigen::LLT<Eigen::MatrixXd>& llt) {
  const Eigen::MatrixXd& l = llt.matrixLLT();
  return 2.0 * l.diagonal().array().log().sum();
}

struct ExactGpResult {
  Vector mean;
  Vector variance;  // latent f variance, without observation noise
  double mll = 0.0;
  double jitter = 0.0;
};

/// Exact GP posterior at `x_test` and marginal log likelihood of `y`.
inline ExactGpResult exact_gp(const Matrix& x, const Vector& y, const Matrix& x_test, const StationaryKernelSpec& kernel) {
  require_shape(y.size() == x.rows(), "exact_gp: target length does not match inputs");
  const Eigen::MatrixXd k = dense_kernel_matrix(x, kernel, true);
  const CholeskyResult chol = cholesky_with_jitter(k);
  ExactGpResult out;
  out.jitter = chol.jitter;
  const Vector alpha = chol.llt.solve(y);
  const double n = static_cast<double>(x.rows());
  out.mll = -0.5 * y.dot(alpha) - 0.5 * logdet_from_cholesky(chol.llt) - 0.5 * n * std::log(2.0 * M_PI);
  if (x_test.rows() > 0) {
    const Eigen::MatrixXd ks = cross_kernel_matrix(x_test, x, kernel);
    out.mean = ks * alpha;
    const Eigen::MatrixXd v = chol.llt.matrixL().solve(ks.transpose());
    out.variance = (kernel.outputscale - v.colwise().squaredNorm().array()).matrix().transpose();
  }
  return out;
}

/// Dense evaluation of dL/dx_n = 2 sum_{i,j} g_i k'(d_ij^2) (x_i - x_j)(delta_in - delta_jn) v_j
/// for u = K v, with x already normalized by the lengthscales.
inline Matrix exact_gradient(const Matrix& x_normalized, const Matrix& v, const Matrix& g,
                             const StationaryKernelSpec& kernel) {
  require_shape(v.rows() == x_normalized.rows() && g.rows() == x_normalized.rows(), "exact_gradient: row mismatch");
  require_shape(v.cols() == g.cols(), "exact_gradient: channel mismatch");
  const KernelProfile profile = kernel.profile();
  const Index n = x_normalized.rows();
  Matrix grad = Matrix::Zero(n, x_normalized.cols());
#pragma omp parallel for schedule(static)
  for (Index a = 0; a < n; ++a) {
    for (Index b = 0; b < n; ++b) {
      if (a == b) continue;
      const Eigen::RowVectorXd diff = x_normalized.row(a) - x_normalized.row(b);
      const double kp = kernel.outputscale * profile.derivative(diff.squaredNorm());
      const double pair = g.row(a).dot(v.row(b)) + v.row(a).dot(g.row(b));
      grad.row(a) += 2.0 * kp * pair * diff;
    }
  }
  return grad;
}

/// Exact kernel operator with the same surface as LatticeOperator, for
/// driving the iterative solver and trainer on the true kernel.
class ExactKernelOperator {
 public:
  ExactKernelOperator(const Matrix& x, const StationaryKernelSpec& kernel) : x_(x), kernel_(kernel) {
    kernel_.validate();
    require_shape(x.cols() == kernel.dim(), "ExactKernelOperator: dimension mismatch");
    x_norm_ = normalize_inputs(x, kernel.lengthscales);
  }

  Index n() const { return x_.rows(); }
  Index dim() const { return x_.cols(); }
  const StationaryKernelSpec& kernel() const { return kernel_; }
  const Matrix& normalized_inputs() const { return x_norm_; }
  bool is_symmetrized() const { return true; }
  ExactKernelOperator symmetrized() const { return *this; }

  Matrix apply(const Matrix& values) const { return exact_mvm(x_, values, kernel_); }
  Matrix input_gradient(const Matrix& v, const Matrix& g) const { return exact_gradient(x_norm_, v, g, kernel_); }
  std::vector<Matrix> input_gradient_channels(const Matrix& v, const Matrix& g) const {
    std::vector<Matrix> out;
    for (Index c = 0; c < v.cols(); ++c) out.push_back(exact_gradient(x_norm_, v.col(c), g.col(c), kernel_));
    return out;
  }

 private:
  Matrix x_;
  StationaryKernelSpec kernel_;
  Matrix x_norm_;
};

/// Explicit W (n x m) and per-direction convolution matrices C_j (m x m)
/// rebuilt from a plan, the lattice keys and a stencil.
struct DenseLatticeReconstruction {
  Eigen::MatrixXd w;
  std::vector<Eigen::MatrixXd> directions;

  /// prod_j C_j in ascending application order (C_d ... C_1 C_0).
  Eigen::MatrixXd blur_ascending() const {
    Eigen::MatrixXd p = Eigen::MatrixXd::Identity(w.cols(), w.cols());
    for (const auto& c : directions) p = (c * p).eval();
    return p;
  }

  Eigen::MatrixXd blur_descending() const {
    Eigen::MatrixXd p = Eigen::MatrixXd::Identity(w.cols(), w.cols());
    for (auto it = directions.rbegin(); it != directions.rend(); ++it) p = (*it * p).eval();
    return p;
  }

  /// W_out B W_in^T with B the (optionally symmetrized) blur product.
  Eigen::MatrixXd operator_matrix(const Eigen::MatrixXd& w_out, bool symmetrize) const {
    const Eigen::MatrixXd b = symmetrize ? Eigen::MatrixXd(0.5 * (blur_ascending() + blur_descending())) : blur_ascending();
    return w_out * b * w.transpose();
  }
  Eigen::MatrixXd operator_matrix(bool symmetrize) const { return operator_matrix(w, symmetrize); }
};

inline Eigen::MatrixXd dense_interpolation_matrix(const SplatPlan& plan, Index m) {
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(plan.n, m);
  for (Index i = 0; i < plan.n; ++i)
    for (Index k = 0; k <= plan.d; ++k) w(i, plan.vertex_at(i, k)) += plan.weight_at(i, k);
  return w;
}

inline DenseLatticeReconstruction dense_lattice_reconstruction(const Lattice& lattice, const SplatPlan& plan,
                                                               const Stencil& stencil) {
  const Index m = lattice.size();
  const Index d = lattice.dim();
  DenseLatticeReconstruction out;
  out.w = dense_interpolation_matrix(plan, m);
  for (Index j = 0; j <= d; ++j) {
    Eigen::MatrixXd c = Eigen::MatrixXd::Zero(m, m);
    for (Index u = 0; u < m; ++u) {
      const LatticeKey key = lattice.key_vector(static_cast<int>(u));
      for (int i = -stencil.order; i <= stencil.order; ++i) {
        const int other = lattice.find(neighbor(key, static_cast<int>(j), i));
        if (other >= 0) c(u, other) += stencil.coefficient(i);
      }
    }
    out.directions.push_back(std::move(c));
  }
  return out;
}

/// Analytic gradient of the exact MLL with respect to
/// (log lengthscales..., log outputscale, log noise).
inline Vector exact_mll_gradient(const Matrix& x, const Vector& y, const StationaryKernelSpec& kernel) {
  const Index n = x.rows();
  const Index d = x.cols();
  const Eigen::MatrixXd khat = dense_kernel_matrix(x, kernel, true);
  const CholeskyResult chol = cholesky_with_jitter(khat);
  const Vector alpha = chol.llt.solve(y);
  const Eigen::MatrixXd kinv = chol.llt.solve(Eigen::MatrixXd::Identity(n, n));
  const Eigen::MatrixXd inner = alpha * alpha.transpose() - kinv;  // dMLL = 0.5 tr(inner dK)
  const Matrix z = normalize_inputs(x, kernel.lengthscales);
  const KernelProfile profile = kernel.profile();

  Vector grad = Vector::Zero(d + 2);
  Eigen::MatrixXd k0 = Eigen::MatrixXd::Zero(n, n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      const Eigen::RowVectorXd diff = z.row(i) - z.row(j);
      const double r2 = diff.squaredNorm();
      k0(i, j) = kernel.outputscale * profile.value(r2);
      const double kp = kernel.outputscale * profile.derivative(r2);
      for (Index l = 0; l < d; ++l) grad(l) += 0.5 * inner(i, j) * kp * (-2.0 * diff(l) * diff(l));
    }
  }
  grad(d) = 0.5 * (inner.cwiseProduct(k0)).sum();
  grad(d + 1) = 0.5 * kernel.noise_variance * inner.trace();
  return grad;
}

}  // namespace latticegp
