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

#include <cstdint>
#include <random>

#include "latticegp.hpp"

namespace latticegp::testing {

/// Seeded generator for hand-rolled property tests.
class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  double normal() { return normal_(rng_); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }

  Matrix matrix(Index rows, Index cols, double scale = 1.0) {
    Matrix m(rows, cols);
    for (Index i = 0; i < rows; ++i)
      for (Index j = 0; j < cols; ++j) m(i, j) = scale * normal();
    return m;
  }

  Vector vector(Index n, double scale = 1.0) {
    Vector v(n);
    for (Index i = 0; i < n; ++i) v(i) = scale * normal();
    return v;
  }

  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
  std::normal_distribution<double> normal_;
};

inline double max_rel_error(const Eigen::MatrixXd& expected, const Eigen::MatrixXd& actual) {
  const double scale = std::max(expected.cwiseAbs().maxCoeff(), 1e-300);
  return (expected - actual).cwiseAbs().maxCoeff() / scale;
}

inline double cosine_similarity(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return (a.array() * b.array()).sum() / (a.norm() * b.norm());
}

inline StationaryKernelSpec random_kernel(Gen& gen, KernelFamily family, Index d) {
  StationaryKernelSpec k = StationaryKernelSpec::isotropic(family, d, 1.0, gen.uniform(0.5, 2.0), 0.1);
  for (Index j = 0; j < d; ++j) k.lengthscales(j) = gen.uniform(0.5, 2.0);
  return k;
}

// Dense evaluation of the lattice gradient estimator's target:
// 1/2 alpha^T dK alpha - 1/2 tr(A^{-1} dK) with A = K~ + noise I and every
// lengthscale contraction built from the dense derivative-stencil operator.
inline Vector dense_lattice_gradient(const LatticeOperator& op, const Vector& y, double noise) {
  const Index n = op.n(), d = op.dim();
  const Stencil& dst = op.stencils().derivative;
  const DenseLatticeReconstruction rd = dense_lattice_reconstruction(op.lattice(), op.plan(), dst);
  const DenseLatticeReconstruction rv = dense_lattice_reconstruction(op.lattice(), op.plan(), op.stencils().value);
  const bool sym = op.is_symmetrized();
  const Eigen::MatrixXd kp = rd.operator_matrix(sym) * (op.kernel().outputscale * dst.gain);
  const Eigen::MatrixXd k = rv.operator_matrix(sym) * (op.kernel().outputscale * op.stencils().value.gain);
  Eigen::MatrixXd a = k;
  a.diagonal().array() += noise;
  const Eigen::MatrixXd ainv = a.inverse();
  const Vector alpha = ainv * y;
  const Matrix& z = op.normalized_inputs();
  Vector grad(d + 2);
  for (Index j = 0; j < d; ++j) {
    // pair(u, w) = sum_n -z_nj * 2 sum_m kp_nm (z_nj - z_mj)(w_n u_m + u_n w_m)
    double quad = 0.0, trace = 0.0;
    for (Index p = 0; p < n; ++p)
      for (Index q = 0; q < n; ++q) {
        const double c = -z(p, j) * 2.0 * kp(p, q) * (z(p, j) - z(q, j));
        quad += c * 2.0 * alpha(p) * alpha(q);
        trace += c * (ainv(p, q) + ainv(q, p));
      }
    grad(j) = 0.5 * quad - 0.5 * trace;
  }
  grad(d) = 0.5 * alpha.dot(k * alpha) - 0.5 * (ainv.transpose().cwiseProduct(k)).sum();
  grad(d + 1) = 0.5 * noise * alpha.squaredNorm() - 0.5 * noise * ainv.trace();
  return grad;
}

}  // namespace latticegp::testing
