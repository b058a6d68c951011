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

#include <Eigen/Core>

#include <cstddef>
#include <stdexcept>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace latticegp {

// Row i of a Matrix is input i; columns are channels (or input dimensions).
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Shapes of two operands do not conform.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Iterative solver failures: divergence, indefinite curvature, breakdown.
class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or unusable input data.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require_shape(bool ok, const std::string& what) {
  if (!ok) throw ShapeError(what);
}

/// Sets the worker count used by parallel loops. 1 gives the deterministic
/// single-threaded mode.
inline void set_num_threads(int threads) {
#ifdef _OPENMP
  omp_set_num_threads(threads < 1 ? 1 : threads);
#else
  (void)threads;
#endif
}

inline double dot_all(const Matrix& a, const Matrix& b) {
  require_shape(a.rows() == b.rows() && a.cols() == b.cols(), "dot_all: shape mismatch");
  return (a.array() * b.array()).sum();
}

/// 1 - <z, zhat> / (|z| |zhat|).
inline double cosine_error(const Matrix& z, const Matrix& zhat) {
  const double nz = z.norm();
  const double nh = zhat.norm();
  if (nz == 0.0 && nh == 0.0) return 0.0;
  if (nz == 0.0 || nh == 0.0) return 1.0;
  return 1.0 - dot_all(z, zhat) / (nz * nh);
}

}  // namespace latticegp
