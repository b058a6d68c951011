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

#include <cmath>
#include <limits>
#include <stdexcept>

#include "latticegp/common.hpp"
#include "latticegp/filter.hpp"
#include "latticegp/kernels.hpp"

namespace latticegp {

/// Per-column affine maps fitted on the training split.
struct Standardization {
  Vector x_mean;
  Vector x_std;
  double y_mean = 0.0;
  double y_std = 1.0;

  static Standardization identity(Index d) { return {Vector::Zero(d), Vector::Ones(d), 0.0, 1.0}; }

  Matrix apply_x(const Matrix& x) const {
    require_shape(x.cols() == x_mean.size(), "Standardization: input dimension mismatch");
    Matrix out = x;
    for (Index j = 0; j < x.cols(); ++j) out.col(j) = (x.col(j).array() - x_mean(j)) / x_std(j);
    return out;
  }
  Vector apply_y(const Vector& y) const { return (y.array() - y_mean) / y_std; }
  Vector restore_y(const Vector& y) const { return y.array() * y_std + y_mean; }
};

/// Hyperparameters, standardized training data and the cached training solve
/// alpha = (K~ + noise I)^{-1} y.
struct GPModel {
  StationaryKernelSpec kernel;
  LatticeConfig lattice;
  Matrix x_train;
  Vector y_train;
  Vector alpha;
  Standardization stats;
  double validation_rmse = std::numeric_limits<double>::quiet_NaN();
  bool fitted = false;

  Index dim() const { return x_train.cols(); }
  void require_fitted() const {
    if (!fitted || alpha.size() != x_train.rows()) throw std::logic_error("GP model is not fitted");
  }
};

}  // namespace latticegp
