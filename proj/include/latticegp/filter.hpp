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

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <tuple>
#include <utility>
#include <vector>

#include "latticegp/kernels.hpp"
#include "latticegp/lattice.hpp"
#include "latticegp/stencil.hpp"

namespace latticegp {

struct LatticeConfig {
  int order = 1;
  // Average ascending and descending blur orders so the operator is symmetric.
  bool symmetrize = false;
  // Use the [.5, 1, .5] stencil instead of the coverage-balanced one (RBF only).
  bool binomial = false;
};

/// Stencils depend only on (family, order, binomial); the spacing search is
/// memoized process-wide.
inline StencilPair cached_stencil(KernelFamily family, int order, bool binomial) {
  static std::mutex mutex;
  static std::map<std::tuple<int, int, bool>, StencilPair> cache;
  const auto key = std::make_tuple(static_cast<int>(family), order, binomial);
  {
    std::lock_guard<std::mutex> lock(mutex);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
  }
  StencilPair pair = binomial ? binomial_stencil(family) : build_stencil(make_profile(family), order);
  std::lock_guard<std::mutex> lock(mutex);
  return cache.emplace(key, std::move(pair)).first->second;
}

/// W_out (blur) W_in^T V, without any gain applied.
inline Matrix lattice_filter(const NeighborTable& table, const SplatPlan& in_plan, const SplatPlan& out_plan,
                             const Matrix& values, const Stencil& stencil, bool symmetrize) {
  const Matrix splatted = splat(in_plan, values, table.m);
  if (!symmetrize) return slice(out_plan, blur(table, splatted, stencil, BlurOrder::kAscending));
  Matrix blurred = blur(table, splatted, stencil, BlurOrder::kAscending);
  blurred += blur(table, splatted, stencil, BlurOrder::kDescending);
  blurred *= 0.5;
  return slice(out_plan, blurred);
}

/// The approximate kernel operator K~ = outputscale * W (prod_j C_j) W^T over
/// one shared lattice. Training rows are always present; test rows, when
/// given, register their vertices in the same lattice so cross-covariance
/// products reuse one blur.
///
/// Inputs are given in standardized units and divided by the ARD
/// lengthscales internally.
class LatticeOperator {
 public:
  LatticeOperator(const Matrix& x_train, const StationaryKernelSpec& kernel, const LatticeConfig& config = {},
                  const Matrix* x_test = nullptr)
      : kernel_(kernel), config_(config) {
    kernel_.validate();
    require_shape(x_train.cols() == kernel.dim(), "LatticeOperator: input dimension does not match lengthscales");
    if (x_test) require_shape(x_test->cols() == kernel.dim(), "LatticeOperator: test dimension mismatch");
    stencils_ = cached_stencil(kernel.family, config.order, config.binomial);
    const Index d = kernel.dim();
    basis_ = std::make_shared<EmbeddingBasis>(EmbeddingBasis::for_spacing(d, stencils_.value.spacing));
    const Eigen::RowVectorXd inv_ls = kernel.lengthscales.cwiseInverse().transpose();
    x_norm_ = x_train.array().rowwise() * inv_ls.array();
    const Index expected = (x_train.rows() + (x_test ? x_test->rows() : 0)) * (d + 1);
    lattice_ = std::make_shared<Lattice>(d, static_cast<std::size_t>(expected));
    plan_ = build_plan(*lattice_, *basis_, x_norm_);
    if (x_test) {
      const Matrix test_norm = x_test->array().rowwise() * inv_ls.array();
      test_plan_ = build_plan(*lattice_, *basis_, test_norm);
    }
    table_ = std::make_shared<NeighborTable>(build_neighbors(*lattice_, config.order));
  }

  Index n() const { return plan_.n; }
  Index dim() const { return kernel_.dim(); }
  Index lattice_size() const { return lattice_->size(); }
  bool has_test() const { return test_plan_.has_value(); }
  bool is_symmetrized() const { return config_.symmetrize; }

  const StationaryKernelSpec& kernel() const { return kernel_; }
  const LatticeConfig& config() const { return config_; }
  const Lattice& lattice() const { return *lattice_; }
  const NeighborTable& neighbors() const { return *table_; }
  const SplatPlan& plan() const { return plan_; }
  const SplatPlan& test_plan() const {
    if (!test_plan_) throw std::logic_error("LatticeOperator: no test rows");
    return *test_plan_;
  }
  const StencilPair& stencils() const { return stencils_; }
  const EmbeddingBasis& basis() const { return *basis_; }
  const Matrix& normalized_inputs() const { return x_norm_; }

  /// Same lattice with the blur symmetrized.
  LatticeOperator symmetrized() const {
    LatticeOperator copy(*this);
    copy.config_.symmetrize = true;
    return copy;
  }

  /// K~ V for V with one row per training input.
  Matrix mvm(const Matrix& values) const {
    require_shape(values.rows() == n(), "mvm: value rows do not match training inputs");
    return filter(plan_, plan_, values, stencils_.value) * (kernel_.outputscale * stencils_.value.gain);
  }

  Matrix apply(const Matrix& values) const { return mvm(values); }

  /// (K~ + noise I) v.
  Vector mvm_shifted(const Vector& v, double noise) const {
    if (!(noise > 0.0)) throw std::invalid_argument("mvm_shifted: noise must be positive");
    const Matrix col = Eigen::Map<const Matrix>(v.data(), v.size(), 1);
    Vector out = Eigen::Map<const Vector>(mvm(col).data(), v.size());
    out += noise * v;
    return out;
  }

  /// Approximates K(X_test, X_train) V: splat with the training plan, blur
  /// once, slice at the test rows.
  Matrix cross_mvm(const Matrix& values) const {
    require_shape(values.rows() == n(), "cross_mvm: value rows do not match training inputs");
    return filter(plan_, test_plan(), values, stencils_.value) * (kernel_.outputscale * stencils_.value.gain);
  }

  /// Lattice kernel blocks for test rows [begin, begin + count).
  struct TestBlock {
    Matrix train_cols;  // K~(X_train, x_t), one column per test row
    Matrix test_rows;   // K~(x_t, X_train) stored as columns
    Vector diagonal;    // K~(x_t, x_t)
  };

  TestBlock test_block(Index begin, Index count) const {
    const SplatPlan& tp = test_plan();
    require_shape(begin >= 0 && count >= 0 && begin + count <= tp.n, "test_block: row range out of bounds");
    Matrix unit = Matrix::Zero(table_->m, count);
    for (Index t = 0; t < count; ++t)
      for (Index k = 0; k <= tp.d; ++k) unit(tp.vertex_at(begin + t, k), t) += tp.weight_at(begin + t, k);
    const Stencil& st = stencils_.value;
    const double scale = kernel_.outputscale * st.gain;
    Matrix fwd = blur(*table_, unit, st, BlurOrder::kAscending);
    Matrix adj;
    if (config_.symmetrize) {
      fwd += blur(*table_, unit, st, BlurOrder::kDescending);
      fwd *= 0.5;
      adj = fwd;
    } else {
      adj = blur(*table_, unit, st, BlurOrder::kDescending);
    }
    TestBlock out;
    out.train_cols = slice(plan_, fwd) * scale;
    out.test_rows = slice(plan_, adj) * scale;
    out.diagonal.resize(count);
    for (Index t = 0; t < count; ++t) {
      double acc = 0.0;
      for (Index k = 0; k <= tp.d; ++k) acc += tp.weight_at(begin + t, k) * fwd(tp.vertex_at(begin + t, k), t);
      out.diagonal(t) = acc * scale;
    }
    return out;
  }

  /// Gradient of L with respect to the normalized training inputs, where
  /// u = K v and g = dL/du, summed over channels. One filtering pass with the
  /// k' stencil over the stacked channels [x*g, -g, x*v, -v] per input
  /// channel. The splat weights are held fixed.
  Matrix gradient_filter(const Matrix& v, const Matrix& g) const {
    std::vector<Matrix> parts = gradient_filter_channels(v, g);
    Matrix total = Matrix::Zero(n(), dim());
    for (const Matrix& p : parts) total += p;
    return total;
  }

  /// Per-channel terms of gradient_filter, still from a single filtering pass.
  std::vector<Matrix> gradient_filter_channels(const Matrix& v, const Matrix& g) const {
    require_shape(v.rows() == n() && g.rows() == n(), "gradient_filter: rows do not match training inputs");
    require_shape(v.cols() == g.cols(), "gradient_filter: channel mismatch between v and g");
    const Index d = dim();
    const Index c = v.cols();
    const Index block = 2 * d + 2;
    Matrix stacked(n(), c * block);
    for (Index ch = 0; ch < c; ++ch) {
      const Index base = ch * block;
      for (Index i = 0; i < n(); ++i) {
        for (Index j = 0; j < d; ++j) {
          stacked(i, base + j) = x_norm_(i, j) * g(i, ch);
          stacked(i, base + d + 1 + j) = x_norm_(i, j) * v(i, ch);
        }
        stacked(i, base + d) = -g(i, ch);
        stacked(i, base + 2 * d + 1) = -v(i, ch);
      }
    }
    const Stencil& dstencil = stencils_.derivative;
    const Matrix filtered = filter(plan_, plan_, stacked, dstencil) * (kernel_.outputscale * dstencil.gain);

    // dL/dx_n = 2 sum_j k'_nj (x_n - x_j) (g_n v_j + v_n g_j).
    std::vector<Matrix> grads(static_cast<std::size_t>(c), Matrix::Zero(n(), d));
    for (Index ch = 0; ch < c; ++ch) {
      Matrix& grad = grads[static_cast<std::size_t>(ch)];
      const Index base = ch * block;
      for (Index i = 0; i < n(); ++i) {
        const double vi = v(i, ch);
        const double gi = g(i, ch);
        const double f_neg_g = filtered(i, base + d);
        const double f_neg_v = filtered(i, base + 2 * d + 1);
        for (Index j = 0; j < d; ++j) {
          const double xg = filtered(i, base + j);
          const double xv = filtered(i, base + d + 1 + j);
          grad(i, j) = -2.0 * (vi * xg + vi * x_norm_(i, j) * f_neg_g + gi * xv + gi * x_norm_(i, j) * f_neg_v);
        }
      }
    }
    return grads;
  }

  Matrix input_gradient(const Matrix& v, const Matrix& g) const { return gradient_filter(v, g); }
  std::vector<Matrix> input_gradient_channels(const Matrix& v, const Matrix& g) const {
    return gradient_filter_channels(v, g);
  }

  std::size_t memory_bytes() const {
    return lattice_->memory_bytes() + plan_.memory_bytes() + (test_plan_ ? test_plan_->memory_bytes() : 0) +
           table_->memory_bytes() + static_cast<std::size_t>(x_norm_.size()) * sizeof(double);
  }

 private:
  Matrix filter(const SplatPlan& in, const SplatPlan& out, const Matrix& values, const Stencil& stencil) const {
    return lattice_filter(*table_, in, out, values, stencil, config_.symmetrize);
  }

  StationaryKernelSpec kernel_;
  LatticeConfig config_;
  StencilPair stencils_;
  std::shared_ptr<const EmbeddingBasis> basis_;
  std::shared_ptr<Lattice> lattice_;
  std::shared_ptr<const NeighborTable> table_;
  Matrix x_norm_;
  SplatPlan plan_;
  std::optional<SplatPlan> test_plan_;
};

}  // namespace latticegp
