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

#include <cmath>

#include <gtest/gtest.h>

#include "support.hpp"

namespace latticegp {
namespace {

const KernelProfile& rbf() {
  static const KernelProfile p = make_profile(KernelFamily::kRbf);
  return p;
}

TEST(SpatialCoverage, RbfMatchesErf) {
  for (double s : {0.3, 0.9, 1.4472, 2.0}) {
    for (int r : {0, 1, 2}) {
      const double w = s * (2 * r + 1) / 2.0;
      EXPECT_NEAR(spatial_coverage(rbf(), s, r), std::erf(w / std::sqrt(2.0)), 1e-8);
    }
  }
}

TEST(SpatialCoverage, LimitsAndMonotone) {
  EXPECT_NEAR(spatial_coverage(rbf(), 30.0, 1), 1.0, 1e-9);
  double prev = 0.0;
  for (double s = 0.1; s < 5.0; s += 0.1) {
    const double c = spatial_coverage(make_profile(KernelFamily::kMatern32), s, 1);
    EXPECT_GT(c, prev);
    prev = c;
  }
  EXPECT_THROW(spatial_coverage(rbf(), 0.0, 1), std::invalid_argument);
  EXPECT_THROW(spatial_coverage(rbf(), 1.0, -1), std::invalid_argument);
}

TEST(FrequencyCoverage, RbfMatchesErf) {
  for (double s : {0.8, 1.12, 1.4472, 2.5}) {
    EXPECT_NEAR(frequency_coverage(rbf(), s), std::erf(M_PI / (s * std::sqrt(2.0))), 1e-4) << s;
  }
}

TEST(FrequencyCoverage, LimitsAndDecreasing) {
  EXPECT_NEAR(frequency_coverage(rbf(), 0.05), 1.0, 1e-6);
  for (KernelFamily f : {KernelFamily::kRbf, KernelFamily::kMatern32}) {
    double prev = frequency_coverage(make_profile(f), 0.2);
    for (double s = 0.4; s < 10.0; s *= 2.0) {
      const double c = frequency_coverage(make_profile(f), s);
      EXPECT_LT(c, prev) << to_string(f) << " s=" << s;
      prev = c;
    }
  }
  EXPECT_THROW(frequency_coverage(rbf(), -1.0), std::invalid_argument);
}

TEST(FindSpacing, RbfClosedForm) {
  for (int r : {1, 2, 3}) {
    const double m = 2 * r + 1;
    EXPECT_NEAR(find_spacing(rbf(), r), std::sqrt(2.0 * M_PI / m), 1e-3) << "m=" << m;
  }
}

TEST(FindSpacing, BalancesCoverageAndShrinksWithOrder) {
  for (KernelFamily f : {KernelFamily::kRbf, KernelFamily::kMatern32, KernelFamily::kMatern52}) {
    const KernelProfile p = make_profile(f);
    double prev = std::numeric_limits<double>::infinity();
    for (int r : {0, 1, 2}) {
      const double s = find_spacing(p, r, 1e-10);
      EXPECT_LE(std::abs(spatial_coverage(p, s, r) - frequency_coverage(p, s)), 1e-8);
      EXPECT_LT(s, prev);
      prev = s;
    }
  }
  EXPECT_THROW(find_spacing(rbf(), -1), std::invalid_argument);
  EXPECT_THROW(find_spacing(rbf(), 1, 0.0), std::invalid_argument);
}

TEST(BuildStencil, OrderZeroIsUnit) {
  const StencilPair p = build_stencil(rbf(), 0);
  ASSERT_EQ(p.value.coefficients.size(), 1u);
  EXPECT_EQ(p.value.coefficients[0], 1.0);
  EXPECT_EQ(p.derivative.coefficients[0], 1.0);
}

TEST(BuildStencil, RbfOrderOneCoefficient) {
  const StencilPair p = build_stencil(rbf(), 1);
  EXPECT_NEAR(p.value.coefficient(1), std::exp(-M_PI / 3.0), 1e-3);
  EXPECT_NEAR(p.value.coefficient(-1), std::exp(-M_PI / 3.0), 1e-3);
}

TEST(BuildStencil, CoefficientsFollowProfile) {
  for (KernelFamily f : {KernelFamily::kRbf, KernelFamily::kMatern32, KernelFamily::kMatern52}) {
    const KernelProfile p = make_profile(f);
    for (int r : {1, 2, 3}) {
      const StencilPair sp = build_stencil(p, r);
      const Stencil& st = sp.value;
      EXPECT_EQ(st.coefficient(0), 1.0);
      for (int i = 1; i <= r; ++i) {
        const double t = i * st.spacing;
        EXPECT_NEAR(st.coefficient(i), p.value(t * t), 1e-12);
        EXPECT_EQ(st.coefficient(i), st.coefficient(-i));
        EXPECT_LT(st.coefficient(i), st.coefficient(i - 1));
        EXPECT_GE(st.coefficient(i), 0.0);
        EXPECT_NEAR(sp.derivative.coefficient(i), p.derivative(t * t) / p.derivative(0.0), 1e-12);
        EXPECT_EQ(sp.derivative.coefficient(i), sp.derivative.coefficient(-i));
      }
      EXPECT_EQ(sp.derivative.spacing, st.spacing);
      EXPECT_DOUBLE_EQ(sp.derivative.gain, p.derivative(0.0));
    }
  }
}

TEST(BuildStencil, BinomialCompatibilityStencil) {
  const StencilPair p = binomial_stencil(KernelFamily::kRbf);
  ASSERT_EQ(p.value.coefficients.size(), 3u);
  EXPECT_EQ(p.value.coefficients[0], 0.5);
  EXPECT_EQ(p.value.coefficients[1], 1.0);
  EXPECT_EQ(p.value.coefficients[2], 0.5);
  EXPECT_THROW(binomial_stencil(KernelFamily::kMatern32), std::invalid_argument);
}

}  // namespace
}  // namespace latticegp
