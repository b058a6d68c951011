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

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "latticegp/kernels.hpp"

namespace latticegp {

/// Symmetric blur coefficients c_{-r..r} at lattice spacing `spacing`, stored
/// as coefficients[i + r]. The filter output is multiplied by `gain`.
struct Stencil {
  int order = 0;
  double spacing = 1.0;
  std::vector<double> coefficients{1.0};
  double gain = 1.0;

  double coefficient(int offset) const { return coefficients.at(static_cast<std::size_t>(offset + order)); }

  static Stencil identity(double spacing = 1.0) { return Stencil{0, spacing, {1.0}, 1.0}; }
};

/// Value stencil for k and the matching stencil for k' at the same spacing.
struct StencilPair {
  Stencil value;
  Stencil derivative;
};

namespace detail {

// Composite Simpson over [a, b] with at least `min_intervals` and a step no
// larger than `max_step`.
template <typename F>
double simpson(F&& f, double a, double b, int min_intervals = 2000, double max_step = 1e-3) {
  if (b <= a) return 0.0;
  long n = std::max<long>(min_intervals, static_cast<long>(std::ceil((b - a) / max_step)));
  if (n % 2 != 0) ++n;
  const double h = (b - a) / static_cast<double>(n);
  double acc = f(a) + f(b);
  for (long i = 1; i < n; ++i) acc += (i % 2 == 1 ? 4.0 : 2.0) * f(a + h * static_cast<double>(i));
  return acc * h / 3.0;
}

// Smallest tau (doubling from 1) at which |k(tau)| drops below `level`.
inline double tail_width(const KernelProfile& profile, double level) {
  for (double width = 1.0; width <= 1e4; width *= 2.0) {
    if (std::abs(profile.value(width * width)) < level) return width;
  }
  throw std::domain_error("kernel tail does not decay below " + std::to_string(level) + " within |tau| <= 1e4");
}

inline std::size_t next_pow2(double x) {
  std::size_t n = 64;
  while (static_cast<double>(n) < x) n <<= 1;
  return n;
}

}  // namespace detail

/// Fraction of the kernel's 1-D mass inside [-s(2r+1)/2, s(2r+1)/2].
inline double spatial_coverage(const KernelProfile& profile, double s, int r) {
  if (!(s > 0.0)) throw std::invalid_argument("spatial_coverage: spacing must be positive");
  if (r < 0) throw std::invalid_argument("spatial_coverage: order must be non-negative");
  const auto k = [&](double tau) { return profile.value(tau * tau); };
  const double total_width = detail::tail_width(profile, 1e-12);
  const double total = detail::simpson(k, 0.0, total_width);
  if (!(total > 0.0)) throw std::domain_error("spatial_coverage: kernel has no mass");
  const double half = 0.5 * s * (2 * r + 1);
  if (half >= total_width) return 1.0;
  return std::clamp(detail::simpson(k, 0.0, half) / total, 0.0, 1.0);
}

/// Fraction of the kernel's spectral mass inside the Nyquist band [-pi/s, pi/s].
inline double frequency_coverage(const KernelProfile& profile, double s) {
  if (!(s > 0.0)) throw std::invalid_argument("frequency_coverage: spacing must be positive");
  const double width = std::max(detail::tail_width(profile, 1e-12), 128.0 * s);
  const std::size_t n = detail::next_pow2(std::max(1024.0, 2.0 * width / 0.01));
  const Spectrum spectrum = numeric_fourier(profile, width, n);
  const double band = M_PI / s;
  const auto samples_in_band = static_cast<std::size_t>(band / spectrum.d_omega);
  if (samples_in_band < 8)
    throw std::domain_error("frequency_coverage: spectrum resolution too coarse for the band");

  const auto& f = spectrum.values;
  const double h = spectrum.d_omega;
  double total = 0.0;
  for (std::size_t k = 0; k + 1 < f.size(); ++k) total += 0.5 * h * (f[k] + f[k + 1]);
  if (!(total > 0.0)) throw std::domain_error("frequency_coverage: spectrum has no mass");

  double inside = 0.0;
  const double last = band / h;
  const auto full = static_cast<std::size_t>(std::floor(last));
  for (std::size_t k = 0; k < full && k + 1 < f.size(); ++k) inside += 0.5 * h * (f[k] + f[k + 1]);
  if (full + 1 < f.size()) {
    const double frac = last - static_cast<double>(full);
    const double end_value = f[full] + frac * (f[full + 1] - f[full]);
    inside += 0.5 * frac * h * (f[full] + end_value);
  }
  return std::clamp(inside / total, 0.0, 1.0);
}

/// Spacing s at which spatial and frequency coverage balance for m = 2r+1
/// points, found by bisection after geometric bracketing.
inline double find_spacing(const KernelProfile& profile, int r, double tol = 1e-10) {
  if (r < 0) throw std::invalid_argument("find_spacing: order must be non-negative");
  if (!(tol > 0.0)) throw std::invalid_argument("find_spacing: tolerance must be positive");
  const auto gap = [&](double s) { return spatial_coverage(profile, s, r) - frequency_coverage(profile, s); };

  double lo = 0.5, hi = 2.0;
  int expansions = 0;
  while (gap(lo) > 0.0) {
    lo *= 0.5;
    if (++expansions > 40) throw std::domain_error("find_spacing: failed to bracket the balance point");
  }
  while (gap(hi) < 0.0) {
    hi *= 2.0;
    if (++expansions > 40) throw std::domain_error("find_spacing: failed to bracket the balance point");
  }
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double g = gap(mid);
    if (std::abs(g) <= tol || hi - lo < 1e-12) return mid;
    (g < 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

inline Stencil stencil_at_spacing(const std::function<double(double)>& f, int r, double s) {
  const double center = f(0.0);
  if (center == 0.0) throw std::domain_error("stencil: profile vanishes at the origin");
  Stencil st;
  st.order = r;
  st.spacing = s;
  st.gain = center;
  st.coefficients.resize(static_cast<std::size_t>(2 * r + 1));
  for (int i = -r; i <= r; ++i) {
    const double t = static_cast<double>(i) * s;
    st.coefficients[static_cast<std::size_t>(i + r)] = f(t * t) / center;
  }
  return st;
}

inline StencilPair build_stencil(const KernelProfile& profile, int r) {
  if (r < 0) throw std::invalid_argument("build_stencil: order must be non-negative");
  const double s = find_spacing(profile, r);
  return {stencil_at_spacing(profile.value, r, s), stencil_at_spacing(profile.derivative, r, s)};
}

/// The classic [.5, 1, .5] Gaussian blur. The spacing is where the RBF
/// profile equals one half, so it slots into the same lattice scaling.
inline StencilPair binomial_stencil(KernelFamily family) {
  if (family != KernelFamily::kRbf)
    throw std::invalid_argument("binomial stencil is only defined for the RBF kernel");
  const double s = std::sqrt(2.0 * std::log(2.0));
  Stencil value{1, s, {0.5, 1.0, 0.5}, 1.0};
  Stencil derivative = value;
  derivative.gain = -0.5;
  return {value, derivative};
}

}  // namespace latticegp
