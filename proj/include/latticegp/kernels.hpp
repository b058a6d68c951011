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

#include <fftw3.h>

#include <cmath>
#include <complex>
#include <functional>
#include <mutex>
#include <stdexcept>
#include <string>
#include <vector>

#include "latticegp/common.hpp"

namespace latticegp {

enum class KernelFamily { kRbf, kMatern32, kMatern52 };

inline std::string to_string(KernelFamily family) {
  switch (family) {
    case KernelFamily::kRbf:
      return "rbf";
    case KernelFamily::kMatern32:
      return "matern32";
    case KernelFamily::kMatern52:
      return "matern52";
  }
  return "unknown";
}

inline KernelFamily parse_kernel_family(const std::string& name) {
  if (name == "rbf" || name == "RBF") return KernelFamily::kRbf;
  if (name == "matern32" || name == "matern-3/2" || name == "Matern-3/2") return KernelFamily::kMatern32;
  if (name == "matern52" || name == "matern-5/2" || name == "Matern-5/2") return KernelFamily::kMatern52;
  throw std::invalid_argument("unknown kernel family '" + name + "' (expected rbf, matern32 or matern52)");
}

/// A stationary kernel as a function of the squared lengthscale-normalized
/// distance, with k(0) = 1. `derivative` is dk/d(sq_dist).
struct KernelProfile {
  std::function<double(double)> value;
  std::function<double(double)> derivative;
};

inline KernelProfile make_profile(KernelFamily family) {
  switch (family) {
    case KernelFamily::kRbf:
      return {[](double t2) { return std::exp(-0.5 * t2); },
              [](double t2) { return -0.5 * std::exp(-0.5 * t2); }};
    case KernelFamily::kMatern32: {
      const double a = std::sqrt(3.0);
      return {[a](double t2) {
                const double t = std::sqrt(t2);
                return (1.0 + a * t) * std::exp(-a * t);
              },
              [a](double t2) { return -1.5 * std::exp(-a * std::sqrt(t2)); }};
    }
    case KernelFamily::kMatern52: {
      const double a = std::sqrt(5.0);
      return {[a](double t2) {
                const double t = std::sqrt(t2);
                return (1.0 + a * t + 5.0 * t2 / 3.0) * std::exp(-a * t);
              },
              [a](double t2) {
                const double t = std::sqrt(t2);
                return -(5.0 / 6.0) * (1.0 + a * t) * std::exp(-a * t);
              }};
    }
  }
  throw std::invalid_argument("make_profile: unknown family");
}

/// Hyperparameters of an ARD stationary kernel plus Gaussian noise.
struct StationaryKernelSpec {
  KernelFamily family = KernelFamily::kRbf;
  Vector lengthscales;
  double outputscale = 1.0;
  double noise_variance = 0.1;

  Index dim() const { return lengthscales.size(); }
  KernelProfile profile() const { return make_profile(family); }

  void validate(double noise_floor = 0.0) const {
    if (lengthscales.size() == 0) throw std::invalid_argument("kernel: no lengthscales");
    if (!(lengthscales.array() > 0.0).all() || !lengthscales.allFinite())
      throw std::invalid_argument("kernel: lengthscales must be positive and finite");
    if (!(outputscale > 0.0) || !std::isfinite(outputscale))
      throw std::invalid_argument("kernel: outputscale must be positive");
    if (!(noise_variance > 0.0) || noise_variance < noise_floor)
      throw std::invalid_argument("kernel: noise variance below floor");
  }

  static StationaryKernelSpec isotropic(KernelFamily family, Index d, double lengthscale, double outputscale = 1.0,
                                        double noise = 0.1) {
    return {family, Vector::Constant(d, lengthscale), outputscale, noise};
  }
};

inline double evaluate(const KernelProfile& profile, double sq_dist) {
  if (!(sq_dist >= 0.0)) throw std::domain_error("evaluate: squared distance must be non-negative");
  return profile.value(sq_dist);
}

inline double evaluate_derivative(const KernelProfile& profile, double sq_dist) {
  if (!(sq_dist >= 0.0)) throw std::domain_error("evaluate_derivative: squared distance must be non-negative");
  return profile.derivative(sq_dist);
}

template <typename A, typename B, typename L>
double normalized_sq_dist(const Eigen::MatrixBase<A>& x, const Eigen::MatrixBase<B>& y,
                          const Eigen::MatrixBase<L>& lengthscales) {
  require_shape(x.size() == y.size() && x.size() == lengthscales.size(), "normalized_sq_dist: dimension mismatch");
  double acc = 0.0;
  for (Index j = 0; j < x.size(); ++j) {
    const double diff = (x(j) - y(j)) / lengthscales(j);
    acc += diff * diff;
  }
  return acc;
}

/// Samples of the Fourier transform of a 1-D profile k(|tau|), at
/// omega_k = k * d_omega for k = 0 .. n_samples/2.
struct Spectrum {
  double d_omega = 0.0;
  std::vector<double> values;

  double omega(std::size_t k) const { return static_cast<double>(k) * d_omega; }
};

inline constexpr double kTailTolerance = 1e-8;

inline Spectrum numeric_fourier(const KernelProfile& profile, double grid_half_width, std::size_t n_samples) {
  if (n_samples < 64 || (n_samples & (n_samples - 1)) != 0)
    throw std::invalid_argument("numeric_fourier: n_samples must be a power of two >= 64");
  if (!(grid_half_width > 0.0)) throw std::invalid_argument("numeric_fourier: grid half width must be positive");
  const double tail = std::abs(profile.value(grid_half_width * grid_half_width));
  if (tail > kTailTolerance)
    throw std::domain_error("numeric_fourier: kernel tail " + std::to_string(tail) + " exceeds tolerance at half width " +
                            std::to_string(grid_half_width));

  const std::size_t n = n_samples;
  const double step = 2.0 * grid_half_width / static_cast<double>(n);
  // Wrapped layout: tau_j = j*step for j < n/2 and (j-n)*step otherwise.
  std::vector<double> samples(n);
  for (std::size_t j = 0; j < n; ++j) {
    const double tau = j < n / 2 ? static_cast<double>(j) * step : (static_cast<double>(j) - static_cast<double>(n)) * step;
    samples[j] = profile.value(tau * tau);
  }
  std::vector<std::complex<double>> out(n / 2 + 1);
  {
    // The FFTW planner is not reentrant.
    static std::mutex planner_mutex;
    std::lock_guard<std::mutex> lock(planner_mutex);
    fftw_plan plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), samples.data(),
                                          reinterpret_cast<fftw_complex*>(out.data()), FFTW_ESTIMATE);
    fftw_execute(plan);
    fftw_destroy_plan(plan);
  }

  Spectrum spectrum;
  spectrum.d_omega = 2.0 * M_PI / (static_cast<double>(n) * step);
  spectrum.values.resize(out.size());
  for (std::size_t k = 0; k < out.size(); ++k) spectrum.values[k] = step * out[k].real();
  return spectrum;
}

}  // namespace latticegp
