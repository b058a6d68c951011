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
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "latticegp/filter.hpp"
#include "latticegp/io.hpp"
#include "latticegp/oracle.hpp"
#include "latticegp/solver.hpp"
#include "latticegp/trainer.hpp"

namespace latticegp::commands {

using nlohmann::json;

namespace detail {

inline double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

template <typename F>
double median_seconds(int repeats, F&& f) {
  std::vector<double> t;
  for (int i = 0; i < repeats; ++i) {
    const auto start = std::chrono::steady_clock::now();
    f();
    t.push_back(seconds_since(start));
  }
  std::sort(t.begin(), t.end());
  return t[t.size() / 2];
}

inline void write_json(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << j.dump(2) << '\n';
}

inline std::vector<Index> random_subset(Index n, Index k, std::uint64_t seed) {
  std::vector<Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Index{0});
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(static_cast<std::size_t>(std::min(n, k)));
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace detail

/// Loads the configured CSV or draws the synthetic regression set. With
/// `irrelevant_last`, the final synthetic dimension carries no signal.
inline Dataset load_data(const RunConfig& cfg, bool irrelevant_last = false) {
  if (!cfg.data.path.empty()) return load_csv(cfg.data.path, cfg.data.target);
  Vector w = Vector::Ones(cfg.data.synthetic_d);
  if (irrelevant_last) w(w.size() - 1) = 0.0;
  return make_additive_regression(cfg.data.synthetic_n, w, 0.1, cfg.data.seed);
}

inline json dataset_json(const RunConfig& cfg, const Dataset& ds) {
  return {{"source", cfg.data.path.empty() ? "synthetic" : cfg.data.path},
          {"n", ds.size()},
          {"d", ds.dim()},
          {"target", ds.target},
          {"columns", ds.columns}};
}

inline DataSplit as_split(const Dataset& ds) { return {ds.x, ds.y}; }

struct LatticeStats {
  Index n = 0;
  Index d = 0;
  Index m = 0;
  double m_over_l = 0.0;
  double build_seconds = 0.0;
  double mvm_seconds = 0.0;
  std::size_t memory_bytes = 0;
};

inline LatticeStats lattice_stats(const Matrix& x, const StationaryKernelSpec& kernel, const LatticeConfig& lattice,
                                  int repeats) {
  LatticeStats s;
  const auto start = std::chrono::steady_clock::now();
  const LatticeOperator op(x, kernel, lattice);
  s.build_seconds = detail::seconds_since(start);
  s.n = x.rows();
  s.d = x.cols();
  s.m = op.lattice_size();
  s.m_over_l = static_cast<double>(s.m) / static_cast<double>(s.n * (s.d + 1));
  s.memory_bytes = op.memory_bytes();
  if (repeats > 0) {
    const Matrix v = standard_normal_matrix(x.rows(), 1, 17);
    s.mvm_seconds = detail::median_seconds(repeats, [&] { (void)op.mvm(v); });
  }
  return s;
}

inline json lattice_stats_json(const LatticeStats& s) {
  return {{"n", s.n}, {"d", s.d}, {"m", s.m}, {"m_over_L", s.m_over_l}, {"build_seconds", s.build_seconds},
          {"mvm_seconds", s.mvm_seconds}, {"memory_bytes", s.memory_bytes}};
}

/// Fits on the training split, evaluates on the test split and returns the
/// metrics document.
inline json train(const RunConfig& cfg, std::ostream& log = std::cout) {
  const auto start = std::chrono::steady_clock::now();
  const Dataset ds = load_data(cfg);
  const DatasetSplits splits = split_standardize(ds, cfg.split);

  FitResult result;
  try {
    result = fit(as_split(splits.train), as_split(splits.validation), cfg.family, cfg.train,
                 LatticeEngine{cfg.lattice});
  } catch (const TrainingError& e) {
    json partial = {{"dataset", dataset_json(cfg, ds)}, {"config", cfg.to_json()}, {"trace", trace_json(e.trace())},
                    {"error", e.what()}};
    if (!cfg.run.metrics_path.empty()) detail::write_json(cfg.run.metrics_path, partial);
    throw;
  }
  GPModel& model = result.model;
  model.stats = splits.stats;
  const double train_seconds = detail::seconds_since(start);

  const auto eval_start = std::chrono::steady_clock::now();
  const Vector mean = predictive_mean_standardized(model, splits.test.x, cfg.train.cg_eval);
  const PredictiveVariance var = predictive_variance_standardized(model, splits.test.x, cfg.train.cg_eval, cfg.run.variance);
  const double rmse_std = rmse(mean, splits.test.y);
  const double rmse_raw = rmse_std * splits.stats.y_std;
  const double nll_std = gaussian_nll(mean, var.variance.array() + model.kernel.noise_variance, splits.test.y);
  const double eval_seconds = detail::seconds_since(eval_start);

  const LatticeStats stats = lattice_stats(splits.train.x, model.kernel, model.lattice, cfg.bench.repeats);
  json mvm = {{"lattice_seconds", stats.mvm_seconds}};
  if (cfg.run.check_mvm) {
    if (splits.train.size() <= cfg.bench.oracle_cap) {
      const Matrix v = standard_normal_matrix(splits.train.size(), 1, 17);
      const LatticeOperator op(splits.train.x, model.kernel, model.lattice);
      Matrix exact;
      mvm["exact_seconds"] = detail::median_seconds(1, [&] { exact = exact_mvm(splits.train.x, v, model.kernel); });
      mvm["cosine_error"] = cosine_error(exact, op.mvm(v));
    } else {
      mvm["notice"] = "oracle skipped: n exceeds bench.oracle_cap";
    }
  }

  json metrics = {{"dataset", dataset_json(cfg, ds)},
                  {"config", cfg.to_json()},
                  {"splits", {{"train", splits.train.size()}, {"validation", splits.validation.size()},
                              {"test", splits.test.size()}}},
                  {"trace", trace_json(result.trace)},
                  {"kernel", kernel_json(model.kernel)},
                  {"test", {{"rmse_standardized", rmse_std},
                            {"rmse_original_units", rmse_raw},
                            {"nll_standardized", nll_std},
                            {"variance_route", to_string(cfg.run.variance)},
                            {"variance_floored", var.floored_count}}},
                  {"lattice", lattice_stats_json(stats)},
                  {"mvm", mvm},
                  {"timings", {{"train_seconds", train_seconds}, {"eval_seconds", eval_seconds}}}};
  if (!cfg.run.metrics_path.empty()) detail::write_json(cfg.run.metrics_path, metrics);
  if (!cfg.run.model_path.empty()) detail::write_json(cfg.run.model_path, model_json(model));

  log << "dataset            " << metrics["dataset"]["source"].get<std::string>() << " (n=" << ds.size()
      << ", d=" << ds.dim() << ")\n"
      << "epochs run         " << result.trace.epochs.size() << " (best " << result.trace.best_epoch << ")\n"
      << "test RMSE (std)    " << rmse_std << "\n"
      << "test RMSE (orig)   " << rmse_raw << "\n"
      << "test NLL (std)     " << nll_std << "\n"
      << "lattice m, m/L     " << stats.m << ", " << stats.m_over_l << "\n"
      << "lattice MVM (s)    " << stats.mvm_seconds << "\n";
  return metrics;
}

/// Predicts with a saved model. The input CSV holds the model's features,
/// optionally followed by a target column, which enables an RMSE report.
inline json predict(const RunConfig& cfg, std::ostream& log = std::cout) {
  if (cfg.run.model_path.empty()) throw std::invalid_argument("predict: a model file is required");
  if (cfg.data.path.empty()) throw std::invalid_argument("predict: an input CSV is required");
  std::ifstream in(cfg.run.model_path);
  if (!in) throw DataError("predict: cannot open model '" + cfg.run.model_path + "'");
  const GPModel model = model_from_json(json::parse(in));
  const CsvTable table = read_csv_table(cfg.data.path);
  const Index d = model.dim();
  Matrix x;
  std::optional<Vector> y;
  if (table.values.cols() == d) {
    x = table.values;
  } else if (table.values.cols() == d + 1) {
    const Dataset ds = dataset_from_table(table, cfg.data.target);
    x = ds.x;
    y = ds.y;
  } else {
    throw DataError("predict: expected " + std::to_string(d) + " feature columns, got " +
                    std::to_string(table.values.cols()));
  }
  const Matrix xs = model.stats.apply_x(x);
  const Vector mean_std = predictive_mean_standardized(model, xs, cfg.train.cg_eval);
  const PredictiveVariance var = predictive_variance_standardized(model, xs, cfg.train.cg_eval, cfg.run.variance);
  const Vector mean = model.stats.restore_y(mean_std);
  const Vector variance = var.variance * (model.stats.y_std * model.stats.y_std);

  json out = {{"n", x.rows()}, {"variance_floored", var.floored_count}};
  if (y) {
    out["rmse_original_units"] = rmse(mean, *y);
    out["rmse_standardized"] = rmse(mean_std, model.stats.apply_y(*y));
  }
  std::ostream* sink = &log;
  std::ofstream file;
  if (!cfg.run.output_path.empty()) {
    file.open(cfg.run.output_path);
    if (!file) throw DataError("predict: cannot write '" + cfg.run.output_path + "'");
    sink = &file;
  }
  *sink << "mean,latent_variance\n" << std::setprecision(17);
  for (Index i = 0; i < mean.size(); ++i) *sink << mean(i) << ',' << variance(i) << '\n';
  if (y && !cfg.run.output_path.empty())
    log << "RMSE (orig) " << out["rmse_original_units"].get<double>() << ", RMSE (std) "
        << out["rmse_standardized"].get<double>() << "\n";
  if (!cfg.run.metrics_path.empty()) detail::write_json(cfg.run.metrics_path, out);
  return out;
}

/// Inputs for the benchmark style commands: standardized data with an
/// isotropic kernel at the configured lengthscale.
inline std::pair<Dataset, StationaryKernelSpec> bench_inputs(const RunConfig& cfg) {
  Dataset ds;
  if (cfg.data.path.empty()) {
    ds.x = standard_normal_matrix(cfg.data.synthetic_n, cfg.data.synthetic_d, cfg.data.seed);
    ds.y = Vector::Zero(ds.x.rows());
  } else {
    ds = load_csv(cfg.data.path, cfg.data.target);
    ds.x = fit_standardization(ds).apply_x(ds.x);
  }
  return {ds, StationaryKernelSpec::isotropic(cfg.family, ds.dim(), cfg.bench.lengthscale, 1.0, cfg.train.noise_floor)};
}

inline json mvm_bench(const RunConfig& cfg, std::ostream& log = std::cout) {
  const auto [ds, kernel] = bench_inputs(cfg);
  const Matrix v = standard_normal_matrix(ds.size(), 1, cfg.data.seed + 1);
  json rows = json::array();
  const bool oracle = ds.size() <= cfg.bench.oracle_cap;
  Matrix exact;
  double exact_seconds = 0.0;
  if (oracle) exact_seconds = detail::median_seconds(1, [&] { exact = exact_mvm(ds.x, v, kernel); });
  log << "order  m         build_s     mvm_s       exact_s     cosine_error\n";
  for (int r : cfg.bench.orders) {
    LatticeConfig lc = cfg.lattice;
    lc.order = r;
    const auto start = std::chrono::steady_clock::now();
    const LatticeOperator op(ds.x, kernel, lc);
    const double build = detail::seconds_since(start);
    Matrix z;
    const double t = detail::median_seconds(cfg.bench.repeats, [&] { z = op.mvm(v); });
    json row = {{"order", r},
                {"m", op.lattice_size()},
                {"m_over_L", static_cast<double>(op.lattice_size()) / static_cast<double>(ds.size() * (ds.dim() + 1))},
                {"build_seconds", build},
                {"mvm_seconds", t},
                {"memory_bytes", op.memory_bytes()}};
    std::ostringstream line;
    line << std::left << std::setw(7) << r << std::setw(10) << op.lattice_size() << std::setw(12) << build
         << std::setw(12) << t;
    if (oracle) {
      row["exact_seconds"] = exact_seconds;
      row["cosine_error"] = cosine_error(exact, z);
      line << std::setw(12) << exact_seconds << row["cosine_error"].get<double>();
    } else {
      line << "oracle skipped (n > " << cfg.bench.oracle_cap << ")";
    }
    log << line.str() << "\n";
    rows.push_back(row);
  }
  json out = {{"dataset", dataset_json(cfg, ds)},
              {"config", cfg.to_json()},
              {"kernel", kernel_json(kernel)},
              {"results", rows}};
  if (!oracle) out["notice"] = "oracle skipped: n exceeds bench.oracle_cap";
  if (!cfg.run.metrics_path.empty()) detail::write_json(cfg.run.metrics_path, out);
  return out;
}

/// Lattice size statistics. Lengthscales come from a saved model when one is
/// configured, otherwise from bench.lengthscale.
inline json sparsity(const RunConfig& cfg, std::ostream& log = std::cout) {
  auto [ds, kernel] = bench_inputs(cfg);
  LatticeConfig lattice = cfg.lattice;
  if (!cfg.run.model_path.empty()) {
    std::ifstream in(cfg.run.model_path);
    if (!in) throw DataError("sparsity: cannot open model '" + cfg.run.model_path + "'");
    const GPModel model = model_from_json(json::parse(in));
    require_shape(model.dim() == ds.dim(), "sparsity: model dimension does not match the data");
    kernel = model.kernel;
    lattice = model.lattice;
    if (!cfg.data.path.empty()) {
      const Dataset raw = load_csv(cfg.data.path, cfg.data.target);
      ds.x = model.stats.apply_x(raw.x);
    }
  }
  const LatticeStats s = lattice_stats(ds.x, kernel, lattice, 0);
  log << "n " << s.n << "\nd " << s.d << "\nm " << s.m << "\nm/L " << s.m_over_l << "\n";
  json out = {{"dataset", dataset_json(cfg, ds)}, {"config", cfg.to_json()}, {"kernel", kernel_json(kernel)},
              {"lattice", lattice_stats_json(s)}};
  if (!cfg.run.metrics_path.empty()) detail::write_json(cfg.run.metrics_path, out);
  return out;
}

/// Spacing on the first line, then one coefficient per line.
inline void stencil(const RunConfig& cfg, std::ostream& out = std::cout) {
  const StencilPair pair = cached_stencil(cfg.family, cfg.lattice.order, cfg.lattice.binomial);
  const Stencil& st = cfg.run.derivative_stencil ? pair.derivative : pair.value;
  out << std::setprecision(12) << st.spacing << '\n';
  for (double c : st.coefficients) out << c << '\n';
}

/// Trains the lattice and exact models on the same (subsampled) split and
/// compares the learned lengthscales.
inline json compare_ard(const RunConfig& cfg, std::ostream& log = std::cout) {
  Dataset ds = load_data(cfg, true);
  if (ds.size() > cfg.bench.compare_max_n)
    ds = subset(ds, detail::random_subset(ds.size(), cfg.bench.compare_max_n, cfg.data.seed));
  const DatasetSplits splits = split_standardize(ds, cfg.split);
  const FitResult lattice = fit(as_split(splits.train), as_split(splits.validation), cfg.family, cfg.train,
                                LatticeEngine{cfg.lattice});
  const FitResult exact = fit(as_split(splits.train), as_split(splits.validation), cfg.family, cfg.train, ExactEngine{});
  const Vector& a = lattice.model.kernel.lengthscales;
  const Vector& b = exact.model.kernel.lengthscales;
  const double rho = spearman(a, b);
  json dims = json::array();
  log << "dim        lattice       exact\n";
  for (Index j = 0; j < a.size(); ++j) {
    const std::string label = "l_" + std::to_string(j + 1);
    dims.push_back({{"label", label},
                    {"column", static_cast<std::size_t>(j) < ds.columns.size() ? ds.columns[static_cast<std::size_t>(j)] : ""},
                    {"lattice", a(j)},
                    {"exact", b(j)}});
    log << std::left << std::setw(11) << label << std::setw(14) << a(j) << b(j) << "\n";
  }
  Index amax = 0, bmax = 0;
  a.maxCoeff(&amax);
  b.maxCoeff(&bmax);
  log << "spearman   " << rho << "\n";
  json out = {{"dataset", dataset_json(cfg, ds)},
              {"config", cfg.to_json()},
              {"lengthscales", dims},
              {"spearman", rho},
              {"largest", {{"lattice", "l_" + std::to_string(amax + 1)}, {"exact", "l_" + std::to_string(bmax + 1)}}},
              {"trace", {{"lattice", trace_json(lattice.trace)}, {"exact", trace_json(exact.trace)}}}};
  if (!cfg.run.metrics_path.empty()) detail::write_json(cfg.run.metrics_path, out);
  return out;
}

/// Per input, its d+1 lattice keys and weights as tab-separated text.
inline void dump_lattice(const RunConfig& cfg, std::ostream& log = std::cout) {
  const auto [ds, kernel] = bench_inputs(cfg);
  const StencilPair pair = cached_stencil(cfg.family, cfg.lattice.order, cfg.lattice.binomial);
  const EmbeddingBasis basis = EmbeddingBasis::for_spacing(ds.dim(), pair.value.spacing);
  Lattice lattice(ds.dim(), static_cast<std::size_t>(ds.size() * (ds.dim() + 1)));
  const SplatPlan plan = build_plan(lattice, basis, normalize_inputs(ds.x, kernel.lengthscales));
  if (cfg.run.output_path.empty()) {
    dump_plan(log, lattice, plan);
    return;
  }
  std::ofstream out(cfg.run.output_path);
  if (!out) throw DataError("dump-lattice: cannot write '" + cfg.run.output_path + "'");
  dump_plan(out, lattice, plan);
}

}  // namespace latticegp::commands
