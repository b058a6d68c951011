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
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include <json.hpp>

#include "latticegp/common.hpp"
#include "latticegp/model.hpp"
#include "latticegp/oracle.hpp"
#include "latticegp/solver.hpp"
#include "latticegp/trainer.hpp"

namespace latticegp {

struct Dataset {
  Matrix x;
  Vector y;
  std::vector<std::string> columns;  // feature names, in column order
  std::string target;

  Index size() const { return x.rows(); }
  Index dim() const { return x.cols(); }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n\"");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n\"");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

inline bool parse_double(const std::string& s, double& out) {
  if (s.empty()) return false;
  const char* begin = s.data();
  if (*begin == '+') ++begin;
  const auto [ptr, ec] = std::from_chars(begin, s.data() + s.size(), out);
  return ec == std::errc() && ptr == s.data() + s.size() && std::isfinite(out);
}

}  // namespace detail

struct CsvTable {
  std::vector<std::string> header;
  Matrix values;
};

/// Reads a numeric CSV with a header row.
inline CsvTable read_csv_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("load_csv: cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw DataError("load_csv: '" + path + "' is empty");
  CsvTable table;
  table.header = detail::split_csv_line(line);
  const std::size_t width = table.header.size();
  std::vector<double> cells;
  std::size_t rows = 0;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const std::vector<std::string> parts = detail::split_csv_line(line);
    if (parts.size() != width)
      throw DataError("load_csv: row " + std::to_string(line_no) + " has " + std::to_string(parts.size()) +
                      " cells, expected " + std::to_string(width));
    for (std::size_t c = 0; c < width; ++c) {
      double v = 0.0;
      if (!detail::parse_double(parts[c], v))
        throw DataError("load_csv: non-numeric cell '" + parts[c] + "' at row " + std::to_string(line_no) +
                        ", column " + std::to_string(c + 1) + " (" + table.header[c] + ")");
      cells.push_back(v);
    }
    ++rows;
  }
  if (rows == 0) throw DataError("load_csv: no data rows in '" + path + "'");
  table.values = Eigen::Map<const Matrix>(cells.data(), static_cast<Index>(rows), static_cast<Index>(width));
  return table;
}

/// Splits a table into features and target. The target column is selected
/// by name; an empty name selects the last column.
inline Dataset dataset_from_table(const CsvTable& table, const std::string& target_column = "") {
  const auto& header = table.header;
  if (header.size() < 2) throw DataError("load_csv: need at least one feature and one target column");
  std::size_t target = header.size() - 1;
  if (!target_column.empty()) {
    const auto it = std::find(header.begin(), header.end(), target_column);
    if (it == header.end()) throw DataError("load_csv: target column '" + target_column + "' not found");
    target = static_cast<std::size_t>(it - header.begin());
  }
  Dataset ds;
  const Index rows = table.values.rows();
  ds.x.resize(rows, static_cast<Index>(header.size() - 1));
  ds.y = table.values.col(static_cast<Index>(target));
  ds.target = header[target];
  Index out_col = 0;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (c == target) continue;
    ds.columns.push_back(header[c]);
    ds.x.col(out_col++) = table.values.col(static_cast<Index>(c));
  }
  return ds;
}

inline Dataset load_csv(const std::string& path, const std::string& target_column = "") {
  return dataset_from_table(read_csv_table(path), target_column);
}

/// Writes features then target, with enough digits to round-trip doubles.
inline void write_csv(const std::string& path, const Dataset& ds) {
  std::ofstream out(path);
  if (!out) throw DataError("write_csv: cannot open '" + path + "'");
  for (Index j = 0; j < ds.dim(); ++j)
    out << (static_cast<std::size_t>(j) < ds.columns.size() ? ds.columns[static_cast<std::size_t>(j)] : "x" + std::to_string(j)) << ',';
  out << (ds.target.empty() ? "y" : ds.target) << '\n';
  out.precision(17);
  for (Index i = 0; i < ds.size(); ++i) {
    for (Index j = 0; j < ds.dim(); ++j) out << ds.x(i, j) << ',';
    out << ds.y(i) << '\n';
  }
}

struct SplitSpec {
  std::array<double, 3> fractions{4.0 / 9.0, 2.0 / 9.0, 3.0 / 9.0};
  std::uint64_t seed = 0;
};

struct DatasetSplits {
  Dataset train;
  Dataset validation;
  Dataset test;
  Standardization stats;
};

/// Split sizes by largest remainder, so each differs from its exact share by
/// less than one element.
inline std::array<Index, 3> split_sizes(Index n, const std::array<double, 3>& fractions) {
  const double total = fractions[0] + fractions[1] + fractions[2];
  if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("split: fractions must sum to 1");
  for (double f : fractions)
    if (!(f >= 0.0)) throw std::invalid_argument("split: fractions must be non-negative");
  std::array<Index, 3> sizes{};
  std::array<double, 3> rem{};
  Index used = 0;
  for (std::size_t k = 0; k < 3; ++k) {
    const double exact = fractions[k] * static_cast<double>(n);
    sizes[k] = static_cast<Index>(std::floor(exact + 1e-9));
    rem[k] = exact - static_cast<double>(sizes[k]);
    used += sizes[k];
  }
  std::array<std::size_t, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rem[a] > rem[b]; });
  for (std::size_t k = 0; used < n; ++k, ++used) ++sizes[order[k % 3]];
  return sizes;
}

inline Standardization fit_standardization(const Dataset& train) {
  const Index n = train.size();
  if (n < 2) throw DataError("standardize: need at least two training rows");
  Standardization s;
  s.x_mean = train.x.colwise().mean().transpose();
  s.x_std.resize(train.dim());
  for (Index j = 0; j < train.dim(); ++j) {
    const double var = (train.x.col(j).array() - s.x_mean(j)).square().mean();
    const double scale = std::max(1.0, std::abs(s.x_mean(j)));
    if (!(var > 1e-24 * scale * scale)) {
      const std::string name = static_cast<std::size_t>(j) < train.columns.size() ? train.columns[static_cast<std::size_t>(j)]
                                                                                 : std::to_string(j);
      throw DataError("standardize: column '" + name + "' is constant on the training split");
    }
    s.x_std(j) = std::sqrt(var);
  }
  s.y_mean = train.y.mean();
  const double yvar = (train.y.array() - s.y_mean).square().mean();
  if (!(yvar > 0.0)) throw DataError("standardize: target is constant on the training split");
  s.y_std = std::sqrt(yvar);
  return s;
}

inline Dataset subset(const Dataset& ds, const std::vector<Index>& rows) {
  Dataset out;
  out.columns = ds.columns;
  out.target = ds.target;
  out.x.resize(static_cast<Index>(rows.size()), ds.dim());
  out.y.resize(static_cast<Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.x.row(static_cast<Index>(i)) = ds.x.row(rows[i]);
    out.y(static_cast<Index>(i)) = ds.y(rows[i]);
  }
  return out;
}

/// Random train/validation/test split; statistics come from the training
/// portion only and are applied to all three.
inline DatasetSplits split_standardize(const Dataset& ds, const SplitSpec& spec = {}) {
  const Index n = ds.size();
  if (n < 9) throw DataError("split: need at least 9 rows, got " + std::to_string(n));
  if (!ds.x.allFinite() || !ds.y.allFinite()) throw DataError("split: dataset has non-finite entries");
  const auto sizes = split_sizes(n, spec.fractions);
  std::vector<Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Index{0});
  std::mt19937_64 rng(spec.seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  const auto a = perm.begin();
  const auto b = a + sizes[0];
  const auto c = b + sizes[1];
  DatasetSplits out;
  out.train = subset(ds, {a, b});
  out.validation = subset(ds, {b, c});
  out.test = subset(ds, {c, perm.end()});
  out.stats = fit_standardization(out.train);
  for (Dataset* part : {&out.train, &out.validation, &out.test}) {
    part->x = out.stats.apply_x(part->x);
    part->y = out.stats.apply_y(part->y);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic data
// ---------------------------------------------------------------------------

inline Matrix standard_normal_matrix(Index rows, Index cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Matrix x(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) x(i, j) = normal(rng);
  return x;
}

/// Draws y ~ N(0, K + noise I) at standard normal inputs (dense; n <= ~3000).
inline Dataset make_gp_sample(Index n, const StationaryKernelSpec& kernel, std::uint64_t seed) {
  Dataset ds;
  ds.x = standard_normal_matrix(n, kernel.dim(), seed);
  const Eigen::MatrixXd k = dense_kernel_matrix(ds.x, kernel, true);
  const CholeskyResult chol = cholesky_with_jitter(k);
  std::mt19937_64 rng(seed ^ 0x5bd1e995ULL);
  std::normal_distribution<double> normal;
  Vector e(n);
  for (Index i = 0; i < n; ++i) e(i) = normal(rng);
  ds.y = chol.llt.matrixL() * e;
  for (Index j = 0; j < ds.dim(); ++j) ds.columns.push_back("x" + std::to_string(j + 1));
  ds.target = "y";
  return ds;
}

/// Smooth additive regression target; dimensions with zero weight are
/// irrelevant to y.
inline Dataset make_additive_regression(Index n, const Vector& weights, double noise_std, std::uint64_t seed) {
  Dataset ds;
  ds.x = standard_normal_matrix(n, weights.size(), seed);
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> normal;
  ds.y.resize(n);
  for (Index i = 0; i < n; ++i) {
    double acc = 0.0;
    for (Index j = 0; j < weights.size(); ++j) acc += weights(j) * std::sin(1.5 * ds.x(i, j));
    ds.y(i) = acc + noise_std * normal(rng);
  }
  for (Index j = 0; j < ds.dim(); ++j) ds.columns.push_back("x" + std::to_string(j + 1));
  ds.target = "y";
  return ds;
}

// ---------------------------------------------------------------------------
// Run configuration
// ---------------------------------------------------------------------------

/// Every knob of a run. The structured-text form uses dotted key paths
/// (nested objects are flattened); unknown keys are rejected.
struct DataSource {
  std::string path;  // CSV; empty selects the synthetic generator
  std::string target;
  Index synthetic_n = 2000;
  Index synthetic_d = 3;
  std::uint64_t seed = 0;
};

struct RunOptions {
  int threads = 0;  // 0 keeps the runtime default
  std::string metrics_path;
  std::string model_path;
  std::string output_path;
  bool check_mvm = false;
  bool derivative_stencil = false;
  VarianceRoute variance = VarianceRoute::kLatticeCross;
};

struct BenchOptions {
  std::vector<int> orders{1};
  double lengthscale = 1.0;
  Index oracle_cap = 50000;
  int repeats = 3;
  Index compare_max_n = 1000;
};

struct RunConfig {
  KernelFamily family = KernelFamily::kMatern32;
  LatticeConfig lattice;
  TrainConfig train;
  SplitSpec split;
  DataSource data;
  RunOptions run;
  BenchOptions bench;

  static const std::set<std::string>& known_keys() {
    static const std::set<std::string> keys = {
        "kernel.family", "kernel.order",     "kernel.noise_floor", "kernel.binomial_stencil",
        "train.lr",      "train.max_epochs", "train.probes",       "train.patience",
        "train.seed",    "cg.tol_train",     "cg.tol_eval",        "cg.max_iters",
        "cg.max_lanczos", "lattice.symmetrize", "split.seed",      "split.fractions",
        "data.path",     "data.target",      "data.synthetic_n",   "data.synthetic_d",
        "data.seed",     "run.threads",      "run.metrics",        "run.model",
        "run.output",    "bench.orders",     "bench.lengthscale",  "bench.oracle_cap",
        "bench.repeats", "bench.compare_max_n", "run.check_mvm", "run.derivative_stencil", "cg.min_iters", "run.variance"};
    return keys;
  }

  static void flatten(const nlohmann::json& j, const std::string& prefix, nlohmann::json& flat) {
    if (j.is_object()) {
      for (auto it = j.begin(); it != j.end(); ++it)
        flatten(it.value(), prefix.empty() ? it.key() : prefix + "." + it.key(), flat);
    } else {
      flat[prefix] = j;
    }
  }

  /// Applies the keys present in `j`; absent keys keep their current value.
  void merge(const nlohmann::json& j) {
    nlohmann::json flat = nlohmann::json::object();
    flatten(j, "", flat);
    for (auto it = flat.begin(); it != flat.end(); ++it)
      if (!known_keys().count(it.key())) throw std::invalid_argument("config: unknown key '" + it.key() + "'");
    try {
      if (flat.contains("kernel.family")) family = parse_kernel_family(flat["kernel.family"].get<std::string>());
      if (flat.contains("kernel.order")) lattice.order = flat["kernel.order"].get<int>();
      if (flat.contains("kernel.noise_floor")) train.noise_floor = flat["kernel.noise_floor"].get<double>();
      if (flat.contains("kernel.binomial_stencil")) lattice.binomial = flat["kernel.binomial_stencil"].get<bool>();
      if (flat.contains("train.lr")) train.learning_rate = flat["train.lr"].get<double>();
      if (flat.contains("train.max_epochs")) train.max_epochs = flat["train.max_epochs"].get<int>();
      if (flat.contains("train.probes")) train.probes = flat["train.probes"].get<int>();
      if (flat.contains("train.patience")) train.patience = flat["train.patience"].get<int>();
      if (flat.contains("train.seed")) train.seed = flat["train.seed"].get<std::uint64_t>();
      if (flat.contains("cg.tol_train")) train.cg_train.tolerance = flat["cg.tol_train"].get<double>();
      if (flat.contains("cg.tol_eval")) train.cg_eval.tolerance = flat["cg.tol_eval"].get<double>();
      if (flat.contains("cg.max_iters")) {
        train.cg_train.max_iterations = flat["cg.max_iters"].get<int>();
        train.cg_eval.max_iterations = train.cg_train.max_iterations;
      }
      if (flat.contains("cg.min_iters")) train.cg_train.min_iterations = flat["cg.min_iters"].get<int>();
      if (flat.contains("cg.max_lanczos")) train.lanczos_steps = flat["cg.max_lanczos"].get<int>();
      if (flat.contains("lattice.symmetrize")) lattice.symmetrize = flat["lattice.symmetrize"].get<bool>();
      if (flat.contains("split.seed")) split.seed = flat["split.seed"].get<std::uint64_t>();
      if (flat.contains("split.fractions")) {
        const auto f = flat["split.fractions"].get<std::vector<double>>();
        if (f.size() != 3) throw std::invalid_argument("config: split.fractions needs three entries");
        split.fractions = {f[0], f[1], f[2]};
      }
      if (flat.contains("data.path")) data.path = flat["data.path"].get<std::string>();
      if (flat.contains("data.target")) data.target = flat["data.target"].get<std::string>();
      if (flat.contains("data.synthetic_n")) data.synthetic_n = flat["data.synthetic_n"].get<Index>();
      if (flat.contains("data.synthetic_d")) data.synthetic_d = flat["data.synthetic_d"].get<Index>();
      if (flat.contains("data.seed")) data.seed = flat["data.seed"].get<std::uint64_t>();
      if (flat.contains("run.threads")) run.threads = flat["run.threads"].get<int>();
      if (flat.contains("run.metrics")) run.metrics_path = flat["run.metrics"].get<std::string>();
      if (flat.contains("run.model")) run.model_path = flat["run.model"].get<std::string>();
      if (flat.contains("run.output")) run.output_path = flat["run.output"].get<std::string>();
      if (flat.contains("run.variance")) run.variance = parse_variance_route(flat["run.variance"].get<std::string>());
      if (flat.contains("run.check_mvm")) run.check_mvm = flat["run.check_mvm"].get<bool>();
      if (flat.contains("run.derivative_stencil")) run.derivative_stencil = flat["run.derivative_stencil"].get<bool>();
      if (flat.contains("bench.orders")) bench.orders = flat["bench.orders"].get<std::vector<int>>();
      if (flat.contains("bench.lengthscale")) bench.lengthscale = flat["bench.lengthscale"].get<double>();
      if (flat.contains("bench.oracle_cap")) bench.oracle_cap = flat["bench.oracle_cap"].get<Index>();
      if (flat.contains("bench.repeats")) bench.repeats = flat["bench.repeats"].get<int>();
      if (flat.contains("bench.compare_max_n")) bench.compare_max_n = flat["bench.compare_max_n"].get<Index>();
    } catch (const nlohmann::json::exception& e) {
      throw std::invalid_argument(std::string("config: wrong value type: ") + e.what());
    }
    validate();
  }

  void validate() const {
    if (lattice.order < 0) throw std::invalid_argument("config: kernel.order must be >= 0");
    if (lattice.binomial && family != KernelFamily::kRbf)
      throw std::invalid_argument("config: the binomial stencil requires the rbf kernel");
    if (train.lanczos_steps < 1) throw std::invalid_argument("config: cg.max_lanczos must be >= 1");
    train.validate();
    (void)split_sizes(9, split.fractions);
    if (data.synthetic_n < 1 || data.synthetic_d < 1) throw std::invalid_argument("config: synthetic sizes must be >= 1");
    if (run.threads < 0) throw std::invalid_argument("config: run.threads must be >= 0");
    if (bench.orders.empty()) throw std::invalid_argument("config: bench.orders must not be empty");
    for (int r : bench.orders)
      if (r < 0) throw std::invalid_argument("config: bench.orders entries must be >= 0");
    if (!(bench.lengthscale > 0.0)) throw std::invalid_argument("config: bench.lengthscale must be positive");
    if (bench.repeats < 1) throw std::invalid_argument("config: bench.repeats must be >= 1");
    if (bench.compare_max_n < 9) throw std::invalid_argument("config: bench.compare_max_n must be >= 9");
  }

  static RunConfig load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("config: cannot open '" + path + "'");
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw std::invalid_argument(std::string("config: parse error: ") + e.what());
    }
    RunConfig cfg;
    cfg.merge(j);
    return cfg;
  }

  nlohmann::json to_json() const {
    return {{"kernel", {{"family", to_string(family)},
                        {"order", lattice.order},
                        {"noise_floor", train.noise_floor},
                        {"binomial_stencil", lattice.binomial}}},
            {"train", {{"lr", train.learning_rate},
                       {"max_epochs", train.max_epochs},
                       {"probes", train.probes},
                       {"patience", train.patience},
                       {"seed", train.seed}}},
            {"cg", {{"tol_train", train.cg_train.tolerance},
                    {"tol_eval", train.cg_eval.tolerance},
                    {"max_iters", train.cg_train.max_iterations},
                    {"min_iters", train.cg_train.min_iterations},
                    {"max_lanczos", train.lanczos_steps}}},
            {"lattice", {{"symmetrize", lattice.symmetrize}}},
            {"split", {{"seed", split.seed},
                       {"fractions", std::vector<double>(split.fractions.begin(), split.fractions.end())}}},
            {"data", {{"path", data.path},
                      {"target", data.target},
                      {"synthetic_n", data.synthetic_n},
                      {"synthetic_d", data.synthetic_d},
                      {"seed", data.seed}}},
            {"run", {{"threads", run.threads},
                     {"metrics", run.metrics_path},
                     {"model", run.model_path},
                     {"output", run.output_path},
                     {"check_mvm", run.check_mvm},
                     {"derivative_stencil", run.derivative_stencil},
                     {"variance", to_string(run.variance)}}},
            {"bench", {{"orders", bench.orders},
                       {"lengthscale", bench.lengthscale},
                       {"oracle_cap", bench.oracle_cap},
                       {"repeats", bench.repeats},
                       {"compare_max_n", bench.compare_max_n}}}};
  }
};

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

inline nlohmann::json vector_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline nlohmann::json finite_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

inline nlohmann::json trace_json(const TrainTrace& trace) {
  nlohmann::json epochs = nlohmann::json::array();
  for (const EpochRecord& e : trace.epochs) {
    epochs.push_back({{"epoch", e.epoch},
                      {"mll", finite_or_null(e.mll)},
                      {"validation_rmse", finite_or_null(e.validation_rmse)},
                      {"lengthscales", vector_json(e.lengthscales)},
                      {"outputscale", e.outputscale},
                      {"noise", e.noise},
                      {"cg_iterations", e.cg_iterations},
                      {"cg_converged", e.cg_converged},
                      {"seconds", e.seconds}});
  }
  return {{"best_epoch", trace.best_epoch}, {"epochs", epochs}};
}

inline nlohmann::json kernel_json(const StationaryKernelSpec& k) {
  return {{"family", to_string(k.family)},
          {"lengthscales", vector_json(k.lengthscales)},
          {"outputscale", k.outputscale},
          {"noise_variance", k.noise_variance}};
}

inline StationaryKernelSpec kernel_from_json(const nlohmann::json& j) {
  StationaryKernelSpec k;
  k.family = parse_kernel_family(j.at("family").get<std::string>());
  const auto ls = j.at("lengthscales").get<std::vector<double>>();
  k.lengthscales = Eigen::Map<const Vector>(ls.data(), static_cast<Index>(ls.size()));
  k.outputscale = j.at("outputscale").get<double>();
  k.noise_variance = j.at("noise_variance").get<double>();
  return k;
}

inline nlohmann::json matrix_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Index i = 0; i < m.rows(); ++i) rows.push_back(std::vector<double>(m.row(i).data(), m.row(i).data() + m.cols()));
  return rows;
}

inline Matrix matrix_from_json(const nlohmann::json& j, Index cols) {
  Matrix m(static_cast<Index>(j.size()), cols);
  for (std::size_t i = 0; i < j.size(); ++i) {
    const auto row = j[i].get<std::vector<double>>();
    if (static_cast<Index>(row.size()) != cols) throw DataError("model: ragged input matrix");
    for (Index c = 0; c < cols; ++c) m(static_cast<Index>(i), c) = row[static_cast<std::size_t>(c)];
  }
  return m;
}

/// A fitted model as a self-contained JSON document.
inline nlohmann::json model_json(const GPModel& model) {
  return {{"kernel", kernel_json(model.kernel)},
          {"lattice", {{"order", model.lattice.order},
                       {"symmetrize", model.lattice.symmetrize},
                       {"binomial", model.lattice.binomial}}},
          {"standardization", {{"x_mean", vector_json(model.stats.x_mean)},
                               {"x_std", vector_json(model.stats.x_std)},
                               {"y_mean", model.stats.y_mean},
                               {"y_std", model.stats.y_std}}},
          {"x_train", matrix_json(model.x_train)},
          {"y_train", vector_json(model.y_train)},
          {"alpha", vector_json(model.alpha)}};
}

inline GPModel model_from_json(const nlohmann::json& j) {
  GPModel model;
  model.kernel = kernel_from_json(j.at("kernel"));
  const auto& lat = j.at("lattice");
  model.lattice = {lat.at("order").get<int>(), lat.at("symmetrize").get<bool>(), lat.at("binomial").get<bool>()};
  const auto vec = [](const nlohmann::json& a) {
    const auto v = a.get<std::vector<double>>();
    return Vector(Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size())));
  };
  const auto& st = j.at("standardization");
  model.stats = {vec(st.at("x_mean")), vec(st.at("x_std")), st.at("y_mean").get<double>(), st.at("y_std").get<double>()};
  model.x_train = matrix_from_json(j.at("x_train"), model.kernel.dim());
  model.y_train = vec(j.at("y_train"));
  model.alpha = vec(j.at("alpha"));
  model.fitted = model.alpha.size() == model.x_train.rows() && model.y_train.size() == model.x_train.rows();
  if (!model.fitted) throw DataError("model: inconsistent sizes in model file");
  return model;
}

/// Spearman rank correlation (average ranks for ties).
inline double spearman(const Vector& a, const Vector& b) {
  require_shape(a.size() == b.size() && a.size() > 1, "spearman: need two equal-length vectors");
  const auto ranks = [](const Vector& v) {
    const Index n = v.size();
    std::vector<Index> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), Index{0});
    std::sort(idx.begin(), idx.end(), [&](Index x, Index y) { return v(x) < v(y); });
    Vector r(n);
    for (Index i = 0; i < n;) {
      Index j = i;
      while (j + 1 < n && v(idx[static_cast<std::size_t>(j + 1)]) == v(idx[static_cast<std::size_t>(i)])) ++j;
      const double avg = 0.5 * static_cast<double>(i + j);
      for (Index k = i; k <= j; ++k) r(idx[static_cast<std::size_t>(k)]) = avg;
      i = j + 1;
    }
    return r;
  };
  const Vector ra = ranks(a), rb = ranks(b);
  const Vector ca = ra.array() - ra.mean(), cb = rb.array() - rb.mean();
  const double denom = ca.norm() * cb.norm();
  return denom == 0.0 ? 0.0 : ca.dot(cb) / denom;
}

}  // namespace latticegp
