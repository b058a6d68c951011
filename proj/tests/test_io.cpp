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
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "support.hpp"

namespace latticegp {
namespace {

using testing::Gen;
namespace fs = std::filesystem;

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() / ("latticegp_io_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) +
                                         "_" + ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  std::string file(const std::string& name) const { return (path_ / name).string(); }
  std::string write(const std::string& name, const std::string& text) const {
    std::ofstream(file(name)) << text;
    return file(name);
  }

 private:
  fs::path path_;
};

TEST(Csv, ThreeRowFile) {
  TempDir tmp;
  const std::string path = tmp.write("a.csv", "a,b,target\n1,2,3\n4,5,6\n7,8.5,-9e-1\n");
  const Dataset ds = load_csv(path);
  EXPECT_EQ(ds.size(), 3);
  EXPECT_EQ(ds.dim(), 2);
  EXPECT_EQ(ds.target, "target");
  EXPECT_EQ(ds.columns, (std::vector<std::string>{"a", "b"}));
  EXPECT_DOUBLE_EQ(ds.x(2, 1), 8.5);
  EXPECT_DOUBLE_EQ(ds.y(2), -0.9);
}

TEST(Csv, TargetByName) {
  TempDir tmp;
  const std::string path = tmp.write("a.csv", "y, p ,q\n1,2,3\n4,5,6\n");
  const Dataset ds = load_csv(path, "y");
  EXPECT_EQ(ds.columns, (std::vector<std::string>{"p", "q"}));
  EXPECT_DOUBLE_EQ(ds.y(1), 4.0);
  EXPECT_DOUBLE_EQ(ds.x(1, 0), 5.0);
  EXPECT_THROW(load_csv(path, "missing"), DataError);
}

TEST(Csv, ErrorsNameTheProblem) {
  TempDir tmp;
  try {
    load_csv(tmp.write("bad.csv", "a,b\n1,2\n3,oops\n"));
    FAIL();
  } catch (const DataError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("row 3"), std::string::npos);
    EXPECT_NE(msg.find("column 2"), std::string::npos);
    EXPECT_NE(msg.find("oops"), std::string::npos);
  }
  EXPECT_THROW(load_csv(tmp.file("absent.csv")), DataError);
  EXPECT_THROW(load_csv(tmp.write("empty.csv", "")), DataError);
  EXPECT_THROW(load_csv(tmp.write("header.csv", "a,b\n")), DataError);
  EXPECT_THROW(load_csv(tmp.write("ragged.csv", "a,b\n1,2\n3\n")), DataError);
  EXPECT_THROW(load_csv(tmp.write("one.csv", "a\n1\n")), DataError);
}

TEST(Csv, WriteLoadRoundTripIsExact) {
  TempDir tmp;
  Gen gen(121);
  Dataset ds;
  ds.x = gen.matrix(50, 4, 1e3);
  ds.x(0, 0) = 0.1;
  ds.x(1, 1) = 1e-300;
  ds.y = gen.vector(50);
  ds.columns = {"c1", "c2", "c3", "c4"};
  ds.target = "t";
  write_csv(tmp.file("rt.csv"), ds);
  const Dataset back = load_csv(tmp.file("rt.csv"));
  EXPECT_TRUE((back.x.array() == ds.x.array()).all());
  EXPECT_TRUE((back.y.array() == ds.y.array()).all());
  EXPECT_EQ(back.columns, ds.columns);
}

TEST(Split, NineRowsGiveFourTwoThree) {
  const auto sizes = split_sizes(9, {4.0 / 9.0, 2.0 / 9.0, 3.0 / 9.0});
  EXPECT_EQ(sizes, (std::array<Index, 3>{4, 2, 3}));
}

TEST(Split, SizesWithinOneOfExactShare) {
  for (Index n : {9, 10, 11, 100, 997, 45730}) {
    const std::array<double, 3> f{4.0 / 9.0, 2.0 / 9.0, 3.0 / 9.0};
    const auto sizes = split_sizes(n, f);
    EXPECT_EQ(sizes[0] + sizes[1] + sizes[2], n);
    for (std::size_t k = 0; k < 3; ++k) EXPECT_LT(std::abs(static_cast<double>(sizes[k]) - f[k] * n), 1.0);
  }
  EXPECT_THROW(split_sizes(10, {0.5, 0.5, 0.5}), std::invalid_argument);
  EXPECT_THROW(split_sizes(10, {1.5, -0.5, 0.0}), std::invalid_argument);
}

TEST(Split, DisjointCoveringAndStandardized) {
  Gen gen(122);
  Dataset ds;
  ds.x = gen.matrix(200, 3, 5.0);
  ds.x.col(1).array() += 40.0;
  ds.y = gen.vector(200).array() * 3.0 + 7.0;
  for (Index i = 0; i < 200; ++i) ds.x(i, 2) = static_cast<double>(i);  // row id for coverage checks
  const DatasetSplits s = split_standardize(ds, {{4.0 / 9.0, 2.0 / 9.0, 3.0 / 9.0}, 5});
  EXPECT_EQ(s.train.size() + s.validation.size() + s.test.size(), 200);
  std::set<long> ids;
  for (const Dataset* part : {&s.train, &s.validation, &s.test})
    for (Index i = 0; i < part->size(); ++i)
      ids.insert(std::lround(part->x(i, 2) * s.stats.x_std(2) + s.stats.x_mean(2)));
  EXPECT_EQ(ids.size(), 200u);
  for (Index j = 0; j < 3; ++j) {
    EXPECT_LT(std::abs(s.train.x.col(j).mean()), 1e-9);
    const double sd = std::sqrt((s.train.x.col(j).array() - s.train.x.col(j).mean()).square().mean());
    EXPECT_NEAR(sd, 1.0, 1e-6);
  }
  EXPECT_LT(std::abs(s.train.y.mean()), 1e-9);
  // Validation and test use the training statistics, not their own.
  EXPECT_GT(std::abs(s.test.x.col(0).mean()) + std::abs(s.validation.x.col(0).mean()), 0.0);
}

TEST(Split, SameSeedSameSplit) {
  Gen gen(123);
  Dataset ds;
  ds.x = gen.matrix(90, 2);
  ds.y = gen.vector(90);
  const DatasetSplits a = split_standardize(ds, {{4.0 / 9.0, 2.0 / 9.0, 3.0 / 9.0}, 3});
  const DatasetSplits b = split_standardize(ds, {{4.0 / 9.0, 2.0 / 9.0, 3.0 / 9.0}, 3});
  const DatasetSplits c = split_standardize(ds, {{4.0 / 9.0, 2.0 / 9.0, 3.0 / 9.0}, 4});
  EXPECT_TRUE((a.test.x.array() == b.test.x.array()).all());
  EXPECT_FALSE((a.test.x.array() == c.test.x.array()).all());
}

TEST(Split, RejectsSmallConstantAndNonFinite) {
  Gen gen(124);
  Dataset ds;
  ds.x = gen.matrix(8, 2);
  ds.y = gen.vector(8);
  EXPECT_THROW(split_standardize(ds), DataError);
  ds.x = gen.matrix(30, 2);
  ds.y = gen.vector(30);
  ds.columns = {"a", "flat"};
  ds.x.col(1).setConstant(2.5);
  try {
    split_standardize(ds);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("flat"), std::string::npos);
  }
  ds.x = gen.matrix(30, 2);
  ds.x(4, 0) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(split_standardize(ds), DataError);
}

TEST(Config, DefaultsMatchDocumentedSettings) {
  const RunConfig cfg;
  EXPECT_EQ(cfg.family, KernelFamily::kMatern32);
  EXPECT_EQ(cfg.lattice.order, 1);
  EXPECT_FALSE(cfg.lattice.symmetrize);
  EXPECT_DOUBLE_EQ(cfg.train.learning_rate, 0.1);
  EXPECT_EQ(cfg.train.max_epochs, 100);
  EXPECT_DOUBLE_EQ(cfg.train.cg_train.tolerance, 1.0);
  EXPECT_DOUBLE_EQ(cfg.train.cg_eval.tolerance, 0.01);
  EXPECT_EQ(cfg.train.cg_train.max_iterations, 500);
  EXPECT_EQ(cfg.train.lanczos_steps, 100);
  EXPECT_DOUBLE_EQ(cfg.train.noise_floor, 1e-4);
  EXPECT_EQ(cfg.train.probes, 16);
  EXPECT_EQ(cfg.train.patience, 10);
}

TEST(Config, MergeNestedAndDotted) {
  RunConfig cfg;
  cfg.merge(nlohmann::json::parse(R"({"kernel": {"family": "rbf", "order": 2}, "cg.tol_train": 0.5,
                                      "split": {"fractions": [0.5, 0.25, 0.25], "seed": 9}})"));
  EXPECT_EQ(cfg.family, KernelFamily::kRbf);
  EXPECT_EQ(cfg.lattice.order, 2);
  EXPECT_DOUBLE_EQ(cfg.train.cg_train.tolerance, 0.5);
  EXPECT_EQ(cfg.split.seed, 9u);
  EXPECT_DOUBLE_EQ(cfg.split.fractions[0], 0.5);
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  RunConfig cfg;
  EXPECT_THROW(cfg.merge(nlohmann::json::parse(R"({"kernel": {"colour": 1}})")), std::invalid_argument);
  EXPECT_THROW(cfg.merge(nlohmann::json::parse(R"({"train.lr": "fast"})")), std::invalid_argument);
  EXPECT_THROW(cfg.merge(nlohmann::json::parse(R"({"train.lr": -1})")), std::invalid_argument);
  EXPECT_THROW(cfg.merge(nlohmann::json::parse(R"({"kernel.family": "cauchy"})")), std::invalid_argument);
  EXPECT_THROW(cfg.merge(nlohmann::json::parse(R"({"split.fractions": [0.5, 0.5]})")), std::invalid_argument);
  EXPECT_THROW(cfg.merge(nlohmann::json::parse(R"({"kernel.binomial_stencil": true})")), std::invalid_argument);
  EXPECT_THROW(cfg.merge(nlohmann::json::parse(R"({"run.variance": "exact"})")), std::invalid_argument);
}

TEST(Config, JsonRoundTripAndLoad) {
  TempDir tmp;
  RunConfig cfg;
  cfg.merge(nlohmann::json::parse(R"({"kernel.family": "matern52", "train.probes": 7, "run.variance": "lattice",
                                      "bench.orders": [0, 1, 2], "cg.min_iters": 3})"));
  std::ofstream(tmp.file("c.json")) << cfg.to_json().dump();
  const RunConfig back = RunConfig::load(tmp.file("c.json"));
  EXPECT_EQ(back.to_json(), cfg.to_json());
  EXPECT_EQ(back.run.variance, VarianceRoute::kLattice);
  EXPECT_EQ(back.bench.orders, (std::vector<int>{0, 1, 2}));
  EXPECT_THROW(RunConfig::load(tmp.write("broken.json", "{")), std::invalid_argument);
  EXPECT_THROW(RunConfig::load(tmp.file("none.json")), std::invalid_argument);
}

TEST(Config, EveryKnownKeyAppearsInEcho) {
  nlohmann::json flat = nlohmann::json::object();
  RunConfig::flatten(RunConfig{}.to_json(), "", flat);
  for (const std::string& key : RunConfig::known_keys()) EXPECT_TRUE(flat.contains(key)) << key;
  EXPECT_EQ(flat.size(), RunConfig::known_keys().size());
}

TEST(ModelFile, RoundTrip) {
  Gen gen(125);
  GPModel model;
  model.kernel = testing::random_kernel(gen, KernelFamily::kMatern52, 3);
  model.lattice = {2, true, false};
  model.x_train = gen.matrix(20, 3);
  model.y_train = gen.vector(20);
  model.alpha = gen.vector(20);
  model.stats = {gen.vector(3), gen.vector(3).cwiseAbs(), 1.5, 2.5};
  const GPModel back = model_from_json(nlohmann::json::parse(model_json(model).dump()));
  EXPECT_TRUE((back.x_train.array() == model.x_train.array()).all());
  EXPECT_TRUE((back.alpha.array() == model.alpha.array()).all());
  EXPECT_TRUE((back.kernel.lengthscales.array() == model.kernel.lengthscales.array()).all());
  EXPECT_EQ(back.kernel.family, model.kernel.family);
  EXPECT_EQ(back.lattice.order, 2);
  EXPECT_TRUE(back.lattice.symmetrize);
  EXPECT_EQ(back.stats.y_std, 2.5);
  EXPECT_TRUE(back.fitted);
  nlohmann::json broken = model_json(model);
  broken["alpha"] = std::vector<double>{1.0};
  EXPECT_THROW(model_from_json(broken), DataError);
}

TEST(Spearman, KnownValues) {
  Vector a(5), b(5);
  a << 1, 2, 3, 4, 5;
  b << 10, 20, 30, 40, 50;
  EXPECT_NEAR(spearman(a, b), 1.0, 1e-15);
  EXPECT_NEAR(spearman(a, Vector(-b)), -1.0, 1e-15);
  b << 2, 1, 4, 3, 5;
  EXPECT_NEAR(spearman(a, b), 0.8, 1e-12);
  b << 1, 1, 2, 2, 3;
  EXPECT_NEAR(spearman(a, b), 0.9486832980505138, 1e-12);
  EXPECT_THROW(spearman(Vector::Ones(1), Vector::Ones(1)), ShapeError);
}

RunConfig small_config(const TempDir& tmp) {
  RunConfig cfg;
  cfg.data.synthetic_n = 270;
  cfg.data.synthetic_d = 3;
  cfg.train.max_epochs = 4;
  cfg.run.metrics_path = tmp.file("metrics.json");
  cfg.run.model_path = tmp.file("model.json");
  cfg.bench.repeats = 1;
  return cfg;
}

TEST(Commands, TrainWritesFiniteMetricsAndModel) {
  TempDir tmp;
  RunConfig cfg = small_config(tmp);
  cfg.run.check_mvm = true;
  std::ostringstream log;
  const nlohmann::json m = commands::train(cfg, log);
  EXPECT_TRUE(fs::exists(cfg.run.metrics_path));
  EXPECT_TRUE(fs::exists(cfg.run.model_path));
  EXPECT_EQ(m["splits"]["train"].get<int>(), 120);
  EXPECT_EQ(m["splits"]["validation"].get<int>(), 60);
  EXPECT_EQ(m["splits"]["test"].get<int>(), 90);
  for (const char* key : {"rmse_standardized", "rmse_original_units", "nll_standardized"})
    EXPECT_TRUE(std::isfinite(m["test"][key].get<double>())) << key;
  const double ml = m["lattice"]["m_over_L"].get<double>();
  EXPECT_GT(ml, 0.0);
  EXPECT_LE(ml, 1.0);
  EXPECT_TRUE(m["mvm"].contains("cosine_error"));
  EXPECT_EQ(m["config"], cfg.to_json());
  EXPECT_NE(log.str().find("test RMSE (std)"), std::string::npos);
  std::ifstream in(cfg.run.metrics_path);
  EXPECT_EQ(nlohmann::json::parse(in), m);
}

TEST(Commands, ZeroEpochSmokePath) {
  TempDir tmp;
  RunConfig cfg = small_config(tmp);
  cfg.train.max_epochs = 0;
  std::ostringstream log;
  const nlohmann::json m = commands::train(cfg, log);
  EXPECT_TRUE(m["trace"]["epochs"].empty());
  EXPECT_TRUE(std::isfinite(m["test"]["rmse_standardized"].get<double>()));
}

TEST(Commands, PredictFromSavedModel) {
  TempDir tmp;
  RunConfig cfg = small_config(tmp);
  std::ostringstream log;
  commands::train(cfg, log);
  Dataset probe = make_additive_regression(25, Vector::Ones(3), 0.1, 99);
  write_csv(tmp.file("probe.csv"), probe);
  RunConfig pc;
  pc.run.model_path = cfg.run.model_path;
  pc.data.path = tmp.file("probe.csv");
  pc.run.output_path = tmp.file("pred.csv");
  const nlohmann::json out = commands::predict(pc, log);
  EXPECT_EQ(out["n"].get<int>(), 25);
  EXPECT_TRUE(out.contains("rmse_original_units"));
  const CsvTable pred = read_csv_table(pc.run.output_path);
  EXPECT_EQ(pred.header, (std::vector<std::string>{"mean", "latent_variance"}));
  EXPECT_EQ(pred.values.rows(), 25);
  EXPECT_TRUE((pred.values.col(1).array() > 0.0).all());

  std::ofstream(tmp.file("features.csv")) << "x1,x2,x3\n1,2,3\n";
  pc.data.path = tmp.file("features.csv");
  pc.run.output_path.clear();
  std::ostringstream sink;
  const nlohmann::json f = commands::predict(pc, sink);
  EXPECT_FALSE(f.contains("rmse_original_units"));
  EXPECT_NE(sink.str().find("mean,latent_variance"), std::string::npos);
  std::ofstream(tmp.file("wide.csv")) << "a,b,c,d,e\n1,2,3,4,5\n";
  pc.data.path = tmp.file("wide.csv");
  EXPECT_THROW(commands::predict(pc, sink), DataError);
  RunConfig no_model;
  EXPECT_THROW(commands::predict(no_model, sink), std::invalid_argument);
}

TEST(Commands, SparsityExamples) {
  RunConfig cfg;
  std::ostringstream log;
  cfg.data.synthetic_n = 1;
  cfg.data.synthetic_d = 4;
  nlohmann::json s = commands::sparsity(cfg, log);
  EXPECT_EQ(s["lattice"]["m"].get<int>(), 5);
  EXPECT_DOUBLE_EQ(s["lattice"]["m_over_L"].get<double>(), 1.0);

  // Identical rows cannot be standardized, so the inputs go in directly.
  const commands::LatticeStats st = commands::lattice_stats(Matrix::Constant(10, 3, 0.5), StationaryKernelSpec::isotropic(KernelFamily::kRbf, 3, 1.0),
                                                            {}, 0);
  EXPECT_EQ(st.m, 4);
  EXPECT_DOUBLE_EQ(st.m_over_l, 1.0 / 10.0);
}

TEST(Commands, SparsityFallsWithLengthscale) {
  RunConfig cfg;
  cfg.data.synthetic_n = 2000;
  cfg.data.synthetic_d = 3;
  std::ostringstream log;
  double previous = 2.0;
  for (double l : {0.25, 0.5, 1.0, 2.0, 4.0}) {
    cfg.bench.lengthscale = l;
    const double ml = commands::sparsity(cfg, log)["lattice"]["m_over_L"].get<double>();
    EXPECT_LT(ml, previous) << "lengthscale " << l;
    previous = ml;
  }
  EXPECT_LT(previous, 0.05);
}

TEST(Commands, StencilPrintsSpacingThenCoefficients) {
  RunConfig cfg;
  cfg.family = KernelFamily::kRbf;
  std::ostringstream out;
  commands::stencil(cfg, out);
  std::istringstream in(out.str());
  double s = 0.0, c0 = 0.0, c1 = 0.0, c2 = 0.0;
  in >> s >> c0 >> c1 >> c2;
  EXPECT_NEAR(s, std::sqrt(2.0 * M_PI / 3.0), 1e-3);
  EXPECT_DOUBLE_EQ(c1, 1.0);
  EXPECT_NEAR(c0, std::exp(-s * s / 2.0), 1e-9);
  EXPECT_DOUBLE_EQ(c0, c2);
}

TEST(Commands, MvmBenchSelfComparisonAndCap) {
  RunConfig cfg;
  cfg.data.synthetic_n = 300;
  cfg.bench.orders = {0, 1, 2};
  cfg.bench.repeats = 1;
  std::ostringstream log;
  const nlohmann::json b = commands::mvm_bench(cfg, log);
  ASSERT_EQ(b["results"].size(), 3u);
  for (const auto& row : b["results"]) {
    const double ce = row["cosine_error"].get<double>();
    EXPECT_GE(ce, 0.0);
    EXPECT_LT(ce, 1.0);
  }
  const Matrix v = standard_normal_matrix(300, 1, 1);
  EXPECT_NEAR(cosine_error(v, v), 0.0, 1e-15);
  cfg.bench.oracle_cap = 100;
  const nlohmann::json capped = commands::mvm_bench(cfg, log);
  EXPECT_TRUE(capped.contains("notice"));
  EXPECT_FALSE(capped["results"][0].contains("cosine_error"));
}

TEST(Commands, CompareArdLabelsAndRelevance) {
  RunConfig cfg;
  cfg.data.synthetic_n = 600;
  cfg.data.synthetic_d = 3;
  cfg.train.max_epochs = 40;
  cfg.bench.compare_max_n = 450;
  std::ostringstream log;
  const nlohmann::json r = commands::compare_ard(cfg, log);
  ASSERT_EQ(r["lengthscales"].size(), 3u);
  EXPECT_EQ(r["lengthscales"][0]["label"], "l_1");
  EXPECT_EQ(r["lengthscales"][2]["label"], "l_3");
  EXPECT_EQ(r["dataset"]["n"].get<int>(), 450);
  EXPECT_EQ(r["largest"]["lattice"], "l_3");
  EXPECT_EQ(r["largest"]["exact"], "l_3");
  EXPECT_NE(log.str().find("spearman"), std::string::npos);
}

TEST(Commands, DumpLatticeLines) {
  RunConfig cfg;
  cfg.data.synthetic_n = 3;
  cfg.data.synthetic_d = 2;
  std::ostringstream log;
  commands::dump_lattice(cfg, log);
  const std::string text = log.str();
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 9);
}

TEST(Commands, DeterministicSingleThreaded) {
  TempDir tmp;
  set_num_threads(1);
  RunConfig cfg = small_config(tmp);
  std::ostringstream log;
  nlohmann::json a = commands::train(cfg, log), b = commands::train(cfg, log);
  for (nlohmann::json* j : {&a, &b}) {
    j->erase("timings");
    j->erase("lattice");
    (*j)["mvm"].erase("lattice_seconds");
    for (auto& e : (*j)["trace"]["epochs"]) e.erase("seconds");
  }
  EXPECT_EQ(a, b);
}

}  // namespace
}  // namespace latticegp
