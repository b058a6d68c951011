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

// Command-line front end. Every flag maps onto a configuration key; values
// given on the command line are merged over the configuration file.

#include <cstdlib>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "latticegp.hpp"

namespace {

using nlohmann::json;
using latticegp::RunConfig;

enum class Kind { kInt, kDouble, kString, kBool, kIntList, kDoubleList };

struct Flag {
  const char* name;
  const char* key;
  Kind kind;
  const char* help;
};

const std::vector<Flag>& all_flags() {
  static const std::vector<Flag> flags = {
      {"--data", "data.path", Kind::kString, "CSV dataset with a header row (default: synthetic data)"},
      {"--target", "data.target", Kind::kString, "target column name (default: last column)"},
      {"--synthetic-n", "data.synthetic_n", Kind::kInt, "synthetic sample count"},
      {"--synthetic-d", "data.synthetic_d", Kind::kInt, "synthetic input dimension"},
      {"--data-seed", "data.seed", Kind::kInt, "seed for synthetic data and subsampling"},
      {"--kernel", "kernel.family", Kind::kString, "rbf, matern32 or matern52"},
      {"--order", "kernel.order", Kind::kInt, "stencil order r"},
      {"--noise-floor", "kernel.noise_floor", Kind::kDouble, "lower bound on the noise variance"},
      {"--binomial", "kernel.binomial_stencil", Kind::kBool, "use the [.5 1 .5] stencil (rbf only)"},
      {"--lr", "train.lr", Kind::kDouble, "Adam learning rate"},
      {"--epochs", "train.max_epochs", Kind::kInt, "maximum training epochs"},
      {"--probes", "train.probes", Kind::kInt, "probe vectors per epoch"},
      {"--patience", "train.patience", Kind::kInt, "early stopping patience in epochs"},
      {"--train-seed", "train.seed", Kind::kInt, "probe seed"},
      {"--cg-tol-train", "cg.tol_train", Kind::kDouble, "CG tolerance during training"},
      {"--cg-tol-eval", "cg.tol_eval", Kind::kDouble, "CG tolerance for prediction"},
      {"--cg-max-iters", "cg.max_iters", Kind::kInt, "CG iteration cap"},
      {"--cg-min-iters", "cg.min_iters", Kind::kInt, "CG iterations before the training tolerance is tested"},
      {"--lanczos", "cg.max_lanczos", Kind::kInt, "Lanczos steps for log-determinant estimates"},
      {"--symmetrize", "lattice.symmetrize", Kind::kBool, "average ascending and descending blur orders"},
      {"--seed", "split.seed", Kind::kInt, "split seed"},
      {"--fractions", "split.fractions", Kind::kDoubleList, "train,validation,test fractions"},
      {"--threads", "run.threads", Kind::kInt, "worker threads (1 = deterministic)"},
      {"--metrics", "run.metrics", Kind::kString, "metrics JSON output path"},
      {"--model", "run.model", Kind::kString, "model file"},
      {"--out", "run.output", Kind::kString, "output path"},
      {"--variance", "run.variance", Kind::kString, "lattice-cross, lattice or exact-cross"},
      {"--check-mvm", "run.check_mvm", Kind::kBool, "compare the lattice MVM with the exact one"},
      {"--derivative", "run.derivative_stencil", Kind::kBool, "print the derivative stencil"},
      {"--orders", "bench.orders", Kind::kIntList, "stencil orders to benchmark"},
      {"--lengthscale", "bench.lengthscale", Kind::kDouble, "isotropic lengthscale"},
      {"--oracle-cap", "bench.oracle_cap", Kind::kInt, "largest n for the exact oracle"},
      {"--repeats", "bench.repeats", Kind::kInt, "timing repetitions"},
      {"--compare-max-n", "bench.compare_max_n", Kind::kInt, "subsample size for compare-ard"},
  };
  return flags;
}

struct Command {
  CLI::App* app = nullptr;
  std::string config_path;
  std::map<std::string, std::string> values;
  std::map<std::string, bool> switches;
};

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(item);
  return out;
}

json convert(const Flag& f, const std::string& raw) {
  try {
    switch (f.kind) {
      case Kind::kInt:
        return std::stoll(raw);
      case Kind::kDouble:
        return std::stod(raw);
      case Kind::kIntList: {
        json a = json::array();
        for (const auto& s : split_list(raw)) a.push_back(std::stoi(s));
        return a;
      }
      case Kind::kDoubleList: {
        json a = json::array();
        for (const auto& s : split_list(raw)) a.push_back(std::stod(s));
        return a;
      }
      default:
        return raw;
    }
  } catch (const std::exception&) {
    throw std::invalid_argument(std::string(f.name) + ": cannot parse '" + raw + "'");
  }
}

Command& add_command(CLI::App& app, std::vector<std::unique_ptr<Command>>& store, const std::string& name,
                     const std::string& help, const std::vector<std::string>& flags) {
  auto cmd = std::make_unique<Command>();
  cmd->app = app.add_subcommand(name, help);
  cmd->app->add_option("--config", cmd->config_path, "JSON configuration file")->check(CLI::ExistingFile);
  for (const Flag& f : all_flags()) {
    if (std::find(flags.begin(), flags.end(), f.name) == flags.end()) continue;
    if (f.kind == Kind::kBool) {
      cmd->app->add_flag(std::string(f.name) + ",!--no-" + std::string(f.name + 2), cmd->switches[f.key], f.help);
    } else {
      cmd->app->add_option(f.name, cmd->values[f.key], f.help);
    }
  }
  store.push_back(std::move(cmd));
  return *store.back();
}

RunConfig resolve(const Command& cmd) {
  RunConfig cfg;
  if (!cmd.config_path.empty()) cfg = RunConfig::load(cmd.config_path);
  json overlay = json::object();
  for (const Flag& f : all_flags()) {
    const auto* opt = cmd.app->get_option_no_throw(f.name);
    if (!opt || opt->count() == 0) continue;
    overlay[f.key] = f.kind == Kind::kBool ? json(cmd.switches.at(f.key)) : convert(f, cmd.values.at(f.key));
  }
  cfg.merge(overlay);
  latticegp::set_num_threads(cfg.run.threads);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gaussian process regression with permutohedral lattice kernel operators"};
  app.require_subcommand(1);
  std::vector<std::unique_ptr<Command>> commands;
  const std::vector<std::string> data = {"--data", "--target", "--synthetic-n", "--synthetic-d", "--data-seed",
                                         "--threads", "--metrics"};
  const std::vector<std::string> kernel = {"--kernel", "--order", "--noise-floor", "--binomial", "--symmetrize"};
  const std::vector<std::string> training = {"--lr",           "--epochs",       "--probes",      "--patience",
                                             "--train-seed",   "--cg-tol-train", "--cg-tol-eval", "--cg-max-iters",
                                             "--cg-min-iters", "--lanczos",      "--seed",         "--fractions"};
  const auto join = [](std::initializer_list<std::vector<std::string>> parts) {
    std::vector<std::string> out;
    for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
    return out;
  };

  auto& train = add_command(app, commands, "train", "fit hyperparameters and evaluate on the test split",
                            join({data, kernel, training, {"--model", "--variance", "--check-mvm", "--repeats", "--oracle-cap"}}));
  auto& predict = add_command(app, commands, "predict", "predict with a saved model",
                              {"--data", "--target", "--model", "--out", "--variance", "--threads", "--metrics", "--cg-tol-eval",
                               "--cg-max-iters"});
  auto& bench = add_command(app, commands, "mvm-bench", "time lattice MVMs and measure their error",
                            join({data, kernel, {"--orders", "--lengthscale", "--oracle-cap", "--repeats"}}));
  auto& sparse = add_command(app, commands, "sparsity", "report lattice size m and m/L",
                             join({data, kernel, {"--lengthscale", "--model"}}));
  auto& stencil = add_command(app, commands, "stencil", "print stencil spacing and coefficients",
                              {"--kernel", "--order", "--binomial", "--derivative"});
  auto& compare = add_command(app, commands, "compare-ard", "compare learned lengthscales with the exact model",
                              join({data, kernel, training, {"--compare-max-n"}}));
  auto& dump = add_command(app, commands, "dump-lattice", "write lattice keys and weights per input",
                           join({data, {"--kernel", "--order", "--binomial", "--lengthscale", "--out"}}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    namespace cmd = latticegp::commands;
    if (train.app->parsed()) {
      cmd::train(resolve(train));
    } else if (predict.app->parsed()) {
      cmd::predict(resolve(predict));
    } else if (bench.app->parsed()) {
      cmd::mvm_bench(resolve(bench));
    } else if (sparse.app->parsed()) {
      cmd::sparsity(resolve(sparse));
    } else if (stencil.app->parsed()) {
      cmd::stencil(resolve(stencil));
    } else if (compare.app->parsed()) {
      cmd::compare_ard(resolve(compare));
    } else if (dump.app->parsed()) {
      cmd::dump_lattice(resolve(dump));
    }
  } catch (const std::exception& e) {
    std::cerr << "latticegp: error: " << e.what() << '\n';
    return EXIT_FAILURE;
  }
  return EXIT_SUCCESS;
}
