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

// Fits a lattice GP to a small synthetic problem and compares its predictions
// with exact GP inference.

#include <iostream>

#include "latticegp.hpp"

int main() {
  using namespace latticegp;
  const StationaryKernelSpec truth = StationaryKernelSpec::isotropic(KernelFamily::kMatern32, 2, 0.8, 1.0, 0.01);
  Dataset ds = make_gp_sample(900, truth, 7);
  const DatasetSplits splits = split_standardize(ds, {});

  TrainConfig cfg;
  cfg.max_epochs = 30;
  const FitResult fitted = fit({splits.train.x, splits.train.y}, {splits.validation.x, splits.validation.y},
                               KernelFamily::kMatern32, cfg);
  const GPModel& model = fitted.model;

  const Vector mean = predictive_mean_standardized(model, splits.test.x, cfg.cg_eval);
  const ExactGpResult exact = exact_gp(splits.train.x, splits.train.y, splits.test.x, model.kernel);

  std::cout << "epochs          " << fitted.trace.epochs.size() << "\n"
            << "lengthscales    " << model.kernel.lengthscales.transpose() << "\n"
            << "noise variance  " << model.kernel.noise_variance << "\n"
            << "test RMSE       " << rmse(mean, splits.test.y) << " (lattice)\n"
            << "test RMSE       " << rmse(exact.mean, splits.test.y) << " (exact, same hyperparameters)\n";
  return 0;
}
