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

#include "latticegp/common.hpp"
#include "latticegp/kernels.hpp"
#include "latticegp/stencil.hpp"
#include "latticegp/lattice.hpp"
#include "latticegp/filter.hpp"
#include "latticegp/model.hpp"
#include "latticegp/oracle.hpp"
#include "latticegp/solver.hpp"
#include "latticegp/trainer.hpp"
#include "latticegp/io.hpp"
#include "latticegp/commands.hpp"
