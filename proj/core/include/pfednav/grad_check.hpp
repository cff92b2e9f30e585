// Copyright 2026 The pfednav Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <functional>

#include "pfednav/tape.hpp"
#include "pfednav/tensor.hpp"

namespace pfednav::ad {

/// Builds a scalar loss on `tape` from the input node.
using ScalarFunction = std::function<Var(Tape& tape, Var input)>;

/// Max over coordinates of |analytic - numeric| / max(1, |numeric|), where
/// numeric is the central difference with the given step. NaN anywhere makes
/// the result NaN.
double grad_check(const ScalarFunction& f, const Tensor& point, double step = 1e-5);

/// Central-difference gradient of f at point.
Tensor numeric_gradient(const ScalarFunction& f, const Tensor& point, double step = 1e-5);

}  // namespace pfednav::ad
