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

#include "pfednav/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace pfednav::ad {
namespace {

double evaluate(const ScalarFunction& f, const Tensor& point) {
  Tape tape;
  Var x = tape.constant(point);
  return tape.scalar(f(tape, x));
}

}  // namespace

Tensor numeric_gradient(const ScalarFunction& f, const Tensor& point, double step) {
  Tensor grad(point.shape(), 0.0);
  Tensor probe = point;
  for (std::size_t i = 0; i < point.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + step;
    const double up = evaluate(f, probe);
    probe[i] = orig - step;
    const double down = evaluate(f, probe);
    probe[i] = orig;
    grad[i] = (up - down) / (2.0 * step);
  }
  return grad;
}

double grad_check(const ScalarFunction& f, const Tensor& point, double step) {
  Tape tape;
  Var x = tape.variable(point);
  tape.backward(f(tape, x));
  const auto analytic = tape.grad_span(x);
  const Tensor numeric = numeric_gradient(f, point, step);
  double worst = 0.0;
  for (std::size_t i = 0; i < point.size(); ++i) {
    const double err = std::abs(analytic[i] - numeric[i]) / std::max(1.0, std::abs(numeric[i]));
    if (std::isnan(err)) return std::numeric_limits<double>::quiet_NaN();
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace pfednav::ad
