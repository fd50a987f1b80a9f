// Copyright 2026 The distillab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "distillab/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "distillab/error.hpp"

namespace dlab {

namespace {

double checked(double v) {
  if (!std::isfinite(v)) throw NumericError("objective returned a non-finite value");
  return v;
}

}  // namespace

double finite_diff_check(const Objective& objective, std::vector<Matrix> params, double step) {
  if (!(step > 0.0)) throw ParameterError("finite-difference step must be positive");
  std::vector<Matrix> analytic;
  checked(objective(params, &analytic));
  if (analytic.size() != params.size()) {
    throw ContractError("objective returned " + std::to_string(analytic.size()) +
                        " gradients for " + std::to_string(params.size()) + " parameters");
  }
  double worst = 0.0;
  for (std::size_t p = 0; p < params.size(); ++p) {
    if (!analytic[p].same_shape(params[p])) {
      throw ShapeError("gradient " + analytic[p].shape_string() + " does not match parameter " +
                       params[p].shape_string());
    }
    auto coords = params[p].values();
    for (std::size_t i = 0; i < coords.size(); ++i) {
      const double saved = coords[i];
      coords[i] = saved + step;
      const double up = checked(objective(params, nullptr));
      coords[i] = saved - step;
      const double down = checked(objective(params, nullptr));
      coords[i] = saved;
      const double central = (up - down) / (2.0 * step);
      const double a = analytic[p].values()[i];
      const double denom = std::max({std::abs(a), std::abs(central), 1e-12});
      worst = std::max(worst, std::abs(a - central) / denom);
    }
  }
  return worst;
}

}  // namespace dlab
