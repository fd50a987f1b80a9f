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

#pragma once

#include <functional>
#include <span>
#include <vector>

#include "distillab/matrix.hpp"

namespace dlab {

/// Scalar objective over a parameter set. When `gradients` is non-null the
/// objective must also fill it with one analytic gradient per parameter.
using Objective =
    std::function<double(std::span<const Matrix> params, std::vector<Matrix>* gradients)>;

/// Largest relative disagreement between the objective's analytic gradient
/// and a central finite difference, over every coordinate of every parameter:
///
///   |analytic - central| / max(|analytic|, |central|, 1e-12)
///
/// Throws NumericError if any objective evaluation is non-finite.
double finite_diff_check(const Objective& objective, std::vector<Matrix> params, double step);

}  // namespace dlab
