/*
 * Copyright 2026 The dydiff Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include "dydiff/sequence.hpp"

namespace dydiff {

/// Smallest gamma_bar accepted by the dynamics operators. Inverse dynamics
/// amplifies an input perturbation at state s by up to
/// (1 + sqrt(1 - gamma_bar)) / sqrt(gamma_bar), so values below this floor
/// are rejected rather than silently producing garbage.
inline constexpr double kMinGammaBar = 1e-6;

/// Timestep-aware mixture of all historical states:
///   d[L] = x[L],  d[s] = sqrt(gamma_bar) * x[s] + sqrt(1 - gamma_bar) * d[s-1].
/// Pure; the output has the input's index range and frame shape.
StateSequence dynamics(const StateSequence& x, double gamma_bar);

/// Exact inverse of `dynamics`:
///   x[L] = d[L],  x[s] = (d[s] - sqrt(1 - gamma_bar) * d[s-1]) / sqrt(gamma_bar).
StateSequence inverse_dynamics(const StateSequence& d, double gamma_bar);

/// Last frame of dynamics(x, gamma_bar), i.e. the mixture evaluated at x.last().
std::vector<double> dynamics_last(const StateSequence& x, double gamma_bar);

}  // namespace dydiff
