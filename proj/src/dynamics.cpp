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

#include "dydiff/dynamics.hpp"

#include <cmath>

#include "dydiff/simd.hpp"

namespace dydiff {
namespace {

void check_args(const StateSequence& x, double gamma_bar, const char* op, bool inverse) {
    if (x.empty()) throw InvalidArgument(std::string(op) + ": empty sequence");
    const bool ok = inverse ? (gamma_bar >= kMinGammaBar && gamma_bar <= 1.0)
                            : (gamma_bar > 0.0 && gamma_bar <= 1.0);
    if (!ok)
        throw InvalidArgument(std::string(op) + ": gamma_bar = " + std::to_string(gamma_bar) +
                              (inverse ? " outside [1e-6, 1]" : " outside (0, 1]"));
}

}  // namespace

StateSequence dynamics(const StateSequence& x, double gamma_bar) {
    check_args(x, gamma_bar, "dynamics", false);
    const double keep = std::sqrt(gamma_bar);
    const double carry = std::sqrt(1.0 - gamma_bar);
    StateSequence d(x.first(), x.count(), x.shape());
    auto first = d.frame(x.first());
    std::copy_n(x.frame(x.first()).begin(), x.frame_size(), first.begin());
    for (int s = x.first() + 1; s <= x.last(); ++s)
        simd::axpby(keep, x.frame(s), carry, d.frame(s - 1), d.frame(s));
    return d;
}

StateSequence inverse_dynamics(const StateSequence& d, double gamma_bar) {
    check_args(d, gamma_bar, "inverse_dynamics", true);
    const double keep = std::sqrt(gamma_bar);
    const double carry = std::sqrt(1.0 - gamma_bar);
    StateSequence x(d.first(), d.count(), d.shape());
    auto first = x.frame(d.first());
    std::copy_n(d.frame(d.first()).begin(), d.frame_size(), first.begin());
    for (int s = d.first() + 1; s <= d.last(); ++s)
        simd::unmix(d.frame(s), carry, d.frame(s - 1), keep, x.frame(s));
    return x;
}

std::vector<double> dynamics_last(const StateSequence& x, double gamma_bar) {
    check_args(x, gamma_bar, "dynamics", false);
    const double keep = std::sqrt(gamma_bar);
    const double carry = std::sqrt(1.0 - gamma_bar);
    const auto first = x.frame(x.first());
    std::vector<double> acc(first.begin(), first.end());
    std::vector<double> next(acc.size());
    for (int s = x.first() + 1; s <= x.last(); ++s) {
        simd::axpby(keep, x.frame(s), carry, acc, next);
        acc.swap(next);
    }
    return acc;
}

}  // namespace dydiff
