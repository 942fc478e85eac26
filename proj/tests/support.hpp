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

// Small helpers shared by the unit tests.
#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "dydiff/rng.hpp"
#include "dydiff/sequence.hpp"

namespace testing {

inline dydiff::StateSequence random_sequence(dydiff::Rng& rng, int first, std::size_t count,
                                             dydiff::FrameShape shape, double scale = 1.0) {
    dydiff::StateSequence s(first, count, std::move(shape));
    rng.fill_normal(s.values());
    for (double& v : s.values()) v *= scale;
    return s;
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
    double m = 0.0;
    for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
    return a.size() == b.size() ? m : INFINITY;
}

inline double max_abs_diff(const dydiff::StateSequence& a, const dydiff::StateSequence& b) {
    return max_abs_diff(a.values(), b.values());
}

/// Running mean / variance accumulator (Welford).
struct Moments {
    double n = 0.0, mean = 0.0, m2 = 0.0;
    void add(double x) {
        n += 1.0;
        const double d = x - mean;
        mean += d / n;
        m2 += d * (x - mean);
    }
    double variance() const { return m2 / (n - 1.0); }
    double mean_se() const { return std::sqrt(variance() / n); }
    /// Standard error of the sample variance for a Gaussian population.
    double variance_se() const { return variance() * std::sqrt(2.0 / (n - 1.0)); }
};

}  // namespace testing
