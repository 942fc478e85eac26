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

#include <span>
#include <string>
#include <vector>

#include "dydiff/sequence.hpp"

namespace dydiff {

enum class Pool { none, avg, max };

std::string to_string(Pool pool);
Pool parse_pool(const std::string& name);

/// Sliding w x w window (stride 1, no padding) over the last two frame dims,
/// applied per leading channel and per state. Pool::none or w = 1 returns the
/// values unchanged. Frames need rank >= 2 when pooling with w > 1.
std::vector<double> pool_sequence(const StateSequence& seq, Pool pool, int w);

/// Sample CRPS of one scalar: mean|X - y| - (1 / (2 M^2)) sum_ij |X_i - X_j|.
/// `members` is sorted in place.
double crps_sample(std::span<double> members, double y);

/// Closed-form CRPS of N(mu, sigma^2) at y.
double gaussian_crps(double mu, double sigma, double y);

/// Mean pooled CRPS over all elements and states. Requires M >= 2.
double crps_ensemble(std::span<const StateSequence> members, const StateSequence& truth, Pool pool, int w);

struct Contingency {
    long hits = 0;
    long misses = 0;
    long false_alarms = 0;
    long correct_negatives = 0;
};

/// Pools both fields, marks values >= threshold as events, and counts.
Contingency contingency(const StateSequence& pred, const StateSequence& truth, double threshold, int w,
                        Pool pool = Pool::avg);

/// hits / (hits + misses + false alarms); 1 when neither field has an event.
double csi(const Contingency& table);
double csi(const StateSequence& pred, const StateSequence& truth, double threshold, int w,
           Pool pool = Pool::avg);

/// 10 log10(range^2 / MSE); +infinity when MSE = 0.
double psnr(std::span<const double> pred, std::span<const double> truth, double data_range);

struct CrpsSum {
    double value = 0.0;
    bool normalized = true;  // false when sum |truth| = 0 and the raw score is returned
};

/// Members and truth are sequences of variate vectors (frame = (num_variates)).
/// Sums across variates per state, computes the unpooled CRPS per state and
/// divides the total by sum_states |sum of truth|.
CrpsSum crps_sum(std::span<const StateSequence> members, const StateSequence& truth);

/// Linear-interpolated empirical quantile, q in [0, 1].
double quantile(std::vector<double> values, double q);

}  // namespace dydiff
