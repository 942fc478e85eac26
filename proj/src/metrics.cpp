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

#include "dydiff/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "dydiff/simd.hpp"

namespace dydiff {

std::string to_string(Pool pool) {
    switch (pool) {
        case Pool::none: return "none";
        case Pool::avg: return "avg";
        case Pool::max: return "max";
    }
    return "none";
}

Pool parse_pool(const std::string& name) {
    if (name == "none") return Pool::none;
    if (name == "avg") return Pool::avg;
    if (name == "max") return Pool::max;
    throw InvalidArgument("unknown pooling '" + name + "' (expected none, avg or max)");
}

std::vector<double> pool_sequence(const StateSequence& seq, Pool pool, int w) {
    if (w < 1) throw InvalidArgument("pooling window must be >= 1");
    const auto values = seq.values();
    if (pool == Pool::none || w == 1) return {values.begin(), values.end()};
    const auto& shape = seq.shape();
    if (shape.size() < 2) throw InvalidArgument("pooling with w > 1 needs frames of rank >= 2");
    const std::size_t H = shape[shape.size() - 2];
    const std::size_t W = shape[shape.size() - 1];
    const auto wz = static_cast<std::size_t>(w);
    if (wz > H || wz > W)
        throw InvalidArgument("pooling window " + std::to_string(w) + " exceeds the spatial extent " +
                              std::to_string(H) + "x" + std::to_string(W));
    const std::size_t planes = values.size() / (H * W);
    const std::size_t oh = H - wz + 1;
    const std::size_t ow = W - wz + 1;
    std::vector<double> out(planes * oh * ow);
    const double inv = 1.0 / static_cast<double>(wz * wz);
    for (std::size_t p = 0; p < planes; ++p) {
        const double* src = values.data() + p * H * W;
        double* dst = out.data() + p * oh * ow;
        for (std::size_t y = 0; y < oh; ++y)
            for (std::size_t x = 0; x < ow; ++x) {
                double acc = pool == Pool::max ? -std::numeric_limits<double>::infinity() : 0.0;
                for (std::size_t dy = 0; dy < wz; ++dy)
                    for (std::size_t dx = 0; dx < wz; ++dx) {
                        const double v = src[(y + dy) * W + x + dx];
                        acc = pool == Pool::max ? std::max(acc, v) : acc + v;
                    }
                dst[y * ow + x] = pool == Pool::max ? acc : acc * inv;
            }
    }
    return out;
}

double crps_sample(std::span<double> members, double y) {
    const std::size_t m = members.size();
    if (m == 0) throw InvalidArgument("CRPS needs at least one member");
    std::sort(members.begin(), members.end());
    double abs_err = 0.0;
    double spread = 0.0;  // sum_i (2i - m - 1) x_(i), i = 1..m  equals  (1/2) sum_ij |x_i - x_j|
    for (std::size_t i = 0; i < m; ++i) {
        abs_err += std::fabs(members[i] - y);
        spread += (2.0 * static_cast<double>(i + 1) - static_cast<double>(m) - 1.0) * members[i];
    }
    const double md = static_cast<double>(m);
    return abs_err / md - spread / (md * md);
}

double gaussian_crps(double mu, double sigma, double y) {
    if (!(sigma > 0.0)) throw InvalidArgument("Gaussian CRPS needs sigma > 0");
    const double z = (y - mu) / sigma;
    const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
    const double cdf = 0.5 * std::erfc(-z / std::numbers::sqrt2);
    return sigma * (z * (2.0 * cdf - 1.0) + 2.0 * pdf - 1.0 / std::sqrt(std::numbers::pi));
}

double crps_ensemble(std::span<const StateSequence> members, const StateSequence& truth, Pool pool, int w) {
    if (members.size() < 2) throw InvalidArgument("ensemble CRPS needs at least 2 members");
    for (const auto& m : members) require_same_layout(m, truth, "crps_ensemble");
    const std::vector<double> y = pool_sequence(truth, pool, w);
    std::vector<std::vector<double>> pooled;
    pooled.reserve(members.size());
    for (const auto& m : members) pooled.push_back(pool_sequence(m, pool, w));
    std::vector<double> column(members.size());
    double total = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        for (std::size_t k = 0; k < pooled.size(); ++k) column[k] = pooled[k][i];
        total += crps_sample(column, y[i]);
    }
    return total / static_cast<double>(y.size());
}

Contingency contingency(const StateSequence& pred, const StateSequence& truth, double threshold, int w,
                        Pool pool) {
    require_same_layout(pred, truth, "contingency");
    const auto p = pool_sequence(pred, pool, w);
    const auto t = pool_sequence(truth, pool, w);
    Contingency c;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const bool fp = p[i] >= threshold;
        const bool ft = t[i] >= threshold;
        if (fp && ft) ++c.hits;
        else if (!fp && ft) ++c.misses;
        else if (fp && !ft) ++c.false_alarms;
        else ++c.correct_negatives;
    }
    return c;
}

double csi(const Contingency& table) {
    const long denom = table.hits + table.misses + table.false_alarms;
    if (denom == 0) return 1.0;
    return static_cast<double>(table.hits) / static_cast<double>(denom);
}

double csi(const StateSequence& pred, const StateSequence& truth, double threshold, int w, Pool pool) {
    return csi(contingency(pred, truth, threshold, w, pool));
}

double psnr(std::span<const double> pred, std::span<const double> truth, double data_range) {
    if (!(data_range > 0.0)) throw InvalidArgument("PSNR needs data_range > 0");
    if (pred.size() != truth.size() || pred.empty()) throw ShapeMismatch("PSNR inputs differ in size");
    const double mse = simd::sum_sq_diff(pred, truth) / static_cast<double>(pred.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(data_range * data_range / mse);
}

CrpsSum crps_sum(std::span<const StateSequence> members, const StateSequence& truth) {
    if (members.size() < 2) throw InvalidArgument("summed CRPS needs at least 2 members");
    for (const auto& m : members) require_same_layout(m, truth, "crps_sum");
    std::vector<double> column(members.size());
    double total = 0.0;
    double norm = 0.0;
    for (int s = truth.first(); s <= truth.last(); ++s) {
        const auto tf = truth.frame(s);
        double y = 0.0;
        for (double v : tf) y += v;
        for (std::size_t k = 0; k < members.size(); ++k) {
            double acc = 0.0;
            for (double v : members[k].frame(s)) acc += v;
            column[k] = acc;
        }
        total += crps_sample(column, y);
        norm += std::fabs(y);
    }
    if (norm == 0.0) return {total, false};
    return {total / norm, true};
}

double quantile(std::vector<double> values, double q) {
    if (values.empty()) throw InvalidArgument("quantile of an empty set");
    if (!(q >= 0.0 && q <= 1.0)) throw InvalidArgument("quantile level must be in [0, 1]");
    std::sort(values.begin(), values.end());
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return values[lo] + frac * (values[hi] - values[lo]);
}

}  // namespace dydiff
