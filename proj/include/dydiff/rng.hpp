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

#include <cstdint>
#include <initializer_list>
#include <span>
#include <vector>

namespace dydiff {

/// Counter-based random stream. Each draw is a keyed bijective hash of an
/// incrementing counter, so streams are cheap to derive (`stream(id)`) and
/// replayable: two generators with the same key and counter produce the same
/// values on every platform. Normal variates use Box-Muller.
class Rng {
public:
    using result_type = std::uint64_t;

    explicit Rng(std::uint64_t seed = 0);

    /// Independent child stream identified by `id`. Does not advance this stream.
    Rng stream(std::uint64_t id) const;

    /// Convenience for nested ids, e.g. stream({step, sample, state}).
    Rng stream(std::initializer_list<std::uint64_t> ids) const;

    std::uint64_t next_u64();

    /// Uniform in [0, 1) with 53 random bits.
    double uniform();

    /// Uniform integer in [lo, hi] inclusive, unbiased.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);

    double normal();

    void fill_normal(std::span<double> out);

    std::vector<double> normals(std::size_t n);

    /// Deterministic Fisher-Yates permutation of `items`.
    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(uniform_int(0, static_cast<std::int64_t>(i - 1)));
            std::swap(items[i - 1], items[j]);
        }
    }

    std::uint64_t key() const { return key_; }
    std::uint64_t counter() const { return counter_; }

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return ~result_type{0}; }
    result_type operator()() { return next_u64(); }

private:
    Rng(std::uint64_t key, std::uint64_t counter) : key_(key), counter_(counter) {}

    std::uint64_t key_;
    std::uint64_t counter_ = 0;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace dydiff
