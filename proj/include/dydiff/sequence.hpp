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

#include <cstddef>
#include <span>
#include <vector>

#include "dydiff/common.hpp"

namespace dydiff {

/// Ordered frames indexed by a contiguous integer range [first, last], all of
/// one shape, stored row-major in a single buffer (frame-major).
///
/// Observations use indices -P..0, prediction targets and latents use 1..S.
class StateSequence {
public:
    StateSequence() = default;

    /// Zero-filled sequence over [first, first + count - 1].
    StateSequence(int first, std::size_t count, FrameShape shape);

    /// Takes ownership of `values`, which must hold count * shape_size(shape) reals.
    StateSequence(int first, std::size_t count, FrameShape shape, std::vector<double> values);

    int first() const { return first_; }
    int last() const { return first_ + static_cast<int>(count_) - 1; }
    std::size_t count() const { return count_; }
    bool empty() const { return count_ == 0; }
    bool contains(int s) const { return count_ > 0 && s >= first_ && s <= last(); }

    const FrameShape& shape() const { return shape_; }
    std::size_t frame_size() const { return frame_size_; }

    std::span<double> frame(int s);
    std::span<const double> frame(int s) const;

    std::span<double> values() { return values_; }
    std::span<const double> values() const { return values_; }
    std::vector<double>& buffer() { return values_; }

    /// Copy of the frames [from, to] keeping their indices.
    StateSequence slice(int from, int to) const;

    /// Same frames, re-indexed to start at `first`.
    StateSequence reindexed(int first) const;

    bool same_layout(const StateSequence& other) const {
        return first_ == other.first_ && count_ == other.count_ && shape_ == other.shape_;
    }

    /// Concatenate `head` and `tail`; tail.first() must equal head.last() + 1.
    static StateSequence concat(const StateSequence& head, const StateSequence& tail);

    bool operator==(const StateSequence&) const = default;

private:
    int first_ = 0;
    std::size_t count_ = 0;
    FrameShape shape_;
    std::size_t frame_size_ = 0;
    std::vector<double> values_;
};

/// A contiguous clean trajectory: observations over -P..0 followed by
/// prediction targets over 1..S.
struct SequenceWindow {
    StateSequence observations;
    StateSequence targets;

    int P() const { return -observations.first(); }
    int S() const { return static_cast<int>(targets.count()); }

    /// Observations and targets joined into one sequence over -P..S.
    StateSequence full() const { return StateSequence::concat(observations, targets); }
};

/// Throws ShapeMismatch unless `a` and `b` share index range and frame shape.
void require_same_layout(const StateSequence& a, const StateSequence& b, const char* what);

/// Throws NumericFailure (tagged with `where`) if any value is NaN or infinite.
void require_finite(std::span<const double> values, const std::string& where);

}  // namespace dydiff
