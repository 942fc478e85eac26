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

#include "dydiff/sequence.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace dydiff {

std::string shape_to_string(const FrameShape& shape) {
    std::ostringstream out;
    out << '(';
    for (std::size_t i = 0; i < shape.size(); ++i) out << (i ? "x" : "") << shape[i];
    out << ')';
    return out.str();
}

StateSequence::StateSequence(int first, std::size_t count, FrameShape shape)
    : first_(first), count_(count), shape_(std::move(shape)), frame_size_(shape_size(shape_)) {
    if (frame_size_ == 0) throw InvalidArgument("frame shape must be non-empty");
    values_.assign(count_ * frame_size_, 0.0);
}

StateSequence::StateSequence(int first, std::size_t count, FrameShape shape,
                             std::vector<double> values)
    : first_(first), count_(count), shape_(std::move(shape)), frame_size_(shape_size(shape_)),
      values_(std::move(values)) {
    if (frame_size_ == 0) throw InvalidArgument("frame shape must be non-empty");
    if (values_.size() != count_ * frame_size_)
        throw ShapeMismatch("sequence buffer holds " + std::to_string(values_.size()) +
                            " values, expected " + std::to_string(count_ * frame_size_));
}

std::span<double> StateSequence::frame(int s) {
    if (!contains(s)) throw InvalidArgument("state index " + std::to_string(s) + " out of range");
    return std::span<double>(values_).subspan(static_cast<std::size_t>(s - first_) * frame_size_,
                                              frame_size_);
}

std::span<const double> StateSequence::frame(int s) const {
    if (!contains(s)) throw InvalidArgument("state index " + std::to_string(s) + " out of range");
    return std::span<const double>(values_).subspan(
        static_cast<std::size_t>(s - first_) * frame_size_, frame_size_);
}

StateSequence StateSequence::slice(int from, int to) const {
    if (from > to || !contains(from) || !contains(to))
        throw InvalidArgument("slice [" + std::to_string(from) + ", " + std::to_string(to) +
                              "] outside sequence range");
    const auto begin = values_.begin() + static_cast<std::ptrdiff_t>((from - first_) * frame_size_);
    const auto end = values_.begin() + static_cast<std::ptrdiff_t>((to - first_ + 1) * frame_size_);
    return StateSequence(from, static_cast<std::size_t>(to - from + 1), shape_,
                         std::vector<double>(begin, end));
}

StateSequence StateSequence::reindexed(int first) const {
    StateSequence out = *this;
    out.first_ = first;
    return out;
}

StateSequence StateSequence::concat(const StateSequence& head, const StateSequence& tail) {
    if (head.empty()) return tail;
    if (tail.empty()) return head;
    if (head.shape_ != tail.shape_)
        throw ShapeMismatch("concat: frame shapes " + shape_to_string(head.shape_) + " and " +
                            shape_to_string(tail.shape_) + " differ");
    if (tail.first_ != head.last() + 1)
        throw InvalidArgument("concat: index ranges are not contiguous");
    std::vector<double> values;
    values.reserve(head.values_.size() + tail.values_.size());
    values.insert(values.end(), head.values_.begin(), head.values_.end());
    values.insert(values.end(), tail.values_.begin(), tail.values_.end());
    return StateSequence(head.first_, head.count_ + tail.count_, head.shape_, std::move(values));
}

void require_same_layout(const StateSequence& a, const StateSequence& b, const char* what) {
    if (!a.same_layout(b))
        throw ShapeMismatch(std::string(what) + ": sequences over [" + std::to_string(a.first()) +
                            ", " + std::to_string(a.last()) + "] " + shape_to_string(a.shape()) +
                            " and [" + std::to_string(b.first()) + ", " + std::to_string(b.last()) +
                            "] " + shape_to_string(b.shape()) + " do not match");
}

void require_finite(std::span<const double> values, const std::string& where) {
    const auto bad = std::find_if(values.begin(), values.end(),
                                  [](double v) { return !std::isfinite(v); });
    if (bad != values.end())
        throw NumericFailure(where, "non-finite value at " + where + " (element " +
                                        std::to_string(bad - values.begin()) + ")");
}

}  // namespace dydiff
