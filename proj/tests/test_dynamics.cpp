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

#include "doctest.h"

#include "dydiff/common.hpp"
#include "dydiff/dynamics.hpp"
#include "support.hpp"

using namespace dydiff;

TEST_SUITE("dynamics") {

TEST_CASE("hand-computed mixture") {
    const StateSequence x(1, 3, {1}, {1.0, 2.0, 4.0});
    const auto d = dynamics(x, 0.25);
    CHECK(d.frame(1)[0] == doctest::Approx(1.0));
    CHECK(d.frame(2)[0] == doctest::Approx(1.8660254037844386).epsilon(1e-14));
    CHECK(d.frame(3)[0] == doctest::Approx(3.6160254037844384).epsilon(1e-14));
    CHECK(d.first() == 1);
    const auto back = inverse_dynamics(d, 0.25);
    CHECK(testing::max_abs_diff(back, x) < 1e-14);
}

TEST_CASE("gamma_bar = 1 is the identity") {
    Rng rng(2);
    const auto x = testing::random_sequence(rng, -2, 6, {2, 3});
    CHECK(dynamics(x, 1.0) == x);
    CHECK(inverse_dynamics(x, 1.0) == x);
}

TEST_CASE("round trip on random sequences") {
    Rng rng(17);
    for (int trial = 0; trial < 200; ++trial) {
        const auto len = static_cast<std::size_t>(rng.uniform_int(1, 40));
        const double gb = 0.1 + 0.9 * rng.uniform();
        const auto x = testing::random_sequence(rng, static_cast<int>(rng.uniform_int(-5, 2)), len, {3});
        const auto d = dynamics(x, gb);
        CHECK(d.same_layout(x));
        CHECK(testing::max_abs_diff(inverse_dynamics(d, gb), x) < 1e-9);
        CHECK(testing::max_abs_diff(dynamics(inverse_dynamics(x, gb), gb), x) < 1e-9);
    }
}

TEST_CASE("dynamics is linear") {
    Rng rng(4);
    const auto a = testing::random_sequence(rng, 0, 5, {2});
    const auto b = testing::random_sequence(rng, 0, 5, {2});
    StateSequence sum(0, 5, {2});
    for (std::size_t i = 0; i < sum.values().size(); ++i) sum.values()[i] = 2.0 * a.values()[i] - b.values()[i];
    const auto da = dynamics(a, 0.4), db = dynamics(b, 0.4), ds = dynamics(sum, 0.4);
    for (std::size_t i = 0; i < ds.values().size(); ++i)
        CHECK(ds.values()[i] == doctest::Approx(2.0 * da.values()[i] - db.values()[i]));
}

TEST_CASE("dynamics_last equals the last frame of the mixture") {
    Rng rng(8);
    const auto x = testing::random_sequence(rng, -3, 4, {5});
    const auto last = dynamics_last(x, 0.6);
    const auto full = dynamics(x, 0.6);
    CHECK(testing::max_abs_diff(last, full.frame(0)) < 1e-15);
}

TEST_CASE("invalid arguments") {
    const StateSequence x(1, 2, {1}, {1.0, 2.0});
    CHECK_THROWS_AS(dynamics(StateSequence{}, 0.5), InvalidArgument);
    CHECK_THROWS_AS(dynamics(x, 0.0), InvalidArgument);
    CHECK_THROWS_AS(dynamics(x, 1.5), InvalidArgument);
    CHECK_THROWS_AS(inverse_dynamics(x, 0.0), InvalidArgument);
    CHECK_THROWS_AS(inverse_dynamics(x, kMinGammaBar / 2), InvalidArgument);
    CHECK_NOTHROW(inverse_dynamics(x, kMinGammaBar));
}

}
