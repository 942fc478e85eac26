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

#include <cmath>

#include "dydiff/common.hpp"
#include "dydiff/metrics.hpp"
#include "support.hpp"

using namespace dydiff;

TEST_SUITE("metrics") {

TEST_CASE("sample CRPS of small ensembles") {
    std::vector<double> one{2.0};
    CHECK(crps_sample(one, 0.5) == doctest::Approx(1.5));
    std::vector<double> two{0.0, 2.0};
    // mean |x - y| = 1, spread term = |0 - 2| * 2 / (2 * 4) = 0.5
    CHECK(crps_sample(two, 1.0) == doctest::Approx(0.5));
    std::vector<double> same{3.0, 3.0, 3.0};
    CHECK(crps_sample(same, 3.0) == 0.0);
}

TEST_CASE("closed-form Gaussian CRPS") {
    CHECK(gaussian_crps(0.0, 1.0, 0.0) == doctest::Approx(0.2336949772551).epsilon(1e-10));
    CHECK(gaussian_crps(0.0, 2.0, 0.0) == doctest::Approx(2 * 0.2336949772551).epsilon(1e-10));
    CHECK_THROWS_AS(gaussian_crps(0.0, 0.0, 1.0), InvalidArgument);
}

TEST_CASE("sample CRPS approaches the Gaussian value") {
    Rng rng(4);
    std::vector<double> members(20000);
    for (double& v : members) v = 1.0 + 0.5 * rng.normal();
    CHECK(crps_sample(members, 1.3) == doctest::Approx(gaussian_crps(1.0, 0.5, 1.3)).epsilon(0.02));
}

TEST_CASE("perfect ensembles score zero") {
    const StateSequence truth(1, 2, {4, 4}, std::vector<double>(32, 0.7));
    std::vector<StateSequence> members(3, truth);
    CHECK(crps_ensemble(members, truth, Pool::none, 1) == 0.0);
    CHECK(crps_ensemble(members, truth, Pool::avg, 2) == 0.0);
    CHECK(csi(truth, truth, 0.5, 1) == 1.0);
    CHECK(std::isinf(psnr(truth.values(), truth.values(), 1.0)));
    CHECK_THROWS_AS(crps_ensemble(std::vector<StateSequence>(1, truth), truth, Pool::none, 1), InvalidArgument);
    CHECK_THROWS_AS(crps_ensemble(members, truth, Pool::avg, 5), InvalidArgument);
}

TEST_CASE("pooling windows") {
    const StateSequence s(1, 1, {3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
    CHECK(pool_sequence(s, Pool::avg, 2) == std::vector<double>{3, 4, 6, 7});
    CHECK(pool_sequence(s, Pool::max, 2) == std::vector<double>{5, 6, 8, 9});
    CHECK(pool_sequence(s, Pool::max, 3) == std::vector<double>{9});
    CHECK(pool_sequence(s, Pool::none, 3).size() == 9);
    const StateSequence flat(1, 1, {4}, {1, 2, 3, 4});
    CHECK_THROWS_AS(pool_sequence(flat, Pool::avg, 2), InvalidArgument);
    CHECK(parse_pool("max") == Pool::max);
    CHECK_THROWS_AS(parse_pool("median"), InvalidArgument);
}

TEST_CASE("contingency table and CSI") {
    const StateSequence pred(1, 1, {2, 2}, {1.0, 1.0, 0.0, 0.0});
    const StateSequence truth(1, 1, {2, 2}, {1.0, 0.0, 1.0, 0.0});
    const auto c = contingency(pred, truth, 0.5, 1);
    CHECK(c.hits == 1);
    CHECK(c.false_alarms == 1);
    CHECK(c.misses == 1);
    CHECK(c.correct_negatives == 1);
    CHECK(csi(c) == doctest::Approx(1.0 / 3.0));
    CHECK(csi(Contingency{}) == 1.0);
    const StateSequence at(1, 1, {2, 2}, {0.5, 0.0, 0.0, 0.0});
    CHECK(contingency(at, at, 0.5, 1).hits == 1);
    const auto pooled = contingency(pred, truth, 0.5, 2, Pool::avg);
    CHECK(pooled.hits == 1);
    CHECK(pooled.hits + pooled.misses + pooled.false_alarms + pooled.correct_negatives == 1);
}

TEST_CASE("PSNR") {
    const std::vector<double> a{0.0, 0.0}, b{0.1, -0.1};
    CHECK(psnr(a, b, 1.0) == doctest::Approx(20.0));
    CHECK(psnr(a, b, 10.0) == doctest::Approx(40.0));
    CHECK_THROWS_AS(psnr(a, std::vector<double>{1.0}, 1.0), ShapeMismatch);
    CHECK_THROWS_AS(psnr(a, b, 0.0), InvalidArgument);
}

TEST_CASE("summed CRPS") {
    const StateSequence truth(1, 2, {2}, {1.0, 1.0, -0.5, 0.5});
    const std::vector<StateSequence> members{StateSequence(1, 2, {2}, {1.0, 1.0, 0.0, 0.0}),
                                             StateSequence(1, 2, {2}, {1.0, 1.0, 0.0, 0.0})};
    const auto r = crps_sum(members, truth);
    CHECK(r.normalized);
    CHECK(r.value == doctest::Approx(0.0));
    const std::vector<StateSequence> off{StateSequence(1, 2, {2}, {2.0, 2.0, 1.0, 1.0}),
                                         StateSequence(1, 2, {2}, {2.0, 2.0, 1.0, 1.0})};
    // per-state sums: truth (2, 0), forecast (4, 2): CRPS 2 + 2, normaliser |2| + |0|
    CHECK(crps_sum(off, truth).value == doctest::Approx(2.0));
    const StateSequence zero(1, 2, {2}, {1.0, -1.0, 0.0, 0.0});
    // per-state sums: truth (0, 0), forecast (4, 2): raw CRPS 4 + 2
    const auto z = crps_sum(off, zero);
    CHECK_FALSE(z.normalized);
    CHECK(z.value == doctest::Approx(6.0));
}

TEST_CASE("quantile") {
    CHECK(quantile({4, 1, 3, 2}, 0.0) == 1.0);
    CHECK(quantile({4, 1, 3, 2}, 1.0) == 4.0);
    CHECK(quantile({4, 1, 3, 2}, 0.5) == doctest::Approx(2.5));
    CHECK(quantile({0, 10}, 0.9) == doctest::Approx(9.0));
    CHECK_THROWS_AS(quantile({}, 0.5), InvalidArgument);
}

}
