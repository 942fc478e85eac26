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
#include <cstring>

#include "dydiff/common.hpp"
#include "dydiff/simd.hpp"
#include "support.hpp"

namespace simd = dydiff::simd;

namespace {

std::vector<simd::Isa> available_vector_isas() {
    std::vector<simd::Isa> out;
    for (auto isa : {simd::Isa::avx2, simd::Isa::neon})
        if (simd::isa_available(isa)) out.push_back(isa);
    return out;
}

bool bitwise_equal(const std::vector<double>& a, const std::vector<double>& b) {
    return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST_SUITE("simd") {

TEST_CASE("scalar kernels are always available") {
    CHECK(simd::isa_available(simd::Isa::scalar));
    CHECK(simd::isa_available(simd::detected_isa()));
    CHECK(simd::isa_name(simd::Isa::scalar) == "scalar");
}

TEST_CASE("vector kernels match the scalar reference") {
    const auto& ref = simd::kernels(simd::Isa::scalar);
    dydiff::Rng rng(31);
    for (auto isa : available_vector_isas()) {
        CAPTURE(simd::isa_name(isa));
        const auto& k = simd::kernels(isa);
        for (std::size_t n : {0u, 1u, 3u, 4u, 5u, 7u, 8u, 9u, 16u, 31u, 64u, 67u, 1000u}) {
            for (std::size_t offset : {0u, 1u}) {
                CAPTURE(n);
                CAPTURE(offset);
                auto x = rng.normals(n + offset), y = rng.normals(n + offset), p = rng.normals(n + offset);
                const double* xs = x.data() + offset;
                const double* ys = y.data() + offset;
                const double* ps = p.data() + offset;
                std::vector<double> r1(n), r2(n);

                ref.axpby(0.3, xs, -1.7, ys, r1.data(), n);
                k.axpby(0.3, xs, -1.7, ys, r2.data(), n);
                CHECK(bitwise_equal(r1, r2));

                r1.assign(ys, ys + n);
                r2 = r1;
                ref.axpy(2.5, xs, r1.data(), n);
                k.axpy(2.5, xs, r2.data(), n);
                CHECK(bitwise_equal(r1, r2));

                ref.unmix(xs, 0.6, ps, 0.8, r1.data(), n);
                k.unmix(xs, 0.6, ps, 0.8, r2.data(), n);
                CHECK(bitwise_equal(r1, r2));

                r1.assign(xs, xs + n);
                r2 = r1;
                ref.scale(-0.37, r1.data(), n);
                k.scale(-0.37, r2.data(), n);
                CHECK(bitwise_equal(r1, r2));

                const double tol = 1e-12 * (1.0 + static_cast<double>(n));
                CHECK(std::fabs(ref.dot(xs, ys, n) - k.dot(xs, ys, n)) <= tol);
                CHECK(std::fabs(ref.sum_sq(xs, n) - k.sum_sq(xs, n)) <= tol);
                CHECK(std::fabs(ref.sum_sq_diff(xs, ys, n) - k.sum_sq_diff(xs, ys, n)) <= tol);
            }
        }
    }
}

TEST_CASE("dispatch can be forced and restored") {
    const auto original = simd::active_isa();
    simd::force_isa(simd::Isa::scalar);
    CHECK(simd::active_isa() == simd::Isa::scalar);
    std::vector<double> x{1, 2, 3}, y{4, 5, 6}, out(3);
    simd::axpby(2.0, x, 1.0, y, out);
    CHECK(out == std::vector<double>{6, 9, 12});
    CHECK(simd::dot(x, y) == 32.0);
    CHECK(simd::sum_sq_diff(x, y) == 27.0);
    simd::force_isa(original);
    CHECK(simd::active_isa() == original);
    if (!simd::isa_available(simd::Isa::neon))
        CHECK_THROWS_AS(simd::force_isa(simd::Isa::neon), dydiff::InvalidArgument);
}

TEST_CASE("unmix inverts a mixture exactly for exact coefficients") {
    std::vector<double> prev{1.0, -2.0}, d{1.5, 0.0}, out(2);
    simd::unmix(d, 0.5, prev, 2.0, out);
    CHECK(out[0] == doctest::Approx(0.5));
    CHECK(out[1] == doctest::Approx(0.5));
}

}
