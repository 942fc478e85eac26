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

// Runtime-dispatched arithmetic kernels. Every kernel has a scalar reference
// implementation; AVX2 (x86-64) and NEON (aarch64) variants are selected once
// at startup from CPU feature detection and can be overridden for testing.
//
// Elementwise kernels are bitwise identical across ISAs (no fused
// multiply-add, IEEE mul/add/div only). Reductions (dot, sum_sq, sum_sq_diff)
// use multiple accumulators and differ from the scalar order by rounding.

#include <cstddef>
#include <span>
#include <string_view>

namespace dydiff::simd {

enum class Isa { scalar, avx2, neon };

std::string_view isa_name(Isa isa);

/// Best ISA the running CPU supports among those compiled in.
Isa detected_isa();

/// ISA currently used by the dispatching kernels below.
Isa active_isa();

/// Override dispatch. Throws InvalidArgument if `isa` is unavailable here.
void force_isa(Isa isa);

bool isa_available(Isa isa);

// out = a*x + b*y
void axpby(double a, std::span<const double> x, double b, std::span<const double> y,
           std::span<double> out);

// y += a*x
void axpy(double a, std::span<const double> x, std::span<double> y);

// out = (d - c*prev) / g
void unmix(std::span<const double> d, double c, std::span<const double> prev, double g,
           std::span<double> out);

// x *= a
void scale(double a, std::span<double> x);

double dot(std::span<const double> x, std::span<const double> y);
double sum_sq(std::span<const double> x);
double sum_sq_diff(std::span<const double> x, std::span<const double> y);

/// Function table for one ISA. Exposed so equivalence tests can call two
/// variants side by side without touching global dispatch state.
struct KernelTable {
    void (*axpby)(double, const double*, double, const double*, double*, std::size_t);
    void (*axpy)(double, const double*, double*, std::size_t);
    void (*unmix)(const double*, double, const double*, double, double*, std::size_t);
    void (*scale)(double, double*, std::size_t);
    double (*dot)(const double*, const double*, std::size_t);
    double (*sum_sq)(const double*, std::size_t);
    double (*sum_sq_diff)(const double*, const double*, std::size_t);
};

/// Kernel table for `isa`. Throws InvalidArgument if unavailable.
const KernelTable& kernels(Isa isa);

}  // namespace dydiff::simd
