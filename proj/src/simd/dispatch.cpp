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

#include <atomic>
#include <cassert>

#include "dydiff/common.hpp"
#include "kernels_internal.hpp"

namespace dydiff::simd {
namespace {

bool cpu_has_avx2() {
#if defined(DYDIFF_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

const KernelTable* table_for(Isa isa) {
    switch (isa) {
    case Isa::scalar:
        return &detail::scalar_table();
    case Isa::avx2:
#if defined(DYDIFF_HAVE_AVX2)
        if (cpu_has_avx2()) return &detail::avx2_table();
#endif
        return nullptr;
    case Isa::neon:
#if defined(DYDIFF_HAVE_NEON)
        return &detail::neon_table();
#else
        return nullptr;
#endif
    }
    return nullptr;
}

std::atomic<Isa>& active_slot() {
    static std::atomic<Isa> slot{detected_isa()};
    return slot;
}

const KernelTable& active() { return *table_for(active_slot().load(std::memory_order_relaxed)); }

}  // namespace

std::string_view isa_name(Isa isa) {
    switch (isa) {
    case Isa::scalar: return "scalar";
    case Isa::avx2: return "avx2";
    case Isa::neon: return "neon";
    }
    return "unknown";
}

Isa detected_isa() {
    if (table_for(Isa::avx2)) return Isa::avx2;
    if (table_for(Isa::neon)) return Isa::neon;
    return Isa::scalar;
}

bool isa_available(Isa isa) { return table_for(isa) != nullptr; }

Isa active_isa() { return active_slot().load(std::memory_order_relaxed); }

void force_isa(Isa isa) {
    if (!isa_available(isa))
        throw InvalidArgument("SIMD variant '" + std::string(isa_name(isa)) +
                              "' is not available on this machine");
    active_slot().store(isa, std::memory_order_relaxed);
}

const KernelTable& kernels(Isa isa) {
    const KernelTable* table = table_for(isa);
    if (!table)
        throw InvalidArgument("SIMD variant '" + std::string(isa_name(isa)) +
                              "' is not available on this machine");
    return *table;
}

void axpby(double a, std::span<const double> x, double b, std::span<const double> y,
           std::span<double> out) {
    assert(x.size() == out.size() && y.size() == out.size());
    active().axpby(a, x.data(), b, y.data(), out.data(), out.size());
}

void axpy(double a, std::span<const double> x, std::span<double> y) {
    assert(x.size() == y.size());
    active().axpy(a, x.data(), y.data(), y.size());
}

void unmix(std::span<const double> d, double c, std::span<const double> prev, double g,
           std::span<double> out) {
    assert(d.size() == out.size() && prev.size() == out.size());
    active().unmix(d.data(), c, prev.data(), g, out.data(), out.size());
}

void scale(double a, std::span<double> x) { active().scale(a, x.data(), x.size()); }

double dot(std::span<const double> x, std::span<const double> y) {
    assert(x.size() == y.size());
    return active().dot(x.data(), y.data(), x.size());
}

double sum_sq(std::span<const double> x) { return active().sum_sq(x.data(), x.size()); }

double sum_sq_diff(std::span<const double> x, std::span<const double> y) {
    assert(x.size() == y.size());
    return active().sum_sq_diff(x.data(), y.data(), x.size());
}

}  // namespace dydiff::simd
