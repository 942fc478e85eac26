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

// aarch64 Advanced SIMD variant. Built only when targeting aarch64.
#include "kernels_internal.hpp"

#if defined(DYDIFF_HAVE_NEON)
#include <arm_neon.h>

namespace dydiff::simd::detail {
namespace {

void axpby_neon(double a, const double* x, double b, const double* y, double* out,
                std::size_t n) {
    const float64x2_t va = vdupq_n_f64(a);
    const float64x2_t vb = vdupq_n_f64(b);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        const float64x2_t ax = vmulq_f64(va, vld1q_f64(x + i));
        const float64x2_t by = vmulq_f64(vb, vld1q_f64(y + i));
        vst1q_f64(out + i, vaddq_f64(ax, by));
    }
    for (; i < n; ++i) out[i] = a * x[i] + b * y[i];
}

void axpy_neon(double a, const double* x, double* y, std::size_t n) {
    const float64x2_t va = vdupq_n_f64(a);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2)
        vst1q_f64(y + i, vaddq_f64(vld1q_f64(y + i), vmulq_f64(va, vld1q_f64(x + i))));
    for (; i < n; ++i) y[i] += a * x[i];
}

void unmix_neon(const double* d, double c, const double* prev, double g, double* out,
                std::size_t n) {
    const float64x2_t vc = vdupq_n_f64(c);
    const float64x2_t vg = vdupq_n_f64(g);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        const float64x2_t diff = vsubq_f64(vld1q_f64(d + i), vmulq_f64(vc, vld1q_f64(prev + i)));
        vst1q_f64(out + i, vdivq_f64(diff, vg));
    }
    for (; i < n; ++i) out[i] = (d[i] - c * prev[i]) / g;
}

void scale_neon(double a, double* x, std::size_t n) {
    const float64x2_t va = vdupq_n_f64(a);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) vst1q_f64(x + i, vmulq_f64(va, vld1q_f64(x + i)));
    for (; i < n; ++i) x[i] *= a;
}

double dot_neon(const double* x, const double* y, std::size_t n) {
    float64x2_t acc0 = vdupq_n_f64(0.0);
    float64x2_t acc1 = vdupq_n_f64(0.0);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        acc0 = vfmaq_f64(acc0, vld1q_f64(x + i), vld1q_f64(y + i));
        acc1 = vfmaq_f64(acc1, vld1q_f64(x + i + 2), vld1q_f64(y + i + 2));
    }
    double acc = vaddvq_f64(vaddq_f64(acc0, acc1));
    for (; i < n; ++i) acc += x[i] * y[i];
    return acc;
}

double sum_sq_neon(const double* x, std::size_t n) { return dot_neon(x, x, n); }

double sum_sq_diff_neon(const double* x, const double* y, std::size_t n) {
    float64x2_t acc = vdupq_n_f64(0.0);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        const float64x2_t d = vsubq_f64(vld1q_f64(x + i), vld1q_f64(y + i));
        acc = vfmaq_f64(acc, d, d);
    }
    double total = vaddvq_f64(acc);
    for (; i < n; ++i) {
        const double d = x[i] - y[i];
        total += d * d;
    }
    return total;
}

}  // namespace

const KernelTable& neon_table() {
    static const KernelTable table{axpby_neon, axpy_neon,  unmix_neon,      scale_neon,
                                   dot_neon,   sum_sq_neon, sum_sq_diff_neon};
    return table;
}

}  // namespace dydiff::simd::detail
#endif
