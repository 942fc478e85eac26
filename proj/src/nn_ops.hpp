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

// Layer primitives shared by the reference denoiser architectures. Weights are
// row-major [out][in]; convolutions are 3x3 with periodic padding.

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "dydiff/simd.hpp"

namespace dydiff::nn {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline void silu(std::span<const double> x, std::span<double> out) {
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * sigmoid(x[i]);
}

// d_in = d_out * silu'(x)
inline void silu_backward(std::span<const double> x, std::span<const double> d_out,
                          std::span<double> d_in) {
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double s = sigmoid(x[i]);
        d_in[i] = d_out[i] * s * (1.0 + x[i] * (1.0 - s));
    }
}

// out = W x + b, W is [rows][cols].
inline void dense_forward(const double* w, const double* b, std::span<const double> x,
                          std::span<double> out) {
    const std::size_t cols = x.size();
    for (std::size_t r = 0; r < out.size(); ++r)
        out[r] = simd::dot({w + r * cols, cols}, x) + b[r];
}

// gW += d_out x^T, gb += d_out, and (optionally) d_x += W^T d_out.
inline void dense_backward(const double* w, std::span<const double> x, std::span<const double> d_out,
                           double* gw, double* gb, std::span<double> d_x) {
    const std::size_t cols = x.size();
    for (std::size_t r = 0; r < d_out.size(); ++r) {
        const double g = d_out[r];
        if (g == 0.0) continue;
        simd::axpy(g, x, {gw + r * cols, cols});
        gb[r] += g;
        if (!d_x.empty()) simd::axpy(g, {w + r * cols, cols}, d_x);
    }
}

struct Grid {
    std::size_t height;
    std::size_t width;
    std::size_t plane() const { return height * width; }
};

// shifted[(k * channels + c) * N + p] = in[c][p shifted by offset k], k = (dy+1)*3 + (dx+1).
inline void build_shifted(std::span<const double> in, std::size_t channels, Grid g,
                          std::vector<double>& shifted) {
    const std::size_t n = g.plane();
    shifted.resize(9 * channels * n);
    for (std::size_t k = 0; k < 9; ++k) {
        const std::size_t dy = k / 3;  // 0, 1, 2 means offset -1, 0, +1
        const std::size_t dx = k % 3;
        for (std::size_t c = 0; c < channels; ++c) {
            const double* src = in.data() + c * n;
            double* dst = shifted.data() + (k * channels + c) * n;
            for (std::size_t y = 0; y < g.height; ++y) {
                const std::size_t sy = (y + g.height + dy - 1) % g.height;
                for (std::size_t x = 0; x < g.width; ++x) {
                    const std::size_t sx = (x + g.width + dx - 1) % g.width;
                    dst[y * g.width + x] = src[sy * g.width + sx];
                }
            }
        }
    }
}

// Scatter-add the gradient w.r.t. shifted planes back onto the unshifted input.
inline void unshift_accumulate(std::span<const double> d_shifted, std::size_t channels, Grid g,
                               std::span<double> d_in) {
    const std::size_t n = g.plane();
    for (std::size_t k = 0; k < 9; ++k) {
        const std::size_t dy = k / 3;
        const std::size_t dx = k % 3;
        for (std::size_t c = 0; c < channels; ++c) {
            const double* src = d_shifted.data() + (k * channels + c) * n;
            double* dst = d_in.data() + c * n;
            for (std::size_t y = 0; y < g.height; ++y) {
                const std::size_t sy = (y + g.height + dy - 1) % g.height;
                for (std::size_t x = 0; x < g.width; ++x) {
                    const std::size_t sx = (x + g.width + dx - 1) % g.width;
                    dst[sy * g.width + sx] += src[y * g.width + x];
                }
            }
        }
    }
}

// out[o] = b[o] + sum_{c,k} w[o][c][k] * shifted[k][c]; weight layout [out][in][3][3].
inline void conv_forward(const double* w, const double* b, std::span<const double> shifted,
                         std::size_t in_ch, std::size_t out_ch, Grid g, std::span<double> out) {
    const std::size_t n = g.plane();
    for (std::size_t o = 0; o < out_ch; ++o) {
        std::span<double> dst = out.subspan(o * n, n);
        std::fill(dst.begin(), dst.end(), b[o]);
        for (std::size_t c = 0; c < in_ch; ++c)
            for (std::size_t k = 0; k < 9; ++k)
                simd::axpy(w[(o * in_ch + c) * 9 + k], shifted.subspan((k * in_ch + c) * n, n), dst);
    }
}

// Accumulates weight/bias gradients; when d_shifted is non-empty also
// accumulates the gradient w.r.t. the shifted input planes.
inline void conv_backward(const double* w, std::span<const double> shifted,
                          std::span<const double> d_out, std::size_t in_ch, std::size_t out_ch,
                          Grid g, double* gw, double* gb, std::span<double> d_shifted) {
    const std::size_t n = g.plane();
    for (std::size_t o = 0; o < out_ch; ++o) {
        std::span<const double> dy = d_out.subspan(o * n, n);
        double sum = 0.0;
        for (double v : dy) sum += v;
        gb[o] += sum;
        for (std::size_t c = 0; c < in_ch; ++c)
            for (std::size_t k = 0; k < 9; ++k) {
                const std::size_t idx = (o * in_ch + c) * 9 + k;
                const std::size_t plane = (k * in_ch + c) * n;
                gw[idx] += simd::dot(dy, shifted.subspan(plane, n));
                if (!d_shifted.empty()) simd::axpy(w[idx], dy, d_shifted.subspan(plane, n));
            }
    }
}

}  // namespace dydiff::nn
