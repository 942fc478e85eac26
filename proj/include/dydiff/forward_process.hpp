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

#include <utility>
#include <vector>

#include "dydiff/rng.hpp"
#include "dydiff/schedule.hpp"
#include "dydiff/sequence.hpp"

namespace dydiff {

/// Temporally correlated Gaussian noise over states 1..S: the dynamics
/// mixture of independent draws `eps`, seeded at s = 1 (eps_tilde[1] = eps[1]).
/// Cov(eps_tilde[i], eps_tilde[k]) = sqrt(1 - gamma_bar)^|i - k| per element.
struct CorrelatedNoise {
    StateSequence eps_tilde;
    StateSequence eps;
    double gamma_bar = 1.0;
};

/// Noisy latents x_t over states 1..S at diffusion timestep t.
struct LatentBlock {
    StateSequence latents;
    int t = 0;
};

/// Isotropic Gaussian: every element shares `var`.
struct PosteriorGaussian {
    StateSequence mean;
    double var = 0.0;
};

/// Single-state Markov transition x_t = coef * x_{t_prev} + offset + sqrt(var) * z.
struct MarkovTransition {
    double coef = 1.0;
    std::vector<double> offset;
    double var = 0.0;
};

/// Correlates fixed independent draws (indices 1..S).
CorrelatedNoise correlate_noise(StateSequence eps, double gamma_bar);

/// Draws S * frame_size independent normals from `rng` (state-major order)
/// and correlates them.
CorrelatedNoise sample_correlated_noise(std::size_t S, const FrameShape& shape, double gamma_bar,
                                        Rng& rng);

/// Deterministic part of the forward process:
///   x_t[1..S] = sqrt(ab_t) * dynamics(x[-P..S], gb_t)[1..S] + sqrt(1 - ab_t) * noise.
/// `noise` must span 1..S. At t = 0 this returns the clean targets.
LatentBlock forward_latents(const SequenceWindow& window, int t, const Schedule& schedule,
                            const StateSequence& noise);

/// Samples correlated noise and the corresponding latents. t must lie in [0, T].
std::pair<LatentBlock, CorrelatedNoise> forward_sample(const SequenceWindow& window, int t,
                                                       const Schedule& schedule, Rng& rng);

/// Markov transition between the (possibly strided) timesteps t_prev < t for
/// a single prediction state, given observations over -P..0.
MarkovTransition markov_transition(const StateSequence& observations, int t_prev, int t,
                                   const Schedule& schedule);

/// One step of the single-state Markovian forward chain t-1 -> t.
LatentBlock markov_forward_step(const LatentBlock& x_prev, const StateSequence& observations,
                                int t, const Schedule& schedule, Rng& rng);

/// q(x_{t_prev} | x_t, x_pred, observations) for a single prediction state,
/// obtained by conditioning the joint Gaussian of (x_{t_prev}, x_t) implied
/// by the Markovian chain. `x_pred` is the clean-state estimate over 1..1.
/// `t_prev` defaults to t - 1.
PosteriorGaussian posterior(const LatentBlock& x_t, const StateSequence& x_pred,
                            const StateSequence& observations, int t, const Schedule& schedule,
                            int t_prev = -1);

/// Standard (gamma = 1, no history) diffusion posterior q(y_{t_prev} | y_t, y_0)
/// for one frame. Returns the mean in `mean`, variance as the return value.
double standard_posterior(std::span<const double> y_t, std::span<const double> y0, int t,
                          int t_prev, const Schedule& schedule, std::span<double> mean);

/// y[1] = x[1], y[s] = (x[s] - sqrt(1 - gb) * x[s-1]) / sqrt(gb). Removes the
/// temporal coupling of the latents so each y[s] is a standard diffusion latent.
StateSequence decorrelate(const LatentBlock& x_t, double gamma_bar);

/// Inverse of decorrelate.
LatentBlock recorrelate(const StateSequence& y, double gamma_bar, int t);

}  // namespace dydiff
