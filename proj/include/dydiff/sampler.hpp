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

#include <functional>
#include <string>
#include <vector>

#include "dydiff/denoiser.hpp"
#include "dydiff/forward_process.hpp"
#include "dydiff/rng.hpp"
#include "dydiff/schedule.hpp"
#include "dydiff/sequence.hpp"

namespace dydiff {

enum class SamplerKind { dydiff_ddim, dydiff_ddpm, dpm_ddim, dpm_ddpm };

std::string to_string(SamplerKind kind);  // "dydiff-ddim", ...
SamplerKind parse_sampler_kind(const std::string& name);
bool is_dydiff(SamplerKind kind);

struct SamplerConfig {
    SamplerKind kind = SamplerKind::dydiff_ddim;
    int num_steps = 50;           // strided subset of 1..T
    bool stochastic = false;      // ddim kinds: inject sigma noise
    bool independent_noise = false;  // model was trained on raw (uncorrelated) noise
};

/// eps_theta(x_t[1..S], x_0[-P..0], t).
using NoisePredictor =
    std::function<StateSequence(const StateSequence& noisy, const StateSequence& observations, int t)>;

NoisePredictor model_predictor(const Denoiser& model, const DenoiserParams& params);

/// Latents visited during one reverse trajectory: entry i is x at timesteps[i],
/// the last entry is the returned x_0.
struct LatentTrace {
    std::vector<int> timesteps;
    std::vector<StateSequence> latents;
};

/// Clean-state estimate at timestep t: x_pred over -P..S and the decorrelated
/// noise estimate over 1..S.
struct CleanEstimate {
    StateSequence x_pred;
    StateSequence eps_pred;
};

/// Strips the dynamics mixing from x_t given the predicted correlated noise.
CleanEstimate predict_clean(const StateSequence& x_t, const StateSequence& eps_hat,
                            const StateSequence& observations, int t, const Schedule& schedule);

/// Single-state closed form of the clean estimate.
StateSequence predict_x0_single(const StateSequence& x_t, const StateSequence& eps_hat,
                                const StateSequence& observations, int t, const Schedule& schedule);

/// Ancestral step t -> t_prev for S = 1 via the forward-process posterior.
/// `deterministic` returns the posterior mean. t_prev defaults to t - 1.
LatentBlock ddpm_step_single(const LatentBlock& x_t, const StateSequence& eps_hat,
                             const StateSequence& observations, const Schedule& schedule, Rng& rng,
                             int t_prev = -1, bool deterministic = false);

/// Full reverse trajectory from pure noise over states 1..S, frames shaped like
/// the observations. The first S * frame_size draws of
/// `rng` form the initial noise; every step then draws S * frame_size more when
/// it is stochastic.
StateSequence sample(const NoisePredictor& predictor, const StateSequence& observations, int S,
                     const Schedule& schedule, const SamplerConfig& config, Rng& rng,
                     LatentTrace* trace = nullptr);

/// Reverse trajectory from a given latent at x_start.t, using num_steps
/// evenly spaced timesteps in [1, x_start.t] followed by 0.
StateSequence denoise_from(const NoisePredictor& predictor, const LatentBlock& x_start,
                           const StateSequence& observations, const Schedule& schedule,
                           const SamplerConfig& config, Rng& rng, LatentTrace* trace = nullptr);

/// Mean over elements of (x_t[s] / sqrt(ab_t) - x_0[s])^2 for every traced t > 0,
/// in trace order.
std::vector<double> latent_error_curve(const LatentTrace& trace, const Schedule& schedule, int state);

}  // namespace dydiff
