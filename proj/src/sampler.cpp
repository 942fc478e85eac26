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

#include "dydiff/sampler.hpp"

#include <algorithm>
#include <cmath>

#include "dydiff/dynamics.hpp"
#include "dydiff/simd.hpp"

namespace dydiff {

std::string to_string(SamplerKind kind) {
    switch (kind) {
        case SamplerKind::dydiff_ddim: return "dydiff-ddim";
        case SamplerKind::dydiff_ddpm: return "dydiff-ddpm";
        case SamplerKind::dpm_ddim: return "dpm-ddim";
        case SamplerKind::dpm_ddpm: return "dpm-ddpm";
    }
    return "unknown";
}

SamplerKind parse_sampler_kind(const std::string& name) {
    for (auto k : {SamplerKind::dydiff_ddim, SamplerKind::dydiff_ddpm, SamplerKind::dpm_ddim,
                   SamplerKind::dpm_ddpm})
        if (to_string(k) == name) return k;
    throw InvalidArgument("unknown sampler '" + name +
                          "' (expected dydiff-ddim, dydiff-ddpm, dpm-ddim or dpm-ddpm)");
}

bool is_dydiff(SamplerKind kind) {
    return kind == SamplerKind::dydiff_ddim || kind == SamplerKind::dydiff_ddpm;
}

NoisePredictor model_predictor(const Denoiser& model, const DenoiserParams& params) {
    return [&model, &params](const StateSequence& noisy, const StateSequence& obs, int t) {
        return model.predict_noise(params, DenoiserInput{noisy, obs, t});
    };
}

CleanEstimate predict_clean(const StateSequence& x_t, const StateSequence& eps_hat,
                            const StateSequence& observations, int t, const Schedule& schedule) {
    require_same_layout(x_t, eps_hat, "predict_clean");
    if (x_t.first() != 1) throw InvalidArgument("latents must start at s = 1");
    if (t < 1 || t > schedule.T()) throw InvalidArgument("timestep outside [1, T]");
    const double ab = schedule.alpha_bar(t);
    const double gb = schedule.gamma_bar(t);
    StateSequence x_dyn(1, x_t.count(), x_t.shape());
    simd::unmix(x_t.values(), std::sqrt(1.0 - ab), eps_hat.values(), std::sqrt(ab), x_dyn.values());
    const StateSequence history = dynamics(observations, gb);
    return CleanEstimate{inverse_dynamics(StateSequence::concat(history, x_dyn), gb),
                         inverse_dynamics(eps_hat, gb)};
}

StateSequence predict_x0_single(const StateSequence& x_t, const StateSequence& eps_hat,
                                const StateSequence& observations, int t, const Schedule& schedule) {
    if (x_t.count() != 1 || x_t.first() != 1)
        throw InvalidArgument("predict_x0_single expects a single state at s = 1");
    require_same_layout(x_t, eps_hat, "predict_x0_single");
    if (t < 1 || t > schedule.T()) throw InvalidArgument("timestep outside [1, T]");
    const double ab = schedule.alpha_bar(t);
    const double gb = schedule.gamma_bar(t);
    if (!(gb >= kMinGammaBar)) throw InvalidArgument("gamma_bar too small to invert");
    StateSequence out(1, 1, x_t.shape());
    simd::unmix(x_t.values(), std::sqrt(1.0 - ab), eps_hat.values(), std::sqrt(ab), out.values());
    const auto history = dynamics_last(observations, gb);
    simd::unmix(out.values(), std::sqrt(1.0 - gb), history, std::sqrt(gb), out.values());
    return out;
}

LatentBlock ddpm_step_single(const LatentBlock& x_t, const StateSequence& eps_hat,
                             const StateSequence& observations, const Schedule& schedule, Rng& rng,
                             int t_prev, bool deterministic) {
    const StateSequence x_pred = predict_x0_single(x_t.latents, eps_hat, observations, x_t.t, schedule);
    if (t_prev < 0) t_prev = x_t.t - 1;
    const auto post = posterior(x_t, x_pred, observations, x_t.t, schedule, t_prev);
    LatentBlock out{post.mean, t_prev};
    if (!deterministic) {
        const double sd = std::sqrt(post.var);
        for (double& v : out.latents.values()) v += sd * rng.normal();
    }
    return out;
}

namespace {

void check_finite_latents(const StateSequence& x, int t) {
    for (double v : x.values())
        if (!std::isfinite(v))
            throw NumericFailure("t=" + std::to_string(t),
                                 "non-finite latent at diffusion timestep " + std::to_string(t));
}

StateSequence draw_noise(std::size_t S, const FrameShape& shape, Rng& rng) {
    StateSequence z(1, S, shape);
    rng.fill_normal(z.values());
    return z;
}

// x_prev = sqrt(ab_prev) * mixed + coef * eps_prev (+ sigma * noise)
StateSequence ddim_combine(const StateSequence& mixed, const StateSequence& eps_prev, double ab_prev,
                           double sigma_sq, const StateSequence* noise) {
    StateSequence out(1, mixed.count(), mixed.shape());
    const double coef = std::sqrt(std::max(1.0 - ab_prev - sigma_sq, 0.0));
    simd::axpby(std::sqrt(ab_prev), mixed.values(), coef, eps_prev.values(), out.values());
    if (noise) simd::axpy(std::sqrt(sigma_sq), noise->values(), out.values());
    return out;
}

StateSequence step_dydiff_ddim(const StateSequence& x, const StateSequence& eps, const StateSequence& obs,
                               int t, int t_prev, const Schedule& schedule, const SamplerConfig& config,
                               Rng& rng) {
    const auto est = predict_clean(x, eps, obs, t, schedule);
    const double gb_prev = schedule.gamma_bar(t_prev);
    const StateSequence eps_prev = config.independent_noise ? eps : dynamics(est.eps_pred, gb_prev);
    const StateSequence mixed = dynamics(est.x_pred, gb_prev).slice(1, static_cast<int>(x.count()));
    const double sigma_sq = config.stochastic ? ddpm_sigma_sq(schedule, t, t_prev) : 0.0;
    if (!config.stochastic) return ddim_combine(mixed, eps_prev, schedule.alpha_bar(t_prev), 0.0, nullptr);
    StateSequence z = draw_noise(x.count(), x.shape(), rng);
    if (!config.independent_noise) z = dynamics(z, gb_prev);
    return ddim_combine(mixed, eps_prev, schedule.alpha_bar(t_prev), sigma_sq, &z);
}

StateSequence step_dpm_ddim(const StateSequence& x, const StateSequence& eps, int t, int t_prev,
                            const Schedule& schedule, const SamplerConfig& config, Rng& rng) {
    const double ab = schedule.alpha_bar(t);
    StateSequence x0(1, x.count(), x.shape());
    simd::unmix(x.values(), std::sqrt(1.0 - ab), eps.values(), std::sqrt(ab), x0.values());
    const double sigma_sq = config.stochastic ? ddpm_sigma_sq(schedule, t, t_prev) : 0.0;
    if (!config.stochastic) return ddim_combine(x0, eps, schedule.alpha_bar(t_prev), 0.0, nullptr);
    const StateSequence z = draw_noise(x.count(), x.shape(), rng);
    return ddim_combine(x0, eps, schedule.alpha_bar(t_prev), sigma_sq, &z);
}

StateSequence step_dydiff_ddpm(const StateSequence& x, const StateSequence& eps, const StateSequence& obs,
                               int t, int t_prev, const Schedule& schedule, Rng& rng) {
    const auto est = predict_clean(x, eps, obs, t, schedule);
    const int S = static_cast<int>(x.count());
    const StateSequence z = draw_noise(x.count(), x.shape(), rng);
    const StateSequence y = inverse_dynamics(x, schedule.gamma_bar(t));
    StateSequence y_prev(1, x.count(), x.shape());

    const auto first = posterior(LatentBlock{x.slice(1, 1), t}, est.x_pred.slice(1, 1), obs, t, schedule,
                                 t_prev);
    simd::axpby(1.0, first.mean.values(), std::sqrt(first.var), z.frame(1), y_prev.frame(1));
    for (int s = 2; s <= S; ++s) {
        auto dst = y_prev.frame(s);
        const double var = standard_posterior(y.frame(s), est.x_pred.frame(s), t, t_prev, schedule, dst);
        simd::axpy(std::sqrt(var), z.frame(s), dst);
    }
    return dynamics(y_prev, schedule.gamma_bar(t_prev));
}

StateSequence step_dpm_ddpm(const StateSequence& x, const StateSequence& eps, int t, int t_prev,
                            const Schedule& schedule, Rng& rng) {
    const double ab = schedule.alpha_bar(t);
    StateSequence x0(1, x.count(), x.shape());
    simd::unmix(x.values(), std::sqrt(1.0 - ab), eps.values(), std::sqrt(ab), x0.values());
    const StateSequence z = draw_noise(x.count(), x.shape(), rng);
    StateSequence out(1, x.count(), x.shape());
    for (int s = 1; s <= static_cast<int>(x.count()); ++s) {
        auto dst = out.frame(s);
        const double var = standard_posterior(x.frame(s), x0.frame(s), t, t_prev, schedule, dst);
        simd::axpy(std::sqrt(var), z.frame(s), dst);
    }
    return out;
}

void check_config(const SamplerConfig& config, int t_start) {
    if (config.num_steps < 1) throw InvalidArgument("sampler num_steps must be >= 1");
    if (config.num_steps > t_start)
        throw InvalidArgument("sampler num_steps " + std::to_string(config.num_steps) +
                              " exceeds the starting timestep " + std::to_string(t_start));
    if (config.kind == SamplerKind::dydiff_ddpm && config.independent_noise)
        throw InvalidArgument("dydiff-ddpm relies on correlated noise; use a ddim sampler for "
                              "independent-noise models");
}

StateSequence run_reverse(const NoisePredictor& predictor, StateSequence x, const StateSequence& obs,
                          const std::vector<int>& timesteps, const Schedule& schedule,
                          const SamplerConfig& config, Rng& rng, LatentTrace* trace) {
    if (obs.empty() || obs.last() != 0) throw InvalidArgument("observations must end at s = 0");
    if (obs.shape() != x.shape()) throw ShapeMismatch("observation and latent frame shapes differ");
    if (trace) {
        trace->timesteps.clear();
        trace->latents.clear();
    }
    for (std::size_t i = 0; i + 1 < timesteps.size(); ++i) {
        const int t = timesteps[i];
        const int t_prev = timesteps[i + 1];
        if (trace) {
            trace->timesteps.push_back(t);
            trace->latents.push_back(x);
        }
        const StateSequence eps = predictor(x, obs, t);
        require_same_layout(x, eps, "noise prediction");
        switch (config.kind) {
            case SamplerKind::dydiff_ddim:
                x = step_dydiff_ddim(x, eps, obs, t, t_prev, schedule, config, rng);
                break;
            case SamplerKind::dpm_ddim: x = step_dpm_ddim(x, eps, t, t_prev, schedule, config, rng); break;
            case SamplerKind::dydiff_ddpm:
                x = step_dydiff_ddpm(x, eps, obs, t, t_prev, schedule, rng);
                break;
            case SamplerKind::dpm_ddpm: x = step_dpm_ddpm(x, eps, t, t_prev, schedule, rng); break;
        }
        check_finite_latents(x, t_prev);
    }
    if (trace) {
        trace->timesteps.push_back(0);
        trace->latents.push_back(x);
    }
    return x;
}

}  // namespace

StateSequence sample(const NoisePredictor& predictor, const StateSequence& observations, int S,
                     const Schedule& schedule, const SamplerConfig& config, Rng& rng, LatentTrace* trace) {
    if (S < 1) throw InvalidArgument("sample needs S >= 1");
    check_config(config, schedule.T());
    StateSequence x = draw_noise(static_cast<std::size_t>(S), observations.shape(), rng);
    if (is_dydiff(config.kind) && !config.independent_noise) x = dynamics(x, schedule.gamma_bar(schedule.T()));
    return run_reverse(predictor, std::move(x), observations, strided_timesteps(schedule.T(), config.num_steps),
                       schedule, config, rng, trace);
}

StateSequence denoise_from(const NoisePredictor& predictor, const LatentBlock& x_start,
                           const StateSequence& observations, const Schedule& schedule,
                           const SamplerConfig& config, Rng& rng, LatentTrace* trace) {
    if (x_start.t < 1 || x_start.t > schedule.T()) throw InvalidArgument("start timestep outside [1, T]");
    if (x_start.latents.empty() || x_start.latents.first() != 1)
        throw InvalidArgument("latents must cover 1..S");
    check_config(config, x_start.t);
    return run_reverse(predictor, x_start.latents, observations,
                       strided_timesteps(x_start.t, config.num_steps), schedule, config, rng, trace);
}

std::vector<double> latent_error_curve(const LatentTrace& trace, const Schedule& schedule, int state) {
    if (trace.latents.empty() || trace.latents.size() != trace.timesteps.size())
        throw InvalidArgument("latent trace is empty or inconsistent");
    const StateSequence& final_x = trace.latents.back();
    if (!final_x.contains(state)) throw InvalidArgument("state index outside the traced latents");
    const auto target = final_x.frame(state);
    std::vector<double> curve;
    std::vector<double> scaled(target.size());
    for (std::size_t i = 0; i < trace.latents.size(); ++i) {
        const int t = trace.timesteps[i];
        if (t <= 0) continue;
        const auto x = trace.latents[i].frame(state);
        const double inv = 1.0 / std::sqrt(schedule.alpha_bar(t));
        for (std::size_t j = 0; j < x.size(); ++j) scaled[j] = x[j] * inv;
        curve.push_back(simd::sum_sq_diff(scaled, target) / static_cast<double>(target.size()));
    }
    return curve;
}

}  // namespace dydiff
