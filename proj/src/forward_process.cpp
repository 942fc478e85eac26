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

#include "dydiff/forward_process.hpp"

#include <algorithm>
#include <cmath>

#include "dydiff/dynamics.hpp"
#include "dydiff/simd.hpp"

namespace dydiff {
namespace {

void check_window(const SequenceWindow& window) {
    if (window.targets.empty()) throw InvalidArgument("window has no prediction targets");
    if (window.targets.first() != 1) throw InvalidArgument("window targets must start at s = 1");
    if (window.observations.empty() || window.observations.last() != 0)
        throw InvalidArgument("window observations must end at s = 0");
}

void check_timestep(int t, const Schedule& schedule, int lowest) {
    if (t < lowest || t > schedule.T())
        throw InvalidArgument("timestep " + std::to_string(t) + " outside [" +
                              std::to_string(lowest) + ", " + std::to_string(schedule.T()) + "]");
}

void check_single_state(const StateSequence& seq, const char* what) {
    if (seq.count() != 1 || seq.first() != 1)
        throw InvalidArgument(std::string(what) +
                              ": the Markovian construction is defined for a single prediction "
                              "state (S = 1)");
}

// Joint (a, b) with a ~ N(m, v), b | a ~ N(coef * a + offset, trans_var):
// returns E[a | b] in `mean` and Var[a | b].
double condition_on_next(std::span<const double> prior_mean, double prior_var, double coef,
                         std::span<const double> offset, double trans_var,
                         std::span<const double> observed, std::span<double> mean) {
    const double cov_ab = coef * prior_var;
    const double var_b = coef * coef * prior_var + trans_var;
    if (var_b <= 0.0) {
        std::copy(prior_mean.begin(), prior_mean.end(), mean.begin());
        return prior_var;
    }
    const double gain = cov_ab / var_b;
    for (std::size_t i = 0; i < mean.size(); ++i) {
        const double predicted_b = coef * prior_mean[i] + offset[i];
        mean[i] = prior_mean[i] + gain * (observed[i] - predicted_b);
    }
    return std::max(prior_var - gain * cov_ab, 0.0);
}

}  // namespace

CorrelatedNoise correlate_noise(StateSequence eps, double gamma_bar) {
    if (eps.empty()) throw InvalidArgument("correlated noise needs S >= 1");
    CorrelatedNoise out;
    out.eps_tilde = dynamics(eps, gamma_bar);
    out.eps = std::move(eps);
    out.gamma_bar = gamma_bar;
    return out;
}

CorrelatedNoise sample_correlated_noise(std::size_t S, const FrameShape& shape, double gamma_bar,
                                        Rng& rng) {
    if (S == 0) throw InvalidArgument("correlated noise needs S >= 1");
    StateSequence eps(1, S, shape);
    rng.fill_normal(eps.values());
    return correlate_noise(std::move(eps), gamma_bar);
}

LatentBlock forward_latents(const SequenceWindow& window, int t, const Schedule& schedule,
                            const StateSequence& noise) {
    check_window(window);
    check_timestep(t, schedule, 0);
    require_same_layout(window.targets, noise, "forward_latents");
    const double ab = schedule.alpha_bar(t);
    const StateSequence mixed = dynamics(window.full(), schedule.gamma_bar(t));
    LatentBlock out{StateSequence(1, window.targets.count(), window.targets.shape()), t};
    const double signal = std::sqrt(ab);
    const double noise_scale = std::sqrt(1.0 - ab);
    for (int s = 1; s <= out.latents.last(); ++s)
        simd::axpby(signal, mixed.frame(s), noise_scale, noise.frame(s), out.latents.frame(s));
    return out;
}

std::pair<LatentBlock, CorrelatedNoise> forward_sample(const SequenceWindow& window, int t,
                                                       const Schedule& schedule, Rng& rng) {
    check_timestep(t, schedule, 0);
    auto noise = sample_correlated_noise(window.targets.count(), window.targets.shape(),
                                         schedule.gamma_bar(t), rng);
    auto latents = forward_latents(window, t, schedule, noise.eps_tilde);
    return {std::move(latents), std::move(noise)};
}

MarkovTransition markov_transition(const StateSequence& observations, int t_prev, int t,
                                   const Schedule& schedule) {
    if (!(t_prev >= 0 && t_prev < t && t <= schedule.T()))
        throw InvalidArgument("markov_transition expects 0 <= t_prev < t <= T");
    if (observations.empty() || observations.last() != 0)
        throw InvalidArgument("observations must end at s = 0");
    const double ab_t = schedule.alpha_bar(t);
    const double gb_t = schedule.gamma_bar(t);
    const double gb_prev = schedule.gamma_bar(t_prev);
    const double alpha = ab_t / schedule.alpha_bar(t_prev);
    const double gamma = gb_t / gb_prev;

    MarkovTransition out;
    out.coef = std::sqrt(alpha * gamma);
    out.var = std::max(1.0 - alpha * gamma - ab_t * (1.0 - gamma), 0.0);
    const auto hist_t = dynamics_last(observations, gb_t);
    const auto hist_prev = dynamics_last(observations, gb_prev);
    const double w_t = std::sqrt(ab_t) * std::sqrt(1.0 - gb_t);
    const double w_prev = std::sqrt(ab_t) * std::sqrt(std::max(gamma - gb_t, 0.0));
    out.offset.resize(hist_t.size());
    simd::axpby(w_t, hist_t, -w_prev, hist_prev, out.offset);
    return out;
}

LatentBlock markov_forward_step(const LatentBlock& x_prev, const StateSequence& observations,
                                int t, const Schedule& schedule, Rng& rng) {
    check_single_state(x_prev.latents, "markov_forward_step");
    check_timestep(t, schedule, 1);
    if (x_prev.t != t - 1) throw InvalidArgument("markov_forward_step expects a latent at t - 1");
    const auto tr = markov_transition(observations, t - 1, t, schedule);
    LatentBlock out{StateSequence(1, 1, x_prev.latents.shape()), t};
    auto dst = out.latents.frame(1);
    const auto src = x_prev.latents.frame(1);
    const double sd = std::sqrt(tr.var);
    for (std::size_t i = 0; i < dst.size(); ++i)
        dst[i] = tr.coef * src[i] + tr.offset[i] + sd * rng.normal();
    return out;
}

PosteriorGaussian posterior(const LatentBlock& x_t, const StateSequence& x_pred,
                            const StateSequence& observations, int t, const Schedule& schedule,
                            int t_prev) {
    check_single_state(x_t.latents, "posterior");
    check_single_state(x_pred, "posterior");
    if (t < 1) throw InvalidArgument("posterior is undefined at t = 0");
    check_timestep(t, schedule, 1);
    if (t_prev < 0) t_prev = t - 1;
    if (t_prev >= t) throw InvalidArgument("posterior expects t_prev < t");
    require_same_layout(x_t.latents, x_pred, "posterior");

    const double ab_prev = schedule.alpha_bar(t_prev);
    // Prior on x_{t_prev}: the forward marginal given the clean estimate.
    std::vector<double> prior_mean =
        dynamics_last(StateSequence::concat(observations, x_pred), schedule.gamma_bar(t_prev));
    simd::scale(std::sqrt(ab_prev), prior_mean);
    const double prior_var = 1.0 - ab_prev;

    const auto tr = markov_transition(observations, t_prev, t, schedule);
    PosteriorGaussian out{StateSequence(1, 1, x_t.latents.shape()), 0.0};
    out.var = condition_on_next(prior_mean, prior_var, tr.coef, tr.offset, tr.var,
                                x_t.latents.frame(1), out.mean.frame(1));
    return out;
}

double standard_posterior(std::span<const double> y_t, std::span<const double> y0, int t,
                          int t_prev, const Schedule& schedule, std::span<double> mean) {
    if (!(t_prev >= 0 && t_prev < t && t <= schedule.T()))
        throw InvalidArgument("standard_posterior expects 0 <= t_prev < t <= T");
    const double ab_prev = schedule.alpha_bar(t_prev);
    const double alpha = schedule.alpha_bar(t) / ab_prev;
    std::vector<double> prior_mean(y0.begin(), y0.end());
    simd::scale(std::sqrt(ab_prev), prior_mean);
    const std::vector<double> zero(y0.size(), 0.0);
    return condition_on_next(prior_mean, 1.0 - ab_prev, std::sqrt(alpha), zero, 1.0 - alpha, y_t,
                             mean);
}

StateSequence decorrelate(const LatentBlock& x_t, double gamma_bar) {
    return inverse_dynamics(x_t.latents, gamma_bar);
}

LatentBlock recorrelate(const StateSequence& y, double gamma_bar, int t) {
    return LatentBlock{dynamics(y, gamma_bar), t};
}

}  // namespace dydiff
