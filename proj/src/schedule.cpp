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

#include "dydiff/schedule.hpp"

#include <cmath>
#include <numbers>

#include "dydiff/common.hpp"

namespace dydiff {

std::string to_string(AlphaFamily family) {
    return family == AlphaFamily::linear_beta ? "linear" : "cosine";
}

std::string to_string(GammaRule rule) {
    switch (rule) {
    case GammaRule::mixing: return "mixing";
    case GammaRule::timegrad: return "timegrad";
    case GammaRule::custom: return "custom";
    }
    return "custom";
}

std::string to_string(SigmaMode mode) {
    return mode == SigmaMode::deterministic ? "ddim" : "ddpm";
}

AlphaFamily parse_alpha_family(const std::string& name) {
    if (name == "linear") return AlphaFamily::linear_beta;
    if (name == "cosine") return AlphaFamily::cosine;
    throw InvalidArgument("unknown schedule family '" + name + "' (expected linear|cosine)");
}

GammaRule parse_gamma_rule(const std::string& name) {
    if (name == "mixing") return GammaRule::mixing;
    if (name == "timegrad") return GammaRule::timegrad;
    throw InvalidArgument("unknown gamma rule '" + name + "' (expected mixing|timegrad)");
}

SigmaMode parse_sigma_mode(const std::string& name) {
    if (name == "ddim") return SigmaMode::deterministic;
    if (name == "ddpm") return SigmaMode::ddpm;
    throw InvalidArgument("unknown sigma mode '" + name + "' (expected ddim|ddpm)");
}

Schedule Schedule::from_tables(std::vector<double> alpha_bar, std::vector<double> gamma_bar,
                               SigmaMode sigma_mode, GammaRule rule, double eta) {
    if (alpha_bar.size() < 2) throw InvalidArgument("schedule needs T >= 1");
    if (gamma_bar.size() != alpha_bar.size())
        throw InvalidArgument("alpha_bar and gamma_bar tables differ in length");
    if (alpha_bar[0] != 1.0 || gamma_bar[0] != 1.0)
        throw InvalidArgument("alpha_bar[0] and gamma_bar[0] must equal 1");
    if (!(eta >= 0.0 && eta <= 1.0)) throw InvalidArgument("eta must lie in [0, 1]");

    const std::size_t n = alpha_bar.size();
    for (std::size_t t = 1; t < n; ++t) {
        if (!(alpha_bar[t] > 0.0 && alpha_bar[t] <= 1.0))
            throw InvalidArgument("alpha_bar[" + std::to_string(t) + "] = " +
                                  std::to_string(alpha_bar[t]) + " outside (0, 1]");
        if (!(alpha_bar[t] < alpha_bar[t - 1]))
            throw InvalidArgument("alpha_bar must be strictly decreasing (t = " +
                                  std::to_string(t) + ")");
        if (!(gamma_bar[t] > 0.0 && gamma_bar[t] <= 1.0))
            throw InvalidArgument("gamma_bar[" + std::to_string(t) + "] = " +
                                  std::to_string(gamma_bar[t]) + " outside (0, 1]");
        if (gamma_bar[t] > gamma_bar[t - 1])
            throw InvalidArgument("gamma_bar must be non-increasing (t = " + std::to_string(t) + ")");
    }

    Schedule s;
    s.alpha_bar_ = std::move(alpha_bar);
    s.gamma_bar_ = std::move(gamma_bar);
    s.alpha_.assign(n, 1.0);
    s.gamma_.assign(n, 1.0);
    s.sigma_.assign(n, 0.0);
    for (std::size_t t = 1; t < n; ++t) {
        s.alpha_[t] = s.alpha_bar_[t] / s.alpha_bar_[t - 1];
        s.gamma_[t] = s.gamma_bar_[t] / s.gamma_bar_[t - 1];
        if (sigma_mode == SigmaMode::ddpm) {
            const double var = (1.0 - s.alpha_bar_[t - 1]) / (1.0 - s.alpha_bar_[t]) *
                               (1.0 - s.alpha_[t]);
            s.sigma_[t] = std::sqrt(std::max(var, 0.0));
        }
    }
    s.eta_ = eta;
    s.rule_ = rule;
    s.sigma_mode_ = sigma_mode;
    return s;
}

bool Schedule::is_standard() const {
    for (double g : gamma_bar_)
        if (g != 1.0) return false;
    return true;
}

std::vector<double> build_alpha_bar(int T, const AlphaSpec& spec) {
    if (T < 1) throw InvalidArgument("T must be at least 1");
    std::vector<double> alpha_bar(static_cast<std::size_t>(T) + 1, 1.0);
    if (spec.family == AlphaFamily::linear_beta) {
        if (!(spec.beta_start > 0.0 && spec.beta_start < 1.0 && spec.beta_end > 0.0 &&
              spec.beta_end < 1.0))
            throw InvalidArgument("linear beta endpoints must lie in (0, 1)");
        for (int t = 1; t <= T; ++t) {
            const double frac = T == 1 ? 0.0 : static_cast<double>(t - 1) / (T - 1);
            const double beta = spec.beta_start + frac * (spec.beta_end - spec.beta_start);
            alpha_bar[t] = alpha_bar[t - 1] * (1.0 - beta);
        }
    } else {
        if (!(spec.cosine_offset > 0.0)) throw InvalidArgument("cosine offset must be positive");
        if (!(spec.max_beta > 0.0 && spec.max_beta < 1.0))
            throw InvalidArgument("cosine max_beta must lie in (0, 1)");
        const auto f = [&](int t) {
            const double x = (static_cast<double>(t) / T + spec.cosine_offset) /
                             (1.0 + spec.cosine_offset) * std::numbers::pi / 2.0;
            return std::cos(x) * std::cos(x);
        };
        const double f0 = f(0);
        for (int t = 1; t <= T; ++t) {
            const double beta = std::min(1.0 - (f(t) / f0) / (f(t - 1) / f0), spec.max_beta);
            alpha_bar[t] = alpha_bar[t - 1] * (1.0 - beta);
        }
    }
    return alpha_bar;
}

Schedule build_schedule(int T, const AlphaSpec& spec, double eta, SigmaMode sigma_mode) {
    if (!(eta >= 0.0 && eta <= 1.0)) throw InvalidArgument("eta must lie in [0, 1]");
    auto alpha_bar = build_alpha_bar(T, spec);
    std::vector<double> gamma_bar(alpha_bar.size(), 1.0);
    for (std::size_t t = 1; t < alpha_bar.size(); ++t)
        gamma_bar[t] = eta * alpha_bar[t] + (1.0 - eta);
    return Schedule::from_tables(std::move(alpha_bar), std::move(gamma_bar), sigma_mode,
                                 GammaRule::mixing, eta);
}

std::vector<double> gamma_variant_timegrad(std::span<const double> alpha) {
    std::vector<double> gamma(alpha.size());
    for (std::size_t i = 0; i < alpha.size(); ++i) {
        if (!(alpha[i] > 0.0 && alpha[i] <= 1.0))
            throw InvalidArgument("alpha entries must lie in (0, 1]");
        gamma[i] = 1.0 - 0.3 * (1.0 - alpha[i]);
    }
    return gamma;
}

Schedule build_timegrad_schedule(int T, const AlphaSpec& spec, SigmaMode sigma_mode) {
    auto alpha_bar = build_alpha_bar(T, spec);
    std::vector<double> alpha(alpha_bar.size() - 1);
    for (std::size_t t = 1; t < alpha_bar.size(); ++t) alpha[t - 1] = alpha_bar[t] / alpha_bar[t - 1];
    const auto gamma = gamma_variant_timegrad(alpha);
    std::vector<double> gamma_bar(alpha_bar.size(), 1.0);
    for (std::size_t t = 1; t < gamma_bar.size(); ++t) gamma_bar[t] = gamma_bar[t - 1] * gamma[t - 1];
    return Schedule::from_tables(std::move(alpha_bar), std::move(gamma_bar), sigma_mode,
                                 GammaRule::timegrad, 0.0);
}

double ddpm_sigma_sq(const Schedule& schedule, int t, int t_prev) {
    if (t_prev >= t || t_prev < 0 || t > schedule.T())
        throw InvalidArgument("ddpm_sigma_sq expects 0 <= t_prev < t <= T");
    const double ab_t = schedule.alpha_bar(t);
    const double ab_prev = schedule.alpha_bar(t_prev);
    return (1.0 - ab_prev) / (1.0 - ab_t) * (1.0 - ab_t / ab_prev);
}

std::vector<int> strided_timesteps(int T, int num_steps) {
    if (T < 1) throw InvalidArgument("T must be at least 1");
    if (num_steps < 1 || num_steps > T)
        throw InvalidArgument("sampler steps must lie in [1, T] (got " + std::to_string(num_steps) +
                              " with T = " + std::to_string(T) + ")");
    std::vector<int> steps;
    steps.reserve(static_cast<std::size_t>(num_steps) + 1);
    for (int i = num_steps; i >= 1; --i)
        steps.push_back(static_cast<int>(static_cast<long long>(i) * T / num_steps));
    steps.push_back(0);
    return steps;
}

}  // namespace dydiff
