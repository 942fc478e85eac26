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

#include <span>
#include <string>
#include <vector>

namespace dydiff {

enum class AlphaFamily { linear_beta, cosine };

/// Describes the cumulative signal schedule alpha_bar.
struct AlphaSpec {
    AlphaFamily family = AlphaFamily::linear_beta;
    double beta_start = 1e-4;     // linear_beta only
    double beta_end = 0.02;       // linear_beta only
    double cosine_offset = 0.008; // cosine only
    double max_beta = 0.999;      // cosine only: per-step clip keeping alpha_bar[T] > 0
};

/// How the dynamics schedule gamma_bar is derived.
enum class GammaRule {
    mixing,    // gamma_bar[t] = eta * alpha_bar[t] + (1 - eta)
    timegrad,  // 1 - gamma[t] = 0.3 * (1 - alpha[t]), gamma_bar = running product
    custom,    // caller-supplied table
};

/// Sampler variance sigma_t.
enum class SigmaMode {
    deterministic,  // sigma = 0 (DDIM-like)
    ddpm,           // sigma^2 = (1 - ab[t-1]) / (1 - ab[t]) * (1 - a[t])
};

std::string to_string(AlphaFamily family);
std::string to_string(GammaRule rule);
std::string to_string(SigmaMode mode);
AlphaFamily parse_alpha_family(const std::string& name);
GammaRule parse_gamma_rule(const std::string& name);
SigmaMode parse_sigma_mode(const std::string& name);

/// Immutable diffusion + dynamics coefficient tables.
///
/// All tables are stored with an explicit index-0 slot holding the t = 0
/// identities (alpha_bar = gamma_bar = alpha = gamma = 1, sigma = 0), so
/// accessors take the 1-based timestep directly and t = 0 is exact.
class Schedule {
public:
    /// Validates and derives per-step ratios and sigma. `alpha_bar` and
    /// `gamma_bar` have length T + 1 with element 0 equal to 1.
    static Schedule from_tables(std::vector<double> alpha_bar, std::vector<double> gamma_bar,
                                SigmaMode sigma_mode, GammaRule rule = GammaRule::custom,
                                double eta = 0.0);

    int T() const { return static_cast<int>(alpha_bar_.size()) - 1; }
    double eta() const { return eta_; }
    GammaRule gamma_rule() const { return rule_; }
    SigmaMode sigma_mode() const { return sigma_mode_; }

    double alpha_bar(int t) const { return alpha_bar_.at(static_cast<std::size_t>(t)); }
    double alpha(int t) const { return alpha_.at(static_cast<std::size_t>(t)); }
    double gamma_bar(int t) const { return gamma_bar_.at(static_cast<std::size_t>(t)); }
    double gamma(int t) const { return gamma_.at(static_cast<std::size_t>(t)); }
    double sigma(int t) const { return sigma_.at(static_cast<std::size_t>(t)); }

    const std::vector<double>& alpha_bar_table() const { return alpha_bar_; }
    const std::vector<double>& alpha_table() const { return alpha_; }
    const std::vector<double>& gamma_bar_table() const { return gamma_bar_; }
    const std::vector<double>& gamma_table() const { return gamma_; }
    const std::vector<double>& sigma_table() const { return sigma_; }

    /// True for gamma_bar == 1 everywhere, i.e. the standard diffusion process.
    bool is_standard() const;

private:
    Schedule() = default;

    std::vector<double> alpha_bar_, alpha_, gamma_bar_, gamma_, sigma_;
    double eta_ = 0.0;
    GammaRule rule_ = GammaRule::custom;
    SigmaMode sigma_mode_ = SigmaMode::deterministic;
};

/// alpha_bar table (length T + 1, element 0 = 1) for the given family.
std::vector<double> build_alpha_bar(int T, const AlphaSpec& spec);

/// Default schedule: gamma_bar[t] = eta * alpha_bar[t] + (1 - eta).
Schedule build_schedule(int T, const AlphaSpec& spec, double eta, SigmaMode sigma_mode);

/// Per-step gamma[t] = 1 - 0.3 * (1 - alpha[t]) for the given per-step alphas.
std::vector<double> gamma_variant_timegrad(std::span<const double> alpha);

/// Schedule whose gamma_bar is the running product of gamma_variant_timegrad.
Schedule build_timegrad_schedule(int T, const AlphaSpec& spec, SigmaMode sigma_mode);

/// DDPM-consistent variance for a (possibly strided) step t -> t_prev:
/// (1 - ab[t_prev]) / (1 - ab[t]) * (1 - ab[t] / ab[t_prev]).
double ddpm_sigma_sq(const Schedule& schedule, int t, int t_prev);

/// Evenly spaced descending timesteps T = t_k > ... > t_1 >= 1 followed by 0.
/// Returns num_steps + 1 entries.
std::vector<int> strided_timesteps(int T, int num_steps);

}  // namespace dydiff
