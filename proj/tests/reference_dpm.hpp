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

// Standard (history-free) diffusion written directly from the textbook DDPM /
// DDIM update rules. Used as an independent oracle for the eta = 0 reduction.
// Draws randomness in the same order as the library: initial noise, then one
// S x frame block per stochastic step; training draws t then the noise.
#pragma once

#include <cmath>
#include <vector>

#include "dydiff/rng.hpp"
#include "dydiff/sampler.hpp"
#include "dydiff/trainer.hpp"

namespace reference {

enum class Update { ddim, ddim_stochastic, ddpm };

inline dydiff::StateSequence sample(const dydiff::NoisePredictor& predictor, const dydiff::StateSequence& obs,
                                    int S, const std::vector<double>& ab, const std::vector<int>& timesteps,
                                    Update update, dydiff::Rng& rng) {
    dydiff::StateSequence x(1, static_cast<std::size_t>(S), obs.shape());
    for (double& v : x.values()) v = rng.normal();
    for (std::size_t i = 0; i + 1 < timesteps.size(); ++i) {
        const int t = timesteps[i];
        const int tp = timesteps[i + 1];
        const double a = ab[static_cast<std::size_t>(t)];
        const double ap = ab[static_cast<std::size_t>(tp)];
        const auto eps = predictor(x, obs, t);
        const double var = (1.0 - ap) / (1.0 - a) * (1.0 - a / ap);
        std::vector<double> z;
        if (update != Update::ddim) {
            z.resize(x.values().size());
            for (double& v : z) v = rng.normal();
        }
        auto xv = x.values();
        const auto ev = eps.values();
        for (std::size_t k = 0; k < xv.size(); ++k) {
            const double x0 = (xv[k] - std::sqrt(1.0 - a) * ev[k]) / std::sqrt(a);
            double next = 0.0;
            if (update == Update::ddim) {
                next = std::sqrt(ap) * x0 + std::sqrt(1.0 - ap) * ev[k];
            } else if (update == Update::ddim_stochastic) {
                next = std::sqrt(ap) * x0 + std::sqrt(std::max(1.0 - ap - var, 0.0)) * ev[k] + std::sqrt(var) * z[k];
            } else {
                const double c0 = std::sqrt(ap) * (1.0 - a / ap) / (1.0 - a);
                const double ct = std::sqrt(a / ap) * (1.0 - ap) / (1.0 - a);
                next = c0 * x0 + ct * xv[k] + std::sqrt(var) * z[k];
            }
            xv[k] = next;
        }
    }
    return x;
}

/// One optimizer step of the standard objective with the library's batch
/// sampling, then Adam / SGD written out by hand.
inline double train_step(const dydiff::Denoiser& model, std::vector<double>& theta, std::vector<double>& m,
                         std::vector<double>& v, long& updates, const dydiff::DenoiserParams& layout_holder,
                         const std::vector<double>& ab, std::span<const dydiff::SequenceWindow> windows,
                         const dydiff::TrainConfig& config, int k) {
    const dydiff::Rng step_rng = dydiff::Rng(config.seed).stream(static_cast<std::uint64_t>(k));
    dydiff::Rng picker = step_rng.stream(0);
    const dydiff::Rng batch_rng = step_rng.stream(1);
    const int T = static_cast<int>(ab.size()) - 1;
    std::vector<dydiff::TrainingExample> batch;
    for (int b = 0; b < config.batch_size; ++b) {
        const auto& w = windows[static_cast<std::size_t>(
            picker.uniform_int(0, static_cast<std::int64_t>(windows.size()) - 1))];
        dydiff::Rng r = batch_rng.stream(static_cast<std::uint64_t>(b));
        const int t = static_cast<int>(r.uniform_int(1, T));
        const double a = ab[static_cast<std::size_t>(t)];
        dydiff::TrainingExample e;
        e.t = t;
        e.observations = w.observations;
        e.target = dydiff::StateSequence(1, w.targets.count(), w.targets.shape());
        for (double& x : e.target.values()) x = r.normal();
        e.noisy = dydiff::StateSequence(1, w.targets.count(), w.targets.shape());
        for (std::size_t i = 0; i < e.noisy.values().size(); ++i)
            e.noisy.values()[i] = std::sqrt(a) * w.targets.values()[i] + std::sqrt(1.0 - a) * e.target.values()[i];
        batch.push_back(std::move(e));
    }
    dydiff::DenoiserParams p = layout_holder;
    p.theta = theta;
    std::vector<double> grad;
    const double loss = model.loss_and_gradient(p, batch, grad);
    ++updates;
    for (std::size_t i = 0; i < theta.size(); ++i) {
        if (config.optimizer == dydiff::OptimizerKind::sgd) {
            theta[i] -= config.learning_rate * grad[i];
            continue;
        }
        m[i] = config.adam_beta1 * m[i] + (1.0 - config.adam_beta1) * grad[i];
        v[i] = config.adam_beta2 * v[i] + (1.0 - config.adam_beta2) * grad[i] * grad[i];
        const double mh = m[i] / (1.0 - std::pow(config.adam_beta1, static_cast<double>(updates)));
        const double vh = v[i] / (1.0 - std::pow(config.adam_beta2, static_cast<double>(updates)));
        theta[i] -= config.learning_rate * mh / (std::sqrt(vh) + config.adam_epsilon);
    }
    return loss;
}

}  // namespace reference
