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

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "dydiff/denoiser.hpp"
#include "dydiff/rng.hpp"
#include "dydiff/schedule.hpp"
#include "dydiff/sequence.hpp"

namespace dydiff {

enum class OptimizerKind { sgd, adam };

std::string to_string(OptimizerKind kind);
OptimizerKind parse_optimizer(const std::string& name);

struct TrainConfig {
    int steps = 1000;
    int batch_size = 32;
    double learning_rate = 1e-4;
    OptimizerKind optimizer = OptimizerKind::adam;
    std::uint64_t seed = 0;
    int eval_every = 0;        // 0 disables periodic evaluation
    int checkpoint_every = 0;  // 0 disables periodic checkpoints
    bool independent_noise = false;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_epsilon = 1e-8;

    /// Throws ConfigError listing every violated constraint.
    void validate() const;
};

/// First and second moment estimates (Adam) and the update count.
struct OptimizerState {
    OptimizerKind kind = OptimizerKind::adam;
    std::int64_t updates = 0;
    std::vector<double> first_moment;
    std::vector<double> second_moment;
};

OptimizerState make_optimizer_state(OptimizerKind kind, std::size_t num_params);

/// Applies one update in place. A zero learning rate leaves theta bitwise unchanged.
void apply_update(const TrainConfig& config, OptimizerState& state, std::span<double> theta,
                  std::span<const double> grad);

/// Builds one training pair from a clean window: draws t ~ U[1, T] and the
/// independent noise from `rng`, corrupts the dynamics-mixed targets, and
/// uses the correlated noise (or the raw draws when `independent_noise`)
/// both in the latents and as the regression target.
TrainingExample make_training_example(const SequenceWindow& window, const Schedule& schedule, Rng& rng,
                                      bool independent_noise = false);

/// Same, at a fixed timestep.
TrainingExample make_training_example_at(const SequenceWindow& window, int t, const Schedule& schedule,
                                         Rng& rng, bool independent_noise = false);

/// One optimizer step on the mean loss of `batch`. Window b draws from
/// rng.stream(b). Returns the batch loss before the update.
double train_step(const Denoiser& model, DenoiserParams& params, OptimizerState& opt,
                  const Schedule& schedule, std::span<const SequenceWindow> batch, const Rng& rng,
                  const TrainConfig& config);

struct TrainState {
    DenoiserParams params;
    OptimizerState optimizer;
    int step = 0;  // completed steps
};

struct LossRecord {
    int step = 0;  // 1-based index of the completed step
    double loss = 0.0;
};

struct TrainHooks {
    std::function<void(const LossRecord&)> on_loss;
    std::function<void(const TrainState&)> on_checkpoint;
    std::function<void(const TrainState&)> on_eval;
};

/// Runs steps state.step + 1 .. config.steps. Step k samples its batch
/// uniformly with replacement from `windows` using Rng(seed).stream(k), so a
/// resumed run reproduces an uninterrupted one exactly.
std::vector<LossRecord> train_loop(const TrainConfig& config, const Denoiser& model,
                                   const Schedule& schedule, std::span<const SequenceWindow> windows,
                                   TrainState& state, const TrainHooks& hooks = {});

/// Mean denoising loss on `windows` with one fixed (t, noise) draw per window.
double evaluation_loss(const Denoiser& model, const DenoiserParams& params, const Schedule& schedule,
                       std::span<const SequenceWindow> windows, std::uint64_t seed,
                       bool independent_noise = false);

/// `<prefix>.bin`, `<prefix>.layout` and `<prefix>.opt` (optimizer moments + step).
void save_train_state(const TrainState& state, const std::filesystem::path& prefix);
TrainState load_train_state(const std::filesystem::path& prefix);

}  // namespace dydiff
