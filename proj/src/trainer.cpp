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

#include "dydiff/trainer.hpp"

#include <cmath>

#include "binary_io.hpp"
#include "dydiff/dynamics.hpp"
#include "dydiff/forward_process.hpp"

namespace dydiff {

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::sgd ? "sgd" : "adam"; }

OptimizerKind parse_optimizer(const std::string& name) {
    if (name == "sgd") return OptimizerKind::sgd;
    if (name == "adam") return OptimizerKind::adam;
    throw InvalidArgument("unknown optimizer '" + name + "' (expected sgd or adam)");
}

void TrainConfig::validate() const {
    std::vector<std::string> problems;
    if (steps < 0) problems.push_back("train.steps must be >= 0");
    if (batch_size < 1) problems.push_back("train.batch_size must be >= 1");
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
        problems.push_back("train.learning_rate must be finite and >= 0");
    if (eval_every < 0) problems.push_back("train.eval_every must be >= 0");
    if (checkpoint_every < 0) problems.push_back("train.checkpoint_every must be >= 0");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0)) problems.push_back("train.adam_beta1 must be in [0, 1)");
    if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) problems.push_back("train.adam_beta2 must be in [0, 1)");
    if (!(adam_epsilon > 0.0)) problems.push_back("train.adam_epsilon must be > 0");
    if (problems.empty()) return;
    std::string msg;
    for (const auto& p : problems) msg += (msg.empty() ? "" : "; ") + p;
    throw ConfigError(msg);
}

OptimizerState make_optimizer_state(OptimizerKind kind, std::size_t num_params) {
    OptimizerState s;
    s.kind = kind;
    if (kind == OptimizerKind::adam) {
        s.first_moment.assign(num_params, 0.0);
        s.second_moment.assign(num_params, 0.0);
    }
    return s;
}

void apply_update(const TrainConfig& config, OptimizerState& state, std::span<double> theta,
                  std::span<const double> grad) {
    if (grad.size() != theta.size()) throw ShapeMismatch("gradient length does not match parameters");
    ++state.updates;
    const double lr = config.learning_rate;
    if (state.kind == OptimizerKind::sgd) {
        if (lr == 0.0) return;
        for (std::size_t i = 0; i < theta.size(); ++i) theta[i] -= lr * grad[i];
        return;
    }
    if (state.first_moment.size() != theta.size() || state.second_moment.size() != theta.size())
        throw ShapeMismatch("optimizer state does not match the parameter vector");
    const double b1 = config.adam_beta1;
    const double b2 = config.adam_beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.updates));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.updates));
    for (std::size_t i = 0; i < theta.size(); ++i) {
        double& m = state.first_moment[i];
        double& v = state.second_moment[i];
        m = b1 * m + (1.0 - b1) * grad[i];
        v = b2 * v + (1.0 - b2) * grad[i] * grad[i];
        if (lr != 0.0) theta[i] -= lr * (m / c1) / (std::sqrt(v / c2) + config.adam_epsilon);
    }
}

TrainingExample make_training_example_at(const SequenceWindow& window, int t, const Schedule& schedule,
                                         Rng& rng, bool independent_noise) {
    if (t < 1 || t > schedule.T())
        throw InvalidArgument("training timestep " + std::to_string(t) + " outside [1, T]");
    auto noise = sample_correlated_noise(window.targets.count(), window.targets.shape(),
                                         schedule.gamma_bar(t), rng);
    const StateSequence& used = independent_noise ? noise.eps : noise.eps_tilde;
    auto latents = forward_latents(window, t, schedule, used);
    return TrainingExample{std::move(latents.latents), window.observations, t, used};
}

TrainingExample make_training_example(const SequenceWindow& window, const Schedule& schedule, Rng& rng,
                                      bool independent_noise) {
    const int t = static_cast<int>(rng.uniform_int(1, schedule.T()));
    return make_training_example_at(window, t, schedule, rng, independent_noise);
}

double train_step(const Denoiser& model, DenoiserParams& params, OptimizerState& opt,
                  const Schedule& schedule, std::span<const SequenceWindow> batch, const Rng& rng,
                  const TrainConfig& config) {
    if (batch.empty()) throw InvalidArgument("train_step needs a non-empty batch");
    if (schedule.T() != model.config().T)
        throw InvalidArgument("schedule T and model T disagree");
    std::vector<TrainingExample> examples;
    examples.reserve(batch.size());
    for (std::size_t b = 0; b < batch.size(); ++b) {
        Rng r = rng.stream(b);
        examples.push_back(make_training_example(batch[b], schedule, r, config.independent_noise));
    }
    std::vector<double> grad;
    const double loss = model.loss_and_gradient(params, examples, grad);
    if (!std::isfinite(loss)) throw NumericFailure("loss", "non-finite training loss");
    apply_update(config, opt, params.theta, grad);
    return loss;
}

std::vector<LossRecord> train_loop(const TrainConfig& config, const Denoiser& model,
                                   const Schedule& schedule, std::span<const SequenceWindow> windows,
                                   TrainState& state, const TrainHooks& hooks) {
    config.validate();
    std::vector<LossRecord> curve;
    if (state.step >= config.steps) return curve;
    if (windows.empty()) throw InvalidArgument("no training windows");
    const auto& mc = model.config();
    for (const auto& w : windows) {
        if (w.P() != mc.P || w.S() != mc.S || w.targets.shape() != mc.frame)
            throw ShapeMismatch("dataset windows do not match the model's (P, S, frame shape)");
    }
    if (state.params.theta.size() != model.layout().total())
        throw ShapeMismatch("parameter vector does not match the model layout");
    if (state.optimizer.kind != config.optimizer)
        state.optimizer = make_optimizer_state(config.optimizer, state.params.theta.size());

    const Rng root(config.seed);
    std::vector<SequenceWindow> batch(static_cast<std::size_t>(config.batch_size));
    const auto last_index = static_cast<std::int64_t>(windows.size()) - 1;
    while (state.step < config.steps) {
        const int k = state.step + 1;
        const Rng step_rng = root.stream(static_cast<std::uint64_t>(k));
        Rng picker = step_rng.stream(0);
        for (auto& slot : batch) slot = windows[static_cast<std::size_t>(picker.uniform_int(0, last_index))];
        const double loss = train_step(model, state.params, state.optimizer, schedule, batch,
                                       step_rng.stream(1), config);
        state.step = k;
        LossRecord rec{k, loss};
        curve.push_back(rec);
        if (hooks.on_loss) hooks.on_loss(rec);
        if (hooks.on_eval && config.eval_every > 0 && k % config.eval_every == 0) hooks.on_eval(state);
        if (hooks.on_checkpoint && config.checkpoint_every > 0 && k % config.checkpoint_every == 0)
            hooks.on_checkpoint(state);
    }
    return curve;
}

double evaluation_loss(const Denoiser& model, const DenoiserParams& params, const Schedule& schedule,
                       std::span<const SequenceWindow> windows, std::uint64_t seed, bool independent_noise) {
    if (windows.empty()) throw InvalidArgument("no evaluation windows");
    const Rng root(seed);
    std::vector<TrainingExample> examples;
    examples.reserve(windows.size());
    for (std::size_t i = 0; i < windows.size(); ++i) {
        Rng r = root.stream(i);
        examples.push_back(make_training_example(windows[i], schedule, r, independent_noise));
    }
    return model.loss(params, examples);
}

namespace {

constexpr std::string_view kOptMagic = "DYOPT001";

}  // namespace

void save_train_state(const TrainState& state, const std::filesystem::path& prefix) {
    save_params(state.params, prefix);
    std::string out(kOptMagic);
    binio::put_u64(out, state.optimizer.kind == OptimizerKind::adam ? 1 : 0);
    binio::put_u64(out, static_cast<std::uint64_t>(state.step));
    binio::put_u64(out, static_cast<std::uint64_t>(state.optimizer.updates));
    for (const auto* v : {&state.optimizer.first_moment, &state.optimizer.second_moment}) {
        binio::put_u64(out, v->size());
        binio::put_f64s(out, *v);
    }
    binio::write_file_atomic(prefix.string() + ".opt", out);
}

TrainState load_train_state(const std::filesystem::path& prefix) {
    TrainState state;
    state.params = load_params(prefix);
    const std::filesystem::path path(prefix.string() + ".opt");
    const std::string data = binio::read_file(path);
    binio::Reader in(data, "optimizer state '" + path.string() + "'");
    if (in.bytes(kOptMagic.size()) != kOptMagic)
        throw IoError("'" + path.string() + "' is not an optimizer state file");
    state.optimizer.kind = in.u64() == 1 ? OptimizerKind::adam : OptimizerKind::sgd;
    state.step = static_cast<int>(in.u64());
    state.optimizer.updates = static_cast<std::int64_t>(in.u64());
    state.optimizer.first_moment = in.f64s(in.u64());
    state.optimizer.second_moment = in.f64s(in.u64());
    if (!in.done()) throw IoError("trailing bytes in '" + path.string() + "'");
    const std::size_t n = state.params.theta.size();
    if (state.optimizer.kind == OptimizerKind::adam &&
        (state.optimizer.first_moment.size() != n || state.optimizer.second_moment.size() != n))
        throw IoError("optimizer moments do not match the parameter vector");
    return state;
}

}  // namespace dydiff
