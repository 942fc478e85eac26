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

#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "dydiff/rng.hpp"
#include "dydiff/sequence.hpp"

namespace dydiff {

/// Named slice of the flat parameter vector.
struct ParamSlice {
    std::string name;
    std::size_t offset = 0;
    std::size_t length = 0;
    std::vector<std::size_t> shape;

    bool operator==(const ParamSlice&) const = default;
};

/// Ordered, gap-free partition of the parameter vector into named layers.
class ParamLayout {
public:
    void add(std::string name, std::vector<std::size_t> shape);
    const std::vector<ParamSlice>& slices() const { return slices_; }
    std::size_t total() const { return total_; }
    const ParamSlice& find(const std::string& name) const;

    /// Throws InvalidArgument unless the slices tile [0, total) in order.
    void validate() const;

    bool operator==(const ParamLayout&) const = default;

private:
    std::vector<ParamSlice> slices_;
    std::size_t total_ = 0;
};

/// Trainable parameters of the reference denoiser.
struct DenoiserParams {
    std::vector<double> theta;
    ParamLayout layout;

    std::span<double> view(const std::string& name);
    std::span<const double> view(const std::string& name) const;
};

/// Writes `<prefix>.bin` (little-endian doubles) and `<prefix>.layout`
/// (versioned text: name offset length shape per line).
void save_params(const DenoiserParams& params, const std::filesystem::path& prefix);

/// Reads a checkpoint written by save_params; validates the layout and that
/// the binary holds exactly `total` reals.
DenoiserParams load_params(const std::filesystem::path& prefix);

enum class Architecture { mlp, conv };

std::string to_string(Architecture arch);
Architecture parse_architecture(const std::string& name);

struct ModelConfig {
    Architecture arch = Architecture::mlp;
    FrameShape frame{1};
    int P = 0;          // observations cover -P..0
    int S = 1;          // predictions cover 1..S
    int T = 1000;       // largest accepted timestep
    int width = 64;     // hidden units (mlp) or channels (conv)
    int depth = 2;      // residual blocks
    int time_dim = 16;  // sinusoidal embedding size (even)
};

/// Inputs to the noise predictor: noisy latents over 1..S, clean observations
/// over -P..0, and the diffusion timestep.
struct DenoiserInput {
    const StateSequence& noisy;
    const StateSequence& observations;
    int t;
};

/// One supervised pair for the noise-prediction objective.
struct TrainingExample {
    StateSequence noisy;
    StateSequence observations;
    int t = 1;
    StateSequence target;
};

/// Sinusoidal embedding of timestep t: [sin(t f_i), cos(t f_i)], f_i = 10000^(-i / (dim/2)).
std::vector<double> time_embedding(int t, int dim);

/// Noise predictor eps_theta(x_t[1..S], x_0[-P..0], t). Forward and gradient
/// evaluation are pure with respect to the parameters.
class Denoiser {
public:
    explicit Denoiser(ModelConfig config);
    virtual ~Denoiser() = default;

    const ModelConfig& config() const { return config_; }

    virtual ParamLayout layout() const = 0;

    /// Fan-in scaled weights, zero biases, zero-initialised output head.
    virtual DenoiserParams init_params(Rng& rng) const = 0;

    /// Predicted correlated noise over 1..S.
    StateSequence predict_noise(const DenoiserParams& params, const DenoiserInput& input) const;

    /// Mean squared error over every element of the batch and its gradient
    /// with respect to theta (written to `grad`, resized to theta's length).
    double loss_and_gradient(const DenoiserParams& params, std::span<const TrainingExample> batch,
                             std::vector<double>& grad) const;

    /// Loss only.
    double loss(const DenoiserParams& params, std::span<const TrainingExample> batch) const;

protected:
    /// Activation storage shared between forward and backward.
    struct Workspace {
        std::vector<std::vector<double>> buffers;
    };

    /// Output written to `out` (S * frame_size values). When `ws` is non-null
    /// the activations needed for backward are kept there.
    virtual void forward(std::span<const double> theta, const DenoiserInput& input,
                         std::span<double> out, Workspace* ws) const = 0;

    /// Accumulates d(loss)/d(theta) into `grad` given d(loss)/d(out).
    virtual void backward(std::span<const double> theta, std::span<const double> d_out,
                          Workspace& ws, std::span<double> grad) const = 0;

    void validate_input(const DenoiserInput& input) const;
    std::size_t output_size() const;

    ModelConfig config_;
};

std::unique_ptr<Denoiser> make_denoiser(const ModelConfig& config);

}  // namespace dydiff
