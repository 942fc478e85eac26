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
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"

#include "dydiff/data.hpp"
#include "dydiff/denoiser.hpp"
#include "dydiff/metrics.hpp"
#include "dydiff/sampler.hpp"
#include "dydiff/schedule.hpp"
#include "dydiff/trainer.hpp"

namespace dydiff {

struct DatasetConfig {
    std::string generator = "linear_gaussian";  // linear_gaussian | advected_blobs
    std::string path;                            // container file
    LinearGaussianSpec linear_gaussian;
    BlobsSpec blobs;
    std::size_t test_sequences = 16;             // trailing sequences held out for evaluation

    std::size_t num_sequences() const;
};

struct ScheduleConfig {
    int T = 100;
    AlphaSpec alpha{AlphaFamily::linear_beta, 1e-3, 0.2};
    double eta = 0.5;
    GammaRule gamma_rule = GammaRule::mixing;  // mixing | timegrad
    SigmaMode sigma = SigmaMode::deterministic;
};

struct SamplingConfig {
    SamplerKind kind = SamplerKind::dydiff_ddim;
    int num_steps = 20;
    bool stochastic = false;
    int ensemble = 8;
    int max_cases = 64;
    std::uint64_t seed = 0;
};

struct MetricsConfig {
    Pool crps_pool = Pool::avg;
    int crps_window = 1;
    int csi_window = 1;
    std::optional<double> csi_threshold;  // default: 90th percentile of evaluated truths
    std::optional<double> psnr_range;     // default: max - min of the dataset
};

/// Complete description of one experiment. Serialized form is JSON with the
/// top-level keys dataset, window, schedule, model, train, sampler, metrics,
/// seed, output. Unknown keys are rejected.
struct ExperimentConfig {
    DatasetConfig dataset;
    int P = 1;
    int S = 3;
    ScheduleConfig schedule;
    Architecture arch = Architecture::mlp;
    int width = 64;
    int depth = 2;
    int time_dim = 16;
    TrainConfig train;
    SamplingConfig sampler;
    MetricsConfig metrics;
    std::uint64_t seed = 0;
    std::string output = "run";

    /// Parses and validates; throws ConfigError listing every problem found.
    static ExperimentConfig from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;

    /// Cross-field checks; throws ConfigError listing every problem found.
    void validate() const;

    /// "dpm" when eta = 0 (standard diffusion), "dydiff" otherwise.
    std::string label() const;
};

ExperimentConfig load_config(const std::filesystem::path& path);

Schedule make_schedule(const ScheduleConfig& config);
Dataset generate_dataset(const DatasetConfig& config);
ModelConfig make_model_config(const ExperimentConfig& config, const FrameShape& frame);

/// Training windows (all but the trailing test sequences) and the fixed
/// evaluation windows (first max_cases of a seeded shuffle of the test split).
std::vector<WindowRef> train_window_refs(const ExperimentConfig& config, const Dataset& dataset);
std::vector<WindowRef> test_window_refs(const ExperimentConfig& config, const Dataset& dataset);

/// $DYDIFF_OUTPUT_ROOT, or "runs" when unset.
std::filesystem::path default_output_root();

/// Flags shared by the subcommands; unset optionals leave the config as is.
struct CommandOptions {
    std::optional<std::filesystem::path> config;
    std::optional<std::filesystem::path> out;
    std::optional<std::filesystem::path> run;
    std::vector<std::filesystem::path> runs;
    std::optional<std::uint64_t> seed;
    std::optional<int> steps;
    std::optional<double> eta;
    std::optional<std::string> sampler;
    std::optional<int> ensemble;
    bool independent_noise = false;
    bool dump_latents = false;
    bool force = false;
};

/// Writes the dataset container; prints its fingerprint. Refuses to replace an
/// existing file without `force`.
std::filesystem::path cmd_gen_data(const CommandOptions& options, std::ostream& log);

/// Trains into a run directory (manifest.json, loss.csv, checkpoints/).
/// Resumes from the latest checkpoint when the directory already holds a run
/// with the same configuration; `force` starts over.
std::filesystem::path cmd_train(const CommandOptions& options, std::ostream& log);

/// Draws ensembles for the evaluation windows into <run>/samples/.
std::filesystem::path cmd_sample(const CommandOptions& options, std::ostream& log);

/// Scores <run>/samples/ into <run>/metrics.csv and <run>/summary.json.
std::filesystem::path cmd_eval(const CommandOptions& options, std::ostream& log);

/// Side-by-side report of several evaluated runs into `out`.
std::filesystem::path cmd_compare(const CommandOptions& options, std::ostream& log);

}  // namespace dydiff
