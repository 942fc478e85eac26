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
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "dydiff/sequence.hpp"

namespace dydiff {

/// Dense row-major tensor of 64-bit reals with structured metadata; the unit
/// stored in `.dydata` container files.
struct Tensor {
    std::vector<std::size_t> dims;
    std::vector<double> values;
    nlohmann::json meta = nlohmann::json::object();
};

inline constexpr std::size_t kContainerHeaderBytes = 64;
inline constexpr std::size_t kContainerMaxRank = 6;
inline constexpr std::uint16_t kContainerVersion = 1;

/// Container layout (little-endian):
///   0  "DYDS" magic
///   4  u16 version
///   6  u8  dtype (1 = float64)
///   7  u8  rank (1..6)
///   8  6 x u64 dims (unused entries zero)
///   56 u64 metadata byte length
///   64 payload (prod(dims) float64 values), then UTF-8 JSON metadata.
/// Written to a temporary file and renamed into place.
void write_tensor(const std::filesystem::path& path, const Tensor& tensor);
Tensor read_tensor(const std::filesystem::path& path);

/// Hex SHA-256 of the header dims and payload bytes (metadata excluded).
std::string tensor_fingerprint(const Tensor& tensor);

/// Affine map to standardized units: z = (x - shift) / scale.
struct Normalizer {
    double shift = 0.0;
    double scale = 1.0;

    static Normalizer fit(std::span<const double> values);
    double apply(double x) const { return (x - shift) / scale; }
    double invert(double z) const { return z * scale + shift; }
    void apply(std::span<double> xs) const;
    void invert(std::span<double> zs) const;

    nlohmann::json to_json() const;
    static Normalizer from_json(const nlohmann::json& j);
};

/// Collection of equally long trajectories: dims (num_sequences, length, frame...).
struct Dataset {
    std::size_t num_sequences = 0;
    std::size_t length = 0;
    FrameShape frame;
    std::vector<double> values;  // raw (data-unit) values
    std::string generator;
    nlohmann::json params = nlohmann::json::object();
    std::uint64_t seed = 0;
    Normalizer normalizer;

    std::size_t frame_size() const { return shape_size(frame); }
    std::span<const double> frame_at(std::size_t sequence, std::size_t k) const;

    /// Frames k .. k + count - 1 of one sequence, indexed from `first`, raw units.
    StateSequence states(std::size_t sequence, std::size_t k, std::size_t count, int first) const;

    Tensor to_tensor() const;
    static Dataset from_tensor(Tensor tensor);
    std::string fingerprint() const;
};

void write_dataset(const std::filesystem::path& path, const Dataset& dataset);
Dataset read_dataset(const std::filesystem::path& path);

/// Transition matrix families for the linear-Gaussian generator.
struct TransitionSpec {
    std::string kind = "scaled_identity";  // scaled_identity | rotation | random | matrix
    double radius = 0.9;                    // spectral radius for the first three kinds
    double angle = 0.3;                     // rotation: radians per step for each 2x2 block
    std::vector<double> matrix;             // matrix: row-major dim x dim
};

struct LinearGaussianSpec {
    std::size_t num_sequences = 64;
    std::size_t length = 32;
    std::size_t dim = 4;
    TransitionSpec transition;
    double noise_scale = 0.1;
    std::uint64_t seed = 0;
};

/// x_{k+1} = A x_k + w_k, w_k ~ N(0, q^2 I), x_0 drawn from the stationary law.
class LinearGaussianModel {
public:
    LinearGaussianModel(std::size_t dim, std::vector<double> transition, double noise_scale);
    static LinearGaussianModel from_spec(const LinearGaussianSpec& spec);

    std::size_t dim() const { return dim_; }
    const std::vector<double>& transition() const { return a_; }
    double noise_scale() const { return q_; }
    double spectral_radius() const;

    /// Solution of Sigma = A Sigma A^T + q^2 I (row-major dim x dim).
    std::vector<double> stationary_covariance() const;

    /// Mean and covariance of x_{k+h} given x_k (row-major covariance).
    std::vector<double> predictive_mean(std::span<const double> state, int horizon) const;
    std::vector<double> predictive_covariance(int horizon) const;

private:
    std::size_t dim_;
    std::vector<double> a_;
    double q_;
};

Dataset gen_linear_gaussian(const LinearGaussianSpec& spec);

struct VelocitySpec {
    std::string kind = "uniform";  // uniform | rotation | zero
    double vx = 0.6;               // uniform: cells per step
    double vy = 0.3;
    double omega = 0.05;           // rotation: radians per step about the grid centre
    double jitter = 0.1;           // std of per-step random velocity offset (cells)
};

struct BlobsSpec {
    std::size_t num_sequences = 32;
    std::size_t length = 16;
    std::size_t grid = 16;
    std::size_t num_blobs = 2;
    double blob_width = 1.5;  // Gaussian std in cells
    VelocitySpec velocity;
    std::uint64_t seed = 0;
};

/// Gaussian bumps on a periodic grid advected by bilinear mass splatting.
/// Frames have shape (grid, grid).
Dataset gen_advected_blobs(const BlobsSpec& spec);

/// One periodic advection step of a (height, width) field by a displacement
/// field given per cell (dx, dy); conserves the total mass.
void advect_field(std::span<const double> field, std::size_t height, std::size_t width,
                  std::span<const double> dx, std::span<const double> dy, std::span<double> out);

/// Location of a window: observations are frames start .. start + P of the
/// sequence, targets the following S frames.
struct WindowRef {
    std::size_t sequence = 0;
    std::size_t start = 0;
    bool operator==(const WindowRef&) const = default;
};

/// All windows of sequences [seq_begin, seq_end) in (sequence, start) order,
/// or deterministically shuffled when `shuffle_seed` is set.
std::vector<WindowRef> window_refs(const Dataset& dataset, int P, int S, std::size_t seq_begin,
                                   std::size_t seq_end, std::optional<std::uint64_t> shuffle_seed = {});

/// Materialized window in normalized units.
SequenceWindow make_window(const Dataset& dataset, const WindowRef& ref, int P, int S);

std::vector<SequenceWindow> make_windows(const Dataset& dataset, std::span<const WindowRef> refs, int P,
                                         int S);

}  // namespace dydiff
