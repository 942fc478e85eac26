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

#include "dydiff/data.hpp"

#include <Eigen/Dense>
#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "binary_io.hpp"
#include "dydiff/rng.hpp"

namespace dydiff {

namespace {

constexpr std::string_view kMagic = "DYDS";
constexpr std::uint8_t kDtypeF64 = 1;

using Matrix = Eigen::MatrixXd;

Matrix to_matrix(std::size_t dim, const std::vector<double>& row_major) {
    Matrix m(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
    for (std::size_t r = 0; r < dim; ++r)
        for (std::size_t c = 0; c < dim; ++c) m(r, c) = row_major[r * dim + c];
    return m;
}

std::vector<double> to_row_major(const Matrix& m) {
    std::vector<double> out(static_cast<std::size_t>(m.rows() * m.cols()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) out[static_cast<std::size_t>(r * m.cols() + c)] = m(r, c);
    return out;
}

std::string header_bytes(const std::vector<std::size_t>& dims, std::uint64_t trailer_len) {
    std::string h(kMagic);
    binio::put_u16(h, kContainerVersion);
    h.push_back(static_cast<char>(kDtypeF64));
    h.push_back(static_cast<char>(dims.size()));
    for (std::size_t i = 0; i < kContainerMaxRank; ++i) binio::put_u64(h, i < dims.size() ? dims[i] : 0);
    binio::put_u64(h, trailer_len);
    return h;
}

std::size_t checked_count(const std::vector<std::size_t>& dims) {
    std::size_t n = 1;
    for (auto d : dims) {
        if (d != 0 && n > (std::size_t{1} << 40) / d) throw IoError("tensor dimensions are implausibly large");
        n *= d;
    }
    return n;
}

}  // namespace

void write_tensor(const std::filesystem::path& path, const Tensor& tensor) {
    if (tensor.dims.empty() || tensor.dims.size() > kContainerMaxRank)
        throw InvalidArgument("tensor rank must be in 1.." + std::to_string(kContainerMaxRank));
    if (checked_count(tensor.dims) != tensor.values.size())
        throw ShapeMismatch("tensor values do not match its dims");
    const std::string trailer = tensor.meta.dump();
    std::string out = header_bytes(tensor.dims, trailer.size());
    binio::put_f64s(out, tensor.values);
    out += trailer;
    binio::write_file_atomic(path, out);
}

Tensor read_tensor(const std::filesystem::path& path) {
    const std::string data = binio::read_file(path);
    const std::string where = "'" + path.string() + "'";
    if (data.size() < kContainerHeaderBytes) throw IoError(where + " is too short for a container header");
    if (std::string_view(data).substr(0, 4) != kMagic) throw IoError(where + " is not a dydata container");
    const auto version = binio::get_u16(data, 4);
    if (version != kContainerVersion) throw IoError(where + " has unsupported version " + std::to_string(version));
    if (static_cast<std::uint8_t>(data[6]) != kDtypeF64) throw IoError(where + " has an unsupported dtype");
    const auto rank = static_cast<std::size_t>(static_cast<std::uint8_t>(data[7]));
    if (rank == 0 || rank > kContainerMaxRank) throw IoError(where + " has invalid rank");
    Tensor t;
    for (std::size_t i = 0; i < rank; ++i) t.dims.push_back(binio::get_u64(data, 8 + 8 * i));
    for (std::size_t i = rank; i < kContainerMaxRank; ++i)
        if (binio::get_u64(data, 8 + 8 * i) != 0) throw IoError(where + " has non-zero unused dims");
    const std::uint64_t trailer_len = binio::get_u64(data, 56);
    const std::size_t count = checked_count(t.dims);
    if (data.size() != kContainerHeaderBytes + 8 * count + trailer_len)
        throw IoError(where + " size does not match its header");
    t.values = binio::get_f64s(data, kContainerHeaderBytes, count);
    const std::string_view trailer = std::string_view(data).substr(kContainerHeaderBytes + 8 * count);
    try {
        t.meta = trailer.empty() ? nlohmann::json::object() : nlohmann::json::parse(trailer);
    } catch (const nlohmann::json::exception& e) {
        throw IoError(where + " has malformed metadata: " + e.what());
    }
    return t;
}

std::string tensor_fingerprint(const Tensor& tensor) {
    std::string bytes = header_bytes(tensor.dims, 0).substr(0, 56);
    binio::put_f64s(bytes, tensor.values);
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
        throw IoError("SHA-256 computation failed");
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xf]);
    }
    return out;
}

// ---------------------------------------------------------------------------

Normalizer Normalizer::fit(std::span<const double> values) {
    Normalizer n;
    if (values.empty()) return n;
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    var /= static_cast<double>(values.size());
    n.shift = mean;
    n.scale = var > 0.0 ? std::sqrt(var) : 1.0;
    return n;
}

void Normalizer::apply(std::span<double> xs) const {
    for (double& x : xs) x = apply(x);
}

void Normalizer::invert(std::span<double> zs) const {
    for (double& z : zs) z = invert(z);
}

nlohmann::json Normalizer::to_json() const { return {{"shift", shift}, {"scale", scale}}; }

Normalizer Normalizer::from_json(const nlohmann::json& j) {
    Normalizer n;
    n.shift = j.at("shift").get<double>();
    n.scale = j.at("scale").get<double>();
    if (!(n.scale > 0.0) || !std::isfinite(n.scale) || !std::isfinite(n.shift))
        throw IoError("normalizer must have a finite positive scale");
    return n;
}

std::span<const double> Dataset::frame_at(std::size_t sequence, std::size_t k) const {
    if (sequence >= num_sequences || k >= length) throw InvalidArgument("frame index out of range");
    const std::size_t f = frame_size();
    return std::span<const double>(values).subspan((sequence * length + k) * f, f);
}

StateSequence Dataset::states(std::size_t sequence, std::size_t k, std::size_t count, int first) const {
    if (sequence >= num_sequences || k + count > length) throw InvalidArgument("state range out of range");
    const std::size_t f = frame_size();
    const auto begin = values.begin() + static_cast<std::ptrdiff_t>((sequence * length + k) * f);
    return StateSequence(first, count, frame,
                         std::vector<double>(begin, begin + static_cast<std::ptrdiff_t>(count * f)));
}

Tensor Dataset::to_tensor() const {
    Tensor t;
    t.dims = {num_sequences, length};
    t.dims.insert(t.dims.end(), frame.begin(), frame.end());
    t.values = values;
    t.meta = {{"kind", "dataset"}, {"generator", generator}, {"params", params},
              {"seed", seed},      {"normalizer", normalizer.to_json()}};
    t.meta["fingerprint"] = tensor_fingerprint(t);
    return t;
}

Dataset Dataset::from_tensor(Tensor tensor) {
    if (tensor.dims.size() < 3) throw IoError("dataset tensors have dims (sequences, length, frame...)");
    Dataset d;
    d.num_sequences = tensor.dims[0];
    d.length = tensor.dims[1];
    d.frame.assign(tensor.dims.begin() + 2, tensor.dims.end());
    const auto& m = tensor.meta;
    try {
        if (m.value("kind", std::string()) != "dataset") throw IoError("container does not hold a dataset");
        d.generator = m.at("generator").get<std::string>();
        d.params = m.at("params");
        d.seed = m.at("seed").get<std::uint64_t>();
        d.normalizer = Normalizer::from_json(m.at("normalizer"));
        const std::string stored = m.at("fingerprint").get<std::string>();
        if (stored != tensor_fingerprint(tensor)) throw IoError("dataset fingerprint does not match its content");
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("dataset metadata is incomplete: ") + e.what());
    }
    d.values = std::move(tensor.values);
    for (double v : d.values)
        if (!std::isfinite(v)) throw IoError("dataset contains non-finite values");
    return d;
}

std::string Dataset::fingerprint() const { return tensor_fingerprint(to_tensor()); }

void write_dataset(const std::filesystem::path& path, const Dataset& dataset) {
    write_tensor(path, dataset.to_tensor());
}

Dataset read_dataset(const std::filesystem::path& path) { return Dataset::from_tensor(read_tensor(path)); }

// ---------------------------------------------------------------------------
// Linear-Gaussian generator

LinearGaussianModel::LinearGaussianModel(std::size_t dim, std::vector<double> transition, double noise_scale)
    : dim_(dim), a_(std::move(transition)), q_(noise_scale) {
    if (dim_ == 0) throw InvalidArgument("linear-Gaussian dim must be >= 1");
    if (a_.size() != dim_ * dim_) throw InvalidArgument("transition matrix must be dim x dim");
    if (!(q_ >= 0.0) || !std::isfinite(q_)) throw InvalidArgument("noise scale must be finite and >= 0");
    for (double v : a_)
        if (!std::isfinite(v)) throw InvalidArgument("transition matrix has non-finite entries");
    if (!(spectral_radius() < 1.0))
        throw InvalidArgument("unstable transition: spectral radius " + std::to_string(spectral_radius()) +
                              " is not below 1");
}

double LinearGaussianModel::spectral_radius() const {
    Eigen::EigenSolver<Matrix> solver(to_matrix(dim_, a_), false);
    return solver.eigenvalues().cwiseAbs().maxCoeff();
}

LinearGaussianModel LinearGaussianModel::from_spec(const LinearGaussianSpec& spec) {
    const std::size_t n = spec.dim;
    if (n == 0) throw InvalidArgument("linear-Gaussian dim must be >= 1");
    const auto& tr = spec.transition;
    std::vector<double> a(n * n, 0.0);
    if (tr.kind == "scaled_identity") {
        for (std::size_t i = 0; i < n; ++i) a[i * n + i] = tr.radius;
    } else if (tr.kind == "rotation") {
        for (std::size_t b = 0; b + 1 < n; b += 2) {
            const double th = tr.angle * static_cast<double>(b / 2 + 1);
            a[b * n + b] = tr.radius * std::cos(th);
            a[b * n + b + 1] = -tr.radius * std::sin(th);
            a[(b + 1) * n + b] = tr.radius * std::sin(th);
            a[(b + 1) * n + b + 1] = tr.radius * std::cos(th);
        }
        if (n % 2 == 1) a[(n - 1) * n + n - 1] = tr.radius;
    } else if (tr.kind == "random") {
        Rng rng = Rng(spec.seed).stream(0x7472616e73ULL);
        rng.fill_normal(a);
        Eigen::EigenSolver<Matrix> solver(to_matrix(n, a), false);
        const double rho = solver.eigenvalues().cwiseAbs().maxCoeff();
        if (rho > 0.0)
            for (double& v : a) v *= tr.radius / rho;
    } else if (tr.kind == "matrix") {
        a = tr.matrix;
    } else {
        throw InvalidArgument("unknown transition kind '" + tr.kind +
                              "' (expected scaled_identity, rotation, random or matrix)");
    }
    return LinearGaussianModel(n, std::move(a), spec.noise_scale);
}

std::vector<double> LinearGaussianModel::stationary_covariance() const {
    // vec(Sigma) = (I - A (x) A)^{-1} vec(q^2 I)
    const auto n = static_cast<Eigen::Index>(dim_);
    const Matrix a = to_matrix(dim_, a_);
    Matrix kron(n * n, n * n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) kron.block(i * n, j * n, n, n) = a(i, j) * a;
    const Matrix lhs = Matrix::Identity(n * n, n * n) - kron;
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n * n);
    for (Eigen::Index i = 0; i < n; ++i) rhs(i * n + i) = q_ * q_;
    const Eigen::VectorXd vec = lhs.partialPivLu().solve(rhs);
    Matrix sigma(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) sigma(i, j) = vec(i * n + j);
    return to_row_major(0.5 * (sigma + sigma.transpose()));
}

std::vector<double> LinearGaussianModel::predictive_mean(std::span<const double> state, int horizon) const {
    if (state.size() != dim_) throw ShapeMismatch("state has the wrong dimension");
    if (horizon < 0) throw InvalidArgument("horizon must be >= 0");
    const Matrix a = to_matrix(dim_, a_);
    Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(state.data(), static_cast<Eigen::Index>(dim_));
    for (int h = 0; h < horizon; ++h) x = a * x;
    return std::vector<double>(x.data(), x.data() + x.size());
}

std::vector<double> LinearGaussianModel::predictive_covariance(int horizon) const {
    if (horizon < 0) throw InvalidArgument("horizon must be >= 0");
    const auto n = static_cast<Eigen::Index>(dim_);
    const Matrix a = to_matrix(dim_, a_);
    Matrix cov = Matrix::Zero(n, n);
    for (int h = 0; h < horizon; ++h) cov = a * cov * a.transpose() + q_ * q_ * Matrix::Identity(n, n);
    return to_row_major(cov);
}

Dataset gen_linear_gaussian(const LinearGaussianSpec& spec) {
    if (spec.num_sequences == 0 || spec.length == 0) throw InvalidArgument("dataset must be non-empty");
    const auto model = LinearGaussianModel::from_spec(spec);
    const std::size_t n = spec.dim;
    const Matrix a = to_matrix(n, model.transition());

    Eigen::SelfAdjointEigenSolver<Matrix> eig(to_matrix(n, model.stationary_covariance()));
    const Matrix root = eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();

    Dataset d;
    d.num_sequences = spec.num_sequences;
    d.length = spec.length;
    d.frame = {n};
    d.values.resize(spec.num_sequences * spec.length * n);
    d.generator = "linear_gaussian";
    d.seed = spec.seed;
    d.params = {{"num_sequences", spec.num_sequences},
                {"length", spec.length},
                {"dim", n},
                {"transition",
                 {{"kind", spec.transition.kind},
                  {"radius", spec.transition.radius},
                  {"angle", spec.transition.angle},
                  {"matrix", model.transition()}}},
                {"noise_scale", spec.noise_scale}};

    const Rng root_rng(spec.seed);
    Eigen::VectorXd z(static_cast<Eigen::Index>(n));
    for (std::size_t s = 0; s < spec.num_sequences; ++s) {
        Rng rng = root_rng.stream(s);
        for (auto& v : z) v = rng.normal();
        Eigen::VectorXd x = root * z;
        for (std::size_t k = 0; k < spec.length; ++k) {
            if (k > 0) {
                for (auto& v : z) v = rng.normal();
                x = a * x + spec.noise_scale * z;
            }
            std::copy(x.data(), x.data() + n, d.values.begin() + static_cast<std::ptrdiff_t>((s * spec.length + k) * n));
        }
    }
    d.normalizer = Normalizer::fit(d.values);
    return d;
}

// ---------------------------------------------------------------------------
// Advected blobs

void advect_field(std::span<const double> field, std::size_t height, std::size_t width,
                  std::span<const double> dx, std::span<const double> dy, std::span<double> out) {
    const std::size_t n = height * width;
    if (field.size() != n || dx.size() != n || dy.size() != n || out.size() != n)
        throw ShapeMismatch("advection buffers must match the grid");
    std::fill(out.begin(), out.end(), 0.0);
    const auto h = static_cast<double>(height);
    const auto w = static_cast<double>(width);
    auto wrap = [](double v, double m) {
        double r = std::fmod(v, m);
        return r < 0.0 ? r + m : r;
    };
    for (std::size_t y = 0; y < height; ++y)
        for (std::size_t x = 0; x < width; ++x) {
            const std::size_t i = y * width + x;
            const double m = field[i];
            if (m == 0.0) continue;
            const double px = wrap(static_cast<double>(x) + dx[i], w);
            const double py = wrap(static_cast<double>(y) + dy[i], h);
            const double fx = std::floor(px);
            const double fy = std::floor(py);
            const double ax = px - fx;
            const double ay = py - fy;
            const std::size_t x0 = static_cast<std::size_t>(fx) % width;
            const std::size_t y0 = static_cast<std::size_t>(fy) % height;
            const std::size_t x1 = (x0 + 1) % width;
            const std::size_t y1 = (y0 + 1) % height;
            out[y0 * width + x0] += m * (1.0 - ax) * (1.0 - ay);
            out[y0 * width + x1] += m * ax * (1.0 - ay);
            out[y1 * width + x0] += m * (1.0 - ax) * ay;
            out[y1 * width + x1] += m * ax * ay;
        }
}

Dataset gen_advected_blobs(const BlobsSpec& spec) {
    if (spec.grid < 8) throw InvalidArgument("blob grid size must be >= 8");
    if (spec.num_sequences == 0 || spec.length == 0) throw InvalidArgument("dataset must be non-empty");
    if (!(spec.blob_width > 0.0)) throw InvalidArgument("blob width must be > 0");
    const auto& v = spec.velocity;
    if (v.kind != "uniform" && v.kind != "rotation" && v.kind != "zero")
        throw InvalidArgument("unknown velocity kind '" + v.kind + "' (expected uniform, rotation or zero)");
    if (!(v.jitter >= 0.0)) throw InvalidArgument("velocity jitter must be >= 0");

    const std::size_t g = spec.grid;
    const std::size_t cells = g * g;
    const auto gd = static_cast<double>(g);
    Dataset d;
    d.num_sequences = spec.num_sequences;
    d.length = spec.length;
    d.frame = {g, g};
    d.values.resize(spec.num_sequences * spec.length * cells);
    d.generator = "advected_blobs";
    d.seed = spec.seed;
    d.params = {{"num_sequences", spec.num_sequences},
                {"length", spec.length},
                {"grid", g},
                {"num_blobs", spec.num_blobs},
                {"blob_width", spec.blob_width},
                {"velocity",
                 {{"kind", v.kind}, {"vx", v.vx}, {"vy", v.vy}, {"omega", v.omega}, {"jitter", v.jitter}}}};

    const Rng root_rng(spec.seed);
    std::vector<double> field(cells), next(cells), dx(cells), dy(cells);
    const double centre = (gd - 1.0) / 2.0;
    for (std::size_t s = 0; s < spec.num_sequences; ++s) {
        Rng rng = root_rng.stream(s);
        std::fill(field.begin(), field.end(), 0.0);
        for (std::size_t b = 0; b < spec.num_blobs; ++b) {
            const double cx = rng.uniform() * gd;
            const double cy = rng.uniform() * gd;
            const double amp = 0.5 + rng.uniform();
            for (std::size_t y = 0; y < g; ++y)
                for (std::size_t x = 0; x < g; ++x) {
                    double ddx = std::fabs(static_cast<double>(x) - cx);
                    double ddy = std::fabs(static_cast<double>(y) - cy);
                    ddx = std::min(ddx, gd - ddx);
                    ddy = std::min(ddy, gd - ddy);
                    field[y * g + x] +=
                        amp * std::exp(-(ddx * ddx + ddy * ddy) / (2.0 * spec.blob_width * spec.blob_width));
                }
        }
        for (std::size_t k = 0; k < spec.length; ++k) {
            if (k > 0) {
                const double jx = v.kind == "zero" ? 0.0 : v.jitter * rng.normal();
                const double jy = v.kind == "zero" ? 0.0 : v.jitter * rng.normal();
                for (std::size_t y = 0; y < g; ++y)
                    for (std::size_t x = 0; x < g; ++x) {
                        const std::size_t i = y * g + x;
                        if (v.kind == "uniform") {
                            dx[i] = v.vx + jx;
                            dy[i] = v.vy + jy;
                        } else if (v.kind == "rotation") {
                            dx[i] = -v.omega * (static_cast<double>(y) - centre) + jx;
                            dy[i] = v.omega * (static_cast<double>(x) - centre) + jy;
                        } else {
                            dx[i] = 0.0;
                            dy[i] = 0.0;
                        }
                    }
                advect_field(field, g, g, dx, dy, next);
                field.swap(next);
            }
            std::copy(field.begin(), field.end(),
                      d.values.begin() + static_cast<std::ptrdiff_t>((s * spec.length + k) * cells));
        }
    }
    d.normalizer = Normalizer::fit(d.values);
    return d;
}

// ---------------------------------------------------------------------------
// Windows

std::vector<WindowRef> window_refs(const Dataset& dataset, int P, int S, std::size_t seq_begin,
                                   std::size_t seq_end, std::optional<std::uint64_t> shuffle_seed) {
    if (P < 0 || S < 1) throw InvalidArgument("windows need P >= 0 and S >= 1");
    if (seq_begin > seq_end || seq_end > dataset.num_sequences)
        throw InvalidArgument("sequence range out of bounds");
    const auto span = static_cast<std::size_t>(P + S);
    if (dataset.length < span + 1)
        throw InvalidArgument("window of " + std::to_string(span + 1) + " frames is longer than the " +
                              std::to_string(dataset.length) + "-frame sequences");
    std::vector<WindowRef> refs;
    refs.reserve((seq_end - seq_begin) * (dataset.length - span));
    for (std::size_t s = seq_begin; s < seq_end; ++s)
        for (std::size_t k = 0; k < dataset.length - span; ++k) refs.push_back({s, k});
    if (shuffle_seed) Rng(*shuffle_seed).stream(0x73687566ULL).shuffle(refs);
    return refs;
}

SequenceWindow make_window(const Dataset& dataset, const WindowRef& ref, int P, int S) {
    if (ref.sequence >= dataset.num_sequences ||
        ref.start + static_cast<std::size_t>(P + S) >= dataset.length)
        throw InvalidArgument("window reference out of range");
    SequenceWindow w{dataset.states(ref.sequence, ref.start, static_cast<std::size_t>(P + 1), -P),
                     dataset.states(ref.sequence, ref.start + static_cast<std::size_t>(P + 1),
                                    static_cast<std::size_t>(S), 1)};
    dataset.normalizer.apply(w.observations.values());
    dataset.normalizer.apply(w.targets.values());
    return w;
}

std::vector<SequenceWindow> make_windows(const Dataset& dataset, std::span<const WindowRef> refs, int P,
                                         int S) {
    std::vector<SequenceWindow> out;
    out.reserve(refs.size());
    for (const auto& r : refs) out.push_back(make_window(dataset, r, P, S));
    return out;
}

}  // namespace dydiff
