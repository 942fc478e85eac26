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

#include "dydiff/denoiser.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "binary_io.hpp"
#include "nn_ops.hpp"
#include "dydiff/simd.hpp"

namespace dydiff {

// ---------------------------------------------------------------------------
// Layout and parameter storage

void ParamLayout::add(std::string name, std::vector<std::size_t> shape) {
    for (const auto& s : slices_)
        if (s.name == name) throw InvalidArgument("duplicate parameter name '" + name + "'");
    const std::size_t len = shape_size(shape);
    slices_.push_back(ParamSlice{std::move(name), total_, len, std::move(shape)});
    total_ += len;
}

const ParamSlice& ParamLayout::find(const std::string& name) const {
    for (const auto& s : slices_)
        if (s.name == name) return s;
    throw InvalidArgument("no parameter named '" + name + "'");
}

void ParamLayout::validate() const {
    std::size_t expected = 0;
    for (const auto& s : slices_) {
        if (s.name.empty() || s.name.find_first_of(" \t\n") != std::string::npos)
            throw InvalidArgument("invalid parameter name '" + s.name + "'");
        if (s.offset != expected)
            throw InvalidArgument("parameter '" + s.name + "' leaves a gap or overlap at offset " +
                                  std::to_string(s.offset));
        if (s.length != shape_size(s.shape))
            throw InvalidArgument("parameter '" + s.name + "' length disagrees with its shape");
        expected += s.length;
    }
    if (expected != total_) throw InvalidArgument("layout total does not match its slices");
}

std::span<double> DenoiserParams::view(const std::string& name) {
    const auto& s = layout.find(name);
    return std::span<double>(theta).subspan(s.offset, s.length);
}

std::span<const double> DenoiserParams::view(const std::string& name) const {
    const auto& s = layout.find(name);
    return std::span<const double>(theta).subspan(s.offset, s.length);
}

namespace {

constexpr const char* kLayoutMagic = "dydiff-params";
constexpr int kLayoutVersion = 1;

std::filesystem::path with_suffix(const std::filesystem::path& prefix, const char* suffix) {
    return std::filesystem::path(prefix.string() + suffix);
}

}  // namespace

void save_params(const DenoiserParams& params, const std::filesystem::path& prefix) {
    params.layout.validate();
    if (params.theta.size() != params.layout.total())
        throw InvalidArgument("parameter vector length does not match its layout");
    std::ostringstream layout;
    layout << kLayoutMagic << ' ' << kLayoutVersion << '\n';
    layout << "total " << params.layout.total() << '\n';
    for (const auto& s : params.layout.slices()) {
        layout << s.name << ' ' << s.offset << ' ' << s.length;
        for (auto d : s.shape) layout << ' ' << d;
        layout << '\n';
    }
    std::string bin;
    binio::put_f64s(bin, params.theta);
    binio::write_file_atomic(with_suffix(prefix, ".bin"), bin);
    binio::write_file_atomic(with_suffix(prefix, ".layout"), layout.str());
}

DenoiserParams load_params(const std::filesystem::path& prefix) {
    const auto layout_path = with_suffix(prefix, ".layout");
    const auto bin_path = with_suffix(prefix, ".bin");
    std::ifstream lin(layout_path);
    if (!lin) throw IoError("cannot open '" + layout_path.string() + "'");

    std::string magic;
    int version = 0;
    std::string line;
    if (!std::getline(lin, line)) throw IoError("empty layout file '" + layout_path.string() + "'");
    std::istringstream(line) >> magic >> version;
    if (magic != kLayoutMagic) throw IoError("'" + layout_path.string() + "' is not a parameter layout");
    if (version != kLayoutVersion)
        throw IoError("unsupported layout version " + std::to_string(version));

    std::size_t total = 0;
    std::string key;
    if (!std::getline(lin, line) || !(std::istringstream(line) >> key >> total) || key != "total")
        throw IoError("layout is missing its total line");

    DenoiserParams params;
    while (std::getline(lin, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        ParamSlice s;
        if (!(row >> s.name >> s.offset >> s.length)) throw IoError("malformed layout row: " + line);
        std::size_t d;
        while (row >> d) s.shape.push_back(d);
        if (s.offset != params.layout.total())
            throw IoError("layout row '" + s.name + "' is not contiguous");
        params.layout.add(s.name, s.shape);
        if (params.layout.slices().back().length != s.length)
            throw IoError("layout row '" + s.name + "' length disagrees with its shape");
    }
    if (params.layout.total() != total) throw IoError("layout slices do not sum to the stated total");

    const std::string bytes = binio::read_file(bin_path);
    if (bytes.size() != total * 8)
        throw IoError("'" + bin_path.string() + "' holds " + std::to_string(bytes.size()) +
                      " bytes, expected " + std::to_string(total * 8));
    params.theta = binio::get_f64s(bytes, 0, total);
    for (std::size_t i = 0; i < params.theta.size(); ++i)
        if (!std::isfinite(params.theta[i]))
            throw IoError("checkpoint holds a non-finite value at index " + std::to_string(i));
    return params;
}

std::string to_string(Architecture arch) { return arch == Architecture::mlp ? "mlp" : "conv"; }

Architecture parse_architecture(const std::string& name) {
    if (name == "mlp") return Architecture::mlp;
    if (name == "conv") return Architecture::conv;
    throw InvalidArgument("unknown architecture '" + name + "' (expected mlp or conv)");
}

std::vector<double> time_embedding(int t, int dim) {
    if (dim < 2 || dim % 2 != 0) throw InvalidArgument("time embedding size must be even and >= 2");
    const int half = dim / 2;
    std::vector<double> out(static_cast<std::size_t>(dim));
    for (int i = 0; i < half; ++i) {
        const double freq = std::pow(10000.0, -static_cast<double>(i) / half);
        out[i] = std::sin(t * freq);
        out[half + i] = std::cos(t * freq);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Base class

Denoiser::Denoiser(ModelConfig config) : config_(std::move(config)) {
    if (config_.P < 0) throw InvalidArgument("P must be >= 0");
    if (config_.S < 1) throw InvalidArgument("S must be >= 1");
    if (config_.T < 1) throw InvalidArgument("T must be >= 1");
    if (config_.width < 1) throw InvalidArgument("width must be >= 1");
    if (config_.depth < 0) throw InvalidArgument("depth must be >= 0");
    if (config_.frame.empty() || shape_size(config_.frame) == 0)
        throw InvalidArgument("frame shape must be non-empty");
    if (config_.time_dim < 2 || config_.time_dim % 2 != 0)
        throw InvalidArgument("time_dim must be even and >= 2");
}

std::size_t Denoiser::output_size() const {
    return static_cast<std::size_t>(config_.S) * shape_size(config_.frame);
}

void Denoiser::validate_input(const DenoiserInput& input) const {
    const auto& n = input.noisy;
    const auto& o = input.observations;
    if (n.first() != 1 || n.count() != static_cast<std::size_t>(config_.S))
        throw ShapeMismatch("noisy latents must cover 1.." + std::to_string(config_.S));
    if (o.first() != -config_.P || o.last() != 0)
        throw ShapeMismatch("observations must cover -" + std::to_string(config_.P) + "..0");
    if (n.shape() != config_.frame || o.shape() != config_.frame)
        throw ShapeMismatch("frame shape " + shape_to_string(n.shape()) + " / " +
                            shape_to_string(o.shape()) + " does not match model frame " +
                            shape_to_string(config_.frame));
    if (input.t < 1 || input.t > config_.T)
        throw InvalidArgument("timestep " + std::to_string(input.t) + " outside [1, " +
                              std::to_string(config_.T) + "]");
}

StateSequence Denoiser::predict_noise(const DenoiserParams& params, const DenoiserInput& input) const {
    validate_input(input);
    if (params.theta.size() != layout().total())
        throw ShapeMismatch("parameter vector has " + std::to_string(params.theta.size()) +
                            " entries, model expects " + std::to_string(layout().total()));
    StateSequence out(1, static_cast<std::size_t>(config_.S), config_.frame);
    forward(params.theta, input, out.values(), nullptr);
    return out;
}

double Denoiser::loss_and_gradient(const DenoiserParams& params, std::span<const TrainingExample> batch,
                                   std::vector<double>& grad) const {
    if (batch.empty()) throw InvalidArgument("batch is empty");
    if (params.theta.size() != layout().total())
        throw ShapeMismatch("parameter vector length does not match the model layout");
    grad.assign(params.theta.size(), 0.0);
    const std::size_t n_out = output_size();
    const double denom = static_cast<double>(n_out * batch.size());
    std::vector<double> out(n_out), d_out(n_out);
    Workspace ws;
    double total = 0.0;
    for (std::size_t b = 0; b < batch.size(); ++b) {
        const auto& ex = batch[b];
        DenoiserInput input{ex.noisy, ex.observations, ex.t};
        validate_input(input);
        require_same_layout(ex.noisy, ex.target, "training target");
        forward(params.theta, input, out, &ws);
        const auto target = ex.target.values();
        double sq = 0.0;
        for (std::size_t i = 0; i < n_out; ++i) {
            const double r = out[i] - target[i];
            sq += r * r;
            d_out[i] = 2.0 * r / denom;
        }
        if (!std::isfinite(sq))
            throw NumericFailure("batch[" + std::to_string(b) + "]", "non-finite loss in batch element " +
                                                                         std::to_string(b));
        total += sq;
        backward(params.theta, d_out, ws, grad);
    }
    for (std::size_t i = 0; i < grad.size(); ++i)
        if (!std::isfinite(grad[i])) throw NumericFailure("gradient", "non-finite gradient entry " + std::to_string(i));
    return total / denom;
}

double Denoiser::loss(const DenoiserParams& params, std::span<const TrainingExample> batch) const {
    if (batch.empty()) throw InvalidArgument("batch is empty");
    const std::size_t n_out = output_size();
    std::vector<double> out(n_out);
    double total = 0.0;
    for (const auto& ex : batch) {
        DenoiserInput input{ex.noisy, ex.observations, ex.t};
        validate_input(input);
        require_same_layout(ex.noisy, ex.target, "training target");
        forward(params.theta, input, out, nullptr);
        total += simd::sum_sq_diff(out, ex.target.values());
    }
    return total / static_cast<double>(n_out * batch.size());
}

namespace {

void check_layer(std::span<const double> values, const std::string& layer) {
    for (double v : values)
        if (!std::isfinite(v)) throw NumericFailure(layer, "non-finite activation in layer '" + layer + "'");
}

void fill_fan_in(std::span<double> w, std::size_t fan_in, Rng& rng) {
    const double sd = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (auto& v : w) v = sd * rng.normal();
}

std::string block_name(int k, const char* part) { return "block" + std::to_string(k) + "." + part; }

// ---------------------------------------------------------------------------
// Residual MLP over [noisy, observations, time embedding].
//
// h0 = W_in z + b_in
// h_{k+1} = h_k + W2_k silu(W1_k silu(h_k) + b1_k) + b2_k
// out = W_out silu(h_K) + b_out

class MlpDenoiser final : public Denoiser {
public:
    explicit MlpDenoiser(ModelConfig config) : Denoiser(std::move(config)) {
        const std::size_t f = shape_size(config_.frame);
        in_dim_ = f * static_cast<std::size_t>(config_.S + config_.P + 1) +
                  static_cast<std::size_t>(config_.time_dim);
        width_ = static_cast<std::size_t>(config_.width);
        out_dim_ = output_size();
        layout_ = build_layout();
    }

    ParamLayout layout() const override { return layout_; }

    DenoiserParams init_params(Rng& rng) const override {
        DenoiserParams p{std::vector<double>(layout_.total(), 0.0), layout_};
        fill_fan_in(p.view("in.weight"), in_dim_, rng);
        for (int k = 0; k < config_.depth; ++k) {
            fill_fan_in(p.view(block_name(k, "fc1.weight")), width_, rng);
            fill_fan_in(p.view(block_name(k, "fc2.weight")), width_, rng);
        }
        return p;
    }

protected:
    // Workspace buffers: [0] z, then per level k: h_k, a_k = silu(h_k); per block
    // additionally u_k (pre-activation) and c_k = silu(u_k).
    void forward(std::span<const double> theta, const DenoiserInput& input, std::span<double> out,
                 Workspace* ws) const override {
        Workspace local;
        Workspace& w = ws ? *ws : local;
        const auto depth = static_cast<std::size_t>(config_.depth);
        w.buffers.resize(1 + 2 * (depth + 1) + 2 * depth);
        auto& z = w.buffers[0];
        z.resize(in_dim_);
        auto noisy = input.noisy.values();
        auto obs = input.observations.values();
        std::copy(noisy.begin(), noisy.end(), z.begin());
        std::copy(obs.begin(), obs.end(), z.begin() + static_cast<std::ptrdiff_t>(noisy.size()));
        const auto emb = time_embedding(input.t, config_.time_dim);
        std::copy(emb.begin(), emb.end(), z.begin() + static_cast<std::ptrdiff_t>(noisy.size() + obs.size()));

        auto& h0 = hidden(w, 0);
        h0.resize(width_);
        nn::dense_forward(ptr(theta, "in.weight"), ptr(theta, "in.bias"), z, h0);
        check_layer(h0, "in");

        for (std::size_t k = 0; k < depth; ++k) {
            auto& h = hidden(w, k);
            auto& a = act(w, k);
            auto& u = pre(w, k);
            auto& c = post(w, k);
            a.resize(width_);
            u.resize(width_);
            c.resize(width_);
            nn::silu(h, a);
            const int kb = static_cast<int>(k);
            nn::dense_forward(ptr(theta, block_name(kb, "fc1.weight")), ptr(theta, block_name(kb, "fc1.bias")), a, u);
            nn::silu(u, c);
            auto& next = hidden(w, k + 1);
            next.resize(width_);
            nn::dense_forward(ptr(theta, block_name(kb, "fc2.weight")), ptr(theta, block_name(kb, "fc2.bias")), c, next);
            for (std::size_t i = 0; i < width_; ++i) next[i] += h[i];
            check_layer(next, "block" + std::to_string(k));
        }
        auto& last = act(w, depth);
        last.resize(width_);
        nn::silu(hidden(w, depth), last);
        nn::dense_forward(ptr(theta, "out.weight"), ptr(theta, "out.bias"), last, out);
        check_layer(out, "out");
    }

    void backward(std::span<const double> theta, std::span<const double> d_out, Workspace& w,
                  std::span<double> grad) const override {
        const auto depth = static_cast<std::size_t>(config_.depth);
        std::vector<double> d_h(width_, 0.0), d_tmp(width_), d_u(width_), d_c(width_);

        // out = W_out silu(h_K) + b_out
        std::vector<double> d_last(width_, 0.0);
        nn::dense_backward(ptr(theta, "out.weight"), act(w, depth), d_out, gptr(grad, "out.weight"),
                           gptr(grad, "out.bias"), d_last);
        nn::silu_backward(hidden(w, depth), d_last, d_h);

        for (std::size_t k = depth; k-- > 0;) {
            const int kb = static_cast<int>(k);
            // next = h + W2 c + b2
            std::fill(d_c.begin(), d_c.end(), 0.0);
            nn::dense_backward(ptr(theta, block_name(kb, "fc2.weight")), post(w, k), d_h,
                               gptr(grad, block_name(kb, "fc2.weight")),
                               gptr(grad, block_name(kb, "fc2.bias")), d_c);
            nn::silu_backward(pre(w, k), d_c, d_u);
            std::fill(d_tmp.begin(), d_tmp.end(), 0.0);
            nn::dense_backward(ptr(theta, block_name(kb, "fc1.weight")), act(w, k), d_u,
                               gptr(grad, block_name(kb, "fc1.weight")),
                               gptr(grad, block_name(kb, "fc1.bias")), d_tmp);
            nn::silu_backward(hidden(w, k), d_tmp, d_u);
            for (std::size_t i = 0; i < width_; ++i) d_h[i] += d_u[i];
        }
        nn::dense_backward(ptr(theta, "in.weight"), w.buffers[0], d_h, gptr(grad, "in.weight"),
                           gptr(grad, "in.bias"), {});
    }

private:
    ParamLayout build_layout() const {
        ParamLayout l;
        l.add("in.weight", {width_, in_dim_});
        l.add("in.bias", {width_});
        for (int k = 0; k < config_.depth; ++k) {
            l.add(block_name(k, "fc1.weight"), {width_, width_});
            l.add(block_name(k, "fc1.bias"), {width_});
            l.add(block_name(k, "fc2.weight"), {width_, width_});
            l.add(block_name(k, "fc2.bias"), {width_});
        }
        l.add("out.weight", {out_dim_, width_});
        l.add("out.bias", {out_dim_});
        return l;
    }

    const double* ptr(std::span<const double> theta, const std::string& name) const {
        return theta.data() + layout_.find(name).offset;
    }
    double* gptr(std::span<double> grad, const std::string& name) const {
        return grad.data() + layout_.find(name).offset;
    }

    static std::vector<double>& hidden(Workspace& w, std::size_t k) { return w.buffers[1 + 2 * k]; }
    static std::vector<double>& act(Workspace& w, std::size_t k) { return w.buffers[2 + 2 * k]; }
    std::vector<double>& pre(Workspace& w, std::size_t k) const {
        return w.buffers[1 + 2 * (static_cast<std::size_t>(config_.depth) + 1) + 2 * k];
    }
    std::vector<double>& post(Workspace& w, std::size_t k) const {
        return w.buffers[2 + 2 * (static_cast<std::size_t>(config_.depth) + 1) + 2 * k];
    }

    std::size_t in_dim_ = 0;
    std::size_t width_ = 0;
    std::size_t out_dim_ = 0;
    ParamLayout layout_;
};

// ---------------------------------------------------------------------------
// Periodic 3x3 convolutional variant over frames stacked as channels.
// Frames are (H, W) or (C, H, W).
//
// h0 = conv_in(x) + b_in + W_time emb(t)
// h_{k+1} = h_k + conv2_k(silu(conv1_k(silu(h_k))))
// out = conv_out(silu(h_K))

class ConvDenoiser final : public Denoiser {
public:
    explicit ConvDenoiser(ModelConfig config) : Denoiser(std::move(config)) {
        const auto& f = config_.frame;
        if (f.size() == 2) {
            channels_ = 1;
            grid_ = {f[0], f[1]};
        } else if (f.size() == 3) {
            channels_ = f[0];
            grid_ = {f[1], f[2]};
        } else {
            throw InvalidArgument("conv denoiser needs frames of shape (H, W) or (C, H, W), got " +
                                  shape_to_string(f));
        }
        in_ch_ = channels_ * static_cast<std::size_t>(config_.S + config_.P + 1);
        out_ch_ = channels_ * static_cast<std::size_t>(config_.S);
        width_ = static_cast<std::size_t>(config_.width);
        layout_ = build_layout();
    }

    ParamLayout layout() const override { return layout_; }

    DenoiserParams init_params(Rng& rng) const override {
        DenoiserParams p{std::vector<double>(layout_.total(), 0.0), layout_};
        fill_fan_in(p.view("in.weight"), in_ch_ * 9, rng);
        fill_fan_in(p.view("time.weight"), static_cast<std::size_t>(config_.time_dim), rng);
        for (int k = 0; k < config_.depth; ++k) {
            fill_fan_in(p.view(block_name(k, "conv1.weight")), width_ * 9, rng);
            fill_fan_in(p.view(block_name(k, "conv2.weight")), width_ * 9, rng);
        }
        return p;
    }

protected:
    // Workspace: [0] shifted input, [1] time embedding, then per level k:
    // h_k, shifted(silu(h_k)); per block: u_k, shifted(silu(u_k)).
    void forward(std::span<const double> theta, const DenoiserInput& input, std::span<double> out,
                 Workspace* ws) const override {
        Workspace local;
        Workspace& w = ws ? *ws : local;
        const auto depth = static_cast<std::size_t>(config_.depth);
        const std::size_t n = grid_.plane();
        w.buffers.resize(2 + 2 * (depth + 1) + 2 * depth);

        std::vector<double> x;
        x.reserve(in_ch_ * n);
        auto noisy = input.noisy.values();
        auto obs = input.observations.values();
        x.insert(x.end(), noisy.begin(), noisy.end());
        x.insert(x.end(), obs.begin(), obs.end());
        nn::build_shifted(x, in_ch_, grid_, w.buffers[0]);
        w.buffers[1] = time_embedding(input.t, config_.time_dim);

        auto& h0 = hidden(w, 0);
        h0.resize(width_ * n);
        nn::conv_forward(ptr(theta, "in.weight"), ptr(theta, "in.bias"), w.buffers[0], in_ch_, width_, grid_, h0);
        const double* tw = ptr(theta, "time.weight");
        const auto td = static_cast<std::size_t>(config_.time_dim);
        for (std::size_t o = 0; o < width_; ++o) {
            const double shift = simd::dot({tw + o * td, td}, w.buffers[1]);
            for (std::size_t i = 0; i < n; ++i) h0[o * n + i] += shift;
        }
        check_layer(h0, "in");

        std::vector<double> tmp(width_ * n);
        for (std::size_t k = 0; k < depth; ++k) {
            const int kb = static_cast<int>(k);
            nn::silu(hidden(w, k), tmp);
            nn::build_shifted(tmp, width_, grid_, act_shifted(w, k));
            auto& u = pre(w, k);
            u.resize(width_ * n);
            nn::conv_forward(ptr(theta, block_name(kb, "conv1.weight")), ptr(theta, block_name(kb, "conv1.bias")),
                             act_shifted(w, k), width_, width_, grid_, u);
            nn::silu(u, tmp);
            nn::build_shifted(tmp, width_, grid_, post_shifted(w, k));
            auto& next = hidden(w, k + 1);
            next.resize(width_ * n);
            nn::conv_forward(ptr(theta, block_name(kb, "conv2.weight")), ptr(theta, block_name(kb, "conv2.bias")),
                             post_shifted(w, k), width_, width_, grid_, next);
            const auto& h = hidden(w, k);
            for (std::size_t i = 0; i < next.size(); ++i) next[i] += h[i];
            check_layer(next, "block" + std::to_string(k));
        }
        nn::silu(hidden(w, depth), tmp);
        nn::build_shifted(tmp, width_, grid_, act_shifted(w, depth));
        nn::conv_forward(ptr(theta, "out.weight"), ptr(theta, "out.bias"), act_shifted(w, depth), width_,
                         out_ch_, grid_, out);
        check_layer(out, "out");
    }

    void backward(std::span<const double> theta, std::span<const double> d_out, Workspace& w,
                  std::span<double> grad) const override {
        const auto depth = static_cast<std::size_t>(config_.depth);
        const std::size_t n = grid_.plane();
        std::vector<double> d_shift(9 * width_ * n);
        std::vector<double> d_act(width_ * n), d_h(width_ * n), d_u(width_ * n);

        auto back_through = [&](const double* wt, double* gw, double* gb, std::span<const double> shifted,
                                std::span<const double> d_y, std::size_t in_ch, std::size_t out_ch,
                                std::vector<double>& d_in) {
            std::fill(d_shift.begin(), d_shift.end(), 0.0);
            nn::conv_backward(wt, shifted, d_y, in_ch, out_ch, grid_, gw, gb,
                              std::span<double>(d_shift).first(9 * in_ch * n));
            std::fill(d_in.begin(), d_in.end(), 0.0);
            nn::unshift_accumulate(std::span<const double>(d_shift).first(9 * in_ch * n), in_ch, grid_, d_in);
        };

        back_through(ptr(theta, "out.weight"), gptr(grad, "out.weight"), gptr(grad, "out.bias"),
                     act_shifted(w, depth), d_out, width_, out_ch_, d_act);
        nn::silu_backward(hidden(w, depth), d_act, d_h);

        for (std::size_t k = depth; k-- > 0;) {
            const int kb = static_cast<int>(k);
            back_through(ptr(theta, block_name(kb, "conv2.weight")), gptr(grad, block_name(kb, "conv2.weight")),
                         gptr(grad, block_name(kb, "conv2.bias")), post_shifted(w, k), d_h, width_, width_, d_act);
            nn::silu_backward(pre(w, k), d_act, d_u);
            back_through(ptr(theta, block_name(kb, "conv1.weight")), gptr(grad, block_name(kb, "conv1.weight")),
                         gptr(grad, block_name(kb, "conv1.bias")), act_shifted(w, k), d_u, width_, width_, d_act);
            nn::silu_backward(hidden(w, k), d_act, d_u);
            for (std::size_t i = 0; i < d_h.size(); ++i) d_h[i] += d_u[i];
        }

        nn::conv_backward(ptr(theta, "in.weight"), w.buffers[0], d_h, in_ch_, width_, grid_,
                          gptr(grad, "in.weight"), gptr(grad, "in.bias"), {});
        double* gt = gptr(grad, "time.weight");
        const auto td = static_cast<std::size_t>(config_.time_dim);
        for (std::size_t o = 0; o < width_; ++o) {
            double sum = 0.0;
            for (std::size_t i = 0; i < n; ++i) sum += d_h[o * n + i];
            simd::axpy(sum, w.buffers[1], {gt + o * td, td});
        }
    }

private:
    ParamLayout build_layout() const {
        ParamLayout l;
        l.add("in.weight", {width_, in_ch_, 3, 3});
        l.add("in.bias", {width_});
        l.add("time.weight", {width_, static_cast<std::size_t>(config_.time_dim)});
        for (int k = 0; k < config_.depth; ++k) {
            l.add(block_name(k, "conv1.weight"), {width_, width_, 3, 3});
            l.add(block_name(k, "conv1.bias"), {width_});
            l.add(block_name(k, "conv2.weight"), {width_, width_, 3, 3});
            l.add(block_name(k, "conv2.bias"), {width_});
        }
        l.add("out.weight", {out_ch_, width_, 3, 3});
        l.add("out.bias", {out_ch_});
        return l;
    }

    const double* ptr(std::span<const double> theta, const std::string& name) const {
        return theta.data() + layout_.find(name).offset;
    }
    double* gptr(std::span<double> grad, const std::string& name) const {
        return grad.data() + layout_.find(name).offset;
    }

    static std::vector<double>& hidden(Workspace& w, std::size_t k) { return w.buffers[2 + 2 * k]; }
    static std::vector<double>& act_shifted(Workspace& w, std::size_t k) { return w.buffers[3 + 2 * k]; }
    std::vector<double>& pre(Workspace& w, std::size_t k) const {
        return w.buffers[2 + 2 * (static_cast<std::size_t>(config_.depth) + 1) + 2 * k];
    }
    std::vector<double>& post_shifted(Workspace& w, std::size_t k) const {
        return w.buffers[3 + 2 * (static_cast<std::size_t>(config_.depth) + 1) + 2 * k];
    }

    std::size_t channels_ = 1;
    nn::Grid grid_{1, 1};
    std::size_t in_ch_ = 0;
    std::size_t out_ch_ = 0;
    std::size_t width_ = 0;
    ParamLayout layout_;
};

}  // namespace

std::unique_ptr<Denoiser> make_denoiser(const ModelConfig& config) {
    switch (config.arch) {
        case Architecture::mlp: return std::make_unique<MlpDenoiser>(config);
        case Architecture::conv: return std::make_unique<ConvDenoiser>(config);
    }
    throw InvalidArgument("unknown architecture");
}

}  // namespace dydiff
