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

#include "dydiff/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include "binary_io.hpp"
#include "dydiff/simd.hpp"

namespace dydiff {

using nlohmann::json;
namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Strict JSON reading

namespace {

std::string join(const std::vector<std::string>& parts, const char* sep) {
    std::string out;
    for (const auto& p : parts) out += (out.empty() ? "" : sep) + p;
    return out;
}

/// Reads typed fields of one JSON object, collecting type errors and unknown keys.
class ObjectReader {
public:
    ObjectReader(const json* j, std::string path, std::vector<std::string>& errors)
        : j_(j), path_(std::move(path)), errors_(errors) {
        if (j_ && !j_->is_object()) {
            errors_.push_back(path_ + ": expected an object");
            j_ = nullptr;
        }
    }

    template <typename T>
    void read(const std::string& key, T& target) {
        seen_.insert(key);
        if (!j_ || !j_->contains(key)) return;
        const json& v = j_->at(key);
        try {
            if constexpr (std::is_same_v<T, bool>) {
                if (!v.is_boolean()) throw std::invalid_argument("expected true or false");
            } else if constexpr (std::is_integral_v<T>) {
                if (!v.is_number_integer()) throw std::invalid_argument("expected an integer");
                if (std::is_unsigned_v<T> && v.is_number_integer() && v.get<std::int64_t>() < 0)
                    throw std::invalid_argument("expected a non-negative integer");
            } else if constexpr (std::is_floating_point_v<T>) {
                if (!v.is_number()) throw std::invalid_argument("expected a number");
            } else if constexpr (std::is_same_v<T, std::string>) {
                if (!v.is_string()) throw std::invalid_argument("expected a string");
            }
            target = v.get<T>();
        } catch (const std::exception& e) {
            errors_.push_back(path_ + "." + key + ": " + e.what());
        }
    }

    template <typename T>
    void read_optional(const std::string& key, std::optional<T>& target) {
        seen_.insert(key);
        if (!j_ || !j_->contains(key) || j_->at(key).is_null()) return;
        T value{};
        read(key, value);
        target = value;
    }

    /// Parses a string field through `parse`, recording its error message.
    template <typename T, typename Parse>
    void read_enum(const std::string& key, T& target, Parse parse) {
        std::string name;
        bool present = j_ && j_->contains(key);
        read(key, name);
        if (!present || name.empty()) return;
        try {
            target = parse(name);
        } catch (const Error& e) {
            errors_.push_back(path_ + "." + key + ": " + e.what());
        }
    }

    const json* child(const std::string& key) {
        seen_.insert(key);
        if (!j_ || !j_->contains(key)) return nullptr;
        return &j_->at(key);
    }

    void allow(const std::string& key) { seen_.insert(key); }

    void finish() {
        if (!j_) return;
        for (const auto& [key, value] : j_->items())
            if (!seen_.count(key)) errors_.push_back(path_ + "." + key + ": unknown key");
    }

private:
    const json* j_;
    std::string path_;
    std::vector<std::string>& errors_;
    std::set<std::string> seen_;
};

}  // namespace

std::size_t DatasetConfig::num_sequences() const {
    return generator == "advected_blobs" ? blobs.num_sequences : linear_gaussian.num_sequences;
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
    ExperimentConfig c;
    std::vector<std::string> errors;
    ObjectReader root(&j, "config", errors);
    if (!j.is_object()) throw ConfigError("config: expected a JSON object at the top level");

    {
        const json* dj = root.child("dataset");
        ObjectReader d(dj, "dataset", errors);
        d.read("generator", c.dataset.generator);
        d.read("path", c.dataset.path);
        d.read("test_sequences", c.dataset.test_sequences);
        std::size_t num_sequences = 0, length = 0;
        std::uint64_t seed = 0;
        bool has_n = dj && dj->is_object() && dj->contains("num_sequences");
        bool has_len = dj && dj->is_object() && dj->contains("length");
        bool has_seed = dj && dj->is_object() && dj->contains("seed");
        d.read("num_sequences", num_sequences);
        d.read("length", length);
        d.read("seed", seed);
        if (c.dataset.generator == "linear_gaussian") {
            auto& s = c.dataset.linear_gaussian;
            if (has_n) s.num_sequences = num_sequences;
            if (has_len) s.length = length;
            if (has_seed) s.seed = seed;
            d.read("dim", s.dim);
            d.read("noise_scale", s.noise_scale);
            ObjectReader t(d.child("transition"), "dataset.transition", errors);
            t.read("kind", s.transition.kind);
            t.read("radius", s.transition.radius);
            t.read("angle", s.transition.angle);
            t.read("matrix", s.transition.matrix);
            t.finish();
        } else if (c.dataset.generator == "advected_blobs") {
            auto& s = c.dataset.blobs;
            if (has_n) s.num_sequences = num_sequences;
            if (has_len) s.length = length;
            if (has_seed) s.seed = seed;
            d.read("grid", s.grid);
            d.read("num_blobs", s.num_blobs);
            d.read("blob_width", s.blob_width);
            ObjectReader v(d.child("velocity"), "dataset.velocity", errors);
            v.read("kind", s.velocity.kind);
            v.read("vx", s.velocity.vx);
            v.read("vy", s.velocity.vy);
            v.read("omega", s.velocity.omega);
            v.read("jitter", s.velocity.jitter);
            v.finish();
        } else {
            errors.push_back("dataset.generator: unknown generator '" + c.dataset.generator +
                             "' (expected linear_gaussian or advected_blobs)");
            for (const char* k : {"dim", "noise_scale", "transition", "grid", "num_blobs", "blob_width", "velocity"})
                d.allow(k);
        }
        d.finish();
    }
    {
        ObjectReader w(root.child("window"), "window", errors);
        w.read("P", c.P);
        w.read("S", c.S);
        w.finish();
    }
    {
        ObjectReader s(root.child("schedule"), "schedule", errors);
        s.read("T", c.schedule.T);
        s.read_enum("family", c.schedule.alpha.family, parse_alpha_family);
        s.read("beta_start", c.schedule.alpha.beta_start);
        s.read("beta_end", c.schedule.alpha.beta_end);
        s.read("cosine_offset", c.schedule.alpha.cosine_offset);
        s.read("max_beta", c.schedule.alpha.max_beta);
        s.read("eta", c.schedule.eta);
        s.read_enum("gamma_rule", c.schedule.gamma_rule, parse_gamma_rule);
        s.read_enum("sigma", c.schedule.sigma, parse_sigma_mode);
        s.finish();
    }
    {
        ObjectReader m(root.child("model"), "model", errors);
        m.read_enum("arch", c.arch, parse_architecture);
        m.read("width", c.width);
        m.read("depth", c.depth);
        m.read("time_dim", c.time_dim);
        m.finish();
    }
    {
        ObjectReader t(root.child("train"), "train", errors);
        t.read("steps", c.train.steps);
        t.read("batch_size", c.train.batch_size);
        t.read("learning_rate", c.train.learning_rate);
        t.read_enum("optimizer", c.train.optimizer, parse_optimizer);
        t.read("eval_every", c.train.eval_every);
        t.read("checkpoint_every", c.train.checkpoint_every);
        t.read("independent_noise", c.train.independent_noise);
        t.read("adam_beta1", c.train.adam_beta1);
        t.read("adam_beta2", c.train.adam_beta2);
        t.read("adam_epsilon", c.train.adam_epsilon);
        t.finish();
    }
    root.read("seed", c.seed);
    c.train.seed = c.seed;
    c.sampler.seed = c.seed;
    {
        ObjectReader s(root.child("sampler"), "sampler", errors);
        s.read_enum("kind", c.sampler.kind, parse_sampler_kind);
        s.read("num_steps", c.sampler.num_steps);
        s.read("stochastic", c.sampler.stochastic);
        s.read("ensemble", c.sampler.ensemble);
        s.read("max_cases", c.sampler.max_cases);
        s.read("seed", c.sampler.seed);
        s.finish();
    }
    {
        ObjectReader m(root.child("metrics"), "metrics", errors);
        m.read_enum("crps_pool", c.metrics.crps_pool, parse_pool);
        m.read("crps_window", c.metrics.crps_window);
        m.read("csi_window", c.metrics.csi_window);
        m.read_optional("csi_threshold", c.metrics.csi_threshold);
        m.read_optional("psnr_range", c.metrics.psnr_range);
        m.finish();
    }
    root.read("output", c.output);
    root.finish();

    try {
        c.validate();
    } catch (const ConfigError& e) {
        errors.push_back(e.what());
    }
    if (!errors.empty()) throw ConfigError(join(errors, "; "));
    return c;
}

json ExperimentConfig::to_json() const {
    json d = {{"generator", dataset.generator}, {"path", dataset.path}, {"test_sequences", dataset.test_sequences}};
    if (dataset.generator == "advected_blobs") {
        const auto& s = dataset.blobs;
        d["num_sequences"] = s.num_sequences;
        d["length"] = s.length;
        d["seed"] = s.seed;
        d["grid"] = s.grid;
        d["num_blobs"] = s.num_blobs;
        d["blob_width"] = s.blob_width;
        d["velocity"] = {{"kind", s.velocity.kind}, {"vx", s.velocity.vx}, {"vy", s.velocity.vy},
                         {"omega", s.velocity.omega}, {"jitter", s.velocity.jitter}};
    } else {
        const auto& s = dataset.linear_gaussian;
        d["num_sequences"] = s.num_sequences;
        d["length"] = s.length;
        d["seed"] = s.seed;
        d["dim"] = s.dim;
        d["noise_scale"] = s.noise_scale;
        d["transition"] = {{"kind", s.transition.kind}, {"radius", s.transition.radius},
                           {"angle", s.transition.angle}, {"matrix", s.transition.matrix}};
    }
    json m = {{"crps_pool", dydiff::to_string(metrics.crps_pool)},
              {"crps_window", metrics.crps_window},
              {"csi_window", metrics.csi_window},
              {"csi_threshold", metrics.csi_threshold ? json(*metrics.csi_threshold) : json(nullptr)},
              {"psnr_range", metrics.psnr_range ? json(*metrics.psnr_range) : json(nullptr)}};
    return {
        {"dataset", d},
        {"window", {{"P", P}, {"S", S}}},
        {"schedule",
         {{"T", schedule.T},
          {"family", dydiff::to_string(schedule.alpha.family)},
          {"beta_start", schedule.alpha.beta_start},
          {"beta_end", schedule.alpha.beta_end},
          {"cosine_offset", schedule.alpha.cosine_offset},
          {"max_beta", schedule.alpha.max_beta},
          {"eta", schedule.eta},
          {"gamma_rule", dydiff::to_string(schedule.gamma_rule)},
          {"sigma", dydiff::to_string(schedule.sigma)}}},
        {"model", {{"arch", dydiff::to_string(arch)}, {"width", width}, {"depth", depth}, {"time_dim", time_dim}}},
        {"train",
         {{"steps", train.steps},
          {"batch_size", train.batch_size},
          {"learning_rate", train.learning_rate},
          {"optimizer", dydiff::to_string(train.optimizer)},
          {"eval_every", train.eval_every},
          {"checkpoint_every", train.checkpoint_every},
          {"independent_noise", train.independent_noise},
          {"adam_beta1", train.adam_beta1},
          {"adam_beta2", train.adam_beta2},
          {"adam_epsilon", train.adam_epsilon}}},
        {"sampler",
         {{"kind", dydiff::to_string(sampler.kind)},
          {"num_steps", sampler.num_steps},
          {"stochastic", sampler.stochastic},
          {"ensemble", sampler.ensemble},
          {"max_cases", sampler.max_cases},
          {"seed", sampler.seed}}},
        {"metrics", m},
        {"seed", seed},
        {"output", output},
    };
}

void ExperimentConfig::validate() const {
    std::vector<std::string> errors;
    const bool blobs = dataset.generator == "advected_blobs";
    const std::size_t length = blobs ? dataset.blobs.length : dataset.linear_gaussian.length;
    const std::size_t n_seq = dataset.num_sequences();
    if (P < 0) errors.push_back("window.P must be >= 0");
    if (S < 1) errors.push_back("window.S must be >= 1");
    if (P >= 0 && S >= 1 && length < static_cast<std::size_t>(P + S + 1))
        errors.push_back("dataset.length " + std::to_string(length) + " is shorter than the window (P + S + 1 = " +
                         std::to_string(P + S + 1) + ")");
    if (dataset.test_sequences < 1 || dataset.test_sequences >= n_seq)
        errors.push_back("dataset.test_sequences must be in [1, num_sequences)");
    if (dataset.path.empty()) errors.push_back("dataset.path must name the dataset file");
    if (blobs && dataset.blobs.grid < 8) errors.push_back("dataset.grid must be >= 8");
    if (!blobs && dataset.linear_gaussian.dim < 1) errors.push_back("dataset.dim must be >= 1");

    if (schedule.T < 1) errors.push_back("schedule.T must be >= 1");
    if (!(schedule.eta >= 0.0 && schedule.eta <= 1.0)) errors.push_back("schedule.eta must be in [0, 1]");
    if (width < 1) errors.push_back("model.width must be >= 1");
    if (depth < 0) errors.push_back("model.depth must be >= 0");
    if (time_dim < 2 || time_dim % 2 != 0) errors.push_back("model.time_dim must be even and >= 2");
    if (arch == Architecture::conv && !blobs)
        errors.push_back("model.arch conv needs a grid dataset (advected_blobs)");

    try {
        train.validate();
    } catch (const ConfigError& e) {
        errors.push_back(e.what());
    }

    if (sampler.num_steps < 1) errors.push_back("sampler.num_steps must be >= 1");
    if (schedule.T >= 1 && sampler.num_steps > schedule.T)
        errors.push_back("sampler.num_steps " + std::to_string(sampler.num_steps) + " exceeds schedule.T " +
                         std::to_string(schedule.T));
    if (sampler.ensemble < 1) errors.push_back("sampler.ensemble must be >= 1");
    if (sampler.max_cases < 1) errors.push_back("sampler.max_cases must be >= 1");
    if (sampler.kind == SamplerKind::dydiff_ddpm && train.independent_noise)
        errors.push_back("sampler.kind dydiff-ddpm cannot be used with train.independent_noise");

    if (metrics.crps_window < 1) errors.push_back("metrics.crps_window must be >= 1");
    if (metrics.csi_window < 1) errors.push_back("metrics.csi_window must be >= 1");
    const std::size_t extent = blobs ? dataset.blobs.grid : 1;
    const bool crps_pooled = metrics.crps_pool != Pool::none && metrics.crps_window > 1;
    if (crps_pooled && static_cast<std::size_t>(metrics.crps_window) > extent)
        errors.push_back("metrics.crps_window exceeds the spatial extent of the frames");
    if (metrics.csi_window > 1 && static_cast<std::size_t>(metrics.csi_window) > extent)
        errors.push_back("metrics.csi_window exceeds the spatial extent of the frames");
    if (metrics.psnr_range && !(*metrics.psnr_range > 0.0)) errors.push_back("metrics.psnr_range must be > 0");
    if (output.empty()) errors.push_back("output must name the run directory");

    if (!errors.empty()) throw ConfigError(join(errors, "; "));
}

std::string ExperimentConfig::label() const {
    return schedule.gamma_rule == GammaRule::mixing && schedule.eta == 0.0 ? "dpm" : "dydiff";
}

ExperimentConfig load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config '" + path.string() + "'");
    json j;
    try {
        j = json::parse(in, nullptr, true, true);
    } catch (const json::parse_error& e) {
        throw ConfigError("config '" + path.string() + "' is not valid JSON: " + e.what());
    }
    return ExperimentConfig::from_json(j);
}

Schedule make_schedule(const ScheduleConfig& config) {
    if (config.gamma_rule == GammaRule::timegrad) return build_timegrad_schedule(config.T, config.alpha, config.sigma);
    if (config.gamma_rule != GammaRule::mixing) throw ConfigError("schedule.gamma_rule must be mixing or timegrad");
    return build_schedule(config.T, config.alpha, config.eta, config.sigma);
}

Dataset generate_dataset(const DatasetConfig& config) {
    if (config.generator == "linear_gaussian") return gen_linear_gaussian(config.linear_gaussian);
    if (config.generator == "advected_blobs") return gen_advected_blobs(config.blobs);
    throw ConfigError("unknown generator '" + config.generator + "'");
}

ModelConfig make_model_config(const ExperimentConfig& config, const FrameShape& frame) {
    ModelConfig m;
    m.arch = config.arch;
    m.frame = frame;
    m.P = config.P;
    m.S = config.S;
    m.T = config.schedule.T;
    m.width = config.width;
    m.depth = config.depth;
    m.time_dim = config.time_dim;
    return m;
}

std::vector<WindowRef> train_window_refs(const ExperimentConfig& config, const Dataset& dataset) {
    return window_refs(dataset, config.P, config.S, 0, dataset.num_sequences - config.dataset.test_sequences);
}

std::vector<WindowRef> test_window_refs(const ExperimentConfig& config, const Dataset& dataset) {
    auto refs = window_refs(dataset, config.P, config.S, dataset.num_sequences - config.dataset.test_sequences,
                            dataset.num_sequences, config.sampler.seed);
    if (refs.size() > static_cast<std::size_t>(config.sampler.max_cases))
        refs.resize(static_cast<std::size_t>(config.sampler.max_cases));
    return refs;
}

fs::path default_output_root() {
    const char* env = std::getenv("DYDIFF_OUTPUT_ROOT");
    return env && *env ? fs::path(env) : fs::path("runs");
}

// ---------------------------------------------------------------------------
// Commands

namespace {

std::string fmt_real(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

json read_json(const fs::path& path) {
    const std::string text = binio::read_file(path);
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw IoError("'" + path.string() + "' is not valid JSON: " + e.what());
    }
}

void write_json(const fs::path& path, const json& j) { binio::write_file_atomic(path, j.dump(2) + "\n"); }

ExperimentConfig config_from_options(const CommandOptions& options) {
    if (!options.config) throw ConfigError("--config is required");
    return load_config(*options.config);
}

Dataset load_dataset_checked(const ExperimentConfig& config, const std::string& expected_fingerprint = {}) {
    const fs::path path(config.dataset.path);
    if (!fs::exists(path))
        throw IoError("dataset file '" + path.string() + "' does not exist; run gen-data first");
    Dataset d = read_dataset(path);
    if (d.generator != config.dataset.generator)
        throw ConfigError("dataset '" + path.string() + "' was made by generator '" + d.generator +
                          "', config expects '" + config.dataset.generator + "'");
    if (d.num_sequences <= config.dataset.test_sequences)
        throw ConfigError("dataset has too few sequences for the requested test split");
    if (!expected_fingerprint.empty() && d.fingerprint() != expected_fingerprint)
        throw IoError("dataset '" + path.string() + "' changed since the run was trained (fingerprint mismatch)");
    return d;
}

std::string checkpoint_name(int step) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "step_%08d", step);
    return buf;
}

json schedule_json(const Schedule& s) {
    return {{"alpha_bar", s.alpha_bar_table()},
            {"gamma_bar", s.gamma_bar_table()},
            {"sigma", s.sigma_table()}};
}

/// Config fields that must agree for a resume (everything except the step budget
/// and sampling/metric settings, which do not affect training).
json training_identity(const ExperimentConfig& c) {
    json j = c.to_json();
    j["train"].erase("steps");
    j["train"].erase("eval_every");
    j["train"].erase("checkpoint_every");
    j.erase("sampler");
    j.erase("metrics");
    j.erase("output");
    return j;
}

const std::vector<std::string> kRunArtifacts = {"manifest.json", "loss.csv",   "eval.csv", "checkpoints",
                                                "samples",       "latents",    "metrics.csv", "summary.json"};

void clear_run_dir(const fs::path& dir) {
    for (const auto& name : kRunArtifacts) fs::remove_all(dir / name);
}

struct RunContext {
    fs::path dir;
    json manifest;
    ExperimentConfig config;
};

RunContext open_run(const CommandOptions& options) {
    if (!options.run) throw ConfigError("--run is required");
    RunContext ctx;
    ctx.dir = *options.run;
    const fs::path manifest_path = ctx.dir / "manifest.json";
    if (!fs::exists(manifest_path)) throw IoError("'" + ctx.dir.string() + "' is not a run directory (no manifest.json)");
    ctx.manifest = read_json(manifest_path);
    try {
        ctx.config = ExperimentConfig::from_json(ctx.manifest.at("config"));
    } catch (const json::exception& e) {
        throw IoError("manifest in '" + ctx.dir.string() + "' is incomplete: " + e.what());
    }
    return ctx;
}

std::vector<std::size_t> tensor_dims(std::size_t lead, const StateSequence& like) {
    std::vector<std::size_t> dims{lead, like.count()};
    dims.insert(dims.end(), like.shape().begin(), like.shape().end());
    return dims;
}

Tensor sequence_tensor(const StateSequence& seq, const Normalizer* denorm) {
    Tensor t;
    t.dims = {seq.count()};
    t.dims.insert(t.dims.end(), seq.shape().begin(), seq.shape().end());
    t.values.assign(seq.values().begin(), seq.values().end());
    if (denorm) denorm->invert(t.values);
    t.meta = {{"first", seq.first()}};
    return t;
}

StateSequence tensor_sequence(const Tensor& t, int first, const std::string& what) {
    if (t.dims.size() < 2) throw IoError(what + " has too few dimensions");
    FrameShape frame(t.dims.begin() + 1, t.dims.end());
    return StateSequence(first, t.dims[0], frame, t.values);
}

/// Runs `fn(i)` for i in [0, n) on up to hardware_concurrency threads; each
/// index is processed exactly once and results land in caller-owned slots.
template <typename Fn>
void parallel_for(std::size_t n, Fn fn) {
    const std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(n, std::thread::hardware_concurrency()));
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> failures(workers);
    for (std::size_t w = 0; w < workers; ++w)
        pool.emplace_back([&, w] {
            try {
                for (std::size_t i = w; i < n; i += workers) fn(i);
            } catch (...) {
                failures[w] = std::current_exception();
            }
        });
    for (auto& t : pool) t.join();
    for (auto& f : failures)
        if (f) std::rethrow_exception(f);
}

std::string case_id(std::size_t c) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "case_%04zu", c);
    return buf;
}

double mean_of(const std::vector<double>& xs) {
    double s = 0.0;
    for (double x : xs) s += x;
    return xs.empty() ? 0.0 : s / static_cast<double>(xs.size());
}

double std_of(const std::vector<double>& xs) {
    if (xs.size() < 2) return 0.0;
    const double m = mean_of(xs);
    double s = 0.0;
    for (double x : xs) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(xs.size() - 1));
}

}  // namespace

fs::path cmd_gen_data(const CommandOptions& options, std::ostream& log) {
    ExperimentConfig config = config_from_options(options);
    if (options.seed) {
        config.dataset.linear_gaussian.seed = *options.seed;
        config.dataset.blobs.seed = *options.seed;
    }
    const fs::path path = options.out ? *options.out : fs::path(config.dataset.path);
    if (fs::exists(path) && !options.force)
        throw IoError("'" + path.string() + "' already exists; pass --force to overwrite");
    const Dataset d = generate_dataset(config.dataset);
    write_dataset(path, d);
    const std::string fp = d.fingerprint();
    log << "wrote " << path.string() << "\n" << "fingerprint " << fp << "\n";
    return path;
}

fs::path cmd_train(const CommandOptions& options, std::ostream& log) {
    ExperimentConfig config = config_from_options(options);
    if (options.steps) config.train.steps = *options.steps;
    if (options.eta) config.schedule.eta = *options.eta;
    if (options.seed) {
        config.seed = *options.seed;
        config.train.seed = *options.seed;
        config.sampler.seed = *options.seed;
    }
    if (options.independent_noise) config.train.independent_noise = true;
    config.validate();

    const fs::path dir = options.out ? *options.out : default_output_root() / config.output;
    const Dataset dataset = load_dataset_checked(config);
    const Schedule schedule = make_schedule(config.schedule);
    const auto model = make_denoiser(make_model_config(config, dataset.frame));
    const auto train_refs = train_window_refs(config, dataset);
    const auto windows = make_windows(dataset, train_refs, config.P, config.S);
    const auto test_refs = test_window_refs(config, dataset);
    const auto test_windows = make_windows(dataset, test_refs, config.P, config.S);
    const std::string fingerprint = dataset.fingerprint();

    TrainState state;
    json manifest;
    std::vector<std::string> checkpoints;
    const fs::path manifest_path = dir / "manifest.json";
    bool resumed = false;
    if (options.force) {
        clear_run_dir(dir);
    } else if (fs::exists(manifest_path)) {
        json old = read_json(manifest_path);
        ExperimentConfig old_config;
        try {
            old_config = ExperimentConfig::from_json(old.at("config"));
        } catch (const json::exception& e) {
            throw IoError("existing manifest is incomplete: " + std::string(e.what()));
        }
        if (training_identity(old_config) != training_identity(config))
            throw ConfigError("'" + dir.string() + "' holds a run with a different configuration; pass --force to replace it");
        if (old.value("dataset_fingerprint", std::string()) != fingerprint)
            throw ConfigError("dataset changed since '" + dir.string() + "' was trained; pass --force to replace it");
        const std::string latest = old.at("latest_checkpoint").get<std::string>();
        state = load_train_state(dir / "checkpoints" / latest);
        checkpoints = old.at("checkpoints").get<std::vector<std::string>>();
        resumed = true;
        log << "resuming " << dir.string() << " from step " << state.step << "\n";
    } else if (fs::exists(dir) && !fs::is_empty(dir)) {
        throw IoError("'" + dir.string() + "' exists and is not a run directory; pass --force to use it");
    }
    fs::create_directories(dir / "checkpoints");

    if (!resumed) {
        Rng init = Rng(config.seed).stream(0x696e6974ULL);
        state.params = model->init_params(init);
        state.optimizer = make_optimizer_state(config.train.optimizer, state.params.theta.size());
        state.step = 0;
    }
    if (state.step > config.train.steps)
        throw ConfigError("run already completed " + std::to_string(state.step) + " steps, more than train.steps = " +
                          std::to_string(config.train.steps));

    manifest = {{"format", "dydiff-run"},
                {"version", 1},
                {"label", config.label()},
                {"config", config.to_json()},
                {"schedule", schedule_json(schedule)},
                {"dataset_path", config.dataset.path},
                {"dataset_fingerprint", fingerprint},
                {"seed", config.seed},
                {"num_parameters", state.params.theta.size()},
                {"loss_csv", "loss.csv"},
                {"status", "running"}};

    auto save_checkpoint = [&](const TrainState& s) {
        const std::string name = checkpoint_name(s.step);
        save_train_state(s, dir / "checkpoints" / name);
        if (std::find(checkpoints.begin(), checkpoints.end(), name) == checkpoints.end()) checkpoints.push_back(name);
        manifest["checkpoints"] = checkpoints;
        manifest["latest_checkpoint"] = name;
        manifest["steps_completed"] = s.step;
        write_json(manifest_path, manifest);
    };

    // Loss curve: keep rows up to the resume point, then append.
    std::vector<std::string> kept;
    if (resumed) {
        std::ifstream in(dir / "loss.csv");
        std::string line;
        std::getline(in, line);
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            if (std::stoi(line.substr(0, line.find(','))) <= state.step) kept.push_back(line);
        }
    }
    {
        std::string text = "step,loss\n";
        for (const auto& l : kept) text += l + "\n";
        binio::write_file_atomic(dir / "loss.csv", text);
    }
    if (!resumed) {
        binio::write_file_atomic(dir / "eval.csv", "step,test_loss\n");
        save_checkpoint(state);
    } else {
        manifest["checkpoints"] = checkpoints;
        manifest["latest_checkpoint"] = checkpoint_name(state.step);
        manifest["steps_completed"] = state.step;
        write_json(manifest_path, manifest);
    }

    std::ofstream loss_out(dir / "loss.csv", std::ios::app);
    std::ofstream eval_out(dir / "eval.csv", std::ios::app);
    TrainHooks hooks;
    hooks.on_loss = [&](const LossRecord& r) { loss_out << r.step << ',' << fmt_real(r.loss) << '\n'; };
    hooks.on_checkpoint = [&](const TrainState& s) {
        loss_out.flush();
        save_checkpoint(s);
    };
    hooks.on_eval = [&](const TrainState& s) {
        const double l = evaluation_loss(*model, s.params, schedule, test_windows, config.seed ^ 0x6576616cULL,
                                         config.train.independent_noise);
        eval_out << s.step << ',' << fmt_real(l) << '\n';
        eval_out.flush();
    };
    const auto curve = train_loop(config.train, *model, schedule, windows, state, hooks);
    loss_out.close();
    eval_out.close();
    if (checkpoints.empty() || checkpoints.back() != checkpoint_name(state.step)) save_checkpoint(state);
    manifest["status"] = "complete";
    write_json(manifest_path, manifest);

    log << "trained " << dir.string() << " (" << config.label() << ", eta " << config.schedule.eta << ") to step "
        << state.step;
    if (!curve.empty()) log << ", final loss " << curve.back().loss;
    log << "\n";
    return dir;
}

fs::path cmd_sample(const CommandOptions& options, std::ostream& log) {
    RunContext ctx = open_run(options);
    ExperimentConfig& config = ctx.config;
    if (options.ensemble) config.sampler.ensemble = *options.ensemble;
    if (options.sampler) config.sampler.kind = parse_sampler_kind(*options.sampler);
    if (options.steps) config.sampler.num_steps = *options.steps;
    if (options.seed) config.sampler.seed = *options.seed;
    config.validate();

    const Dataset dataset = load_dataset_checked(config, ctx.manifest.value("dataset_fingerprint", std::string()));
    const Schedule schedule = make_schedule(config.schedule);
    const auto model = make_denoiser(make_model_config(config, dataset.frame));
    const std::string latest = ctx.manifest.at("latest_checkpoint").get<std::string>();
    const DenoiserParams params = load_params(ctx.dir / "checkpoints" / latest);
    if (params.layout != model->layout()) throw IoError("checkpoint layout does not match the configured model");

    const auto refs = test_window_refs(config, dataset);
    const auto windows = make_windows(dataset, refs, config.P, config.S);
    SamplerConfig sc;
    sc.kind = config.sampler.kind;
    sc.num_steps = config.sampler.num_steps;
    sc.stochastic = config.sampler.stochastic;
    sc.independent_noise = config.train.independent_noise;
    const auto predictor = model_predictor(*model, params);
    const auto M = static_cast<std::size_t>(config.sampler.ensemble);

    const fs::path samples = ctx.dir / "samples";
    const fs::path latents = ctx.dir / "latents";
    fs::remove_all(samples);
    fs::remove_all(latents);
    fs::create_directories(samples);
    if (options.dump_latents) fs::create_directories(latents);

    std::vector<std::vector<StateSequence>> members(windows.size());
    std::vector<LatentTrace> traces(windows.size());
    const Rng root(config.sampler.seed);
    parallel_for(windows.size(), [&](std::size_t c) {
        for (std::size_t m = 0; m < M; ++m) {
            Rng rng = root.stream({c, m});
            LatentTrace* trace = options.dump_latents && m == 0 ? &traces[c] : nullptr;
            members[c].push_back(sample(predictor, windows[c].observations, config.S, schedule, sc, rng, trace));
        }
    });

    json cases = json::array();
    std::string latent_csv = "case_id,step_index,t,state,distance\n";
    for (std::size_t c = 0; c < windows.size(); ++c) {
        const std::string id = case_id(c);
        Tensor pred;
        pred.dims = tensor_dims(M, windows[c].targets);
        for (const auto& m : members[c]) pred.values.insert(pred.values.end(), m.values().begin(), m.values().end());
        dataset.normalizer.invert(pred.values);
        pred.meta = {{"case_id", id}, {"units", "data"}, {"kind", "prediction"}};
        write_tensor(samples / (id + ".pred.dydata"), pred);
        Tensor truth = sequence_tensor(windows[c].targets, &dataset.normalizer);
        truth.meta["case_id"] = id;
        truth.meta["kind"] = "truth";
        write_tensor(samples / (id + ".truth.dydata"), truth);
        Tensor obs = sequence_tensor(windows[c].observations, &dataset.normalizer);
        obs.meta["case_id"] = id;
        obs.meta["kind"] = "observations";
        write_tensor(samples / (id + ".obs.dydata"), obs);
        cases.push_back({{"id", id}, {"sequence", refs[c].sequence}, {"start", refs[c].start}});

        if (options.dump_latents) {
            const auto& tr = traces[c];
            Tensor lt;
            lt.dims = tensor_dims(tr.latents.size(), tr.latents.front());
            for (const auto& x : tr.latents) lt.values.insert(lt.values.end(), x.values().begin(), x.values().end());
            lt.meta = {{"case_id", id}, {"timesteps", tr.timesteps}, {"units", "normalized"}};
            write_tensor(latents / (id + ".dydata"), lt);
            for (int s = 1; s <= config.S; ++s) {
                const auto curve = latent_error_curve(tr, schedule, s);
                for (std::size_t i = 0; i < curve.size(); ++i)
                    latent_csv += id + "," + std::to_string(i) + "," + std::to_string(tr.timesteps[i]) + "," +
                                  std::to_string(s) + "," + fmt_real(curve[i]) + "\n";
            }
        }
    }
    if (options.dump_latents) binio::write_file_atomic(ctx.dir / "latents" / "latent_error.csv", latent_csv);
    write_json(samples / "index.json", {{"cases", cases},
                                        {"ensemble", M},
                                        {"sampler", to_string(sc.kind)},
                                        {"num_steps", sc.num_steps},
                                        {"stochastic", sc.stochastic},
                                        {"independent_noise", sc.independent_noise},
                                        {"seed", config.sampler.seed},
                                        {"checkpoint", latest},
                                        {"units", "data"}});
    log << "sampled " << windows.size() << " cases x " << M << " members into " << samples.string() << "\n";
    return samples;
}

fs::path cmd_eval(const CommandOptions& options, std::ostream& log) {
    RunContext ctx = open_run(options);
    const ExperimentConfig& config = ctx.config;
    const fs::path samples = ctx.dir / "samples";
    if (!fs::exists(samples / "index.json")) throw IoError("no samples in '" + ctx.dir.string() + "'; run sample first");
    const json index = read_json(samples / "index.json");
    const Dataset dataset = load_dataset_checked(config, ctx.manifest.value("dataset_fingerprint", std::string()));

    struct Case {
        std::string id;
        std::vector<StateSequence> members;
        StateSequence truth;
        StateSequence mean;
    };
    std::vector<Case> cases;
    for (const auto& entry : index.at("cases")) {
        Case c;
        c.id = entry.at("id").get<std::string>();
        const fs::path pred_path = samples / (c.id + ".pred.dydata");
        const fs::path truth_path = samples / (c.id + ".truth.dydata");
        if (!fs::exists(pred_path)) throw IoError("case '" + c.id + "': missing prediction file " + pred_path.string());
        if (!fs::exists(truth_path)) throw IoError("case '" + c.id + "': missing truth file " + truth_path.string());
        c.truth = tensor_sequence(read_tensor(truth_path), 1, "truth for " + c.id);
        const Tensor pred = read_tensor(pred_path);
        if (pred.dims.size() != c.truth.shape().size() + 2 || pred.dims[1] != c.truth.count())
            throw ShapeMismatch("case '" + c.id + "': prediction and truth shapes differ");
        const std::size_t per = c.truth.values().size();
        c.mean = StateSequence(1, c.truth.count(), c.truth.shape());
        for (std::size_t m = 0; m < pred.dims[0]; ++m) {
            std::vector<double> v(pred.values.begin() + static_cast<std::ptrdiff_t>(m * per),
                                  pred.values.begin() + static_cast<std::ptrdiff_t>((m + 1) * per));
            c.members.emplace_back(1, c.truth.count(), c.truth.shape(), std::move(v));
            simd::axpy(1.0 / static_cast<double>(pred.dims[0]), c.members.back().values(), c.mean.values());
        }
        if (c.members.front().shape() != c.truth.shape())
            throw ShapeMismatch("case '" + c.id + "': prediction and truth frame shapes differ");
        cases.push_back(std::move(c));
    }
    if (cases.empty()) throw IoError("sample index lists no cases");

    double threshold = 0.0;
    if (config.metrics.csi_threshold) {
        threshold = *config.metrics.csi_threshold;
    } else {
        std::vector<double> all;
        for (const auto& c : cases) all.insert(all.end(), c.truth.values().begin(), c.truth.values().end());
        threshold = quantile(all, 0.9);
    }
    double range = 0.0;
    if (config.metrics.psnr_range) {
        range = *config.metrics.psnr_range;
    } else {
        const auto [lo, hi] = std::minmax_element(dataset.values.begin(), dataset.values.end());
        range = *hi - *lo > 0.0 ? *hi - *lo : 1.0;
    }

    struct Row {
        std::string metric, pool;
        int window;
    };
    std::map<std::string, std::vector<double>> series;
    std::map<std::string, Row> row_info;
    std::string csv = "case_id,metric,pool,window,value\n";
    bool crps_sum_normalized = true;
    auto emit = [&](const std::string& id, const std::string& metric, Pool pool, int w, double v) {
        const std::string key = pool == Pool::none && w == 1 ? metric : metric + "@" + to_string(pool) + std::to_string(w);
        series[key].push_back(v);
        row_info[key] = {metric, to_string(pool), w};
        csv += id + "," + metric + "," + to_string(pool) + "," + std::to_string(w) + "," + fmt_real(v) + "\n";
    };
    const bool grid = config.dataset.generator == "advected_blobs";
    for (const auto& c : cases) {
        if (c.members.size() >= 2) {
            emit(c.id, "crps", Pool::none, 1, crps_ensemble(c.members, c.truth, Pool::none, 1));
            if (config.metrics.crps_pool != Pool::none && config.metrics.crps_window > 1)
                emit(c.id, "crps", config.metrics.crps_pool, config.metrics.crps_window,
                     crps_ensemble(c.members, c.truth, config.metrics.crps_pool, config.metrics.crps_window));
            if (!grid) {
                const auto cs = crps_sum(c.members, c.truth);
                crps_sum_normalized = crps_sum_normalized && cs.normalized;
                emit(c.id, "crps_sum", Pool::none, 1, cs.value);
            }
        }
        emit(c.id, "mse", Pool::none, 1,
             simd::sum_sq_diff(c.mean.values(), c.truth.values()) / static_cast<double>(c.truth.values().size()));
        emit(c.id, "psnr", Pool::none, 1, psnr(c.mean.values(), c.truth.values(), range));
        emit(c.id, "csi", config.metrics.csi_window > 1 ? Pool::avg : Pool::none, config.metrics.csi_window,
             csi(c.mean, c.truth, threshold, config.metrics.csi_window, Pool::avg));
    }
    binio::write_file_atomic(ctx.dir / "metrics.csv", csv);

    json metrics = json::object();
    for (const auto& [key, values] : series) {
        const bool finite = std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
        metrics[key] = {{"metric", row_info[key].metric},
                        {"pool", row_info[key].pool},
                        {"window", row_info[key].window},
                        {"mean", finite ? json(mean_of(values)) : json("inf")},
                        {"std", finite ? json(std_of(values)) : json(nullptr)},
                        {"n", values.size()}};
    }
    json summary = {{"label", ctx.manifest.value("label", config.label())},
                    {"eta", config.schedule.eta},
                    {"gamma_rule", to_string(config.schedule.gamma_rule)},
                    {"independent_noise", config.train.independent_noise},
                    {"sampler", index.value("sampler", std::string())},
                    {"ensemble", index.value("ensemble", 0)},
                    {"cases", cases.size()},
                    {"csi_threshold", threshold},
                    {"csi_threshold_rule", config.metrics.csi_threshold ? "config" : "truth 90th percentile"},
                    {"psnr_range", range},
                    {"units", "data"},
                    {"metrics", metrics}};
    if (!grid) summary["crps_sum_normalized"] = crps_sum_normalized;
    write_json(ctx.dir / "summary.json", summary);
    log << "evaluated " << cases.size() << " cases";
    if (metrics.contains("crps")) log << ", mean CRPS " << metrics["crps"]["mean"].dump();
    log << "\n";
    return ctx.dir / "summary.json";
}

fs::path cmd_compare(const CommandOptions& options, std::ostream& log) {
    if (options.runs.empty()) throw ConfigError("compare needs at least one run directory");
    const fs::path out = options.out ? *options.out : default_output_root() / "compare";
    fs::create_directories(out);

    struct RunInfo {
        std::string name;
        json summary;
        json manifest;
    };
    std::vector<RunInfo> runs;
    std::vector<std::string> metric_names;
    for (const auto& dir : options.runs) {
        const fs::path sp = dir / "summary.json";
        if (!fs::exists(sp)) throw IoError("run '" + dir.string() + "' has no summary.json; run eval first");
        RunInfo r{dir.filename().empty() ? dir.parent_path().filename().string() : dir.filename().string(),
                  read_json(sp), read_json(dir / "manifest.json")};
        for (const auto& [key, value] : r.summary.at("metrics").items())
            if (std::find(metric_names.begin(), metric_names.end(), key) == metric_names.end())
                metric_names.push_back(key);
        runs.push_back(std::move(r));
    }

    auto metric_mean = [](const json& summary, const std::string& key) -> std::optional<double> {
        const auto& m = summary.at("metrics");
        if (!m.contains(key) || !m[key]["mean"].is_number()) return std::nullopt;
        return m[key]["mean"].get<double>();
    };
    std::string header = "run,label,eta,gamma_rule,independent_noise";
    for (const auto& k : metric_names) header += "," + k;
    std::string table = header + "\n";
    std::string deltas = header + "\n";
    json report = json::array();
    for (const auto& r : runs) {
        const std::string prefix = r.name + "," + r.summary.value("label", std::string()) + "," +
                                   fmt_real(r.summary.value("eta", 0.0)) + "," +
                                   r.summary.value("gamma_rule", std::string("mixing")) + "," +
                                   (r.summary.value("independent_noise", false) ? "true" : "false");
        std::string row = prefix, drow = prefix;
        json entry = {{"run", r.name}, {"label", r.summary.value("label", std::string())},
                      {"eta", r.summary.value("eta", 0.0)},
                      {"independent_noise", r.summary.value("independent_noise", false)},
                      {"dataset_fingerprint", r.manifest.value("dataset_fingerprint", std::string())},
                      {"metrics", json::object()}};
        for (const auto& k : metric_names) {
            const auto v = metric_mean(r.summary, k);
            const auto base = metric_mean(runs.front().summary, k);
            row += "," + (v ? fmt_real(*v) : std::string());
            drow += "," + (v && base ? fmt_real(*v - *base) : std::string());
            if (v) entry["metrics"][k] = {{"mean", *v}, {"delta_vs_first", base ? json(*v - *base) : json(nullptr)}};
        }
        table += row + "\n";
        deltas += drow + "\n";
        report.push_back(entry);
    }
    binio::write_file_atomic(out / "comparison.csv", table);
    binio::write_file_atomic(out / "deltas.csv", deltas);

    // Latent-error curves, averaged over cases.
    std::string curves = "run,step_index,t,state,distance\n";
    for (std::size_t i = 0; i < runs.size(); ++i) {
        const fs::path lp = options.runs[i] / "latents" / "latent_error.csv";
        if (!fs::exists(lp)) continue;
        std::ifstream in(lp);
        std::string line;
        std::getline(in, line);
        std::map<std::tuple<int, int, int>, std::pair<double, int>> acc;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            std::stringstream ss(line);
            std::string id, step, t, s, dist;
            std::getline(ss, id, ',');
            std::getline(ss, step, ',');
            std::getline(ss, t, ',');
            std::getline(ss, s, ',');
            std::getline(ss, dist, ',');
            auto& slot = acc[{std::stoi(step), std::stoi(s), std::stoi(t)}];
            slot.first += std::stod(dist);
            slot.second += 1;
        }
        for (const auto& [key, v] : acc)
            curves += runs[i].name + "," + std::to_string(std::get<0>(key)) + "," + std::to_string(std::get<2>(key)) +
                      "," + std::to_string(std::get<1>(key)) + "," + fmt_real(v.first / v.second) + "\n";
    }
    binio::write_file_atomic(out / "latent_error_curves.csv", curves);
    write_json(out / "report.json", {{"runs", report}, {"baseline", runs.front().name}});
    log << "compared " << runs.size() << " runs into " << out.string() << "\n";
    return out;
}

}  // namespace dydiff
