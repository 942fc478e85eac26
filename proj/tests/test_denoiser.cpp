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

#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "dydiff/common.hpp"
#include "dydiff/denoiser.hpp"
#include "support.hpp"

using namespace dydiff;

namespace {

ModelConfig tiny_mlp() {
    ModelConfig c;
    c.frame = {2};
    c.P = 1;
    c.S = 2;
    c.T = 20;
    c.width = 6;
    c.depth = 1;
    c.time_dim = 4;
    return c;
}

ModelConfig tiny_conv() {
    ModelConfig c;
    c.arch = Architecture::conv;
    c.frame = {4, 4};
    c.P = 1;
    c.S = 1;
    c.T = 20;
    c.width = 2;
    c.depth = 1;
    c.time_dim = 4;
    return c;
}

std::vector<TrainingExample> random_batch(const ModelConfig& c, Rng& rng, int n) {
    std::vector<TrainingExample> out;
    for (int i = 0; i < n; ++i) {
        TrainingExample e;
        e.noisy = testing::random_sequence(rng, 1, static_cast<std::size_t>(c.S), c.frame);
        e.observations = testing::random_sequence(rng, -c.P, static_cast<std::size_t>(c.P + 1), c.frame);
        e.target = testing::random_sequence(rng, 1, static_cast<std::size_t>(c.S), c.frame);
        e.t = static_cast<int>(rng.uniform_int(1, c.T));
        out.push_back(std::move(e));
    }
    return out;
}

/// Max over parameters of |analytic - numeric| / max(|analytic|, |numeric|, 1e-6).
double gradient_error(const Denoiser& model, DenoiserParams params, std::span<const TrainingExample> batch) {
    std::vector<double> grad;
    model.loss_and_gradient(params, batch, grad);
    double worst = 0.0;
    const double h = 1e-5;
    for (std::size_t i = 0; i < params.theta.size(); ++i) {
        const double keep = params.theta[i];
        params.theta[i] = keep + h;
        const double up = model.loss(params, batch);
        params.theta[i] = keep - h;
        const double down = model.loss(params, batch);
        params.theta[i] = keep;
        const double numeric = (up - down) / (2.0 * h);
        worst = std::max(worst, std::fabs(grad[i] - numeric) /
                                    std::max({std::fabs(grad[i]), std::fabs(numeric), 1e-6}));
    }
    return worst;
}

DenoiserParams randomized(const Denoiser& model, Rng& rng) {
    auto p = model.init_params(rng);
    for (double& v : p.theta) v += 0.3 * rng.normal();
    return p;
}

}  // namespace

TEST_SUITE("denoiser") {

TEST_CASE("time embedding") {
    const auto e = time_embedding(3, 4);
    REQUIRE(e.size() == 4);
    CHECK(e[0] == doctest::Approx(std::sin(3.0)));
    CHECK(e[1] == doctest::Approx(std::sin(3.0 * 0.01)));
    CHECK(e[2] == doctest::Approx(std::cos(3.0)));
    CHECK(e[3] == doctest::Approx(std::cos(3.0 * 0.01)));
    CHECK_THROWS_AS(time_embedding(1, 3), InvalidArgument);
}

TEST_CASE("layout tiles the parameter vector") {
    for (const auto& cfg : {tiny_mlp(), tiny_conv()}) {
        const auto model = make_denoiser(cfg);
        const auto layout = model->layout();
        CHECK_NOTHROW(layout.validate());
        std::size_t next = 0;
        for (const auto& s : layout.slices()) {
            CHECK(s.offset == next);
            next += s.length;
        }
        CHECK(next == layout.total());
        CHECK(layout.total() <= 500);
    }
    ParamLayout l;
    l.add("a", {2, 3});
    CHECK_THROWS_AS(l.add("a", {1}), InvalidArgument);
    CHECK(l.find("a").length == 6);
    CHECK_THROWS_AS(l.find("b"), InvalidArgument);
}

TEST_CASE("zero output head predicts zero noise") {
    Rng rng(1);
    for (const auto& cfg : {tiny_mlp(), tiny_conv()}) {
        const auto model = make_denoiser(cfg);
        const auto params = model->init_params(rng);
        auto batch = random_batch(cfg, rng, 3);
        const auto eps = model->predict_noise(params, {batch[0].noisy, batch[0].observations, batch[0].t});
        for (double v : eps.values()) CHECK(v == 0.0);
        double mean_sq = 0.0;
        std::size_t n = 0;
        for (const auto& e : batch)
            for (double v : e.target.values()) {
                mean_sq += v * v;
                ++n;
            }
        CHECK(model->loss(params, batch) == doctest::Approx(mean_sq / static_cast<double>(n)));
    }
}

TEST_CASE("analytic gradients match central differences") {
    for (const auto& cfg : {tiny_mlp(), tiny_conv()}) {
        CAPTURE(to_string(cfg.arch));
        const auto model = make_denoiser(cfg);
        for (std::uint64_t seed = 1; seed <= 3; ++seed) {
            Rng rng(seed);
            const auto params = randomized(*model, rng);
            const auto batch = random_batch(cfg, rng, 2);
            CHECK(gradient_error(*model, params, batch) < 1e-4);
        }
    }
}

TEST_CASE("conv frames may carry a channel axis") {
    ModelConfig c = tiny_conv();
    c.frame = {2, 4, 4};
    const auto model = make_denoiser(c);
    Rng rng(2);
    const auto params = randomized(*model, rng);
    const auto batch = random_batch(c, rng, 1);
    CHECK(gradient_error(*model, params, batch) < 1e-4);
}

TEST_CASE("input validation") {
    const auto cfg = tiny_mlp();
    const auto model = make_denoiser(cfg);
    Rng rng(3);
    const auto params = model->init_params(rng);
    const StateSequence wrong(1, 3, {2});
    const StateSequence obs(-1, 2, {2});
    CHECK_THROWS_AS(model->predict_noise(params, {wrong, obs, 1}), ShapeMismatch);
    const StateSequence noisy(1, 2, {2});
    CHECK_THROWS_AS(model->predict_noise(params, {noisy, StateSequence(0, 1, {2}), 1}), ShapeMismatch);
    ModelConfig bad = cfg;
    bad.time_dim = 3;
    CHECK_THROWS_AS(make_denoiser(bad), InvalidArgument);
    ModelConfig conv_bad = tiny_conv();
    conv_bad.frame = {16};
    CHECK_THROWS_AS(make_denoiser(conv_bad), InvalidArgument);
}

TEST_CASE("non-finite activations name the layer") {
    const auto cfg = tiny_mlp();
    const auto model = make_denoiser(cfg);
    Rng rng(4);
    auto params = model->init_params(rng);
    params.view("in.weight")[0] = INFINITY;
    const auto batch = random_batch(cfg, rng, 1);
    try {
        model->predict_noise(params, {batch[0].noisy, batch[0].observations, batch[0].t});
        FAIL("expected a numeric failure");
    } catch (const NumericFailure& e) {
        CHECK(e.where().find("in") != std::string::npos);
    }
    std::vector<double> grad;
    CHECK_THROWS_AS(model->loss_and_gradient(params, batch, grad), NumericFailure);
}

TEST_CASE("parameters survive a save and load") {
    const auto dir = std::filesystem::temp_directory_path() / "dydiff_test_params";
    std::filesystem::remove_all(dir);
    const auto cfg = tiny_conv();
    const auto model = make_denoiser(cfg);
    Rng rng(5);
    const auto params = randomized(*model, rng);
    save_params(params, dir / "ckpt");
    const auto back = load_params(dir / "ckpt");
    CHECK(back.layout == params.layout);
    CHECK(back.theta == params.theta);

    {
        std::ofstream trunc(dir / "ckpt.bin", std::ios::binary | std::ios::trunc);
        trunc << "abc";
    }
    CHECK_THROWS_AS(load_params(dir / "ckpt"), IoError);
    CHECK_THROWS_AS(load_params(dir / "missing"), IoError);
    std::filesystem::remove_all(dir);
}

TEST_CASE("forward pass is pure") {
    const auto cfg = tiny_mlp();
    const auto model = make_denoiser(cfg);
    Rng rng(6);
    const auto params = randomized(*model, rng);
    const auto batch = random_batch(cfg, rng, 1);
    const DenoiserInput in{batch[0].noisy, batch[0].observations, batch[0].t};
    CHECK(model->predict_noise(params, in) == model->predict_noise(params, in));
}

}
