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
#include <numeric>

#include "dydiff/common.hpp"
#include "dydiff/data.hpp"
#include "support.hpp"

using namespace dydiff;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const char* name) {
    const auto dir = fs::temp_directory_path() / "dydiff_test_data";
    fs::create_directories(dir);
    return dir / name;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_SUITE("data") {

TEST_CASE("tensor container round trip") {
    Tensor t;
    t.dims = {2, 3};
    t.values = {1, 2, 3, 4, 5, -6.5};
    t.meta = {{"note", "hello"}};
    const auto path = scratch("t.dydata");
    write_tensor(path, t);
    const auto back = read_tensor(path);
    CHECK(back.dims == t.dims);
    CHECK(back.values == t.values);
    CHECK(back.meta["note"] == "hello");
    const std::string bytes = slurp(path);
    CHECK(bytes.substr(0, 4) == "DYDS");
    CHECK(static_cast<unsigned char>(bytes[4]) == 1);
    CHECK(static_cast<unsigned char>(bytes[6]) == 1);
    CHECK(static_cast<unsigned char>(bytes[7]) == 2);
    CHECK(bytes.size() == 64 + 6 * 8 + t.meta.dump().size());
}

TEST_CASE("fingerprint depends on payload and shape, not metadata") {
    Tensor a;
    a.dims = {4};
    a.values = {1, 2, 3, 4};
    Tensor b = a;
    b.meta = {{"x", 1}};
    CHECK(tensor_fingerprint(a) == tensor_fingerprint(b));
    CHECK(tensor_fingerprint(a).size() == 64);
    Tensor c = a;
    c.values[3] = 4.0000001;
    CHECK(tensor_fingerprint(a) != tensor_fingerprint(c));
    Tensor d = a;
    d.dims = {2, 2};
    CHECK(tensor_fingerprint(a) != tensor_fingerprint(d));
}

TEST_CASE("corrupt containers are rejected") {
    const auto path = scratch("bad.dydata");
    {
        std::ofstream out(path, std::ios::binary);
        out << "NOPE and some more bytes to pass the length check.............................";
    }
    CHECK_THROWS_AS(read_tensor(path), IoError);
    Tensor t;
    t.dims = {3};
    t.values = {1, 2, 3};
    write_tensor(path, t);
    std::string bytes = slurp(path);
    bytes.resize(bytes.size() - 5);
    {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out << bytes;
    }
    CHECK_THROWS_AS(read_tensor(path), IoError);
    CHECK_THROWS_AS(read_tensor(scratch("missing.dydata")), IoError);
    Tensor wrong;
    wrong.dims = {2};
    wrong.values = {1};
    CHECK_THROWS_AS(write_tensor(path, wrong), ShapeMismatch);
}

TEST_CASE("normalizer") {
    const std::vector<double> xs{1, 2, 3, 4};
    const auto n = Normalizer::fit(xs);
    CHECK(n.shift == doctest::Approx(2.5));
    CHECK(n.scale == doctest::Approx(std::sqrt(1.25)));
    CHECK(n.invert(n.apply(3.7)) == doctest::Approx(3.7));
    CHECK(Normalizer::from_json(n.to_json()).scale == n.scale);
    const auto flat = Normalizer::fit(std::vector<double>{2, 2, 2});
    CHECK(flat.scale == 1.0);
}

TEST_CASE("stationary covariance of a scalar chain") {
    const LinearGaussianModel m(1, {0.9}, 0.1);
    CHECK(m.stationary_covariance()[0] == doctest::Approx(0.01 / 0.19).epsilon(1e-12));
    CHECK(m.stationary_covariance()[0] == doctest::Approx(0.052632).epsilon(1e-5));
    CHECK(m.predictive_mean(std::vector<double>{2.0}, 3)[0] == doctest::Approx(2.0 * 0.729));
    CHECK(m.predictive_covariance(2)[0] == doctest::Approx(0.01 * (1 + 0.81)));
    CHECK(m.spectral_radius() == doctest::Approx(0.9));
}

TEST_CASE("zero transition and zero noise give zero frames after the first") {
    LinearGaussianSpec spec;
    spec.dim = 3;
    spec.num_sequences = 2;
    spec.length = 5;
    spec.transition.kind = "matrix";
    spec.transition.matrix.assign(9, 0.0);
    spec.noise_scale = 0.0;
    const auto d = gen_linear_gaussian(spec);
    for (std::size_t s = 0; s < 2; ++s)
        for (std::size_t k = 1; k < 5; ++k)
            for (double v : d.frame_at(s, k)) CHECK(v == 0.0);
}

TEST_CASE("unstable transitions are rejected") {
    LinearGaussianSpec spec;
    spec.transition.radius = 1.0;
    CHECK_THROWS_AS(gen_linear_gaussian(spec), InvalidArgument);
    spec.transition.kind = "matrix";
    spec.dim = 2;
    spec.transition.matrix = {1.2, 0.0, 0.0, 0.1};
    CHECK_THROWS_AS(gen_linear_gaussian(spec), InvalidArgument);
    spec.transition.kind = "spiral";
    CHECK_THROWS_AS(gen_linear_gaussian(spec), InvalidArgument);
}

TEST_CASE("generated linear-Gaussian data has the stationary variance") {
    LinearGaussianSpec spec;
    spec.dim = 2;
    spec.num_sequences = 400;
    spec.length = 20;
    spec.transition.kind = "scaled_identity";
    spec.transition.radius = 0.8;
    spec.noise_scale = 0.3;
    spec.seed = 3;
    const auto d = gen_linear_gaussian(spec);
    testing::Moments m;
    for (double v : d.values) m.add(v);
    CHECK(std::fabs(m.mean) < 0.05);
    CHECK(m.variance() == doctest::Approx(0.09 / 0.36).epsilon(0.06));
    CHECK(gen_linear_gaussian(spec).values == d.values);
}

TEST_CASE("advection conserves mass") {
    const std::size_t H = 8, W = 8;
    Rng rng(2);
    std::vector<double> f(H * W), dx(H * W), dy(H * W), out(H * W);
    for (double& v : f) v = rng.uniform();
    for (double& v : dx) v = 2.0 * rng.normal();
    for (double& v : dy) v = 2.0 * rng.normal();
    advect_field(f, H, W, dx, dy, out);
    CHECK(std::accumulate(out.begin(), out.end(), 0.0) ==
          doctest::Approx(std::accumulate(f.begin(), f.end(), 0.0)).epsilon(1e-12));
    std::fill(dx.begin(), dx.end(), 1.0);
    std::fill(dy.begin(), dy.end(), 0.0);
    advect_field(f, H, W, dx, dy, out);
    for (std::size_t y = 0; y < H; ++y)
        for (std::size_t x = 0; x < W; ++x) CHECK(out[y * W + (x + 1) % W] == doctest::Approx(f[y * W + x]));
}

TEST_CASE("advected blobs") {
    BlobsSpec spec;
    spec.num_sequences = 3;
    spec.length = 6;
    spec.grid = 8;
    spec.velocity.jitter = 0.0;
    const auto d = gen_advected_blobs(spec);
    CHECK(d.frame == FrameShape{8, 8});
    for (std::size_t s = 0; s < 3; ++s) {
        const auto first = d.frame_at(s, 0);
        const double mass = std::accumulate(first.begin(), first.end(), 0.0);
        CHECK(mass > 0.0);
        for (std::size_t k = 1; k < 6; ++k) {
            const auto fr = d.frame_at(s, k);
            CHECK(std::accumulate(fr.begin(), fr.end(), 0.0) == doctest::Approx(mass).epsilon(1e-9));
        }
    }
    spec.grid = 4;
    CHECK_THROWS_AS(gen_advected_blobs(spec), InvalidArgument);
}

TEST_CASE("dataset container round trip with fingerprint check") {
    LinearGaussianSpec spec;
    spec.num_sequences = 4;
    spec.length = 6;
    const auto d = gen_linear_gaussian(spec);
    const auto path = scratch("ds.dydata");
    write_dataset(path, d);
    const auto back = read_dataset(path);
    CHECK(back.values == d.values);
    CHECK(back.fingerprint() == d.fingerprint());
    CHECK(back.generator == "linear_gaussian");
    CHECK(back.normalizer.scale == d.normalizer.scale);

    std::string bytes = slurp(path);
    bytes[64] ^= 0x01;
    {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        out << bytes;
    }
    CHECK_THROWS_AS(read_dataset(path), IoError);
}

TEST_CASE("windows") {
    LinearGaussianSpec spec;
    spec.num_sequences = 3;
    spec.length = 8;
    spec.dim = 2;
    const auto d = gen_linear_gaussian(spec);
    const auto refs = window_refs(d, 1, 2, 0, 3);
    CHECK(refs.size() == 3 * (8 - 1 - 2));
    CHECK(refs.front() == WindowRef{0, 0});
    const auto shuffled = window_refs(d, 1, 2, 0, 3, 5);
    CHECK(shuffled.size() == refs.size());
    CHECK(shuffled != refs);
    const auto w = make_window(d, WindowRef{1, 2}, 1, 2);
    CHECK(w.observations.first() == -1);
    CHECK(w.targets.first() == 1);
    CHECK(w.targets.frame(2)[1] == doctest::Approx(d.normalizer.apply(d.frame_at(1, 5)[1])));
    CHECK_THROWS_AS(window_refs(d, 4, 4, 0, 3), InvalidArgument);
}

}
