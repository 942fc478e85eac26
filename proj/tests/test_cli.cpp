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
#include <cstdio>
#include <sys/wait.h>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "dydiff/common.hpp"
#include "dydiff/data.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Result {
    int code = 0;
    std::string output;
};

class Workspace {
public:
    Workspace() : dir_(fs::temp_directory_path() / "dydiff_cli_test") {
        fs::remove_all(dir_);
        fs::create_directories(dir_);
        json c = {
            {"dataset", {{"generator", "linear_gaussian"}, {"path", "data/lg.dydata"}, {"num_sequences", 12},
                         {"length", 10}, {"test_sequences", 3}, {"dim", 2}}},
            {"window", {{"P", 1}, {"S", 2}}},
            {"schedule", {{"T", 20}, {"eta", 0.5}}},
            {"model", {{"width", 8}, {"depth", 1}, {"time_dim", 4}}},
            {"train", {{"steps", 6}, {"batch_size", 4}, {"checkpoint_every", 2}, {"eval_every", 3}}},
            {"sampler", {{"num_steps", 5}, {"ensemble", 3}, {"max_cases", 4}, {"stochastic", true}}},
            {"seed", 3},
        };
        write("cfg.json", c.dump(2));
    }
    ~Workspace() { fs::remove_all(dir_); }

    const fs::path& dir() const { return dir_; }
    fs::path path(const std::string& rel) const { return dir_ / rel; }

    void write(const std::string& rel, const std::string& text) const {
        fs::create_directories(path(rel).parent_path());
        std::ofstream(path(rel)) << text;
    }
    std::string read(const std::string& rel) const {
        std::ifstream in(path(rel), std::ios::binary);
        std::stringstream ss;
        ss << in.rdbuf();
        return ss.str();
    }

    Result run(const std::string& args) const {
        const fs::path log = dir_ / "cli.log";
        const std::string cmd = "cd '" + dir_.string() + "' && DYDIFF_OUTPUT_ROOT=runs '" DYDIFF_CLI_PATH "' " +
                                args + " > '" + log.string() + "' 2>&1";
        const int status = std::system(cmd.c_str());
        Result r;
        r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
        r.output = read("cli.log");
        return r;
    }

private:
    fs::path dir_;
};

std::vector<std::vector<std::string>> read_csv(const fs::path& path) {
    std::ifstream in(path);
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line)) {
        std::vector<std::string> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) row.push_back(cell);
        rows.push_back(row);
    }
    return rows;
}

json read_json_file(const fs::path& path) {
    std::ifstream in(path);
    return json::parse(in);
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("usage and config errors use the error prefix and a nonzero exit") {
    Workspace ws;
    auto r = ws.run("");
    CHECK(r.code == 2);
    CHECK(r.output.find("dydiff-error: usage:") != std::string::npos);
    r = ws.run("train --config missing.json");
    CHECK(r.code != 0);
    CHECK(r.output.find("dydiff-error: ") != std::string::npos);
    ws.write("bad.json", R"({"window": {"P": 1, "S": 2, "Q": 4}})");
    r = ws.run("train --config bad.json");
    CHECK(r.code == 1);
    CHECK(r.output.find("dydiff-error: config:") != std::string::npos);
    CHECK(r.output.find("window.Q") != std::string::npos);
    r = ws.run("sample --run runs/nothing");
    CHECK(r.code != 0);
    CHECK(r.output.find("dydiff-error:") == 0);
}

TEST_CASE("gen-data writes a container and refuses to overwrite it") {
    Workspace ws;
    auto r = ws.run("gen-data --config cfg.json");
    REQUIRE(r.code == 0);
    CHECK(r.output.find("fingerprint ") != std::string::npos);
    const auto d = dydiff::read_dataset(ws.path("data/lg.dydata"));
    CHECK(d.num_sequences == 12);
    r = ws.run("gen-data --config cfg.json");
    CHECK(r.code == 1);
    CHECK(r.output.find("dydiff-error:") != std::string::npos);
    r = ws.run("gen-data --config cfg.json --seed 99 --force");
    CHECK(r.code == 0);
    CHECK(dydiff::read_dataset(ws.path("data/lg.dydata")).values != d.values);
}

TEST_CASE("train, resume, sample, eval and compare") {
    Workspace ws;
    REQUIRE(ws.run("gen-data --config cfg.json").code == 0);

    SUBCASE("training writes a run and resumes with a continuous step index") {
        REQUIRE(ws.run("train --config cfg.json --steps 4 --out runs/a").code == 0);
        auto manifest = read_json_file(ws.path("runs/a/manifest.json"));
        CHECK(manifest["steps_completed"] == 4);
        CHECK(manifest["label"] == "dydiff");
        auto r = ws.run("train --config cfg.json --out runs/a");
        REQUIRE(r.code == 0);
        CHECK(r.output.find("resuming") != std::string::npos);
        manifest = read_json_file(ws.path("runs/a/manifest.json"));
        CHECK(manifest["steps_completed"] == 6);
        const auto loss = read_csv(ws.path("runs/a/loss.csv"));
        REQUIRE(loss.size() == 7);
        for (std::size_t i = 1; i < loss.size(); ++i) CHECK(std::stoi(loss[i][0]) == static_cast<int>(i));

        // the resumed run matches an uninterrupted one
        REQUIRE(ws.run("train --config cfg.json --out runs/b").code == 0);
        CHECK(ws.read("runs/a/loss.csv") == ws.read("runs/b/loss.csv"));
        CHECK(ws.read("runs/a/checkpoints/step_00000006.bin") == ws.read("runs/b/checkpoints/step_00000006.bin"));

        // a different configuration is not silently resumed
        r = ws.run("train --config cfg.json --out runs/a --eta 0.2");
        CHECK(r.code == 1);
        CHECK(r.output.find("--force") != std::string::npos);
        CHECK(ws.run("train --config cfg.json --out runs/a --eta 0.2 --force").code == 0);
    }

    SUBCASE("zero steps keeps the initial parameters; eta 0 is labelled dpm") {
        REQUIRE(ws.run("train --config cfg.json --steps 0 --eta 0 --out runs/z").code == 0);
        const auto manifest = read_json_file(ws.path("runs/z/manifest.json"));
        CHECK(manifest["label"] == "dpm");
        CHECK(manifest["steps_completed"] == 0);
        CHECK(fs::exists(ws.path("runs/z/checkpoints/step_00000000.bin")));
    }

    SUBCASE("sampling is reproducible and eval summarizes the per-case rows") {
        REQUIRE(ws.run("train --config cfg.json --out runs/a").code == 0);
        REQUIRE(ws.run("sample --run runs/a --dump-latents").code == 0);
        const std::string first = ws.read("runs/a/samples/case_0000.pred.dydata");
        REQUIRE(!first.empty());
        REQUIRE(ws.run("sample --run runs/a --dump-latents").code == 0);
        CHECK(ws.read("runs/a/samples/case_0000.pred.dydata") == first);
        REQUIRE(ws.run("sample --run runs/a --seed 77").code == 0);
        CHECK(ws.read("runs/a/samples/case_0000.pred.dydata") != first);
        REQUIRE(ws.run("sample --run runs/a --dump-latents").code == 0);
        CHECK(fs::exists(ws.path("runs/a/latents/latent_error.csv")));

        const auto pred = dydiff::read_tensor(ws.path("runs/a/samples/case_0000.pred.dydata"));
        REQUIRE(pred.dims.size() == 3);
        CHECK(pred.dims[0] == 3);
        CHECK(pred.dims[1] == 2);
        CHECK(pred.dims[2] == 2);

        REQUIRE(ws.run("eval --run runs/a").code == 0);
        const auto rows = read_csv(ws.path("runs/a/metrics.csv"));
        REQUIRE(rows.size() > 1);
        CHECK(rows[0] == std::vector<std::string>{"case_id", "metric", "pool", "window", "value"});
        std::map<std::string, std::vector<double>> by_metric;
        for (std::size_t i = 1; i < rows.size(); ++i) by_metric[rows[i][1]].push_back(std::stod(rows[i][4]));
        const auto summary = read_json_file(ws.path("runs/a/summary.json"));
        REQUIRE(by_metric.count("crps"));
        const auto& crps = by_metric["crps"];
        CHECK(crps.size() == 4);
        double mean = 0.0;
        for (double v : crps) mean += v;
        mean /= static_cast<double>(crps.size());
        double var = 0.0;
        for (double v : crps) var += (v - mean) * (v - mean);
        const double sd = std::sqrt(var / static_cast<double>(crps.size() - 1));
        CHECK(summary["metrics"]["crps"]["mean"].get<double>() == doctest::Approx(mean).epsilon(1e-12));
        CHECK(summary["metrics"]["crps"]["std"].get<double>() == doctest::Approx(sd).epsilon(1e-12));
        CHECK(summary["metrics"]["crps"]["n"] == 4);

        REQUIRE(ws.run("train --config cfg.json --eta 0 --out runs/z").code == 0);
        REQUIRE(ws.run("sample --run runs/z --dump-latents").code == 0);
        REQUIRE(ws.run("eval --run runs/z").code == 0);
        REQUIRE(ws.run("compare runs/z runs/a --out cmp").code == 0);
        const auto table = read_csv(ws.path("cmp/comparison.csv"));
        REQUIRE(table.size() == 3);
        CHECK(table[1][1] == "dpm");
        CHECK(table[2][1] == "dydiff");
        CHECK(fs::exists(ws.path("cmp/deltas.csv")));
        CHECK(fs::exists(ws.path("cmp/latent_error_curves.csv")));
        CHECK(fs::exists(ws.path("cmp/report.json")));
    }

    SUBCASE("a perfect ensemble scores zero CRPS and full CSI") {
        REQUIRE(ws.run("train --config cfg.json --steps 1 --out runs/p").code == 0);
        REQUIRE(ws.run("sample --run runs/p").code == 0);
        for (int c = 0; c < 4; ++c) {
            char name[64];
            std::snprintf(name, sizeof(name), "runs/p/samples/case_%04d", c);
            const auto truth = dydiff::read_tensor(ws.path(std::string(name) + ".truth.dydata"));
            auto pred = dydiff::read_tensor(ws.path(std::string(name) + ".pred.dydata"));
            const std::size_t block = truth.values.size();
            REQUIRE(pred.values.size() == 3 * block);
            for (std::size_t m = 0; m < 3; ++m)
                std::copy(truth.values.begin(), truth.values.end(), pred.values.begin() + m * block);
            dydiff::write_tensor(ws.path(std::string(name) + ".pred.dydata"), pred);
        }
        REQUIRE(ws.run("eval --run runs/p").code == 0);
        const auto summary = read_json_file(ws.path("runs/p/summary.json"));
        CHECK(summary["metrics"]["crps"]["mean"].get<double>() == doctest::Approx(0.0));
        CHECK(summary["metrics"]["csi"]["mean"].get<double>() == 1.0);
        CHECK(summary["metrics"]["mse"]["mean"].get<double>() < 1e-24);

        fs::remove(ws.path("runs/p/samples/case_0002.truth.dydata"));
        const auto r = ws.run("eval --run runs/p");
        CHECK(r.code == 1);
        CHECK(r.output.find("case_0002") != std::string::npos);
    }
}

}
