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

#include <fstream>
#include <set>

#include "dydiff/common.hpp"
#include "dydiff/experiment.hpp"

using namespace dydiff;
using nlohmann::json;

namespace {

json minimal() {
    return json::parse(R"({
      "dataset": {"generator": "linear_gaussian", "path": "x.dydata", "num_sequences": 10, "length": 8,
                  "test_sequences": 2, "dim": 2},
      "window": {"P": 1, "S": 2},
      "schedule": {"T": 20, "eta": 0.3},
      "train": {"steps": 5},
      "sampler": {"num_steps": 5}
    })");
}

std::string config_error(const json& j) {
    try {
        ExperimentConfig::from_json(j);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return {};
}

}  // namespace

TEST_SUITE("experiment") {

TEST_CASE("a minimal config fills defaults") {
    const auto c = ExperimentConfig::from_json(minimal());
    CHECK(c.P == 1);
    CHECK(c.S == 2);
    CHECK(c.schedule.T == 20);
    CHECK(c.schedule.eta == 0.3);
    CHECK(c.dataset.linear_gaussian.dim == 2);
    CHECK(c.dataset.num_sequences() == 10);
    CHECK(c.train.steps == 5);
    CHECK(c.label() == "dydiff");
}

TEST_CASE("serialized configs parse back to the same config") {
    const auto c = ExperimentConfig::from_json(minimal());
    const auto again = ExperimentConfig::from_json(c.to_json());
    CHECK(again.to_json() == c.to_json());
    for (const char* name : {"linear_gaussian.json", "advected_blobs.json"}) {
        const auto shipped = load_config(std::filesystem::path(DYDIFF_SOURCE_DIR) / "configs" / name);
        CHECK(ExperimentConfig::from_json(shipped.to_json()).to_json() == shipped.to_json());
    }
}

TEST_CASE("eta = 0 is labelled as the standard model") {
    auto j = minimal();
    j["schedule"]["eta"] = 0.0;
    CHECK(ExperimentConfig::from_json(j).label() == "dpm");
    CHECK(make_schedule(ExperimentConfig::from_json(j).schedule).is_standard());
}

TEST_CASE("unknown keys and bad values are all reported") {
    auto j = minimal();
    j["schedule"]["etta"] = 0.2;
    j["train"]["independent_noise"] = "yes";
    j["model"] = {{"width", 0}};
    j["extra"] = 1;
    j["schedule"]["eta"] = 2.0;
    const std::string msg = config_error(j);
    CHECK(msg.find("schedule.etta: unknown key") != std::string::npos);
    CHECK(msg.find("train.independent_noise") != std::string::npos);
    CHECK(msg.find("config.extra: unknown key") != std::string::npos);
    CHECK(msg.find("model.width") != std::string::npos);
    CHECK(msg.find("schedule.eta") != std::string::npos);
}

TEST_CASE("generator-specific keys are checked against the generator") {
    auto j = minimal();
    j["dataset"]["grid"] = 8;
    CHECK(config_error(j).find("dataset.grid: unknown key") != std::string::npos);
    j = minimal();
    j["dataset"]["generator"] = "random_walk";
    CHECK(config_error(j).find("unknown generator") != std::string::npos);
}

TEST_CASE("cross-field constraints") {
    auto j = minimal();
    j["sampler"]["num_steps"] = 30;
    CHECK(config_error(j).find("exceeds schedule.T") != std::string::npos);
    j = minimal();
    j["dataset"]["length"] = 3;
    CHECK(config_error(j).find("shorter than the window") != std::string::npos);
    j = minimal();
    j["sampler"]["kind"] = "dydiff-ddpm";
    j["train"]["independent_noise"] = true;
    CHECK(config_error(j).find("independent_noise") != std::string::npos);
    j = minimal();
    j["model"] = {{"arch", "conv"}};
    CHECK(config_error(j).find("grid dataset") != std::string::npos);
    j = minimal();
    j["metrics"] = {{"crps_pool", "avg"}, {"crps_window", 2}};
    CHECK(config_error(j).find("crps_window") != std::string::npos);
}

TEST_CASE("config files with comments load; malformed files do not") {
    const auto dir = std::filesystem::temp_directory_path() / "dydiff_test_experiment";
    std::filesystem::create_directories(dir);
    {
        std::ofstream out(dir / "c.json");
        out << "// comment\n" << minimal().dump(2);
    }
    CHECK(load_config(dir / "c.json").S == 2);
    {
        std::ofstream out(dir / "bad.json");
        out << "{ \"window\": ";
    }
    CHECK_THROWS_AS(load_config(dir / "bad.json"), ConfigError);
    CHECK_THROWS_AS(load_config(dir / "none.json"), IoError);
    std::filesystem::remove_all(dir);
}

TEST_CASE("train and test windows come from disjoint sequences") {
    const auto c = ExperimentConfig::from_json(minimal());
    const auto d = generate_dataset(c.dataset);
    const auto train = train_window_refs(c, d);
    const auto test = test_window_refs(c, d);
    std::set<std::size_t> train_seq, test_seq;
    for (const auto& r : train) train_seq.insert(r.sequence);
    for (const auto& r : test) test_seq.insert(r.sequence);
    CHECK(train_seq.size() == 8);
    CHECK(test_seq == std::set<std::size_t>{8, 9});
    CHECK(test.size() == 2 * (8 - 1 - 2));
    CHECK(test == test_window_refs(c, d));
}

}

TEST_SUITE("experiment") {

TEST_CASE("the timegrad rule ties the dynamics to the noise schedule") {
    auto j = minimal();
    j["schedule"]["gamma_rule"] = "timegrad";
    const auto s = make_schedule(ExperimentConfig::from_json(j).schedule);
    const auto plain = make_schedule(ExperimentConfig::from_json(minimal()).schedule);
    for (int t = 1; t <= 20; ++t) CHECK(1.0 - s.gamma(t) == doctest::Approx(0.3 * (1.0 - plain.alpha(t))).epsilon(1e-12));
}

}
