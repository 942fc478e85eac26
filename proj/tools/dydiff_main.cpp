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

// Command-line front end: gen-data, train, sample, eval, compare.
#include <iostream>

#include "CLI11.hpp"

#include "dydiff/experiment.hpp"

namespace {

struct SharedFlags {
    std::string config, out, run, sampler;
    std::uint64_t seed = 0;
    int steps = 0, ensemble = 0;
    double eta = 0.0;
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"dydiff: temporally coupled diffusion for multi-step prediction"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Expand help for every subcommand");

    SharedFlags f;
    dydiff::CommandOptions opts;
    std::vector<std::string> runs;

    auto add_config = [&](CLI::App* sub, bool required) {
        auto* o = sub->add_option("--config", f.config, "Experiment config (JSON)")->check(CLI::ExistingFile);
        if (required) o->required();
    };
    auto add_seed = [&](CLI::App* sub) { sub->add_option("--seed", f.seed, "Override the seed"); };

    auto* gen = app.add_subcommand("gen-data", "Generate a synthetic dataset container");
    add_config(gen, true);
    add_seed(gen);
    gen->add_option("--out", f.out, "Output file (default: dataset.path from the config)");
    gen->add_flag("--force", opts.force, "Overwrite an existing file");

    auto* train = app.add_subcommand("train", "Train a denoiser into a run directory");
    add_config(train, true);
    add_seed(train);
    train->add_option("--out", f.out, "Run directory (default: $DYDIFF_OUTPUT_ROOT/<output>)");
    train->add_option("--steps", f.steps, "Total optimizer steps")->check(CLI::NonNegativeNumber);
    train->add_option("--eta", f.eta, "History-mixing strength in [0, 1]")->check(CLI::Range(0.0, 1.0));
    train->add_flag("--independent-noise", opts.independent_noise, "Ablation: uncorrelated corruption noise");
    train->add_flag("--force", opts.force, "Discard an existing run in the directory");

    auto* samp = app.add_subcommand("sample", "Draw forecast ensembles for the evaluation windows");
    samp->add_option("--run", f.run, "Run directory")->required()->check(CLI::ExistingDirectory);
    add_seed(samp);
    samp->add_option("--steps", f.steps, "Number of reverse steps")->check(CLI::PositiveNumber);
    samp->add_option("--sampler", f.sampler, "dydiff-ddim | dydiff-ddpm | dpm-ddim | dpm-ddpm");
    samp->add_option("--ensemble", f.ensemble, "Members per case")->check(CLI::PositiveNumber);
    samp->add_flag("--dump-latents", opts.dump_latents, "Write per-step latents and the latent-error curve");

    auto* eval = app.add_subcommand("eval", "Score sampled ensembles");
    eval->add_option("--run", f.run, "Run directory")->required()->check(CLI::ExistingDirectory);

    auto* cmp = app.add_subcommand("compare", "Tabulate several evaluated runs");
    cmp->add_option("runs", runs, "Run directories; the first is the baseline")->required()->check(CLI::ExistingDirectory);
    cmp->add_option("--out", f.out, "Report directory (default: $DYDIFF_OUTPUT_ROOT/compare)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "dydiff-error: usage: " << e.what() << "\n";
        return 2;
    }

    auto* sub = app.get_subcommands().front();
    auto given = [sub](const char* name) {
        const CLI::Option* o = sub->get_option_no_throw(name);
        return o != nullptr && o->count() > 0;
    };
    if (!f.config.empty()) opts.config = f.config;
    if (!f.out.empty()) opts.out = f.out;
    if (!f.run.empty()) opts.run = f.run;
    if (given("--seed")) opts.seed = f.seed;
    if (given("--steps")) opts.steps = f.steps;
    if (given("--eta")) opts.eta = f.eta;
    if (given("--sampler")) opts.sampler = f.sampler;
    if (given("--ensemble")) opts.ensemble = f.ensemble;
    for (const auto& r : runs) opts.runs.emplace_back(r);

    try {
        const std::string name = sub->get_name();
        if (name == "gen-data") dydiff::cmd_gen_data(opts, std::cout);
        else if (name == "train") dydiff::cmd_train(opts, std::cout);
        else if (name == "sample") dydiff::cmd_sample(opts, std::cout);
        else if (name == "eval") dydiff::cmd_eval(opts, std::cout);
        else dydiff::cmd_compare(opts, std::cout);
    } catch (const dydiff::Error& e) {
        std::cerr << "dydiff-error: " << e.code() << ": " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "dydiff-error: internal: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
