// SPDX-License-Identifier: Apache-2.0
//
// pgsim - propagation graph MIMO channel simulator
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
// http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// ------------------------------------------------------------------------


// pgsim command line front end.

#include "pgsim/harness.hpp"
#include "pgsim/parallel.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

namespace
{

enum ExitCode
{
    ok = 0,
    failure = 1,
    validation = 2,
    numerical = 3
};

} // namespace

int main(int argc, char **argv)
{
    CLI::App app{"pgsim - propagation graph MIMO channel simulator"};
    app.set_version_flag("--version", std::string(pgsim::tool_version));
    app.require_subcommand(1);

    auto *run = app.add_subcommand("run", "Run an experiment preset");
    std::string config_path;
    std::optional<std::string> preset, out_dir;
    std::optional<std::uint64_t> seed;
    std::optional<int> realizations;
    run->add_option("--config", config_path, "JSON config file")->required();
    run->add_option("--preset", preset, "Override the preset");
    run->add_option("--seed", seed, "Override the master seed");
    run->add_option("--out", out_dir, "Override the output directory");
    run->add_option("--realizations", realizations, "Override the number of realizations M");

    auto *presets = app.add_subcommand("presets", "List experiment presets");

    try
    {
        app.parse(argc, argv);
    }
    catch (const CLI::ParseError &e)
    {
        const int code = app.exit(e);
        return code == 0 ? ok : validation;
    }

    if (presets->parsed())
    {
        for (const auto &name : pgsim::preset_names())
            std::cout << name << "\n";
        return ok;
    }

    try
    {
        auto cfg = pgsim::load_config(config_path);
        if (preset)
            cfg.preset = pgsim::parse_preset(*preset);
        if (seed)
            cfg.master_seed = *seed;
        if (out_dir)
            cfg.output_dir = *out_dir;
        if (realizations)
            cfg.realizations = *realizations;
        cfg.validate();

        const auto result = pgsim::run_experiment(cfg, pgsim::threads_from_environment());
        for (const auto &w : result.warnings)
            std::cerr << "warning: " << w << "\n";
        for (const auto &f : result.files)
            std::cout << f.string() << "\n";
        return ok;
    }
    catch (const pgsim::ValidationError &e)
    {
        std::cerr << "error: " << e.what() << "\n";
        return validation;
    }
    catch (const pgsim::NumericalError &e)
    {
        std::cerr << "numerical error: " << e.what() << "\n";
        return numerical;
    }
    catch (const std::exception &e)
    {
        std::cerr << "error: " << e.what() << "\n";
        return failure;
    }
}
