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


#include "pgsim/harness.hpp"

#include <catch_amalgamated.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <sys/wait.h>

using namespace pgsim;
using Catch::Approx;
namespace fs = std::filesystem;

namespace
{

std::string slurp(const fs::path &p)
{
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path scratch(const std::string &name)
{
    const auto p = fs::temp_directory_path() / ("pgsim_test_" + name);
    fs::remove_all(p);
    return p;
}

// Checks the declared row count against the data lines.
void check_csv(const fs::path &p, const std::string &header)
{
    std::ifstream in(p);
    std::string line;
    int declared = -1, rows = 0;
    bool seen_header = false;
    while (std::getline(in, line))
    {
        if (line.rfind("# rows: ", 0) == 0)
            declared = std::stoi(line.substr(8));
        else if (line.rfind("#", 0) == 0)
            continue;
        else if (!seen_header)
        {
            CHECK(line == header);
            seen_header = true;
        }
        else
            ++rows;
    }
    CHECK(seen_header);
    CHECK(declared == rows);
}

int run_cli(const std::string &args)
{
    const std::string cmd = std::string(PGSIM_CLI_PATH) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

} // namespace

TEST_CASE("empty config gives Table I defaults")
{
    const auto c = parse_config("{}");
    CHECK(c.geometry.num_scatterers == 10);
    CHECK(c.geometry.carrier_frequency == 5e9);
    CHECK(c.geometry.tx_rx_distance == 3.0);
    CHECK(c.geometry.box_side == 5.0);
    CHECK(c.geometry.spacing_factor == 1.0);
    CHECK(c.geometry.min_scatterer_distance == 1.5);
    CHECK(c.target.rho1 == -1e9);
    CHECK(c.target.rho2 == -2e9);
    CHECK(c.target.k_factor == 180);
    CHECK(c.realizations == 1000);
    CHECK(c.effective_grid().num_points == 1024);
}

TEST_CASE("config fields and unit conversion")
{
    const auto c = parse_config(R"({"preset": "k-vs-frequency", "svTarget": {"rho1": -3, "rho2": -5},
        "geometry": {"numScatterers": 7, "losVisible": false}, "masterSeed": 18446744073709551615,
        "fit": {"windowNs": 3}})");
    CHECK(c.preset == Preset::k_vs_frequency);
    CHECK(c.target.rho1 == Approx(-3e9));
    CHECK(c.target.rho2 == Approx(-5e9));
    CHECK(c.geometry.num_scatterers == 7);
    CHECK_FALSE(c.geometry.los_visible);
    CHECK(c.master_seed == 18446744073709551615ULL);
    CHECK(c.fit.window == Approx(3e-9));
    CHECK(c.effective_grid().f_min == 1e9);
    CHECK(c.effective_parametrization() == ParamSelection::fresh);

    // the echo round-trips
    const auto again = parse_config(config_echo(c));
    CHECK(config_echo(again) == config_echo(c));
}

TEST_CASE("config errors")
{
    CHECK_THROWS_AS(parse_config(R"({"geometry": {"numScatterers": 0}})"), ValidationError);
    try
    {
        parse_config(R"({"preset": "fig4"})");
        FAIL("expected ValidationError");
    }
    catch (const ValidationError &e)
    {
        const std::string w = e.what();
        for (const auto &n : preset_names())
            CHECK(w.find(n) != std::string::npos);
    }
    try
    {
        parse_config("{\n  \"realizations\": 5,\n  \"preset\": ]\n}", "cfg.json");
        FAIL("expected ParseError");
    }
    catch (const ParseError &e)
    {
        CHECK(std::string(e.what()).find("cfg.json:3") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_config(R"({"geometry": {"numScaterers": 3}})"), ParseError);
    CHECK_THROWS_AS(parse_config(R"({"realizations": "many"})"), ParseError);
    CHECK_THROWS_AS(parse_config(R"({"realizations": 0})"), ValidationError);
    CHECK_THROWS_AS(parse_config(R"({"parametrization": "neither"})"), ValidationError);
    CHECK_THROWS_AS(load_config("/nonexistent/pgsim.json"), ValidationError);
}

TEST_CASE("internal parameter derivation")
{
    auto c = parse_config(R"({"preset": "k-vs-frequency", "decayConvention": "powerExponent",
        "geometry": {"minScattererDistance": 0}})");
    auto ip = derive_internal_params(c);
    CHECK(ip.model.beta == Approx(0.026).epsilon(0.05));
    CHECK(ip.model.gamma == Approx(-4.605e8).epsilon(1e-3));
    CHECK(ip.model.alpha > 0);
    CHECK(std::isfinite(ip.model.alpha));
    CHECK(ip.diagnostics.validity_margin > 8);
    CHECK(ip.diagnostics.bounce_gain == Approx(9 * ip.model.beta * ip.model.beta));
    CHECK_FALSE(ip.diagnostics.k_from_original);
    CHECK(ip.diagnostics.k_target == 180);
    // the K-curve grid starts at 1 GHz, below the validity limit
    CHECK_FALSE(ip.diagnostics.warnings.empty());

    c = parse_config(R"({"preset": "sv-vs-kappa", "pilotRealizations": 50})");
    ip = derive_internal_params(c);
    CHECK(ip.diagnostics.k_from_original);
    CHECK(ip.diagnostics.k_target > 0);
    CHECK(ip.model.gamma == Approx(-2.3026e8).epsilon(1e-4));
    CHECK(ip.model.g == Approx(9 * ip.model.beta));
    CHECK(ip.diagnostics.warnings.empty());

    c = parse_config(R"({"svTarget": {"rho1": 1}})");
    CHECK_THROWS_AS(derive_internal_params(c), InfeasibleBeta);
    c = parse_config(R"({"geometry": {"losVisible": false}})");
    CHECK_THROWS_AS(derive_internal_params(c), NoLosPath);
}

TEST_CASE("verify-derivation preset")
{
    const auto dir = scratch("verify");
    auto c = parse_config(R"({"preset": "verify-derivation", "realizations": 200,
        "verify": {"numScatterers": 5, "beta": 0.2, "draws": 10000}})");
    c.output_dir = dir;
    const auto r = run_experiment(c, 1);
    CHECK(r.ok);
    const auto v = nlohmann::json::parse(slurp(dir / "verification.json"));
    CHECK(v["numScatterers"] == 5);
    int found = 0;
    for (const auto &e : v["entries"])
    {
        for (const char *k : {"quantity", "closed_form", "mc_mean", "mc_stderr", "n_draws", "pass"})
            CHECK(e.contains(k));
        if (e["quantity"] == "pS1" || e["quantity"] == "pS2")
        {
            ++found;
            CHECK(e["pass"] == true);
            CHECK(e["n_draws"] == 10000);
        }
    }
    CHECK(found == 2);
    const auto m = nlohmann::json::parse(slurp(dir / "manifest.json"));
    CHECK(m["status"] == "OK");
}

TEST_CASE("verify-derivation passes on Table I defaults")
{
    const auto dir = scratch("verify_default");
    auto c = parse_config(R"({"preset": "verify-derivation"})");
    c.output_dir = dir;
    CHECK_NOTHROW(run_experiment(c));
    const auto v = nlohmann::json::parse(slurp(dir / "verification.json"));
    CHECK(v["pass"] == true);
}

TEST_CASE("realization-compare output is deterministic and self-describing")
{
    const auto a = scratch("rc_a"), b = scratch("rc_b");
    auto c = parse_config(R"({"preset": "realization-compare", "masterSeed": 12, "pilotRealizations": 40,
        "grid": {"numPoints": 256}})");
    c.output_dir = a;
    run_experiment(c, 1);
    c.output_dir = b;
    run_experiment(c, 3);
    for (const char *f : {"cir_new.csv", "cir_original.csv"})
    {
        CHECK(slurp(a / f) == slurp(b / f));
        check_csv(a / f, "pair,delay_s,re,im,power_db");
    }
    const auto ma = slurp(a / "manifest.json"), mb = slurp(b / "manifest.json");
    CHECK(ma != mb); // outputDir differs in the echo
    const auto m = nlohmann::json::parse(ma);
    CHECK(m["masterSeed"] == 12);
    CHECK(m["perRealizationSeeds"].size() == 1);
    CHECK(m["toolVersion"] == tool_version);
    CHECK(fs::exists(a / "run.log"));
}

TEST_CASE("sweep and K presets write declared row counts")
{
    const auto dir = scratch("sweeps");
    auto c = parse_config(R"({"preset": "sv-vs-box", "realizations": 3, "pilotRealizations": 20,
        "sweep": {"boxValues": [0.1, 1, 4], "frequencyMode": "single", "frequency": 5e9}})");
    c.output_dir = dir;
    run_experiment(c);
    check_csv(dir / "sv_box_new.csv", "sweep_value,sigma_index,mean_sigma");
    check_csv(dir / "sv_box_original.csv", "sweep_value,sigma_index,mean_sigma");

    c = parse_config(R"({"preset": "k-vs-frequency", "realizations": 4, "pilotRealizations": 20,
        "grid": {"numPoints": 20}})");
    c.output_dir = dir;
    run_experiment(c);
    check_csv(dir / "k_curve_new.csv", "frequency_hz,mean_ratio,std_ratio,target_k");
    CHECK_FALSE(fs::exists(dir / "k_curve_original.csv"));
}

TEST_CASE("failures are recorded in the manifest")
{
    const auto dir = scratch("failed");
    auto c = parse_config(R"({"svTarget": {"rho1": 2}})");
    c.output_dir = dir;
    CHECK_THROWS_AS(run_experiment(c), InfeasibleBeta);
    const auto m = nlohmann::json::parse(slurp(dir / "manifest.json"));
    CHECK(m["status"] == "FAILED");
    CHECK(m["error"].get<std::string>().find("rho1") != std::string::npos);
}

TEST_CASE("command line exit codes")
{
    const auto dir = scratch("cli");
    fs::create_directories(dir);
    CHECK(run_cli("presets") == 0);
    CHECK(run_cli("run") == 2);
    CHECK(run_cli("run --config /nonexistent.json") == 2);

    std::ofstream(dir / "bad.json") << R"({"preset": "nope"})";
    CHECK(run_cli("run --config " + (dir / "bad.json").string()) == 2);

    std::ofstream(dir / "infeasible.json") << R"({"svTarget": {"rho1": 1}})";
    CHECK(run_cli("run --config " + (dir / "infeasible.json").string() + " --out " + (dir / "o1").string()) == 3);

    std::ofstream(dir / "ok.json") << R"({"pilotRealizations": 20, "grid": {"numPoints": 64}})";
    CHECK(run_cli("run --config " + (dir / "ok.json").string() + " --preset realization-compare --seed 4 --out " +
                  (dir / "o2").string()) == 0);
    CHECK(fs::exists(dir / "o2" / "cir_new.csv"));
    const auto m = nlohmann::json::parse(slurp(dir / "o2" / "manifest.json"));
    CHECK(m["masterSeed"] == 4);
}
