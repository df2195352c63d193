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


#ifndef PGSIM_HARNESS_HPP
#define PGSIM_HARNESS_HPP

#include "analysis.hpp"
#include "calibration.hpp"
#include "channel.hpp"
#include "geometry.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace pgsim
{

inline constexpr const char *tool_version = "0.1.0";

enum class Preset
{
    realization_compare,
    sv_vs_kappa,
    sv_vs_box,
    k_vs_frequency,
    verify_derivation
};

enum class ParamSelection
{
    original,
    fresh,
    both
};

std::string to_string(Preset p);
std::string to_string(ParamSelection p);
const std::vector<std::string> &preset_names();
Preset parse_preset(const std::string &name); // ValidationError listing valid names

enum class FrequencyMode
{
    band,  // sigma averaged over the grid
    single // sigma at one frequency
};

struct SweepSettings
{
    std::vector<double> kappa_values; // empty: 16 log-spaced points in [0.01, 2]
    std::vector<double> box_values;   // empty: 16 log-spaced points in [0.05, 20] m
    FrequencyMode frequency_mode = FrequencyMode::band;
    double single_frequency = 5e9;
};

struct VerifySettings
{
    int num_scatterers = 0; // 0: take the geometry's N_S
    double beta = 0.0;      // 0: calibrated beta
    int draws = 10000;
    double max_z = 4.0; // pass when |mc - closed| <= max_z * stderr
    double nlos_rel_tol = 0.1;
};

struct ExperimentConfig
{
    Preset preset = Preset::realization_compare;
    GeometryConfig geometry;
    SvTarget target;
    DecayConvention decay_convention = DecayConvention::amplitude;
    int realizations = 1000;
    int pilot_realizations = 200;
    std::uint64_t master_seed = 1;
    std::optional<FrequencyGrid> grid;             // unset: default_grid(preset)
    std::optional<ParamSelection> parametrization; // unset: default_parametrization(preset)
    std::filesystem::path output_dir = "pgsim-out";
    SweepSettings sweep;
    DecayFitOptions fit;
    VerifySettings verify;

    FrequencyGrid effective_grid() const;
    ParamSelection effective_parametrization() const;
    void validate() const;
};

// Default grid of a preset: CIR [4, 6] GHz with 1024 points, K curve
// [1, 10] GHz with 256 points, everything else [4, 6] GHz with 64 points.
FrequencyGrid default_grid(Preset p);
ParamSelection default_parametrization(Preset p);

// Parses JSON text. Missing fields take the defaults above; decay rates are
// given in dB/ns, frequencies in Hz, lengths in m. Unknown keys are rejected.
ExperimentConfig parse_config(const std::string &text, const std::string &origin = "<string>");
ExperimentConfig load_config(const std::filesystem::path &path);

// JSON echo of a config in input units; parse_config(echo) reproduces it.
std::string config_echo(const ExperimentConfig &config);

struct Diagnostics
{
    DelayStats stats;
    MgfEstimates mgf;
    double validity_margin = 0.0;      // at the target band's f_min
    double grid_validity_margin = 0.0; // at the grid's f_min
    double bounce_gain = 0.0;          // (N_S - 1) beta^2
    double k_target = 0.0;
    bool k_from_original = false;
    std::vector<std::string> warnings;
};

struct InternalParams
{
    ModelParams model;
    Diagnostics diagnostics;
};

// Seeds: realization r of an experiment uses substream_seed(masterSeed, r);
// the pilot ensemble uses substreams of pilot_seed(masterSeed).
std::uint64_t pilot_seed(std::uint64_t master_seed);

InternalParams derive_internal_params(const ExperimentConfig &config, int threads = 0);

// Monte-Carlo check of the scattering-matrix powers: B with zero diagonal and
// off-diagonal entries beta e^{j theta}, theta i.i.d. uniform; S = (I - B)^-1.
struct MonteCarloEstimate
{
    double mean = 0.0;
    double std_error = 0.0;
    int draws = 0;
};

struct SPowerCheck
{
    MonteCarloEstimate diag, off;
};

SPowerCheck monte_carlo_s_power(double beta, int num_scatterers, int draws, std::uint64_t seed);

struct VerificationEntry
{
    std::string quantity;
    double closed_form = 0.0;
    double mc_mean = 0.0;
    double mc_stderr = 0.0;
    int n_draws = 0;
    bool pass = false;
};

struct RunResult
{
    bool ok = false;
    std::vector<std::filesystem::path> files;
    std::vector<std::string> warnings;
    std::string error;
};

// Runs the preset, writes result files and manifest.json into output_dir and
// appends timestamps to run.log there. On failure the manifest carries
// status FAILED and the exception is rethrown.
RunResult run_experiment(const ExperimentConfig &config, int threads = 0);

} // namespace pgsim

#endif
