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


#ifndef PGSIM_ANALYSIS_HPP
#define PGSIM_ANALYSIS_HPP

#include "calibration.hpp"
#include "channel.hpp"
#include "geometry.hpp"
#include "parametrization.hpp"

#include <Eigen/SVD>

#include <cstdint>
#include <string>
#include <vector>

namespace pgsim
{

enum class Parametrization
{
    original,
    fresh // the new parametrization ("new" is a keyword)
};

std::string to_string(Parametrization p);

enum class ChannelPart
{
    los,
    nlos,
    total
};

// Internal model parameters shared by all realizations of an experiment.
struct ModelParams
{
    double alpha = 1.0; // new parametrization [Hz]
    double beta = 0.0;
    double gamma = 0.0; // [1/s]
    double g = 0.5;     // original parametrization
};

// One random draw of the model: geometry, delays and the random phases of
// both parametrizations (sharing the scatterer positions).
struct Realization
{
    Geometry<double> geometry;
    DelaySet<double> delays;
    NewParams<double> fresh;
    OriginalParams<double> original;
};

// Draw order on the substream: scatterer positions, 2 N_S new-model phases,
// original-model phases.
Realization draw_realization(const GeometryConfig &config, const ModelParams &params, std::uint64_t seed);

// ----- CIR -----------------------------------------------------------------

// taps has one column per (rx, tx) pair, column index rx * num_tx + tx.
struct Cir
{
    std::vector<double> delays; // [s]
    Eigen::MatrixXcd taps;
    int num_rx = 0;
    int num_tx = 0;
    std::string window = "hann";

    double delay_step() const { return delays.size() > 1 ? delays[1] - delays[0] : 0.0; }
    // Sum of |tap|^2 over all pairs.
    Eigen::VectorXd power_profile() const;
};

// Symmetric Hann window scaled to unit energy.
Eigen::VectorXd hann_window(int n);

// Per pair: unitary inverse DFT of window(f) H(f). Delay k is k / (N df).
// Energy of window(f) H(f) over the grid equals the total tap energy.
Cir cir_from_grid(const std::vector<ChannelSample<double>> &samples, ChannelPart part = ChannelPart::nlos);

// ----- Singular values -------------------------------------------------------

template <typename Derived>
Vector<typename Derived::RealScalar> singular_values(const Eigen::MatrixBase<Derived> &h)
{
    using Real = typename Derived::RealScalar;
    using Mat = Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    Eigen::JacobiSVD<Mat> svd(h.eval());
    Vector<Real> s = svd.singularValues();
    if (!s.allFinite())
        throw NoConvergence("singular value decomposition failed");
    return s; // already sorted in decreasing order
}

enum class SweepKind
{
    spacing_factor, // kappa
    box_side        // L [m]
};

std::string to_string(SweepKind k);

struct SvSweepOptions
{
    SweepKind kind = SweepKind::spacing_factor;
    std::vector<double> values;
    int realizations = 1000;
    std::vector<double> frequencies; // evaluation frequencies, sigma averaged over them
    std::uint64_t master_seed = 1;
    int threads = 0;
};

struct SvCurve
{
    SweepKind kind = SweepKind::spacing_factor;
    Parametrization parametrization = Parametrization::fresh;
    std::vector<double> values;
    std::vector<Eigen::VectorXd> mean_sigma; // per sweep point, descending index order
    int realization_count = 0;
};

// Realization r uses substream r of the master seed at every sweep point.
// Box sweeps force the minimum scatterer distance to zero.
SvCurve sv_sweep(const GeometryConfig &base, const ModelParams &params, Parametrization parametrization,
                 const SvSweepOptions &options);

// ----- K-factor over frequency -------------------------------------------------

enum class AlphaPolicy
{
    per_realization, // MGFs and alpha estimated on each realization's own delays
    ensemble         // ModelParams::alpha for every realization
};

struct KCurveOptions
{
    FrequencyGrid grid{1e9, 10e9, 256};
    int realizations = 1000;
    std::uint64_t master_seed = 1;
    int threads = 0;
    Parametrization parametrization = Parametrization::fresh;
    AlphaPolicy alpha_policy = AlphaPolicy::per_realization;
};

struct KCurve
{
    std::vector<double> frequencies;
    std::vector<double> mean_ratio; // mean over realizations of ||H_LOS||^2 / ||H_NLOS||^2
    std::vector<double> std_ratio;  // sample standard deviation of the same
    std::vector<double> mean_los_power;
    std::vector<double> mean_nlos_power;
    double target_k = 0.0;
    double band_k = 0.0; // trapezoidal band integral of mean LOS power over that of mean NLOS power
    int realization_count = 0;
};

KCurve empirical_k_curve(const GeometryConfig &config, const ModelParams &params, double target_k,
                         const KCurveOptions &options);

// Band-integrated K of the original model by Monte Carlo and trapezoidal
// quadrature over the grid.
double numeric_k_for_original(const GeometryConfig &config, const ModelParams &params, const FrequencyGrid &grid,
                              int realizations, std::uint64_t master_seed, int threads = 0);

double trapezoid(const std::vector<double> &x, const std::vector<double> &y);

// ----- Decay-rate fitting ------------------------------------------------------

struct DecayFitOptions
{
    double prominence_db = 6.0;
    double window = 2e-9;           // +- neighborhood for peak tests [s]
    double dynamic_range_db = 60.0; // taps further below the strongest are ignored
};

struct DecayFit
{
    double rho1 = 0.0; // cluster decay [dB/s]
    double rho2 = 0.0; // ray decay [dB/s]
    std::vector<double> cluster_delays;
    std::vector<double> cluster_powers_db;
    int first_cluster_points = 0;
};

// Fits on the aggregated power profile. The first cluster starts at the
// strongest tap; a new cluster starts at a tap that is the maximum over the
// +-window neighborhood and rises at least prominence_db above the minimum of
// the preceding window. rho2 is the least-squares slope over the local maxima
// of the first cluster (over all its taps if it decays monotonically); rho1
// is the slope over the cluster onsets.
DecayFit fit_decay_rates(const Cir &cir, const DecayFitOptions &options = {});
DecayFit fit_decay_rates(const std::vector<double> &delays, const Eigen::VectorXd &power,
                         const DecayFitOptions &options = {});

struct DecayEnsemble
{
    double mean_rho1 = 0.0;
    double mean_rho2 = 0.0;
    int fitted = 0;
    int skipped = 0;
};

// Mean of per-realization fits of the new parametrization's NLOS CIR.
// Realizations whose CIR has too few clusters or taps are skipped and counted.
DecayEnsemble decay_rate_ensemble(const GeometryConfig &config, const ModelParams &params, const FrequencyGrid &grid,
                                  int realizations, std::uint64_t master_seed, int threads = 0,
                                  const DecayFitOptions &options = {});

} // namespace pgsim

#endif
