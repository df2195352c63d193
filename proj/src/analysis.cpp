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


#include "pgsim/analysis.hpp"
#include "pgsim/parallel.hpp"
#include "pgsim/random.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <limits>

namespace pgsim
{

std::string to_string(Parametrization p)
{
    return p == Parametrization::fresh ? "new" : "original";
}

std::string to_string(SweepKind k)
{
    return k == SweepKind::spacing_factor ? "kappa" : "box_side";
}

Realization draw_realization(const GeometryConfig &config, const ModelParams &params, std::uint64_t seed)
{
    Rng rng(seed);
    Realization r;
    r.geometry = sample_geometry<double>(config, rng);
    r.delays = compute_delays(r.geometry, config.speed_of_light);
    r.fresh.alpha = params.alpha;
    r.fresh.beta = params.beta;
    r.fresh.gamma = params.gamma;
    r.fresh.los_visible = config.los_visible;
    draw_new_phases(r.fresh, config.num_scatterers, rng);
    r.original = draw_original_params(r.delays, params.g, config.los_visible, rng);
    return r;
}

// ----- CIR -----------------------------------------------------------------

Eigen::VectorXd Cir::power_profile() const
{
    return taps.cwiseAbs2().rowwise().sum();
}

Eigen::VectorXd hann_window(int n)
{
    Eigen::VectorXd w(n);
    if (n == 1)
        w(0) = 1.0;
    else
        for (int k = 0; k < n; ++k)
            w(k) = 0.5 * (1.0 - std::cos(2.0 * pi * k / (n - 1)));
    return w / w.norm();
}

Cir cir_from_grid(const std::vector<ChannelSample<double>> &samples, ChannelPart part)
{
    const int n = static_cast<int>(samples.size());
    if (n < 2)
        throw NonuniformGrid("CIR needs at least two frequency samples");
    const double df = (samples.back().frequency - samples.front().frequency) / (n - 1);
    if (!(df > 0.0))
        throw NonuniformGrid("frequencies must increase");
    for (int i = 1; i < n; ++i)
        if (std::abs(samples[i].frequency - samples[i - 1].frequency - df) > 1e-6 * df)
            throw NonuniformGrid("frequency samples are not uniformly spaced");

    const auto &first = samples.front().h_los;
    Cir cir;
    cir.num_rx = static_cast<int>(first.rows());
    cir.num_tx = static_cast<int>(first.cols());
    cir.delays.resize(n);
    for (int k = 0; k < n; ++k)
        cir.delays[k] = k / (n * df);

    const Eigen::VectorXd w = hann_window(n);
    const int pairs = cir.num_rx * cir.num_tx;
    cir.taps.resize(n, pairs);
    Eigen::FFT<double> fft;
    std::vector<std::complex<double>> in(n), out(n);
    const double unitary = std::sqrt(static_cast<double>(n));
    for (int m = 0; m < cir.num_rx; ++m)
        for (int t = 0; t < cir.num_tx; ++t)
        {
            for (int k = 0; k < n; ++k)
            {
                const auto &s = samples[k];
                std::complex<double> h;
                switch (part)
                {
                case ChannelPart::los: h = s.h_los(m, t); break;
                case ChannelPart::nlos: h = s.h_nlos(m, t); break;
                case ChannelPart::total: h = s.h_los(m, t) + s.h_nlos(m, t); break;
                }
                in[k] = w(k) * h;
            }
            fft.inv(out, in); // includes the 1/n factor
            for (int k = 0; k < n; ++k)
                cir.taps(k, m * cir.num_tx + t) = out[k] * unitary;
        }
    return cir;
}

// ----- Singular value sweeps ------------------------------------------------

namespace
{

template <typename Params>
Eigen::VectorXd sigma_sum(const DelaySet<double> &delays, const Params &p, const std::vector<double> &frequencies)
{
    Eigen::VectorXd acc;
    for (std::size_t i = 0; i < frequencies.size(); ++i)
    {
        const auto ts = build_transfer(delays, p, frequencies[i]);
        const Eigen::VectorXd s = singular_values(h_nlos_closed(ts, static_cast<std::ptrdiff_t>(i)));
        if (acc.size() == 0)
            acc = s;
        else
            acc += s;
    }
    return acc;
}

} // namespace

SvCurve sv_sweep(const GeometryConfig &base, const ModelParams &params, Parametrization parametrization,
                 const SvSweepOptions &options)
{
    if (options.realizations < 1)
        throw ValidationError("realizations must be >= 1");
    if (options.frequencies.empty())
        throw ValidationError("singular value sweep needs at least one evaluation frequency");

    SvCurve curve;
    curve.kind = options.kind;
    curve.parametrization = parametrization;
    curve.values = options.values;
    curve.realization_count = options.realizations;
    const auto seeds = substream_seeds(options.master_seed, options.realizations);

    for (double v : options.values)
    {
        GeometryConfig cfg = base;
        if (options.kind == SweepKind::spacing_factor)
            cfg.spacing_factor = v;
        else
        {
            cfg.box_side = v;
            cfg.min_scatterer_distance = 0.0;
        }
        cfg.validate();

        std::vector<Eigen::VectorXd> per(options.realizations);
        parallel_for(per.size(), options.threads, [&](std::size_t r) {
            const auto real = draw_realization(cfg, params, seeds[r]);
            per[r] = parametrization == Parametrization::fresh ? sigma_sum(real.delays, real.fresh, options.frequencies)
                                                               : sigma_sum(real.delays, real.original, options.frequencies);
        });
        Eigen::VectorXd mean = Eigen::VectorXd::Zero(per.front().size());
        for (const auto &s : per)
            mean += s;
        mean /= static_cast<double>(options.realizations) * static_cast<double>(options.frequencies.size());
        curve.mean_sigma.push_back(mean);
    }
    return curve;
}

// ----- K-factor over frequency -----------------------------------------------

double trapezoid(const std::vector<double> &x, const std::vector<double> &y)
{
    double s = 0.0;
    for (std::size_t i = 1; i < x.size(); ++i)
        s += 0.5 * (x[i] - x[i - 1]) * (y[i] + y[i - 1]);
    return s;
}

namespace
{

struct PowerTrace
{
    std::vector<double> los, nlos;
};

template <typename Params>
PowerTrace power_trace(const DelaySet<double> &delays, const Params &p, const FrequencyGrid &grid)
{
    PowerTrace tr;
    tr.los.resize(grid.num_points);
    tr.nlos.resize(grid.num_points);
    const auto samples = evaluate_over_grid(delays, p, grid);
    for (int i = 0; i < grid.num_points; ++i)
    {
        tr.los[i] = samples[i].h_los.squaredNorm();
        tr.nlos[i] = samples[i].h_nlos.squaredNorm();
    }
    return tr;
}

std::vector<PowerTrace> power_traces(const GeometryConfig &config, const ModelParams &params,
                                     Parametrization parametrization, AlphaPolicy policy, double target_k,
                                     const FrequencyGrid &grid, int realizations, std::uint64_t master_seed,
                                     int threads)
{
    const auto seeds = substream_seeds(master_seed, realizations);
    std::vector<PowerTrace> traces(realizations);
    parallel_for(traces.size(), threads, [&](std::size_t r) {
        auto real = draw_realization(config, params, seeds[r]);
        if (parametrization == Parametrization::original)
        {
            traces[r] = power_trace(real.delays, real.original, grid);
            return;
        }
        if (policy == AlphaPolicy::per_realization)
        {
            const auto mgf = estimate_mgf(real.delays, params.gamma);
            real.fresh.alpha = alpha_from_k(target_k, real.delays.tau_d, config.los_visible, params.beta, mgf,
                                            config.num_scatterers);
        }
        traces[r] = power_trace(real.delays, real.fresh, grid);
    });
    return traces;
}

} // namespace

KCurve empirical_k_curve(const GeometryConfig &config, const ModelParams &params, double target_k,
                         const KCurveOptions &options)
{
    options.grid.validate();
    if (options.realizations < 2)
        throw ValidationError("K curve needs at least 2 realizations");

    const auto traces = power_traces(config, params, options.parametrization, options.alpha_policy, target_k,
                                     options.grid, options.realizations, options.master_seed, options.threads);

    KCurve k;
    k.frequencies = options.grid.points();
    k.target_k = target_k;
    k.realization_count = options.realizations;
    const int nf = options.grid.num_points;
    k.mean_ratio.assign(nf, 0.0);
    k.std_ratio.assign(nf, 0.0);
    k.mean_los_power.assign(nf, 0.0);
    k.mean_nlos_power.assign(nf, 0.0);
    const double m = options.realizations;
    for (int i = 0; i < nf; ++i)
    {
        double sum = 0.0, sum_sq = 0.0;
        for (std::size_t r = 0; r < traces.size(); ++r)
        {
            const auto &t = traces[r];
            if (t.nlos[i] == 0.0)
                throw DivisionByZero("realization " + std::to_string(r) + " has zero NLOS power at " +
                                     std::to_string(k.frequencies[i]) + " Hz");
            const double ratio = t.los[i] / t.nlos[i];
            sum += ratio;
            sum_sq += ratio * ratio;
            k.mean_los_power[i] += t.los[i];
            k.mean_nlos_power[i] += t.nlos[i];
        }
        const double mean = sum / m;
        k.mean_ratio[i] = mean;
        k.std_ratio[i] = std::sqrt(std::max(0.0, (sum_sq - m * mean * mean) / (m - 1.0)));
        k.mean_los_power[i] /= m;
        k.mean_nlos_power[i] /= m;
    }
    k.band_k = trapezoid(k.frequencies, k.mean_los_power) / trapezoid(k.frequencies, k.mean_nlos_power);
    return k;
}

double numeric_k_for_original(const GeometryConfig &config, const ModelParams &params, const FrequencyGrid &grid,
                              int realizations, std::uint64_t master_seed, int threads)
{
    grid.validate();
    if (realizations < 1)
        throw ValidationError("realizations must be >= 1");
    const auto traces = power_traces(config, params, Parametrization::original, AlphaPolicy::ensemble, 1.0, grid,
                                     realizations, master_seed, threads);
    std::vector<double> los(grid.num_points, 0.0), nlos(grid.num_points, 0.0);
    for (const auto &t : traces)
        for (int i = 0; i < grid.num_points; ++i)
        {
            los[i] += t.los[i];
            nlos[i] += t.nlos[i];
        }
    const auto f = grid.points();
    const double p_nlos = trapezoid(f, nlos);
    if (p_nlos == 0.0)
        throw DivisionByZero("original model has zero NLOS power over the band");
    return trapezoid(f, los) / p_nlos;
}

// ----- Decay-rate fitting ------------------------------------------------------

namespace
{

double ls_slope(const std::vector<double> &x, const std::vector<double> &y)
{
    const double n = static_cast<double>(x.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i)
    {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < x.size(); ++i)
    {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
    }
    return sxy / sxx;
}

} // namespace

DecayFit fit_decay_rates(const std::vector<double> &delays, const Eigen::VectorXd &power,
                         const DecayFitOptions &options)
{
    const auto n = static_cast<Eigen::Index>(delays.size());
    if (n != power.size() || n < 3)
        throw InsufficientTaps("power profile needs at least 3 taps with matching delays");
    const double step = delays[1] - delays[0];
    const Eigen::Index hw = std::max<Eigen::Index>(1, static_cast<Eigen::Index>(std::lround(options.window / step)));

    Eigen::VectorXd p_db(n);
    for (Eigen::Index k = 0; k < n; ++k)
        p_db(k) = 10.0 * std::log10(std::max(power(k), std::numeric_limits<double>::min()));

    Eigen::Index start = 0;
    const double peak = p_db.maxCoeff(&start);
    const double floor_db = peak - options.dynamic_range_db;

    std::vector<Eigen::Index> onsets{start};
    for (Eigen::Index k = start + 1; k + hw < n; ++k)
    {
        if (p_db(k) < floor_db)
            continue;
        const Eigen::Index lo = std::max<Eigen::Index>(0, k - hw);
        if (p_db(k) < p_db.segment(lo, k + hw - lo + 1).maxCoeff())
            continue;
        if (p_db(k) - p_db.segment(lo, k - lo).minCoeff() >= options.prominence_db)
            onsets.push_back(k);
    }
    if (onsets.size() < 2)
        throw InsufficientClusters("fewer than two clusters detected");

    const Eigen::Index end = onsets[1];
    if (end - start < 5)
        throw InsufficientTaps("first cluster spans fewer than 5 taps");

    std::vector<double> x, y;
    bool monotone = true;
    for (Eigen::Index j = start; j < end; ++j)
    {
        if (j > start && p_db(j) > p_db(j - 1))
            monotone = false;
        const bool left = j == start || p_db(j) >= p_db(j - 1);
        const bool right = p_db(j) >= p_db(j + 1);
        if (left && right)
        {
            x.push_back(delays[j]);
            y.push_back(p_db(j));
        }
    }
    if (x.size() < 2)
    {
        if (!monotone)
            throw InsufficientTaps("first cluster has fewer than two resolved peaks");
        x.clear();
        y.clear();
        for (Eigen::Index j = start; j < end; ++j)
        {
            x.push_back(delays[j]);
            y.push_back(p_db(j));
        }
    }

    DecayFit fit;
    fit.first_cluster_points = static_cast<int>(x.size());
    fit.rho2 = ls_slope(x, y);
    for (auto k : onsets)
    {
        fit.cluster_delays.push_back(delays[k]);
        fit.cluster_powers_db.push_back(p_db(k));
    }
    fit.rho1 = ls_slope(fit.cluster_delays, fit.cluster_powers_db);
    return fit;
}

DecayFit fit_decay_rates(const Cir &cir, const DecayFitOptions &options)
{
    return fit_decay_rates(cir.delays, cir.power_profile(), options);
}

DecayEnsemble decay_rate_ensemble(const GeometryConfig &config, const ModelParams &params, const FrequencyGrid &grid,
                                  int realizations, std::uint64_t master_seed, int threads,
                                  const DecayFitOptions &options)
{
    grid.validate();
    const auto seeds = substream_seeds(master_seed, realizations);
    struct Slot
    {
        bool ok = false;
        double rho1 = 0, rho2 = 0;
    };
    std::vector<Slot> slots(realizations);
    parallel_for(slots.size(), threads, [&](std::size_t r) {
        const auto real = draw_realization(config, params, seeds[r]);
        const auto cir = cir_from_grid(evaluate_over_grid(real.delays, real.fresh, grid), ChannelPart::nlos);
        try
        {
            const auto fit = fit_decay_rates(cir, options);
            slots[r] = {true, fit.rho1, fit.rho2};
        }
        catch (const InsufficientClusters &)
        {
        }
        catch (const InsufficientTaps &)
        {
        }
    });
    DecayEnsemble e;
    for (const auto &s : slots)
    {
        if (!s.ok)
        {
            ++e.skipped;
            continue;
        }
        ++e.fitted;
        e.mean_rho1 += s.rho1;
        e.mean_rho2 += s.rho2;
    }
    if (e.fitted == 0)
        throw InsufficientClusters("no realization produced a fittable CIR");
    e.mean_rho1 /= e.fitted;
    e.mean_rho2 /= e.fitted;
    return e;
}

} // namespace pgsim
