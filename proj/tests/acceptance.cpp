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


// Acceptance checks. One PASS/FAIL line per criterion; exit status 1 if any
// criterion fails.

#include "pgsim/analysis.hpp"
#include "pgsim/harness.hpp"
#include "pgsim/parallel.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>

using namespace pgsim;
namespace fs = std::filesystem;

namespace
{

struct Outcome
{
    bool pass = false;
    std::string detail;
};

std::string fmt(const char *f, double a, double b = 0, double c = 0, double d = 0)
{
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c, d);
    return buf;
}

CMatrix<double> random_phase_b(int n, std::mt19937_64 &rng)
{
    std::uniform_real_distribution<double> u(0.0, 2 * pi);
    CMatrix<double> b = CMatrix<double>::Zero(n, n);
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i)
            if (i != j)
                b(i, j) = std::polar(1.0, u(rng));
    return b;
}

CMatrix<double> gaussian(int r, int c, std::mt19937_64 &rng)
{
    std::normal_distribution<double> g;
    CMatrix<double> m(r, c);
    for (int j = 0; j < c; ++j)
        for (int i = 0; i < r; ++i)
            m(i, j) = {g(rng), g(rng)};
    return m;
}

// 1. Closed form against the 50-bounce series on 100 random graphs with
// spectral radius spread over [0.1, 0.9].
Outcome neumann_equivalence()
{
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> u(0.1, 0.9);
    const int sizes[] = {3, 10, 30};
    double worst = 0, worst_rho = 0;
    int failing = 0;
    for (int i = 0; i < 100; ++i)
    {
        const int ns = sizes[i % 3];
        auto b = random_phase_b(ns, rng);
        b *= u(rng) / spectral_radius(b);
        TransferSet<double> ts;
        ts.t = gaussian(ns, 4, rng);
        ts.r = gaussian(4, ns, rng);
        ts.b = b;
        ts.d = CMatrix<double>::Zero(4, 4);
        const auto closed = h_nlos_closed(ts);
        const double err = (h_nlos_truncated(ts, 50) - closed).norm() / closed.norm();
        failing += err > 1e-8;
        if (err > worst)
        {
            worst = err;
            worst_rho = spectral_radius(b);
        }
    }
    return {failing == 0, fmt("%.0f of 100 instances above 1e-8; worst error %.3g at radius %.3f", failing, worst,
                              worst_rho)};
}

// 2. E|S_mm|^2 and E|S_mn|^2 by Monte Carlo against the closed forms.
Outcome derivation_oracle()
{
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> u(0.0, 2 * pi);
    double worst_z = 0;
    for (int n : {3, 5, 10})
        for (double level : {0.1, 0.3, 0.5})
        {
            const double beta = std::sqrt(level / (n - 1));
            const int draws = 10000;
            const CMatrix<double> eye = CMatrix<double>::Identity(n, n);
            double s1 = 0, q1 = 0, s2 = 0, q2 = 0;
            for (int k = 0; k < draws; ++k)
            {
                CMatrix<double> b = CMatrix<double>::Zero(n, n);
                for (int j = 0; j < n; ++j)
                    for (int i = 0; i < n; ++i)
                        if (i != j)
                            b(i, j) = std::polar(beta, u(rng));
                const CMatrix<double> s = (eye - b).inverse();
                const double a = std::norm(s(0, 0)), c = std::norm(s(0, 1));
                s1 += a;
                q1 += a * a;
                s2 += c;
                q2 += c * c;
            }
            const auto closed = s_power_closed(beta, n);
            const double m1 = s1 / draws, m2 = s2 / draws;
            const double e1 = std::sqrt((q1 / draws - m1 * m1) / (draws - 1));
            const double e2 = std::sqrt((q2 / draws - m2 * m2) / (draws - 1));
            worst_z = std::max({worst_z, std::abs(m1 - closed.diag) / e1, std::abs(m2 - closed.off) / e2});
        }
    return {worst_z <= 4.0, fmt("largest |z| over 9 cases and 2 quantities: %.2f (limit 4)", worst_z)};
}

// 3. K -> alpha -> K.
Outcome calibration_round_trip()
{
    auto cfg = parse_config(R"({"preset": "k-vs-frequency", "pilotRealizations": 100})");
    const auto ip = derive_internal_params(cfg);
    Rng rng(substream_seed(1, 0));
    const auto d = compute_delays(sample_geometry<double>(cfg.geometry, rng));
    double worst = 0;
    for (double k : {0.1, 1.0, 180.0, 1e5})
    {
        const double a = alpha_from_k(k, d.tau_d, true, ip.model.beta, ip.diagnostics.mgf, 10);
        const double back = p_los(d.tau_d, true, 4e9, 6e9) /
                            p_nlos_predict(a, ip.model.beta, ip.diagnostics.mgf, 4, 4, 10, 4e9, 6e9);
        worst = std::max(worst, std::abs(back - k) / k);
    }
    return {worst <= 1e-12, fmt("largest relative error %.3g", worst)};
}

// 4. Empirical K over [1, 10] GHz.
Outcome empirical_k(int threads)
{
    auto cfg = parse_config(R"({"preset": "k-vs-frequency"})");
    const auto ip = derive_internal_params(cfg, threads);
    KCurveOptions o;
    o.grid = cfg.effective_grid();
    o.realizations = 1000;
    o.master_seed = cfg.master_seed;
    o.threads = threads;
    const auto k = empirical_k_curve(cfg.geometry, ip.model, 180.0, o);
    double band = 0;
    int nb = 0;
    std::size_t i5 = 0;
    for (std::size_t i = 0; i < k.frequencies.size(); ++i)
    {
        if (k.frequencies[i] >= 4e9 && k.frequencies[i] <= 6e9)
        {
            band += k.mean_ratio[i];
            ++nb;
        }
        if (std::abs(k.frequencies[i] - 5e9) < std::abs(k.frequencies[i5] - 5e9))
            i5 = i;
    }
    band /= nb;
    const double dev1 = std::abs(k.mean_ratio.front() - 180.0), dev5 = std::abs(k.mean_ratio[i5] - 180.0);
    const bool pass = band >= 90 && band <= 360 && dev1 > dev5;
    return {pass, fmt("band mean %.1f (need [90, 360]); |ratio-K| at 1 GHz %.1f vs %.1f near 5 GHz", band, dev1, dev5)};
}

ModelParams sweep_params(int threads)
{
    auto cfg = parse_config(R"({"preset": "sv-vs-kappa"})");
    return derive_internal_params(cfg, threads).model;
}

// 5. Degrees of freedom against the antenna spacing factor.
Outcome dof_vs_kappa(int threads)
{
    const auto params = sweep_params(threads);
    SvSweepOptions o;
    o.kind = SweepKind::spacing_factor;
    o.values = {0.01, 1.0};
    o.realizations = 1000;
    o.frequencies = FrequencyGrid{4e9, 6e9, 64}.points();
    o.master_seed = 1;
    o.threads = threads;
    const GeometryConfig base;
    const auto fresh = sv_sweep(base, params, Parametrization::fresh, o);
    const auto orig = sv_sweep(base, params, Parametrization::original, o);
    auto ratio = [](const SvCurve &c, int i) { return c.mean_sigma[i](3) / c.mean_sigma[i](0); };
    const double n0 = ratio(fresh, 0), n1 = ratio(fresh, 1), o0 = ratio(orig, 0), o1 = ratio(orig, 1);
    const double change = std::max(o0, o1) / std::min(o0, o1);
    const bool pass = n0 * 5 <= n1 && change < 2 && o0 >= 2 * n0;
    return {pass, fmt("new s4/s1 %.3g (k=0.01) vs %.3g (k=1); original %.3g vs %.3g", n0, n1, o0, o1)};
}

// 6. Keyhole behaviour against the cube side.
Outcome keyhole_vs_box(int threads)
{
    const auto params = sweep_params(threads);
    SvSweepOptions o;
    o.kind = SweepKind::box_side;
    o.values = {0.05, 5.0};
    o.realizations = 1000;
    o.frequencies = FrequencyGrid{4e9, 6e9, 64}.points();
    o.master_seed = 1;
    o.threads = threads;
    const auto c = sv_sweep(GeometryConfig{}, params, Parametrization::fresh, o);
    const double small = c.mean_sigma[0](1) / c.mean_sigma[0](0), large = c.mean_sigma[1](1) / c.mean_sigma[1](0);
    return {small <= 0.1 && large >= 0.3, fmt("s2/s1 %.3g at L=0.05 m (need <= 0.1), %.3g at L=5 m (need >= 0.3)",
                                               small, large)};
}

// 7. Fitted decay rates.
Outcome decay_rates(int threads)
{
    // fitter sanity on an exact profile
    const double step = 0.5e-9;
    const int n = 400;
    std::vector<double> delays(n);
    Eigen::VectorXd power = Eigen::VectorXd::Zero(n);
    for (int k = 0; k < n; ++k)
        delays[k] = k * step;
    for (double t0 : {0.0, 15e-9, 30e-9, 45e-9})
        for (int k = 0; k < n; ++k)
            if (delays[k] >= t0 - 1e-15)
                power(k) += std::pow(10.0, (-1e9 * t0 - 2e9 * (delays[k] - t0)) / 10.0);
    const auto syn = fit_decay_rates(delays, power);
    const bool syn_ok = std::abs(syn.rho1 / -1e9 - 1) <= 0.01 && std::abs(syn.rho2 / -2e9 - 1) <= 0.01;

    auto cfg = parse_config(R"({"preset": "realization-compare"})");
    const auto ip = derive_internal_params(cfg, threads);
    const auto e = decay_rate_ensemble(cfg.geometry, ip.model, cfg.effective_grid(), 200, cfg.master_seed, threads,
                                       cfg.fit);
    const double r1 = e.mean_rho1 * 1e-9, r2 = e.mean_rho2 * 1e-9;
    const bool pass = syn_ok && std::abs(r2 / -2.0 - 1) <= 0.3 && std::abs(r1 / -1.0 - 1) <= 0.3;
    return {pass, fmt("ensemble rho2 %.3f dB/ns, rho1 %.3f dB/ns (%.0f fitted); synthetic ok %.0f", r2, r1, e.fitted,
                      syn_ok)};
}

// 8. Delay spread and the frequency where the validity margin reaches 8.
Outcome validity(int threads)
{
    auto cfg = parse_config(R"({"pilotRealizations": 1000})");
    const auto ip = derive_internal_params(cfg, threads);
    const auto &s = ip.diagnostics.stats;
    const double max_std = s.max_std();
    const double crossing = validity_threshold / s.min_std(); // margin(f) = min std * f
    const double crossing_max = validity_threshold / max_std;
    const bool pass = max_std >= 2e-9 && max_std <= 6e-9 && crossing >= 1.333e9 && crossing <= 3.0e9;
    return {pass, fmt("max std %.3f ns; margin crosses 8 at %.3f GHz (%.3f GHz using the max std)", max_std * 1e9,
                      crossing * 1e-9, crossing_max * 1e-9)};
}

std::map<std::string, std::string> read_outputs(const fs::path &dir)
{
    std::map<std::string, std::string> out;
    for (const auto &e : fs::directory_iterator(dir))
    {
        if (e.path().filename() == "run.log")
            continue;
        std::ifstream in(e.path(), std::ios::binary);
        std::stringstream ss;
        ss << in.rdbuf();
        out[e.path().filename().string()] = ss.str();
    }
    return out;
}

// 9. Every preset twice, with different PGSIM_THREADS, into the same path.
Outcome determinism()
{
    const auto root = fs::temp_directory_path() / "pgsim_acceptance_det";
    int differing = 0, compared = 0;
    for (const auto &name : preset_names())
    {
        auto cfg = parse_config(R"({"realizations": 24, "pilotRealizations": 40, "verify": {"draws": 2000}})");
        cfg.preset = parse_preset(name);
        cfg.output_dir = root / "out";
        std::map<std::string, std::string> runs[2];
        const char *threads[] = {"1", "4"};
        for (int r = 0; r < 2; ++r)
        {
            fs::remove_all(cfg.output_dir);
            setenv("PGSIM_THREADS", threads[r], 1);
            run_experiment(cfg, threads_from_environment());
            runs[r] = read_outputs(cfg.output_dir);
        }
        unsetenv("PGSIM_THREADS");
        for (const auto &[file, bytes] : runs[0])
        {
            ++compared;
            const auto it = runs[1].find(file);
            differing += it == runs[1].end() || it->second != bytes;
        }
        differing += runs[0].size() != runs[1].size();
    }
    fs::remove_all(root);
    return {differing == 0 && compared > 0, fmt("%.0f of %.0f files differ across 5 presets", differing, compared)};
}

} // namespace

int main()
{
    const int threads = threads_from_environment();
    const std::pair<const char *, std::function<Outcome()>> criteria[] = {
        {"neumann equivalence", neumann_equivalence},
        {"derivation oracle", derivation_oracle},
        {"calibration round-trip", calibration_round_trip},
        {"empirical K", [&] { return empirical_k(threads); }},
        {"DoF loss vs kappa", [&] { return dof_vs_kappa(threads); }},
        {"keyhole vs L", [&] { return keyhole_vs_box(threads); }},
        {"decay-rate recovery", [&] { return decay_rates(threads); }},
        {"validity margin", [&] { return validity(threads); }},
        {"determinism", determinism},
    };
    int failed = 0, index = 0;
    for (const auto &[name, fn] : criteria)
    {
        ++index;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try
        {
            o = fn();
        }
        catch (const std::exception &e)
        {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        failed += !o.pass;
        std::printf("criterion %d %-24s %s  %s [%.1f s]\n", index, name, o.pass ? "PASS" : "FAIL", o.detail.c_str(),
                    secs);
        std::fflush(stdout);
    }
    std::printf("%d of %d criteria passed\n", index - failed, index);
    return failed == 0 ? 0 : 1;
}
