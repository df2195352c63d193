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
#include "pgsim/parallel.hpp"
#include "pgsim/random.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <limits>
#include <sstream>

namespace pgsim
{

using json = nlohmann::json;

namespace
{

constexpr double ns = 1e-9;

const std::vector<std::pair<Preset, std::string>> &preset_table()
{
    static const std::vector<std::pair<Preset, std::string>> t{{Preset::realization_compare, "realization-compare"},
                                                               {Preset::sv_vs_kappa, "sv-vs-kappa"},
                                                               {Preset::sv_vs_box, "sv-vs-box"},
                                                               {Preset::k_vs_frequency, "k-vs-frequency"},
                                                               {Preset::verify_derivation, "verify-derivation"}};
    return t;
}

std::string joined(const std::vector<std::string> &v)
{
    std::string s;
    for (const auto &x : v)
        s += (s.empty() ? "" : ", ") + x;
    return s;
}

std::vector<double> logspace(double lo, double hi, int n)
{
    std::vector<double> v(n);
    for (int i = 0; i < n; ++i)
        v[i] = lo * std::pow(hi / lo, static_cast<double>(i) / (n - 1));
    v.back() = hi;
    return v;
}

std::uint64_t tagged_seed(std::uint64_t master, std::uint64_t tag)
{
    return splitmix64_mix(master ^ (tag * 0xD1B54A32D192ED03ULL));
}

} // namespace

std::string to_string(Preset p)
{
    for (const auto &[k, name] : preset_table())
        if (k == p)
            return name;
    return "?";
}

std::string to_string(ParamSelection p)
{
    switch (p)
    {
    case ParamSelection::original: return "original";
    case ParamSelection::fresh: return "new";
    default: return "both";
    }
}

const std::vector<std::string> &preset_names()
{
    static const std::vector<std::string> names = [] {
        std::vector<std::string> n;
        for (const auto &e : preset_table())
            n.push_back(e.second);
        return n;
    }();
    return names;
}

Preset parse_preset(const std::string &name)
{
    for (const auto &[k, n] : preset_table())
        if (n == name)
            return k;
    throw ValidationError("unknown preset '" + name + "'; valid presets: " + joined(preset_names()));
}

FrequencyGrid default_grid(Preset p)
{
    switch (p)
    {
    case Preset::realization_compare: return {4e9, 6e9, 1024};
    case Preset::k_vs_frequency: return {1e9, 10e9, 256};
    default: return {4e9, 6e9, 64};
    }
}

ParamSelection default_parametrization(Preset p)
{
    return p == Preset::k_vs_frequency ? ParamSelection::fresh : ParamSelection::both;
}

FrequencyGrid ExperimentConfig::effective_grid() const
{
    return grid ? *grid : default_grid(preset);
}

ParamSelection ExperimentConfig::effective_parametrization() const
{
    return parametrization ? *parametrization : default_parametrization(preset);
}

void ExperimentConfig::validate() const
{
    geometry.validate();
    target.validate();
    effective_grid().validate();
    if (realizations < 1)
        throw ValidationError("realizations must be >= 1");
    if (preset == Preset::k_vs_frequency && realizations < 2)
        throw ValidationError("k-vs-frequency needs realizations >= 2");
    if (pilot_realizations < 1)
        throw ValidationError("pilotRealizations must be >= 1");
    if (geometry.num_scatterers < 2)
        throw ValidationError("numScatterers must be >= 2 for calibration");
    for (double v : sweep.kappa_values)
        if (!(v >= 0.0))
            throw ValidationError("sweep.kappaValues must be >= 0");
    for (double v : sweep.box_values)
        if (!(v >= 0.0))
            throw ValidationError("sweep.boxValues must be >= 0");
    if (sweep.frequency_mode == FrequencyMode::single && !(sweep.single_frequency > 0.0))
        throw ValidationError("sweep.frequency must be > 0");
    if (!(fit.prominence_db > 0.0) || !(fit.window > 0.0) || !(fit.dynamic_range_db > 0.0))
        throw ValidationError("fit settings must be > 0");
    if (verify.num_scatterers == 1 || verify.num_scatterers < 0)
        throw ValidationError("verify.numScatterers must be 0 or >= 2");
    if (!(verify.beta >= 0.0))
        throw ValidationError("verify.beta must be >= 0");
    if (verify.draws < 2)
        throw ValidationError("verify.draws must be >= 2");
    if (!(verify.max_z > 0.0) || !(verify.nlos_rel_tol >= 0.0))
        throw ValidationError("verify tolerances must be positive");
}

// ----- Config parsing -----------------------------------------------------------

namespace
{

class Reader
{
  public:
    Reader(const json &obj, std::string path) : obj_(obj), path_(std::move(path))
    {
        if (!obj_.is_object())
            throw ParseError(where() + " must be a JSON object");
    }

    template <typename T>
    void get(const char *key, T &out)
    {
        seen_.push_back(key);
        const auto it = obj_.find(key);
        if (it == obj_.end())
            return;
        if constexpr (std::is_same_v<T, bool>)
        {
            if (!it->is_boolean())
                throw ParseError(field(key) + " must be a boolean");
        }
        else if constexpr (std::is_same_v<T, std::string>)
        {
            if (!it->is_string())
                throw ParseError(field(key) + " must be a string");
        }
        else if constexpr (std::is_integral_v<T>)
        {
            if (!it->is_number_integer())
                throw ParseError(field(key) + " must be an integer");
            if (std::is_unsigned_v<T> && it->is_number_integer() && !it->is_number_unsigned())
                throw ParseError(field(key) + " must be non-negative");
            if (!std::is_unsigned_v<T>)
            {
                const auto v = it->get<std::int64_t>();
                if (v < std::numeric_limits<T>::min() || v > std::numeric_limits<T>::max())
                    throw ParseError(field(key) + " is out of range");
            }
        }
        else if constexpr (std::is_floating_point_v<T>)
        {
            if (!it->is_number())
                throw ParseError(field(key) + " must be a number");
        }
        else
        {
            if (!it->is_array())
                throw ParseError(field(key) + " must be an array of numbers");
            for (const auto &x : *it)
                if (!x.is_number())
                    throw ParseError(field(key) + " must be an array of numbers");
        }
        out = it->get<T>();
    }

    bool has(const char *key) const { return obj_.contains(key); }

    Reader child(const char *key)
    {
        seen_.push_back(key);
        return Reader(obj_.at(key), field(key));
    }

    void finish() const
    {
        for (const auto &[k, v] : obj_.items())
            if (std::find(seen_.begin(), seen_.end(), k) == seen_.end())
                throw ParseError("unknown field " + field(k.c_str()));
    }

  private:
    std::string where() const { return path_.empty() ? "top level" : "'" + path_ + "'"; }
    std::string field(const char *key) const { return "'" + (path_.empty() ? "" : path_ + ".") + key + "'"; }

    const json &obj_;
    std::string path_;
    std::vector<std::string> seen_;
};

std::string line_of(const std::string &text, std::size_t byte)
{
    const auto end = std::min(byte, text.size());
    const auto line = 1 + std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(end), '\n');
    return std::to_string(line);
}

ParamSelection parse_selection(const std::string &s)
{
    if (s == "original")
        return ParamSelection::original;
    if (s == "new")
        return ParamSelection::fresh;
    if (s == "both")
        return ParamSelection::both;
    throw ValidationError("parametrization must be one of original, new, both (got '" + s + "')");
}

} // namespace

ExperimentConfig parse_config(const std::string &text, const std::string &origin)
{
    json doc;
    try
    {
        doc = json::parse(text);
    }
    catch (const json::parse_error &e)
    {
        throw ParseError(origin + ":" + line_of(text, e.byte) + ": malformed JSON (" + e.what() + ")");
    }

    ExperimentConfig c;
    Reader top(doc, "");

    std::string preset = to_string(c.preset);
    top.get("preset", preset);
    c.preset = parse_preset(preset);
    top.get("realizations", c.realizations);
    top.get("pilotRealizations", c.pilot_realizations);
    top.get("masterSeed", c.master_seed);
    if (top.has("parametrization"))
    {
        std::string p;
        top.get("parametrization", p);
        c.parametrization = parse_selection(p);
    }
    std::string out = c.output_dir.string();
    top.get("outputDir", out);
    c.output_dir = out;
    std::string conv = "amplitude";
    top.get("decayConvention", conv);
    if (conv == "amplitude")
        c.decay_convention = DecayConvention::amplitude;
    else if (conv == "powerExponent")
        c.decay_convention = DecayConvention::power_exponent;
    else
        throw ValidationError("decayConvention must be amplitude or powerExponent (got '" + conv + "')");

    if (top.has("geometry"))
    {
        auto r = top.child("geometry");
        auto &g = c.geometry;
        r.get("numTx", g.num_tx);
        r.get("numRx", g.num_rx);
        r.get("numScatterers", g.num_scatterers);
        r.get("txRxDistance", g.tx_rx_distance);
        r.get("spacingFactor", g.spacing_factor);
        r.get("carrierFrequency", g.carrier_frequency);
        r.get("boxSide", g.box_side);
        r.get("minScattererDistance", g.min_scatterer_distance);
        r.get("losVisible", g.los_visible);
        r.get("speedOfLight", g.speed_of_light);
        r.get("maxAttempts", g.max_attempts);
        r.finish();
    }
    if (top.has("svTarget"))
    {
        auto r = top.child("svTarget");
        double rho1 = c.target.rho1 * ns, rho2 = c.target.rho2 * ns;
        r.get("rho1", rho1);
        r.get("rho2", rho2);
        c.target.rho1 = rho1 / ns;
        c.target.rho2 = rho2 / ns;
        r.get("kFactor", c.target.k_factor);
        r.get("fMin", c.target.f_min);
        r.get("fMax", c.target.f_max);
        r.finish();
    }
    if (top.has("grid"))
    {
        auto r = top.child("grid");
        FrequencyGrid g = default_grid(c.preset);
        r.get("fMin", g.f_min);
        r.get("fMax", g.f_max);
        r.get("numPoints", g.num_points);
        r.finish();
        c.grid = g;
    }
    if (top.has("sweep"))
    {
        auto r = top.child("sweep");
        r.get("kappaValues", c.sweep.kappa_values);
        r.get("boxValues", c.sweep.box_values);
        std::string mode = "band";
        r.get("frequencyMode", mode);
        if (mode == "band")
            c.sweep.frequency_mode = FrequencyMode::band;
        else if (mode == "single")
            c.sweep.frequency_mode = FrequencyMode::single;
        else
            throw ValidationError("sweep.frequencyMode must be band or single (got '" + mode + "')");
        r.get("frequency", c.sweep.single_frequency);
        r.finish();
    }
    if (top.has("fit"))
    {
        auto r = top.child("fit");
        double window_ns = c.fit.window / ns;
        r.get("prominenceDb", c.fit.prominence_db);
        r.get("windowNs", window_ns);
        r.get("dynamicRangeDb", c.fit.dynamic_range_db);
        c.fit.window = window_ns * ns;
        r.finish();
    }
    if (top.has("verify"))
    {
        auto r = top.child("verify");
        r.get("numScatterers", c.verify.num_scatterers);
        r.get("beta", c.verify.beta);
        r.get("draws", c.verify.draws);
        r.get("maxZ", c.verify.max_z);
        r.get("nlosRelTol", c.verify.nlos_rel_tol);
        r.finish();
    }
    top.finish();
    c.validate();
    return c;
}

ExperimentConfig load_config(const std::filesystem::path &path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw ValidationError("cannot open config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), path.string());
}

namespace
{

json config_json(const ExperimentConfig &c)
{
    const auto &g = c.geometry;
    const auto grid = c.effective_grid();
    return json{
        {"preset", to_string(c.preset)},
        {"realizations", c.realizations},
        {"pilotRealizations", c.pilot_realizations},
        {"masterSeed", c.master_seed},
        {"parametrization", to_string(c.effective_parametrization())},
        {"outputDir", c.output_dir.generic_string()},
        {"decayConvention", c.decay_convention == DecayConvention::amplitude ? "amplitude" : "powerExponent"},
        {"geometry",
         {{"numTx", g.num_tx},
          {"numRx", g.num_rx},
          {"numScatterers", g.num_scatterers},
          {"txRxDistance", g.tx_rx_distance},
          {"spacingFactor", g.spacing_factor},
          {"carrierFrequency", g.carrier_frequency},
          {"boxSide", g.box_side},
          {"minScattererDistance", g.min_scatterer_distance},
          {"losVisible", g.los_visible},
          {"speedOfLight", g.speed_of_light},
          {"maxAttempts", g.max_attempts}}},
        {"svTarget",
         {{"rho1", c.target.rho1 * ns},
          {"rho2", c.target.rho2 * ns},
          {"kFactor", c.target.k_factor},
          {"fMin", c.target.f_min},
          {"fMax", c.target.f_max}}},
        {"grid", {{"fMin", grid.f_min}, {"fMax", grid.f_max}, {"numPoints", grid.num_points}}},
        {"sweep",
         {{"kappaValues", c.sweep.kappa_values},
          {"boxValues", c.sweep.box_values},
          {"frequencyMode", c.sweep.frequency_mode == FrequencyMode::band ? "band" : "single"},
          {"frequency", c.sweep.single_frequency}}},
        {"fit",
         {{"prominenceDb", c.fit.prominence_db},
          {"windowNs", c.fit.window / ns},
          {"dynamicRangeDb", c.fit.dynamic_range_db}}},
        {"verify",
         {{"numScatterers", c.verify.num_scatterers},
          {"beta", c.verify.beta},
          {"draws", c.verify.draws},
          {"maxZ", c.verify.max_z},
          {"nlosRelTol", c.verify.nlos_rel_tol}}}};
}

} // namespace

std::string config_echo(const ExperimentConfig &config)
{
    return config_json(config).dump(2);
}

// ----- Calibration pipeline ------------------------------------------------------

std::uint64_t pilot_seed(std::uint64_t master_seed)
{
    return tagged_seed(master_seed, 1);
}

namespace
{

std::vector<DelaySet<double>> pilot_delays(const ExperimentConfig &config, int threads)
{
    const auto seeds = substream_seeds(pilot_seed(config.master_seed), config.pilot_realizations);
    std::vector<DelaySet<double>> out(seeds.size());
    parallel_for(out.size(), threads, [&](std::size_t i) {
        Rng rng(seeds[i]);
        out[i] = compute_delays(sample_geometry<double>(config.geometry, rng), config.geometry.speed_of_light);
    });
    return out;
}

} // namespace

InternalParams derive_internal_params(const ExperimentConfig &config, int threads)
{
    config.validate();
    if (!config.geometry.los_visible)
        throw NoLosPath("K-factor calibration needs a visible LOS path; set geometry.losVisible to true");

    const auto pilot = pilot_delays(config, threads);
    const std::span<const DelaySet<double>> span(pilot);
    const int n = config.geometry.num_scatterers;

    InternalParams ip;
    auto &d = ip.diagnostics;
    auto &m = ip.model;
    d.stats = delay_stats(span);
    m.gamma = gamma_from_rho2(config.target.rho2, config.decay_convention);
    try
    {
        m.beta = beta_from_rho1(config.target.rho1, d.stats.mean_tau_b, n, config.decay_convention);
    }
    catch (const InfeasibleBeta &e)
    {
        throw InfeasibleBeta(std::string(e.what()) + "; use a negative svTarget.rho1 (dB/ns)");
    }
    m.g = original_gain(m.beta, n);
    d.mgf = estimate_mgf(span, m.gamma);
    d.bounce_gain = (n - 1) * m.beta * m.beta;

    d.k_target = config.target.k_factor;
    if (config.effective_parametrization() == ParamSelection::both)
    {
        const FrequencyGrid band{config.target.f_min, config.target.f_max, 64};
        d.k_target = numeric_k_for_original(config.geometry, m, band, config.pilot_realizations,
                                            pilot_seed(config.master_seed), threads);
        d.k_from_original = true;
        if (!(d.k_target > 0.0))
            throw NoLosPath("original parametrization yields zero LOS power; cannot set a K target");
    }
    m.alpha = alpha_from_k(d.k_target, pilot.front().tau_d, true, m.beta, d.mgf, n);

    d.validity_margin = validity_margin(d.stats, config.target.f_min);
    d.grid_validity_margin = validity_margin(d.stats, config.effective_grid().f_min);
    char buf[200];
    if (d.validity_margin <= validity_threshold)
    {
        std::snprintf(buf, sizeof buf, "validity margin %.3g <= %.0f at the target band's lower edge %.4g Hz",
                      d.validity_margin, validity_threshold, config.target.f_min);
        d.warnings.push_back(buf);
    }
    if (d.grid_validity_margin <= validity_threshold)
    {
        std::snprintf(buf, sizeof buf,
                      "validity margin %.3g <= %.0f at the grid's lower edge %.4g Hz; calibration is unreliable "
                      "below %.4g Hz",
                      d.grid_validity_margin, validity_threshold, config.effective_grid().f_min,
                      validity_threshold / d.stats.min_std());
        d.warnings.push_back(buf);
    }
    return ip;
}

SPowerCheck monte_carlo_s_power(double beta, int num_scatterers, int draws, std::uint64_t seed)
{
    if (num_scatterers < 2)
        throw ValidationError("numScatterers must be >= 2");
    if (draws < 2)
        throw ValidationError("draws must be >= 2");
    Rng rng(seed);
    const Eigen::Index n = num_scatterers;
    const CMatrix<double> eye = CMatrix<double>::Identity(n, n);
    CMatrix<double> b(n, n);
    double s1 = 0, s1q = 0, s2 = 0, s2q = 0;
    for (int k = 0; k < draws; ++k)
    {
        for (Eigen::Index j = 0; j < n; ++j)
            for (Eigen::Index i = 0; i < n; ++i)
                b(i, j) = i == j ? Complex<double>(0) : std::polar(beta, uniform_phase<double>(rng));
        const CMatrix<double> s = (eye - b).partialPivLu().solve(eye);
        const double p1 = std::norm(s(0, 0)), p2 = std::norm(s(0, 1));
        if (!std::isfinite(p1) || !std::isfinite(p2))
            throw SingularSolve("I - B is singular in Monte-Carlo draw " + std::to_string(k));
        s1 += p1;
        s1q += p1 * p1;
        s2 += p2;
        s2q += p2 * p2;
    }
    auto finish = [draws](double s, double q) {
        MonteCarloEstimate e;
        e.draws = draws;
        e.mean = s / draws;
        const double var = std::max(0.0, (q - draws * e.mean * e.mean) / (draws - 1));
        e.std_error = std::sqrt(var / draws);
        return e;
    };
    return {finish(s1, s1q), finish(s2, s2q)};
}

// ----- Output ----------------------------------------------------------------------

namespace
{

std::string num(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void write_file(const std::filesystem::path &path, const std::string &content)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw Error("cannot write " + path.string());
    out << content;
    if (!out)
        throw Error("write failed for " + path.string());
}

// '#' comments, column header, rows. The row count is declared up front.
std::string csv(const std::string &what, const std::string &header, const std::vector<std::string> &rows)
{
    std::string s = "# " + what + "\n# rows: " + std::to_string(rows.size()) + "\n" + header + "\n";
    for (const auto &r : rows)
        s += r + "\n";
    return s;
}

std::string utc_now()
{
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void append_log(const std::filesystem::path &dir, const std::string &line)
{
    std::ofstream out(dir / "run.log", std::ios::app);
    out << utc_now() << " " << line << "\n";
}

std::vector<Parametrization> selected(ParamSelection s)
{
    switch (s)
    {
    case ParamSelection::original: return {Parametrization::original};
    case ParamSelection::fresh: return {Parametrization::fresh};
    default: return {Parametrization::fresh, Parametrization::original};
    }
}

struct Context
{
    const ExperimentConfig &config;
    const InternalParams &params;
    int threads;
    json summary = json::object();
    std::vector<std::string> warnings;
    std::vector<std::filesystem::path> files;
    std::vector<std::uint64_t> seeds;

    void emit(const std::string &name, const std::string &content)
    {
        const auto p = config.output_dir / name;
        write_file(p, content);
        files.push_back(p);
    }
};

void run_realization_compare(Context &ctx)
{
    const auto &cfg = ctx.config;
    const auto grid = cfg.effective_grid();
    ctx.seeds = {substream_seed(cfg.master_seed, 0)};
    const auto real = draw_realization(cfg.geometry, ctx.params.model, ctx.seeds[0]);
    for (auto p : selected(cfg.effective_parametrization()))
    {
        const auto samples = p == Parametrization::fresh ? evaluate_over_grid(real.delays, real.fresh, grid)
                                                         : evaluate_over_grid(real.delays, real.original, grid);
        const auto cir = cir_from_grid(samples, ChannelPart::nlos);
        std::vector<std::string> rows;
        rows.reserve(cir.taps.size());
        for (Eigen::Index pair = 0; pair < cir.taps.cols(); ++pair)
            for (Eigen::Index k = 0; k < cir.taps.rows(); ++k)
            {
                const auto h = cir.taps(k, pair);
                const double pw = std::max(std::norm(h), std::numeric_limits<double>::min());
                rows.push_back(std::to_string(pair) + "," + num(cir.delays[k]) + "," + num(h.real()) + "," +
                               num(h.imag()) + "," + num(10.0 * std::log10(pw)));
            }
        const auto name = "cir_" + to_string(p) + ".csv";
        ctx.emit(name, csv("NLOS channel impulse response (" + to_string(p) +
                               " parametrization), Hann window, pair = rx * numTx + tx",
                           "pair,delay_s,re,im,power_db", rows));

        json s = {{"file", name}, {"taps", cir.taps.rows()}, {"pairs", cir.taps.cols()}};
        try
        {
            const auto fit = fit_decay_rates(cir, cfg.fit);
            s["rho1DbPerNs"] = fit.rho1 * ns;
            s["rho2DbPerNs"] = fit.rho2 * ns;
            s["clusters"] = fit.cluster_delays.size();
        }
        catch (const NumericalError &e)
        {
            s["fit"] = e.what();
        }
        ctx.summary[to_string(p)] = s;
    }
}

void run_sv_sweep(Context &ctx, SweepKind kind)
{
    const auto &cfg = ctx.config;
    SvSweepOptions opt;
    opt.kind = kind;
    if (kind == SweepKind::spacing_factor)
        opt.values = cfg.sweep.kappa_values.empty() ? logspace(0.01, 2.0, 16) : cfg.sweep.kappa_values;
    else
        opt.values = cfg.sweep.box_values.empty() ? logspace(0.05, 20.0, 16) : cfg.sweep.box_values;
    opt.realizations = cfg.realizations;
    opt.frequencies = cfg.sweep.frequency_mode == FrequencyMode::band ? cfg.effective_grid().points()
                                                                     : std::vector<double>{cfg.sweep.single_frequency};
    opt.master_seed = cfg.master_seed;
    opt.threads = ctx.threads;
    ctx.seeds = substream_seeds(cfg.master_seed, cfg.realizations);

    for (auto p : selected(cfg.effective_parametrization()))
    {
        const auto curve = sv_sweep(cfg.geometry, ctx.params.model, p, opt);
        std::vector<std::string> rows;
        json ratios = json::array();
        for (std::size_t i = 0; i < curve.values.size(); ++i)
        {
            const auto &s = curve.mean_sigma[i];
            for (Eigen::Index k = 0; k < s.size(); ++k)
                rows.push_back(num(curve.values[i]) + "," + std::to_string(k + 1) + "," + num(s(k)));
            ratios.push_back({{"value", curve.values[i]}, {"sigmaMinOverSigma1", s(s.size() - 1) / s(0)}});
        }
        const auto name = std::string(kind == SweepKind::spacing_factor ? "sv_kappa_" : "sv_box_") + to_string(p) + ".csv";
        ctx.emit(name, csv("mean singular values of H_NLOS vs " + to_string(kind) + " (" + to_string(p) +
                               " parametrization), " + std::to_string(curve.realization_count) + " realizations",
                           "sweep_value,sigma_index,mean_sigma", rows));
        ctx.summary[to_string(p)] = {{"file", name}, {"ratios", ratios}};
    }
}

void run_k_curve(Context &ctx)
{
    const auto &cfg = ctx.config;
    KCurveOptions opt;
    opt.grid = cfg.effective_grid();
    opt.realizations = cfg.realizations;
    opt.master_seed = cfg.master_seed;
    opt.threads = ctx.threads;
    ctx.seeds = substream_seeds(cfg.master_seed, cfg.realizations);
    const double target = ctx.params.diagnostics.k_target;

    for (auto p : selected(cfg.effective_parametrization()))
    {
        opt.parametrization = p;
        const auto k = empirical_k_curve(cfg.geometry, ctx.params.model, target, opt);
        std::vector<std::string> rows;
        double band_sum = 0;
        int band_n = 0;
        for (std::size_t i = 0; i < k.frequencies.size(); ++i)
        {
            rows.push_back(num(k.frequencies[i]) + "," + num(k.mean_ratio[i]) + "," + num(k.std_ratio[i]) + "," +
                           num(k.target_k));
            if (k.frequencies[i] >= cfg.target.f_min && k.frequencies[i] <= cfg.target.f_max)
            {
                band_sum += k.mean_ratio[i];
                ++band_n;
            }
        }
        const auto name = "k_curve_" + to_string(p) + ".csv";
        ctx.emit(name, csv("||H_LOS||^2 / ||H_NLOS||^2 over frequency (" + to_string(p) + " parametrization), " +
                               std::to_string(k.realization_count) + " realizations",
                           "frequency_hz,mean_ratio,std_ratio,target_k", rows));
        json s = {{"file", name}, {"bandIntegratedK", k.band_k}, {"targetK", k.target_k}};
        if (band_n > 0)
            s["meanRatioInTargetBand"] = band_sum / band_n;
        ctx.summary[to_string(p)] = s;
    }
}

// Returns false when any entry fails.
bool run_verification(Context &ctx)
{
    const auto &cfg = ctx.config;
    const auto &ip = ctx.params;
    const auto grid = cfg.effective_grid();
    const int ns_geom = cfg.geometry.num_scatterers;
    const int ns_v = cfg.verify.num_scatterers > 0 ? cfg.verify.num_scatterers : ns_geom;
    double beta_v = cfg.verify.beta;
    if (beta_v == 0.0)
        beta_v = ns_v == ns_geom ? ip.model.beta
                                 : beta_from_rho1(cfg.target.rho1, ip.diagnostics.stats.mean_tau_b, ns_v,
                                                  cfg.decay_convention);
    require_convergent(beta_v, ns_v);

    std::vector<VerificationEntry> entries;
    const auto closed = s_power_closed(beta_v, ns_v);
    const auto mc = monte_carlo_s_power(beta_v, ns_v, cfg.verify.draws, tagged_seed(cfg.master_seed, 2));
    auto z_entry = [&](const std::string &q, double c, const MonteCarloEstimate &e) {
        entries.push_back({q, c, e.mean, e.std_error, e.draws, std::abs(e.mean - c) <= cfg.verify.max_z * e.std_error});
    };
    z_entry("pS1", closed.diag, mc.diag);
    z_entry("pS2", closed.off, mc.off);

    // Full chain of the new parametrization over the grid band.
    const auto &m = ip.model;
    const int nr = cfg.geometry.num_rx, nt = cfg.geometry.num_tx;
    const double band = band_factor(grid.f_min, grid.f_max);
    ctx.seeds = substream_seeds(cfg.master_seed, cfg.realizations);
    std::vector<double> nlos(cfg.realizations), los(cfg.realizations);
    parallel_for(nlos.size(), ctx.threads, [&](std::size_t r) {
        const auto real = draw_realization(cfg.geometry, m, ctx.seeds[r]);
        const auto samples = evaluate_over_grid(real.delays, real.fresh, grid);
        std::vector<double> pn(samples.size()), pl(samples.size());
        for (std::size_t i = 0; i < samples.size(); ++i)
        {
            pn[i] = samples[i].h_nlos.squaredNorm();
            pl[i] = samples[i].h_los.squaredNorm();
        }
        const auto f = grid.points();
        nlos[r] = trapezoid(f, pn);
        los[r] = trapezoid(f, pl);
    });
    const int mm = cfg.realizations;
    auto stats = [mm](const std::vector<double> &v) {
        MonteCarloEstimate e;
        e.draws = mm;
        double s = 0, q = 0;
        for (double x : v)
        {
            s += x;
            q += x * x;
        }
        e.mean = s / mm;
        if (mm > 1)
            e.std_error = std::sqrt(std::max(0.0, (q - mm * e.mean * e.mean) / (mm - 1)) / mm);
        return e;
    };
    const auto e_nlos = stats(nlos);
    const double p_nlos_closed = p_nlos_predict(m.alpha, m.beta, ip.diagnostics.mgf, nr, nt, ns_geom, grid.f_min, grid.f_max);
    // The closed form idealizes delay phases as independent; allow a relative
    // model tolerance on top of the statistical one.
    auto chain_pass = [&](double mc_mean, double se, double c) {
        return std::abs(mc_mean - c) <= cfg.verify.max_z * se + cfg.verify.nlos_rel_tol * std::abs(c);
    };
    const double q_scale = m.alpha * m.alpha * nr * nt * ns_geom * band;
    const double q_closed = q_factor(m.beta, ip.diagnostics.mgf, ns_geom);
    entries.push_back({"Q", q_closed, e_nlos.mean / q_scale, e_nlos.std_error / q_scale, mm,
                       chain_pass(e_nlos.mean / q_scale, e_nlos.std_error / q_scale, q_closed)});
    entries.push_back({"P_NLOS", p_nlos_closed, e_nlos.mean, e_nlos.std_error, mm,
                       chain_pass(e_nlos.mean, e_nlos.std_error, p_nlos_closed)});
    const auto e_los = stats(los);
    const double p_los_closed = p_los(draw_realization(cfg.geometry, m, ctx.seeds[0]).delays.tau_d, true, grid.f_min,
                                      grid.f_max);
    // Deterministic; only the trapezoidal quadrature error remains.
    entries.push_back({"P_LOS", p_los_closed, e_los.mean, e_los.std_error, mm,
                       std::abs(e_los.mean - p_los_closed) <= 1e-3 * p_los_closed});

    bool all = true;
    json arr = json::array();
    for (const auto &e : entries)
    {
        all = all && e.pass;
        arr.push_back({{"quantity", e.quantity},
                       {"closed_form", e.closed_form},
                       {"mc_mean", e.mc_mean},
                       {"mc_stderr", e.mc_stderr},
                       {"n_draws", e.n_draws},
                       {"pass", e.pass}});
    }
    const json report = {{"numScatterers", ns_v},
                         {"beta", beta_v},
                         {"chainNumScatterers", ns_geom},
                         {"chainBeta", m.beta},
                         {"entries", arr},
                         {"pass", all}};
    ctx.emit("verification.json", report.dump(2) + "\n");
    ctx.summary = {{"file", "verification.json"}, {"pass", all}};
    return all;
}

json params_json(const InternalParams &ip)
{
    const auto &m = ip.model;
    const auto &d = ip.diagnostics;
    return {{"alpha", m.alpha},
            {"beta", m.beta},
            {"gamma", m.gamma},
            {"g", m.g},
            {"kTarget", d.k_target},
            {"kFromOriginal", d.k_from_original},
            {"bounceGain", d.bounce_gain},
            {"validityMargin", d.validity_margin},
            {"gridValidityMargin", d.grid_validity_margin},
            {"meanTauB", d.stats.mean_tau_b},
            {"stdTauT", std::sqrt(d.stats.var_tau_t)},
            {"stdTauR", std::sqrt(d.stats.var_tau_r)},
            {"stdTauB", std::sqrt(d.stats.var_tau_b)},
            {"mgf", {{"tauT", d.mgf.m_tau_t}, {"tauR", d.mgf.m_tau_r}, {"tauSum", d.mgf.m_tau_sum}}}};
}

} // namespace

RunResult run_experiment(const ExperimentConfig &config, int threads)
{
    config.validate();
    std::error_code ec;
    std::filesystem::create_directories(config.output_dir, ec);
    if (ec)
        throw ValidationError("cannot create output directory " + config.output_dir.string() + ": " + ec.message());
    append_log(config.output_dir, "start preset=" + to_string(config.preset));

    json manifest = {{"toolVersion", tool_version},
                     {"configEcho", config_json(config)},
                     {"masterSeed", config.master_seed},
                     {"seedScheme",
                      {{"realization", "splitmix64(masterSeed + (r + 1) * 0x9E3779B97F4A7C15), generator mt19937_64"},
                       {"pilot", "substreams of pilotSeed in the same scheme"},
                       {"pilotSeed", pilot_seed(config.master_seed)},
                       {"pilotRealizations", config.pilot_realizations},
                       {"verification", tagged_seed(config.master_seed, 2)}}}};

    RunResult result;
    InternalParams ip;
    Context ctx{config, ip, threads, json::object(), {}, {}, {}};
    auto write_manifest = [&](const std::string &status, const std::string &error) {
        manifest["status"] = status;
        if (!error.empty())
            manifest["error"] = error;
        manifest["warnings"] = ctx.warnings;
        manifest["summary"] = ctx.summary;
        manifest["perRealizationSeeds"] = ctx.seeds;
        json files = json::array();
        for (const auto &f : ctx.files)
            files.push_back(f.filename().string());
        manifest["files"] = files;
        write_file(config.output_dir / "manifest.json", manifest.dump(2) + "\n");
    };

    try
    {
        ip = derive_internal_params(config, threads);
        ctx.warnings = ip.diagnostics.warnings;
        manifest["internalParams"] = params_json(ip);
        bool ok = true;
        switch (config.preset)
        {
        case Preset::realization_compare: run_realization_compare(ctx); break;
        case Preset::sv_vs_kappa: run_sv_sweep(ctx, SweepKind::spacing_factor); break;
        case Preset::sv_vs_box: run_sv_sweep(ctx, SweepKind::box_side); break;
        case Preset::k_vs_frequency: run_k_curve(ctx); break;
        case Preset::verify_derivation: ok = run_verification(ctx); break;
        }
        if (!ok)
            throw NumericalError("verification failed; see verification.json");
    }
    catch (const std::exception &e)
    {
        write_manifest("FAILED", e.what());
        append_log(config.output_dir, std::string("failed: ") + e.what());
        throw;
    }
    write_manifest("OK", "");
    append_log(config.output_dir, "done");
    result.ok = true;
    result.files = ctx.files;
    result.files.push_back(config.output_dir / "manifest.json");
    result.warnings = ctx.warnings;
    return result;
}

} // namespace pgsim
