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


#ifndef PGSIM_GEOMETRY_HPP
#define PGSIM_GEOMETRY_HPP

#include "core.hpp"
#include "random.hpp"

#include <cmath>
#include <span>
#include <vector>

namespace pgsim
{

struct GeometryConfig
{
    int num_tx = 4;
    int num_rx = 4;
    int num_scatterers = 10;
    double tx_rx_distance = 3.0;          // D0 [m]
    double spacing_factor = 1.0;          // kappa; antenna spacing is kappa * c0 / f0
    double carrier_frequency = 5e9;       // f0 [Hz]
    double box_side = 5.0;                // L [m]
    double min_scatterer_distance = 1.5;  // [m], 0 disables the constraint
    bool los_visible = true;              // eps_D
    double speed_of_light = pgsim::speed_of_light;
    int max_attempts = 10000;             // rejection budget per scatterer

    double antenna_spacing() const { return spacing_factor * speed_of_light / carrier_frequency; }

    // Throws ValidationError naming the first violated invariant.
    void validate() const
    {
        if (num_tx < 1 || num_rx < 1 || num_scatterers < 1)
            throw ValidationError("antenna and scatterer counts must be >= 1");
        if (!(tx_rx_distance > 0.0))
            throw ValidationError("txRxDistance must be > 0");
        if (!(spacing_factor >= 0.0))
            throw ValidationError("spacingFactor must be >= 0");
        if (!(carrier_frequency > 0.0))
            throw ValidationError("carrierFrequency must be > 0");
        if (!(box_side >= 0.0))
            throw ValidationError("boxSide must be >= 0");
        if (!(min_scatterer_distance >= 0.0))
            throw ValidationError("minScattererDistance must be >= 0");
        if (!(speed_of_light > 0.0))
            throw ValidationError("speedOfLight must be > 0");
        if (max_attempts < 1)
            throw ValidationError("maxAttempts must be >= 1");
    }
};

template <typename Real>
struct Geometry
{
    Points3<Real> tx;
    Points3<Real> rx;
    Points3<Real> scatterers;
};

// Delays in seconds. Shapes: tau_d N_R x N_T, tau_t N_S x N_T, tau_r N_R x N_S, tau_b N_S x N_S.
template <typename Real>
struct DelaySet
{
    Matrix<Real> tau_d;
    Matrix<Real> tau_t;
    Matrix<Real> tau_r;
    Matrix<Real> tau_b;

    Eigen::Index num_tx() const { return tau_d.cols(); }
    Eigen::Index num_rx() const { return tau_d.rows(); }
    Eigen::Index num_scatterers() const { return tau_b.rows(); }
};

struct DelayStats
{
    double mean_tau_d = 0.0, mean_tau_t = 0.0, mean_tau_r = 0.0, mean_tau_b = 0.0;
    double var_tau_d = 0.0, var_tau_t = 0.0, var_tau_r = 0.0, var_tau_b = 0.0;

    double max_std() const
    {
        return std::sqrt(std::max({var_tau_t, var_tau_r, var_tau_b}));
    }
    double min_std() const
    {
        return std::sqrt(std::min({var_tau_t, var_tau_r, var_tau_b}));
    }
};

namespace detail
{

// N antennas on a ceil(sqrt(N))-column grid in the plane x = x0, centered on
// the x axis. N = 4 gives the 2 x 2 square array.
template <typename Real>
Points3<Real> planar_array(int count, Real x0, Real spacing)
{
    const int cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(count))));
    const int rows = (count + cols - 1) / cols;
    Points3<Real> p(3, count);
    for (int i = 0; i < count; ++i)
    {
        const int r = i / cols, c = i % cols;
        p(0, i) = x0;
        p(1, i) = (static_cast<Real>(c) - static_cast<Real>(cols - 1) / 2) * spacing;
        p(2, i) = (static_cast<Real>(r) - static_cast<Real>(rows - 1) / 2) * spacing;
    }
    return p;
}

template <typename Real, typename Derived>
bool far_enough(const Point3<Real> &p, const Eigen::MatrixBase<Derived> &others, Real min_distance)
{
    for (Eigen::Index j = 0; j < others.cols(); ++j)
        if ((others.col(j) - p).norm() < min_distance)
            return false;
    return true;
}

template <typename Real, typename DA, typename DB>
Matrix<Real> pairwise_delays(const Eigen::MatrixBase<DA> &to, const Eigen::MatrixBase<DB> &from, Real c0)
{
    Matrix<Real> tau(to.cols(), from.cols());
    for (Eigen::Index n = 0; n < from.cols(); ++n)
        for (Eigen::Index m = 0; m < to.cols(); ++m)
            tau(m, n) = (to.col(m) - from.col(n)).norm() / c0;
    return tau;
}

} // namespace detail

// Tx array in the plane x = 0, Rx array in the plane x = D0 (broadside along
// x), scatterers i.i.d. uniform in the cube of side L centered at the Tx-Rx
// midpoint. Scatterers closer than the minimum distance to any antenna or to
// an already accepted scatterer are redrawn.
template <typename Real = double>
Geometry<Real> sample_geometry(const GeometryConfig &config, Rng &rng)
{
    config.validate();
    const auto spacing = static_cast<Real>(config.antenna_spacing());
    const auto d0 = static_cast<Real>(config.tx_rx_distance);
    const auto side = static_cast<Real>(config.box_side);
    const auto min_dist = static_cast<Real>(config.min_scatterer_distance);

    Geometry<Real> g;
    g.tx = detail::planar_array<Real>(config.num_tx, Real(0), spacing);
    g.rx = detail::planar_array<Real>(config.num_rx, d0, spacing);
    g.scatterers.resize(3, config.num_scatterers);

    Points3<Real> antennas(3, config.num_tx + config.num_rx);
    antennas << g.tx, g.rx;
    const Point3<Real> center(d0 / 2, Real(0), Real(0));

    for (int s = 0; s < config.num_scatterers; ++s)
    {
        bool accepted = false;
        for (int attempt = 0; attempt < config.max_attempts && !accepted; ++attempt)
        {
            Point3<Real> p;
            for (int k = 0; k < 3; ++k)
                p(k) = center(k) + (uniform01<Real>(rng) - Real(0.5)) * side;
            accepted = min_dist <= Real(0) ||
                       (detail::far_enough<Real>(p, antennas, min_dist) &&
                        detail::far_enough<Real>(p, g.scatterers.leftCols(s), min_dist));
            if (accepted)
                g.scatterers.col(s) = p;
        }
        if (!accepted)
            throw RejectionBudgetExceeded("could not place scatterer " + std::to_string(s) + " within " +
                                          std::to_string(config.max_attempts) +
                                          " draws; minimum distance too large for the box");
    }
    return g;
}

template <typename Real>
DelaySet<Real> compute_delays(const Geometry<Real> &g, Real c0 = Real(speed_of_light))
{
    DelaySet<Real> d;
    d.tau_d = detail::pairwise_delays<Real>(g.rx, g.tx, c0);
    d.tau_t = detail::pairwise_delays<Real>(g.scatterers, g.tx, c0);
    d.tau_r = detail::pairwise_delays<Real>(g.rx, g.scatterers, c0);

    const Eigen::Index ns = g.scatterers.cols();
    d.tau_b = Matrix<Real>::Zero(ns, ns);
    for (Eigen::Index n = 0; n < ns; ++n)
        for (Eigen::Index m = n + 1; m < ns; ++m)
            d.tau_b(m, n) = d.tau_b(n, m) = (g.scatterers.col(m) - g.scatterers.col(n)).norm() / c0;
    return d;
}

namespace detail
{

// Running sum for pooled means. Summation order is the caller's iteration
// order, which is fixed, so pooled results are reproducible.
struct Moments
{
    double sum = 0.0;
    double count = 0.0;

    void add(double x)
    {
        sum += x;
        count += 1.0;
    }
    double mean() const { return count > 0 ? sum / count : 0.0; }
};

template <typename Real>
void accumulate(Moments &m, const Matrix<Real> &a)
{
    for (Eigen::Index j = 0; j < a.cols(); ++j)
        for (Eigen::Index i = 0; i < a.rows(); ++i)
            m.add(static_cast<double>(a(i, j)));
}

template <typename Real>
void accumulate_off_diagonal(Moments &m, const Matrix<Real> &a)
{
    for (Eigen::Index j = 0; j < a.cols(); ++j)
        for (Eigen::Index i = 0; i < a.rows(); ++i)
            if (i != j)
                m.add(static_cast<double>(a(i, j)));
}

} // namespace detail

// Pooled empirical statistics over all delay sets (population variance;
// tau_b off-diagonal entries only).
template <typename Real>
DelayStats delay_stats(std::span<const DelaySet<Real>> sets)
{
    detail::Moments d, t, r, b;
    for (const auto &s : sets)
    {
        detail::accumulate(d, s.tau_d);
        detail::accumulate(t, s.tau_t);
        detail::accumulate(r, s.tau_r);
        detail::accumulate_off_diagonal(b, s.tau_b);
    }
    auto centered = [&](auto extract, double mean, bool off_diag) {
        double acc = 0.0, n = 0.0;
        for (const auto &s : sets)
        {
            const auto &a = extract(s);
            for (Eigen::Index j = 0; j < a.cols(); ++j)
                for (Eigen::Index i = 0; i < a.rows(); ++i)
                {
                    if (off_diag && i == j)
                        continue;
                    const double x = static_cast<double>(a(i, j)) - mean;
                    acc += x * x;
                    n += 1.0;
                }
        }
        return n > 0 ? acc / n : 0.0;
    };

    DelayStats st;
    st.mean_tau_d = d.mean();
    st.mean_tau_t = t.mean();
    st.mean_tau_r = r.mean();
    st.mean_tau_b = b.mean();
    st.var_tau_d = centered([](const DelaySet<Real> &s) -> const Matrix<Real> & { return s.tau_d; }, st.mean_tau_d, false);
    st.var_tau_t = centered([](const DelaySet<Real> &s) -> const Matrix<Real> & { return s.tau_t; }, st.mean_tau_t, false);
    st.var_tau_r = centered([](const DelaySet<Real> &s) -> const Matrix<Real> & { return s.tau_r; }, st.mean_tau_r, false);
    st.var_tau_b = centered([](const DelaySet<Real> &s) -> const Matrix<Real> & { return s.tau_b; }, st.mean_tau_b, true);
    return st;
}

template <typename Real>
DelayStats delay_stats(const DelaySet<Real> &set)
{
    return delay_stats<Real>(std::span<const DelaySet<Real>>(&set, 1));
}

} // namespace pgsim

#endif
