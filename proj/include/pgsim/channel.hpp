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


#ifndef PGSIM_CHANNEL_HPP
#define PGSIM_CHANNEL_HPP

#include "core.hpp"
#include "geometry.hpp"
#include "parametrization.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <vector>

namespace pgsim
{

inline constexpr double unstable_graph_margin = 1e-6;

template <typename Real>
struct ChannelSample
{
    CMatrix<Real> h_los;
    CMatrix<Real> h_nlos;
    Real frequency = 0;
};

// Uniform grid including both end points.
struct FrequencyGrid
{
    double f_min = 4e9;
    double f_max = 6e9;
    int num_points = 64;

    void validate() const
    {
        if (!(f_min > 0.0) || !(f_max > f_min))
            throw ValidationError("frequency grid needs 0 < fMin < fMax");
        if (num_points < 2)
            throw ValidationError("frequency grid needs numPoints >= 2");
    }
    double spacing() const { return (f_max - f_min) / (num_points - 1); }
    double at(int i) const { return i == num_points - 1 ? f_max : f_min + i * spacing(); }
    std::vector<double> points() const
    {
        std::vector<double> f(num_points);
        for (int i = 0; i < num_points; ++i)
            f[i] = at(i);
        return f;
    }
};

template <typename Real>
CMatrix<Real> h_los(const TransferSet<Real> &ts)
{
    return ts.d;
}

// Maximum absolute row sum; an upper bound on the spectral radius.
template <typename Derived>
typename Derived::RealScalar gershgorin_bound(const Eigen::MatrixBase<Derived> &b)
{
    if (b.size() == 0)
        return 0;
    return b.cwiseAbs().rowwise().sum().maxCoeff();
}

template <typename Derived>
typename Derived::RealScalar spectral_radius(const Eigen::MatrixBase<Derived> &b)
{
    using Real = typename Derived::RealScalar;
    if (b.rows() != b.cols())
        throw ValidationError("spectral radius needs a square matrix");
    if (b.size() == 0)
        return Real(0);
    const CMatrix<Real> m = b.template cast<Complex<Real>>();
    Eigen::ComplexEigenSolver<CMatrix<Real>> es(m, false);
    if (es.info() != Eigen::Success)
        throw NoConvergence("eigenvalue iteration did not converge");
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

// Gershgorin first, full eigensolve only when the bound does not already
// certify stability.
template <typename Real>
void check_dissipative(const CMatrix<Real> &b, std::ptrdiff_t frequency_index = -1)
{
    const Real limit = Real(1) - Real(unstable_graph_margin);
    if (gershgorin_bound(b) < limit)
        return;
    const Real radius = spectral_radius(b);
    if (radius >= limit)
        throw UnstableGraph("scatterer graph is not dissipative (spectral radius " + std::to_string(radius) + ")",
                            static_cast<double>(radius), frequency_index);
}

// R (I - B)^-1 T through an LU solve of (I - B) X = T.
template <typename Real>
CMatrix<Real> h_nlos_closed(const TransferSet<Real> &ts, std::ptrdiff_t frequency_index = -1)
{
    check_dissipative(ts.b, frequency_index);
    const auto ns = ts.b.rows();
    const CMatrix<Real> a = CMatrix<Real>::Identity(ns, ns) - ts.b;
    const CMatrix<Real> x = a.partialPivLu().solve(ts.t);
    CMatrix<Real> h = ts.r * x;
    if (!h.allFinite())
        throw SingularSolve("solve of (I - B) X = T produced non-finite values");
    return h;
}

// R (sum_{k=0}^{max_bounces} B^k) T by repeated multiplication.
template <typename Real>
CMatrix<Real> h_nlos_truncated(const TransferSet<Real> &ts, int max_bounces)
{
    if (max_bounces < 0)
        throw ValidationError("maxBounces must be >= 0");
    CMatrix<Real> term = ts.t; // B^k T
    CMatrix<Real> acc = term;
    for (int k = 1; k <= max_bounces; ++k)
    {
        term = ts.b * term;
        acc += term;
    }
    return ts.r * acc;
}

template <typename Real>
ChannelSample<Real> evaluate(const TransferSet<Real> &ts, std::ptrdiff_t frequency_index = -1)
{
    return {h_los(ts), h_nlos_closed(ts, frequency_index), ts.frequency};
}

// One sample per grid point; Params is NewParams or OriginalParams with the
// random draws already fixed for the realization.
template <typename Real, typename Params>
std::vector<ChannelSample<Real>> evaluate_over_grid(const DelaySet<Real> &delays, const Params &params,
                                                    const FrequencyGrid &grid)
{
    grid.validate();
    std::vector<ChannelSample<Real>> out;
    out.reserve(grid.num_points);
    for (int i = 0; i < grid.num_points; ++i)
    {
        const auto ts = build_transfer(delays, params, static_cast<Real>(grid.at(i)));
        out.push_back(evaluate(ts, i));
    }
    return out;
}

} // namespace pgsim

#endif
