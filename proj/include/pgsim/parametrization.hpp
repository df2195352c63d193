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


#ifndef PGSIM_PARAMETRIZATION_HPP
#define PGSIM_PARAMETRIZATION_HPP

#include "core.hpp"
#include "geometry.hpp"
#include "random.hpp"

#include <cmath>
#include <string>

namespace pgsim
{

// The four transfer matrices at one frequency:
// D (N_R x N_T) Tx -> Rx, T (N_S x N_T) Tx -> scatterers,
// R (N_R x N_S) scatterers -> Rx, B (N_S x N_S) scatterers -> scatterers.
template <typename Real>
struct TransferSet
{
    CMatrix<Real> d;
    CMatrix<Real> t;
    CMatrix<Real> r;
    CMatrix<Real> b;
    Real frequency = 0;
};

// ----- Original parametrization -------------------------------------------
// Link indicators are 0/1 matrices of the same shapes as the delays. Phases
// exist only for linked entries of T, R and B and are held fixed over
// frequency for one realization.
template <typename Real>
struct OriginalParams
{
    Real g = Real(0.5);
    Matrix<Real> eps_d, eps_t, eps_r, eps_b;
    Matrix<Real> phase_t, phase_r, phase_b;
};

// Fully connected graph (eps_B diagonal zero), eps_D = los_visible. Phases
// are drawn column-major over linked entries of T, then R, then B.
template <typename Real>
OriginalParams<Real> draw_original_params(const DelaySet<Real> &delays, Real g, bool los_visible, Rng &rng)
{
    // g < 1 bounds every row sum of |B| and hence the spectral radius
    if (!(g > Real(0)) || !(g < Real(1)))
        throw ValidationError("original gain g must lie in (0, 1)");
    OriginalParams<Real> p;
    p.g = g;
    const auto nr = delays.num_rx(), nt = delays.num_tx(), ns = delays.num_scatterers();
    p.eps_d = Matrix<Real>::Constant(nr, nt, los_visible ? Real(1) : Real(0));
    p.eps_t = Matrix<Real>::Ones(ns, nt);
    p.eps_r = Matrix<Real>::Ones(nr, ns);
    p.eps_b = Matrix<Real>::Ones(ns, ns);
    p.eps_b.diagonal().setZero();

    auto draw = [&rng](const Matrix<Real> &eps) {
        Matrix<Real> phase = Matrix<Real>::Zero(eps.rows(), eps.cols());
        for (Eigen::Index j = 0; j < eps.cols(); ++j)
            for (Eigen::Index i = 0; i < eps.rows(); ++i)
                if (eps(i, j) != Real(0))
                    phase(i, j) = uniform_phase<Real>(rng);
        return phase;
    };
    p.phase_t = draw(p.eps_t);
    p.phase_r = draw(p.eps_r);
    p.phase_b = draw(p.eps_b);
    return p;
}

namespace detail
{

template <typename Real>
Complex<Real> delay_phasor(Real tau, Real f, Real extra_phase = Real(0))
{
    return std::polar(Real(1), -Real(2 * pi) * tau * f + extra_phase);
}

// D_mn = eps_mn / (4 pi f tau_mn) * exp(-j 2 pi tau_mn f); identical in both parametrizations.
template <typename Real, typename Eps>
CMatrix<Real> los_matrix(const Matrix<Real> &tau_d, const Eps &eps, Real f)
{
    CMatrix<Real> d(tau_d.rows(), tau_d.cols());
    for (Eigen::Index n = 0; n < tau_d.cols(); ++n)
        for (Eigen::Index m = 0; m < tau_d.rows(); ++m)
        {
            const Real e = eps(m, n);
            if (e == Real(0))
            {
                d(m, n) = Complex<Real>(0);
                continue;
            }
            if (!(tau_d(m, n) > Real(0)))
                throw DegenerateDelay("zero Tx-Rx delay on a visible LOS link");
            d(m, n) = e / (Real(4 * pi) * f * tau_d(m, n)) * delay_phasor(tau_d(m, n), f);
        }
    return d;
}

// T or R under the original parametrization: amplitude
// eps / sqrt(4 pi f tau_bar) * tau^-1 / sqrt(S).
template <typename Real>
CMatrix<Real> original_link_matrix(const Matrix<Real> &tau, const Matrix<Real> &eps, const Matrix<Real> &phase,
                                   Real f, const char *name)
{
    Real linked = 0, tau_sum = 0, inv_sq_sum = 0;
    for (Eigen::Index j = 0; j < tau.cols(); ++j)
        for (Eigen::Index i = 0; i < tau.rows(); ++i)
        {
            if (eps(i, j) == Real(0))
                continue;
            if (!(tau(i, j) > Real(0)))
                throw DegenerateDelay(std::string("zero delay on a linked entry of ") + name);
            linked += eps(i, j);
            tau_sum += eps(i, j) * tau(i, j);
            inv_sq_sum += eps(i, j) / (tau(i, j) * tau(i, j));
        }
    CMatrix<Real> out = CMatrix<Real>::Zero(tau.rows(), tau.cols());
    if (linked == Real(0))
        return out;
    const Real tau_bar = tau_sum / linked;
    const Real scale = Real(1) / (std::sqrt(Real(4 * pi) * f * tau_bar) * std::sqrt(inv_sq_sum));
    for (Eigen::Index j = 0; j < tau.cols(); ++j)
        for (Eigen::Index i = 0; i < tau.rows(); ++i)
            if (eps(i, j) != Real(0))
                out(i, j) = eps(i, j) * scale / tau(i, j) * delay_phasor(tau(i, j), f, phase(i, j));
    return out;
}

} // namespace detail

template <typename Real>
TransferSet<Real> build_original(const DelaySet<Real> &delays, const OriginalParams<Real> &p, Real f)
{
    if (!(f > Real(0)))
        throw ValidationError("frequency must be > 0");
    TransferSet<Real> ts;
    ts.frequency = f;
    ts.d = detail::los_matrix(delays.tau_d, p.eps_d, f);
    ts.t = detail::original_link_matrix(delays.tau_t, p.eps_t, p.phase_t, f, "T");
    ts.r = detail::original_link_matrix(delays.tau_r, p.eps_r, p.phase_r, f, "R");

    const auto ns = delays.num_scatterers();
    ts.b = CMatrix<Real>::Zero(ns, ns);
    for (Eigen::Index m = 0; m < ns; ++m)
    {
        const Real row_links = p.eps_b.row(m).sum();
        if (row_links == Real(0))
            continue;
        for (Eigen::Index n = 0; n < ns; ++n)
            if (p.eps_b(m, n) != Real(0))
                ts.b(m, n) = p.g * p.eps_b(m, n) / row_links * detail::delay_phasor(delays.tau_b(m, n), f, p.phase_b(m, n));
    }
    return ts;
}

// ----- New parametrization ------------------------------------------------
// One random phase per scatterer on the Tx side and one on the Rx side.
template <typename Real>
struct NewParams
{
    Real alpha = Real(1); // [Hz]
    Real beta = Real(0);
    Real gamma = Real(0); // [1/s]
    Vector<Real> phase_tx;
    Vector<Real> phase_rx;
    bool los_visible = true;
};

// Draws N_S Tx-side phases, then N_S Rx-side phases.
template <typename Real>
void draw_new_phases(NewParams<Real> &p, Eigen::Index num_scatterers, Rng &rng)
{
    p.phase_tx.resize(num_scatterers);
    p.phase_rx.resize(num_scatterers);
    for (Eigen::Index i = 0; i < num_scatterers; ++i)
        p.phase_tx(i) = uniform_phase<Real>(rng);
    for (Eigen::Index i = 0; i < num_scatterers; ++i)
        p.phase_rx(i) = uniform_phase<Real>(rng);
}

// T_mn carries the phase of scatterer m (its row), R_mn that of scatterer n
// (its column). B has no extra phase and a zero diagonal.
template <typename Real>
TransferSet<Real> build_new(const DelaySet<Real> &delays, const NewParams<Real> &p, Real f)
{
    if (!(f > Real(0)))
        throw ValidationError("frequency must be > 0");
    const auto nr = delays.num_rx(), nt = delays.num_tx(), ns = delays.num_scatterers();
    if (p.phase_tx.size() != ns || p.phase_rx.size() != ns)
        throw ValidationError("new parametrization needs exactly one Tx and one Rx phase per scatterer");

    TransferSet<Real> ts;
    ts.frequency = f;
    const Real eps_d = p.los_visible ? Real(1) : Real(0);
    ts.d = detail::los_matrix(delays.tau_d, Matrix<Real>::Constant(nr, nt, eps_d), f);

    const Real amp = std::sqrt(p.alpha / f);
    ts.t.resize(ns, nt);
    for (Eigen::Index n = 0; n < nt; ++n)
        for (Eigen::Index m = 0; m < ns; ++m)
        {
            const Real tau = delays.tau_t(m, n);
            ts.t(m, n) = amp * std::exp(tau * p.gamma) * detail::delay_phasor(tau, f, p.phase_tx(m));
        }
    ts.r.resize(nr, ns);
    for (Eigen::Index n = 0; n < ns; ++n)
        for (Eigen::Index m = 0; m < nr; ++m)
        {
            const Real tau = delays.tau_r(m, n);
            ts.r(m, n) = amp * std::exp(tau * p.gamma) * detail::delay_phasor(tau, f, p.phase_rx(n));
        }
    ts.b.resize(ns, ns);
    for (Eigen::Index n = 0; n < ns; ++n)
        for (Eigen::Index m = 0; m < ns; ++m)
            ts.b(m, n) = m == n ? Complex<Real>(0) : p.beta * detail::delay_phasor(delays.tau_b(m, n), f);
    return ts;
}

template <typename Real>
NewParams<Real> scale_alpha(NewParams<Real> p, Real c)
{
    if (!(c > Real(0)))
        throw ValidationError("alpha scale factor must be > 0");
    p.alpha *= c;
    return p;
}

// Uniform entry point for code that is generic over the parametrization.
template <typename Real>
TransferSet<Real> build_transfer(const DelaySet<Real> &delays, const NewParams<Real> &p, Real f)
{
    return build_new(delays, p, f);
}

template <typename Real>
TransferSet<Real> build_transfer(const DelaySet<Real> &delays, const OriginalParams<Real> &p, Real f)
{
    return build_original(delays, p, f);
}

} // namespace pgsim

#endif
