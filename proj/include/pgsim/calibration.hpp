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


#ifndef PGSIM_CALIBRATION_HPP
#define PGSIM_CALIBRATION_HPP

#include "core.hpp"
#include "geometry.hpp"

#include <cmath>
#include <span>

namespace pgsim
{

// How a decay rate in dB/s is turned into the amplitude exponents gamma and
// beta.
//  amplitude:      exponents divided by 20, so that *power* decays at the
//                  given rate (ray power at rho2, per-bounce cluster power at rho1).
//  power_exponent: exponents divided by 10 and applied to amplitudes; power
//                  then decays at twice the given rate.
enum class DecayConvention
{
    amplitude,
    power_exponent
};

inline double decay_divisor(DecayConvention c)
{
    return c == DecayConvention::amplitude ? 20.0 : 10.0;
}

// Saleh-Valenzuela style targets. Decay rates in dB/s (negative for decay).
struct SvTarget
{
    double rho1 = -1e9;
    double rho2 = -2e9;
    double k_factor = 180.0;
    double f_min = 4e9;
    double f_max = 6e9;

    void validate() const
    {
        if (!(k_factor > 0.0))
            throw ValidationError("kFactor must be > 0");
        if (!(f_min > 0.0) || !(f_max > f_min))
            throw ValidationError("target band needs 0 < fMin < fMax");
    }
};

// Empirical moment generating functions evaluated at 2 gamma.
struct MgfEstimates
{
    double m_tau_t = 1.0;   // E{exp(2 gamma tau_T)}
    double m_tau_r = 1.0;   // E{exp(2 gamma tau_R)}
    double m_tau_sum = 1.0; // E{exp(2 gamma (tau_T + tau_R))} over Tx -> scatterer -> Rx paths
    double sample_count = 0;
};

// Diagonal / off-diagonal power pair of B^k or S.
struct PowerPair
{
    double diag = 0.0;
    double off = 0.0;
};

struct PowerPrediction
{
    double p_los = 0.0;
    double p_nlos = 0.0;
    double q = 0.0;
    double p_s1 = 0.0;
    double p_s2 = 0.0;
};

inline double gamma_from_rho2(double rho2, DecayConvention c = DecayConvention::amplitude)
{
    return rho2 * std::log(10.0) / decay_divisor(c);
}

// beta = sqrt(1/(N_S-1)) * 10^(E{tau_B} rho1 / divisor). Throws InfeasibleBeta
// when (N_S-1) beta^2 >= 1, i.e. the graph would not lose power per bounce.
inline double beta_from_rho1(double rho1, double mean_tau_b, int num_scatterers,
                             DecayConvention c = DecayConvention::amplitude)
{
    if (num_scatterers < 2)
        throw ValidationError("beta calibration needs at least 2 scatterers");
    const double n1 = num_scatterers - 1;
    const double beta = std::sqrt(1.0 / n1) * std::pow(10.0, mean_tau_b * rho1 / decay_divisor(c));
    if (n1 * beta * beta >= 1.0)
        throw InfeasibleBeta("(N_S-1) beta^2 = " + std::to_string(n1 * beta * beta) +
                             " >= 1; the cluster decay rate rho1 must be negative");
    return beta;
}

// Gain g of the original parametrization with the same per-bounce power as
// the new one: g^2 / (N_S-1) = (N_S-1) beta^2.
inline double original_gain(double beta, int num_scatterers)
{
    return (num_scatterers - 1) * beta;
}

template <typename Real>
MgfEstimates estimate_mgf(std::span<const DelaySet<Real>> sets, double gamma)
{
    double st = 0, sr = 0, ss = 0, nt = 0, nr = 0, nsum = 0;
    for (const auto &d : sets)
    {
        for (Eigen::Index j = 0; j < d.tau_t.cols(); ++j)
            for (Eigen::Index i = 0; i < d.tau_t.rows(); ++i)
                st += std::exp(2.0 * gamma * static_cast<double>(d.tau_t(i, j)));
        for (Eigen::Index j = 0; j < d.tau_r.cols(); ++j)
            for (Eigen::Index i = 0; i < d.tau_r.rows(); ++i)
                sr += std::exp(2.0 * gamma * static_cast<double>(d.tau_r(i, j)));
        // (Rx antenna m, scatterer i, Tx antenna n): tau_R(m, i) + tau_T(i, n)
        for (Eigen::Index n = 0; n < d.tau_t.cols(); ++n)
            for (Eigen::Index i = 0; i < d.tau_t.rows(); ++i)
                for (Eigen::Index m = 0; m < d.tau_r.rows(); ++m)
                    ss += std::exp(2.0 * gamma * static_cast<double>(d.tau_r(m, i) + d.tau_t(i, n)));
        nt += static_cast<double>(d.tau_t.size());
        nr += static_cast<double>(d.tau_r.size());
        nsum += static_cast<double>(d.tau_t.size() * d.tau_r.rows());
    }
    MgfEstimates m;
    if (nt > 0)
        m.m_tau_t = st / nt;
    if (nr > 0)
        m.m_tau_r = sr / nr;
    if (nsum > 0)
        m.m_tau_sum = ss / nsum;
    m.sample_count = nsum;
    return m;
}

template <typename Real>
MgfEstimates estimate_mgf(const DelaySet<Real> &delays, double gamma)
{
    return estimate_mgf<Real>(std::span<const DelaySet<Real>>(&delays, 1), gamma);
}

// k steps of [P1; P2] <- [[0, (N-1) b^2], [b^2, (N-2) b^2]] [P1; P2] from (1, 0).
inline PowerPair b_power_recursion(double beta, int num_scatterers, int k)
{
    if (k < 0)
        throw ValidationError("bounce count must be >= 0");
    const double b2 = beta * beta;
    const double n = num_scatterers;
    PowerPair p{1.0, 0.0};
    for (int i = 0; i < k; ++i)
        p = PowerPair{(n - 1) * b2 * p.off, b2 * p.diag + (n - 2) * b2 * p.off};
    return p;
}

inline void require_convergent(double beta, int num_scatterers)
{
    const double x = (num_scatterers - 1) * beta * beta;
    if (!(x < 1.0))
        throw DivergentSeries("(N_S-1) beta^2 = " + std::to_string(x) + " >= 1; scattering power series diverges");
}

// Closed-form sums of b_power_recursion over all k.
inline PowerPair s_power_closed(double beta, int num_scatterers)
{
    require_convergent(beta, num_scatterers);
    const double b2 = beta * beta;
    const double x = (num_scatterers - 1) * b2;
    const double inv = 1.0 / (1.0 - x);
    return {(1.0 - x / (1.0 + b2)) * inv, b2 / (1.0 + b2) * inv};
}

inline double q_factor(double beta, const MgfEstimates &mgf, int num_scatterers)
{
    require_convergent(beta, num_scatterers);
    const double b2 = beta * beta;
    const double x = (num_scatterers - 1) * b2;
    return (mgf.m_tau_sum + x / (1.0 + b2) * (mgf.m_tau_r * mgf.m_tau_t - mgf.m_tau_sum)) / (1.0 - x);
}

inline double band_factor(double f_min, double f_max)
{
    if (!(f_min > 0.0) || !(f_max > f_min))
        throw ValidationError("band needs 0 < fMin < fMax");
    return (f_max - f_min) / (f_max * f_min);
}

template <typename Derived>
double inverse_square_sum(const Eigen::MatrixBase<Derived> &tau_d)
{
    double s = 0.0;
    for (Eigen::Index j = 0; j < tau_d.cols(); ++j)
        for (Eigen::Index i = 0; i < tau_d.rows(); ++i)
        {
            const double t = static_cast<double>(tau_d(i, j));
            if (!(t > 0.0))
                throw DegenerateDelay("zero Tx-Rx delay");
            s += 1.0 / (t * t);
        }
    return s;
}

// Band-integrated LOS power.
template <typename Derived>
double p_los(const Eigen::MatrixBase<Derived> &tau_d, bool eps_d, double f_min, double f_max)
{
    const double bf = band_factor(f_min, f_max);
    if (!eps_d)
        return 0.0;
    return bf / ((4.0 * pi) * (4.0 * pi)) * inverse_square_sum(tau_d);
}

// Band-integrated NLOS power, alpha^2 N_R N_T N_S band Q.
inline double p_nlos_predict(double alpha, double beta, const MgfEstimates &mgf, int num_rx, int num_tx,
                             int num_scatterers, double f_min, double f_max)
{
    const double q = q_factor(beta, mgf, num_scatterers);
    return alpha * alpha * num_rx * num_tx * num_scatterers * band_factor(f_min, f_max) * q;
}

// alpha such that p_los / p_nlos_predict equals K.
template <typename Derived>
double alpha_from_k(double k_factor, const Eigen::MatrixBase<Derived> &tau_d, bool eps_d, double beta,
                    const MgfEstimates &mgf, int num_scatterers)
{
    if (!(k_factor > 0.0))
        throw ValidationError("kFactor must be > 0");
    if (!eps_d)
        throw NoLosPath("K-factor calibration needs a visible LOS path (eps_D = 1)");
    const double q = q_factor(beta, mgf, num_scatterers);
    const auto nr = static_cast<double>(tau_d.rows()), nt = static_cast<double>(tau_d.cols());
    return std::sqrt(inverse_square_sum(tau_d) / ((4.0 * pi) * (4.0 * pi) * k_factor * nr * nt * num_scatterers * q));
}

template <typename Derived>
PowerPrediction predict_powers(double alpha, double beta, const MgfEstimates &mgf,
                               const Eigen::MatrixBase<Derived> &tau_d, bool eps_d, int num_scatterers,
                               double f_min, double f_max)
{
    PowerPrediction p;
    const auto s = s_power_closed(beta, num_scatterers);
    p.p_s1 = s.diag;
    p.p_s2 = s.off;
    p.q = q_factor(beta, mgf, num_scatterers);
    p.p_los = p_los(tau_d, eps_d, f_min, f_max);
    p.p_nlos = p_nlos_predict(alpha, beta, mgf, static_cast<int>(tau_d.rows()), static_cast<int>(tau_d.cols()),
                              num_scatterers, f_min, f_max);
    return p;
}

// min over A in {T, R, B} of sqrt(Var{tau_A}) * f_min. Values at or below 8
// mean the phase-independence approximation is unreliable.
inline double validity_margin(const DelayStats &stats, double f_min)
{
    return stats.min_std() * f_min;
}

inline constexpr double validity_threshold = 8.0;

} // namespace pgsim

#endif
