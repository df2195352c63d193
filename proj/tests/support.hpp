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


#ifndef PGSIM_TESTS_SUPPORT_HPP
#define PGSIM_TESTS_SUPPORT_HPP

#include "pgsim/geometry.hpp"
#include "pgsim/random.hpp"

#include <complex>
#include <random>
#include <vector>

namespace testing
{

inline pgsim::GeometryConfig table_one()
{
    return {}; // defaults are the Table I setup
}

inline pgsim::DelaySet<double> sample_delays(const pgsim::GeometryConfig &cfg, std::uint64_t seed)
{
    pgsim::Rng rng(seed);
    return pgsim::compute_delays(pgsim::sample_geometry<double>(cfg, rng), cfg.speed_of_light);
}

inline std::vector<pgsim::DelaySet<double>> sample_ensemble(const pgsim::GeometryConfig &cfg, int count,
                                                            std::uint64_t seed)
{
    std::vector<pgsim::DelaySet<double>> v;
    for (int i = 0; i < count; ++i)
        v.push_back(sample_delays(cfg, pgsim::substream_seed(seed, i)));
    return v;
}

// Off-diagonal entries beta * e^{j theta} with theta uniform, zero diagonal.
inline pgsim::CMatrix<double> random_phase_b(int n, double beta, std::mt19937_64 &rng)
{
    std::uniform_real_distribution<double> u(0.0, 2.0 * pgsim::pi);
    pgsim::CMatrix<double> b = pgsim::CMatrix<double>::Zero(n, n);
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i)
            if (i != j)
                b(i, j) = std::polar(beta, u(rng));
    return b;
}

inline double rel_err(const pgsim::CMatrix<double> &a, const pgsim::CMatrix<double> &b)
{
    return (a - b).norm() / b.norm();
}

} // namespace testing

#endif
