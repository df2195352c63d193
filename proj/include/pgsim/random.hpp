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


#ifndef PGSIM_RANDOM_HPP
#define PGSIM_RANDOM_HPP

#include "core.hpp"

#include <cstdint>
#include <random>
#include <vector>

namespace pgsim
{

// All randomness flows through an explicitly passed engine. mt19937_64 is
// fully specified by the standard, and the conversions below avoid the
// implementation-defined std distributions, so streams are portable.
using Rng = std::mt19937_64;

inline constexpr std::uint64_t splitmix_increment = 0x9E3779B97F4A7C15ull;

inline std::uint64_t splitmix64_mix(std::uint64_t z)
{
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

// Counter-based split: seed of substream i is splitmix64(master + (i + 1) * increment).
// Independent of evaluation order, hence of the thread schedule.
inline std::uint64_t substream_seed(std::uint64_t master_seed, std::uint64_t index)
{
    return splitmix64_mix(master_seed + (index + 1) * splitmix_increment);
}

inline std::vector<std::uint64_t> substream_seeds(std::uint64_t master_seed, std::size_t count)
{
    std::vector<std::uint64_t> seeds(count);
    for (std::size_t i = 0; i < count; ++i)
        seeds[i] = substream_seed(master_seed, i);
    return seeds;
}

// Uniform on [0, 1) with 53 random bits.
template <typename Real = double>
Real uniform01(Rng &rng)
{
    return static_cast<Real>(static_cast<double>(rng() >> 11) * 0x1.0p-53);
}

// Uniform on [0, 2*pi).
template <typename Real = double>
Real uniform_phase(Rng &rng)
{
    return static_cast<Real>(2.0 * pi) * uniform01<Real>(rng);
}

} // namespace pgsim

#endif
