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

#ifndef PGSIM_CORE_HPP
#define PGSIM_CORE_HPP

#include <Eigen/Dense>

#include <complex>
#include <cstddef>
#include <numbers>
#include <stdexcept>
#include <string>

namespace pgsim
{

template <typename Real>
using Complex = std::complex<Real>;

template <typename Real>
using Matrix = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Real>
using Vector = Eigen::Matrix<Real, Eigen::Dynamic, 1>;

template <typename Real>
using CMatrix = Eigen::Matrix<Complex<Real>, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Real>
using CVector = Eigen::Matrix<Complex<Real>, Eigen::Dynamic, 1>;

// Columns are points in 3-D space [m].
template <typename Real>
using Points3 = Eigen::Matrix<Real, 3, Eigen::Dynamic>;

template <typename Real>
using Point3 = Eigen::Matrix<Real, 3, 1>;

inline constexpr double speed_of_light = 299792458.0; // [m/s]
inline constexpr double pi = std::numbers::pi;

// ----- Errors -------------------------------------------------------------
// Validation errors (bad input) and numerical errors (the model cannot be
// evaluated) are kept apart so the CLI can map them to different exit codes.

class Error : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

class ValidationError : public Error
{
public:
    using Error::Error;
};

class ParseError : public ValidationError
{
public:
    using ValidationError::ValidationError;
};

class NumericalError : public Error
{
public:
    using Error::Error;
};

#define PGSIM_NUMERICAL_ERROR(Name)          \
    class Name : public NumericalError       \
    {                                        \
    public:                                  \
        using NumericalError::NumericalError; \
    };

PGSIM_NUMERICAL_ERROR(RejectionBudgetExceeded)
PGSIM_NUMERICAL_ERROR(DegenerateDelay)
PGSIM_NUMERICAL_ERROR(SingularSolve)
PGSIM_NUMERICAL_ERROR(NoConvergence)
PGSIM_NUMERICAL_ERROR(InfeasibleBeta)
PGSIM_NUMERICAL_ERROR(DivergentSeries)
PGSIM_NUMERICAL_ERROR(NoLosPath)
PGSIM_NUMERICAL_ERROR(NonuniformGrid)
PGSIM_NUMERICAL_ERROR(DivisionByZero)
PGSIM_NUMERICAL_ERROR(InsufficientClusters)
PGSIM_NUMERICAL_ERROR(InsufficientTaps)

#undef PGSIM_NUMERICAL_ERROR

// Raised when the scattering graph is not dissipative (spectral radius of B
// at or above 1 - margin). Carries the offending frequency when known.
class UnstableGraph : public NumericalError
{
public:
    UnstableGraph(const std::string &what, double radius, std::ptrdiff_t frequency_index = -1)
        : NumericalError(what), spectral_radius(radius), frequency_index(frequency_index) {}

    double spectral_radius;
    std::ptrdiff_t frequency_index;
};

} // namespace pgsim

#endif
