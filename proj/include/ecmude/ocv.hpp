// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <span>

namespace ecmude {

inline constexpr std::size_t kOcvTerms = 6;

/// Degree-5 Chebyshev (first kind) open-circuit-voltage map on z in [0, 1],
/// evaluated through the affine map x = 2z - 1.
struct OcvCoefficients {
  std::array<double, kOcvTerms> c{};
};

/// T_0..T_5 at x.
std::array<double, kOcvTerms> chebyshev_basis(double x);

/// T_0..T_5 and their derivatives dT_k/dx at x.
void chebyshev_basis_with_derivative(double x, std::array<double, kOcvTerms>& t,
                                     std::array<double, kOcvTerms>& dt);

/// OCV(z) = sum_k c_k T_k(2z - 1); z is clamped to [0, 1] first.
double ocv_eval(const OcvCoefficients& ocv, double z);

struct OcvGradient {
  double value = 0.0;
  double d_dz = 0.0;                      // zero outside [0, 1] (clamped)
  std::array<double, kOcvTerms> d_dc{};   // T_k(2z - 1)
};

OcvGradient ocv_grad(const OcvCoefficients& ocv, double z);

/// Chebyshev form of a power series a_0 + a_1 z + ... (at most 6 terms).
OcvCoefficients ocv_from_power_series(std::span<const double> a);

}  // namespace ecmude
