// SPDX-License-Identifier: Apache-2.0
#include "ecmude/ocv.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>

#include "ecmude/errors.hpp"

namespace ecmude {

std::array<double, kOcvTerms> chebyshev_basis(double x) {
  std::array<double, kOcvTerms> t{};
  t[0] = 1.0;
  t[1] = x;
  for (std::size_t k = 1; k + 1 < kOcvTerms; ++k) t[k + 1] = 2.0 * x * t[k] - t[k - 1];
  return t;
}

void chebyshev_basis_with_derivative(double x, std::array<double, kOcvTerms>& t,
                                     std::array<double, kOcvTerms>& dt) {
  t[0] = 1.0;
  t[1] = x;
  dt[0] = 0.0;
  dt[1] = 1.0;
  for (std::size_t k = 1; k + 1 < kOcvTerms; ++k) {
    t[k + 1] = 2.0 * x * t[k] - t[k - 1];
    dt[k + 1] = 2.0 * t[k] + 2.0 * x * dt[k] - dt[k - 1];
  }
}

double ocv_eval(const OcvCoefficients& ocv, double z) {
  const double x = 2.0 * std::clamp(z, 0.0, 1.0) - 1.0;
  const auto t = chebyshev_basis(x);
  double v = 0.0;
  for (std::size_t k = 0; k < kOcvTerms; ++k) v += ocv.c[k] * t[k];
  return v;
}

OcvGradient ocv_grad(const OcvCoefficients& ocv, double z) {
  const bool inside = z >= 0.0 && z <= 1.0;
  const double x = 2.0 * std::clamp(z, 0.0, 1.0) - 1.0;
  std::array<double, kOcvTerms> t{}, dt{};
  chebyshev_basis_with_derivative(x, t, dt);
  OcvGradient g;
  double dx = 0.0;
  for (std::size_t k = 0; k < kOcvTerms; ++k) {
    g.value += ocv.c[k] * t[k];
    dx += ocv.c[k] * dt[k];
  }
  g.d_dz = inside ? 2.0 * dx : 0.0;
  g.d_dc = t;
  return g;
}

OcvCoefficients ocv_from_power_series(std::span<const double> a) {
  if (a.size() > kOcvTerms) throw ConfigError("OCV power series has more than 6 terms");
  // Interpolate at the Chebyshev nodes; exact for degree <= 5.
  Eigen::MatrixXd basis(kOcvTerms, kOcvTerms);
  Eigen::VectorXd values(kOcvTerms);
  for (std::size_t j = 0; j < kOcvTerms; ++j) {
    const double x = std::cos(std::numbers::pi * (static_cast<double>(j) + 0.5) / kOcvTerms);
    const double z = 0.5 * (x + 1.0);
    const auto t = chebyshev_basis(x);
    double v = 0.0;
    for (std::size_t k = a.size(); k-- > 0;) v = v * z + a[k];
    values(static_cast<Eigen::Index>(j)) = v;
    for (std::size_t k = 0; k < kOcvTerms; ++k) basis(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) = t[k];
  }
  const Eigen::VectorXd c = basis.partialPivLu().solve(values);
  OcvCoefficients out;
  for (std::size_t k = 0; k < kOcvTerms; ++k) out.c[k] = c(static_cast<Eigen::Index>(k));
  return out;
}

}  // namespace ecmude
