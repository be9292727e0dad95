// SPDX-License-Identifier: Apache-2.0
//
// Fixed-step classical Runge-Kutta and a small forward-mode dual number used
// to get exact sensitivities of the discretized circuit.
#pragma once

#include <array>
#include <cstddef>

namespace ecmude {

/// One classical RK4 step of dx/dt = f(x). T needs +, scalar * and copy.
template <class T, class Rhs>
T rk4_step(const T& x, double h, Rhs&& f) {
  const T k1 = f(x);
  const T k2 = f(x + (0.5 * h) * k1);
  const T k3 = f(x + (0.5 * h) * k2);
  const T k4 = f(x + h * k3);
  return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

/// Value plus N directional derivatives.
template <std::size_t N>
struct Dual {
  double v = 0.0;
  std::array<double, N> d{};

  Dual() = default;
  Dual(double value) : v(value) {}  // NOLINT(google-explicit-constructor)

  static Dual variable(double value, std::size_t slot) {
    Dual x(value);
    x.d[slot] = 1.0;
    return x;
  }
};

template <std::size_t N>
Dual<N> operator+(const Dual<N>& a, const Dual<N>& b) {
  Dual<N> r(a.v + b.v);
  for (std::size_t i = 0; i < N; ++i) r.d[i] = a.d[i] + b.d[i];
  return r;
}

template <std::size_t N>
Dual<N> operator-(const Dual<N>& a, const Dual<N>& b) {
  Dual<N> r(a.v - b.v);
  for (std::size_t i = 0; i < N; ++i) r.d[i] = a.d[i] - b.d[i];
  return r;
}

template <std::size_t N>
Dual<N> operator-(const Dual<N>& a) {
  Dual<N> r(-a.v);
  for (std::size_t i = 0; i < N; ++i) r.d[i] = -a.d[i];
  return r;
}

template <std::size_t N>
Dual<N> operator*(const Dual<N>& a, const Dual<N>& b) {
  Dual<N> r(a.v * b.v);
  for (std::size_t i = 0; i < N; ++i) r.d[i] = a.d[i] * b.v + a.v * b.d[i];
  return r;
}

template <std::size_t N>
Dual<N> operator*(double s, const Dual<N>& a) {
  Dual<N> r(s * a.v);
  for (std::size_t i = 0; i < N; ++i) r.d[i] = s * a.d[i];
  return r;
}

template <std::size_t N>
Dual<N> operator/(const Dual<N>& a, const Dual<N>& b) {
  Dual<N> r(a.v / b.v);
  const double inv2 = 1.0 / (b.v * b.v);
  for (std::size_t i = 0; i < N; ++i) r.d[i] = (a.d[i] * b.v - a.v * b.d[i]) * inv2;
  return r;
}

}  // namespace ecmude
