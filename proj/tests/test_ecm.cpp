// SPDX-License-Identifier: Apache-2.0
#include <chrono>

#include "doctest.h"
#include "ecmude/ecm.hpp"
#include "ecmude/errors.hpp"
#include "ecmude/ocv.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace ecmude;

TEST_SUITE("ocv") {

TEST_CASE("chebyshev basis") {
  for (double x : {-1.0, -0.3, 0.0, 0.55, 1.0}) {
    const auto t = chebyshev_basis(x);
    for (std::size_t k = 0; k < kOcvTerms; ++k) {
      CHECK(t[k] == doctest::Approx(std::cos(static_cast<double>(k) * std::acos(x))).epsilon(1e-12));
    }
    std::array<double, kOcvTerms> v{}, d{};
    chebyshev_basis_with_derivative(x, v, d);
    const double h = 1e-6;
    const auto tp = chebyshev_basis(x + h);
    const auto tm = chebyshev_basis(x - h);
    for (std::size_t k = 0; k < kOcvTerms; ++k) {
      CHECK(d[k] == doctest::Approx((tp[k] - tm[k]) / (2 * h)).epsilon(1e-6));
    }
  }
}

TEST_CASE("evaluation, clamping and gradient") {
  OcvCoefficients o;
  o.c = {3.7, 0.4, -0.1, 0.05, 0.0, 0.01};
  CHECK(ocv_eval(o, 1.0) == doctest::Approx(3.7 + 0.4 - 0.1 + 0.05 + 0.01));
  CHECK(ocv_eval(o, 1.3) == ocv_eval(o, 1.0));
  CHECK(ocv_eval(o, -0.2) == ocv_eval(o, 0.0));
  const auto g = ocv_grad(o, 0.4);
  CHECK(g.value == doctest::Approx(ocv_eval(o, 0.4)));
  CHECK(g.d_dz == doctest::Approx((ocv_eval(o, 0.4 + 1e-6) - ocv_eval(o, 0.4 - 1e-6)) / 2e-6).epsilon(1e-6));
  CHECK(ocv_grad(o, 1.2).d_dz == 0.0);
}

TEST_CASE("power series conversion is exact") {
  const double a[] = {3.30, 1.25, -0.9, 0.5};
  const OcvCoefficients o = ocv_from_power_series(a);
  for (double z = 0.0; z <= 1.0; z += 0.05) {
    CHECK(ocv_eval(o, z) == doctest::Approx(3.30 + 1.25 * z - 0.9 * z * z + 0.5 * z * z * z).epsilon(1e-13));
  }
  const double too_many[] = {1, 2, 3, 4, 5, 6, 7};
  CHECK_THROWS_AS(ocv_from_power_series(too_many), ConfigError);
}

}  // TEST_SUITE

TEST_SUITE("ecm") {

TEST_CASE("rk4 against the closed-form RC response") {
  const auto t0 = std::chrono::steady_clock::now();
  CHECK(oracles::rk4_vs_analytic(15.1, 852.3, 1000) < 1e-9);
  CHECK(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() < 1.0);
  // Exact zero-order-hold recursion under a varying current.
  const double tau = 15.1, c1 = 852.3, r1 = tau / c1;
  const double a = std::exp(-0.1 / tau);
  Rng rng(5);
  double v = 0.0, ref = 0.0, worst = 0.0;
  for (int k = 0; k < 1000; ++k) {
    const double i = rng.uniform(-2.0, 5.0);
    v = rc_rk4_step(v, i, tau, c1, 0.1);
    ref = ref * a + r1 * (1.0 - a) * i;
    worst = std::max(worst, std::abs(v - ref) / std::max(std::abs(ref), 1e-3));
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("circuit response") {
  const EcmParams p = oracles::reference_ecm();
  const std::size_t n = 3000;
  std::vector<double> z(n), zero(n, 0.0), one(n, 1.0);
  for (std::size_t k = 0; k < n; ++k) z[k] = 0.9 - 0.0001 * static_cast<double>(k);

  const auto v0 = simulate_ecm(p, zero, z);
  for (std::size_t k = 0; k < n; k += 100) CHECK(v0[k] == ocv_eval(p.ocv, z[k]));

  const auto v1 = simulate_ecm(p, one, z);
  // Instantaneous ohmic drop, then polarization settles to I * R1.
  CHECK(ocv_eval(p.ocv, z[0]) - v1[0] == doctest::Approx(0.0305).epsilon(1e-12));
  const double pol = ocv_eval(p.ocv, z[n - 1]) - 0.0305 - v1[n - 1];
  CHECK(pol == doctest::Approx(p.r1).epsilon(1e-6));
  CHECK(p.r1 * 1e3 == doctest::Approx(17.7).epsilon(0.01));

  // Affine in the current for fixed SOC.
  Rng rng(9);
  std::vector<double> ia(n), ib(n), iab(n);
  for (std::size_t k = 0; k < n; ++k) {
    ia[k] = rng.uniform(-1, 3);
    ib[k] = rng.uniform(-1, 3);
    iab[k] = ia[k] + ib[k];
  }
  const auto va = simulate_ecm(p, ia, z), vb = simulate_ecm(p, ib, z), vab = simulate_ecm(p, iab, z);
  for (std::size_t k = 0; k < n; k += 7) CHECK(vab[k] == doctest::Approx(va[k] + vb[k] - v0[k]).epsilon(1e-12));
}

TEST_CASE("jacobian matches finite differences") {
  const auto data = oracles::self_generated(oracles::reference_ecm(), 3, 0.0, 4);
  EcmParams p = oracles::reference_ecm();
  p.r0 *= 1.3;
  p.c1 *= 0.7;
  const Eigen::MatrixXd J = jacobian(p, data.windows, data.spec);
  auto stacked = [&](const EcmParams& q) {
    std::vector<double> out;
    for (const auto& w : data.windows) {
      const auto v = ecm_simulate(q, w, data.spec);
      out.insert(out.end(), v.begin(), v.end());
    }
    return out;
  };
  const auto base = p.to_array();
  double worst = 0.0;
  for (std::size_t j = 0; j < kEcmParamCount; ++j) {
    const double h = 1e-6 * std::max(1.0, std::abs(base[j]));
    auto plus = base, minus = base;
    plus[j] += h;
    minus[j] -= h;
    const auto vp = stacked(EcmParams::from_array(plus));
    const auto vm = stacked(EcmParams::from_array(minus));
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < vp.size(); ++k) {
      const double fd = (vp[k] - vm[k]) / (2 * h);
      num += (J(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) - fd) *
             (J(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) - fd);
      den += fd * fd;
    }
    worst = std::max(worst, std::sqrt(num / den));
  }
  CHECK(worst < 1e-5);
  // Exact columns: dV/dr0 = -I, dV/dc_k = T_k(2z - 1).
  const auto pw = to_physical(data.windows[0], data.spec);
  for (std::size_t k = 0; k < 50; ++k) {
    CHECK(J(static_cast<Eigen::Index>(k), 6) == doctest::Approx(-pw.current[k]).epsilon(1e-12));
    CHECK(J(static_cast<Eigen::Index>(k), 3) ==
          doctest::Approx(chebyshev_basis(2 * pw.soc[k] - 1)[3]).epsilon(1e-12));
  }
}

TEST_CASE("identification recovers self-generated parameters") {
  const EcmParams truth = oracles::reference_ecm();
  SUBCASE("noiseless") {
    const auto d = oracles::self_generated(truth, 12, 0.0, 21);
    const FitReport r = ecm_identify(d.windows, d.spec, initial_guess(d.windows, d.spec));
    CHECK(testing::rel_err(r.params.r0, truth.r0) < 1e-3);
    CHECK(testing::rel_err(r.params.r1, truth.r1) < 1e-3);
    CHECK(testing::rel_err(r.params.c1, truth.c1) < 1e-2);
    CHECK(r.rmse < 1e-5);
    for (std::size_t k = 1; k < r.cost_history.size(); ++k) CHECK(r.cost_history[k] <= r.cost_history[k - 1]);
  }
  SUBCASE("5 mV noise") {
    const auto d = oracles::self_generated(truth, 12, 0.005, 22);
    const FitReport r = ecm_identify(d.windows, d.spec, initial_guess(d.windows, d.spec));
    CHECK(testing::rel_err(r.params.r0, truth.r0) < 0.02);
    CHECK(r.rmse == doctest::Approx(0.005).epsilon(0.1));
  }
}

TEST_CASE("parameter file round trip") {
  testing::TempDir dir;
  EcmParams p = oracles::reference_ecm();
  p.ocv.c[2] = -0.0123456789012345;
  p.save(dir.path() / "ecm.kv");
  const EcmParams q = EcmParams::load(dir.path() / "ecm.kv");
  CHECK(testing::rel_err(q.r1, p.r1) < 1e-11);
  CHECK(testing::rel_err(q.ocv.c[2], p.ocv.c[2]) < 1e-11);
  EcmParams bad = p;
  bad.r0 = -1.0;
  CHECK_THROWS(bad.validate());
}

}  // TEST_SUITE
