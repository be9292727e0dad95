// SPDX-License-Identifier: Apache-2.0
//
// Independent reference computations shared by the unit suites and the
// acceptance runner.
#pragma once

#include <cmath>
#include <vector>

#include "ecmude/ecm.hpp"
#include "ecmude/pipeline.hpp"
#include "ecmude/rng.hpp"
#include "ecmude/ude.hpp"

namespace oracles {

/// Circuit values from a published 18650 NCA identification.
inline ecmude::EcmParams reference_ecm() {
  ecmude::EcmParams p;
  p.ocv.c = {3.80, 0.40, -0.05, 0.02, -0.01, 0.005};
  p.r0 = 0.0305;
  p.c1 = 852.3;
  p.r1 = 15.1 / 852.3;
  return p;
}

/// Max relative deviation of RK4 from the closed-form step response of the
/// RC branch over `steps` steps of 0.1 s under a constant 1 A.
inline double rk4_vs_analytic(double tau, double c1, int steps) {
  const double r1 = tau / c1;
  double v = 0.0;
  double worst = 0.0;
  for (int k = 1; k <= steps; ++k) {
    v = ecmude::rc_rk4_step(v, 1.0, tau, c1, 0.1);
    const double exact = r1 * (1.0 - std::exp(-0.1 * k / tau));
    worst = std::max(worst, std::abs(v - exact) / exact);
  }
  return worst;
}

/// Random pulse current, Ah counted with the same zero-order hold the models
/// use, and a placeholder voltage.
inline ecmude::CycleRecord excitation_cycle(std::size_t n, std::uint64_t seed) {
  ecmude::CycleRecord c;
  c.name = "excitation";
  ecmude::Rng rng(seed);
  double ah = 0.0;
  double level = 2.0;
  for (std::size_t k = 0; k < n; ++k) {
    if (k > 0 && k % 97 == 0) level = rng.uniform() < 0.25 ? 0.5 : rng.uniform(-0.5, 4.5);
    c.t.push_back(0.1 * static_cast<double>(k));
    c.current.push_back(level);
    c.temp.push_back(25.0 + rng.uniform(-0.5, 0.5));
    c.ah.push_back(ah);
    c.voltage.push_back(3.7 + 0.3 * rng.uniform());
    ah -= level * 0.1 / 3600.0;
  }
  return c;
}

struct SelfData {
  std::vector<ecmude::Window> windows;
  ecmude::NormalizationSpec spec;
};

/// Windows whose targets are the circuit's own response (V1 reset per
/// window, as in the model) plus optional Gaussian voltage noise.
inline SelfData self_generated(const ecmude::EcmParams& truth, std::size_t n_windows, double noise_std,
                               std::uint64_t seed) {
  using namespace ecmude;
  const std::size_t L = 1024;
  const std::size_t S = 512;
  CycleRecord c = derive_soc(excitation_cycle(L + (n_windows - 1) * S, seed));
  SelfData d;
  d.spec = fit_normalization(c, {0, c.size()});
  d.windows = make_windows(c, d.spec, L, S);
  Rng rng(seed ^ 0xABCDEFULL);
  for (auto& w : d.windows) {
    const auto v = ecm_simulate(truth, w, d.spec);
    for (std::size_t k = 0; k < w.length; ++k) {
      w.target[k] = d.spec.normalize(Channel::voltage, v[k] + noise_std * rng.normal());
    }
  }
  return d;
}

}  // namespace oracles
