// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "ecmude/ecm.hpp"
#include "ecmude/errors.hpp"
#include "ecmude/synth.hpp"
#include "helpers.hpp"

using namespace ecmude;

namespace {

/// Linear, temperature-independent cell whose true SOC equals the derived
/// SOC of a full 1 A, 3600 s constant discharge.
SynthCellSpec linear_cell(double r2) {
  SynthCellSpec s = SynthCellSpec::reference();
  s.polarization_vt = 0.0;
  s.branches = {{0.018, 850.0}, {r2, 375.0}};
  s.temp_coeff = 0.0;
  s.capacity = 3600.0;
  s.initial_soc = 1.0;
  s.noise_std = 0.0;
  return s;
}

EcmParams first_order_part(const SynthCellSpec& s) {
  EcmParams p;
  p.ocv = s.ocv;
  p.r0 = s.r0;
  p.r1 = s.branches[0].r;
  p.c1 = s.branches[0].c;
  return p;
}

double rms(const std::vector<double>& x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return std::sqrt(s / static_cast<double>(x.size()));
}

}  // namespace

TEST_SUITE("synth") {

TEST_CASE("constant discharge bookkeeping") {
  const CycleRecord c = synth_cycle(linear_cell(0.008), SynthProfile::constant, 3600.0, 25.0, 1, 1.0);
  CHECK(c.size() == 36001);
  CHECK(c.ah.back() == doctest::Approx(-1.0).epsilon(1e-12));
  for (double i : c.current) CHECK(i == 1.0);
  const CycleRecord d = derive_soc(c);
  for (std::size_t k = 1; k < d.size(); ++k) REQUIRE(d.soc[k] <= d.soc[k - 1]);
}

TEST_CASE("two-branch step response") {
  SynthCellSpec s = linear_cell(0.008);
  s.capacity = 1e12;  // freeze the SOC
  const CycleRecord c = synth_cycle(s, SynthProfile::constant, 60.0, 25.0, 2, 1.0);
  const double ocv = ocv_eval(s.ocv, 1.0);
  double worst = 0.0;
  for (std::size_t k = 0; k < c.size(); ++k) {
    const double t = 0.1 * static_cast<double>(k);
    double v = ocv - s.r0;
    for (const auto& b : s.branches) v -= b.r * (1.0 - std::exp(-t / (b.r * b.c)));
    worst = std::max(worst, std::abs(c.voltage[k] - v));
  }
  CHECK(worst < 1e-9);
}

TEST_CASE("residual against the generating first-order circuit") {
  const CycleRecord lin = synth_cycle(linear_cell(0.0), SynthProfile::constant, 3600.0, 25.0, 3, 1.0);
  CHECK(rms(ground_truth_residual(linear_cell(0.0), first_order_part(linear_cell(0.0)), lin)) < 1e-8);

  const CycleRecord two = synth_cycle(linear_cell(0.008), SynthProfile::constant, 3600.0, 25.0, 3, 1.0);
  CHECK(rms(ground_truth_residual(linear_cell(0.008), first_order_part(linear_cell(0.008)), two)) > 1e-3);
}

TEST_CASE("identification on a first-order synthetic cycle") {
  SynthCellSpec s = linear_cell(0.0);
  s.branches = {{0.018, 850.0}};
  s.capacity = 8000.0;
  const CycleRecord c = derive_soc(synth_cycle(s, SynthProfile::urban, 1800.0, 25.0, 4, 1.5));
  const double b = -*std::min_element(c.ah.begin(), c.ah.end()) * 3600.0;
  // Re-express the true OCV over the cycle-relative SOC so the generating
  // circuit is exactly representable.
  // s_true = 1 - (1 - z) b / capacity.
  const double k = b / s.capacity;
  EcmParams truth = first_order_part(s);
  {
    const double a0 = 3.30, a1 = 1.25, a2 = -0.9, a3 = 0.5;
    // p(z) = a(1 - k + k z)
    const double u = 1.0 - k;
    const double pw[] = {a0 + a1 * u + a2 * u * u + a3 * u * u * u, k * (a1 + 2 * a2 * u + 3 * a3 * u * u),
                         k * k * (a2 + 3 * a3 * u), k * k * k * a3};
    truth.ocv = ocv_from_power_series(pw);
  }
  // Trapezoidal Ah against the truth's zero-order hold leaves ~1e-5 V.
  CHECK(rms(ground_truth_residual(s, truth, c)) < 1e-4);

  const auto spec = fit_normalization(c, {0, c.size()});
  const auto windows = make_windows(c, spec, 1024, 512);
  const FitReport r = ecm_identify(windows, spec, initial_guess(windows, spec));
  // Windows restart the polarization at zero while the cycle does not, so
  // recovery is approximate.
  CHECK(testing::rel_err(r.params.r0, s.r0) < 0.02);
  CHECK(testing::rel_err(r.params.r1, s.branches[0].r) < 0.15);
}

TEST_CASE("determinism and validation") {
  const SynthCellSpec s = SynthCellSpec::reference();
  const CycleRecord a = synth_cycle(s, SynthProfile::aggressive, 120.0, 10.0, 9);
  const CycleRecord b = synth_cycle(s, SynthProfile::aggressive, 120.0, 10.0, 9);
  CHECK(a.voltage == b.voltage);
  CHECK(a.current == b.current);
  CHECK(a.temp == b.temp);
  const CycleRecord other = synth_cycle(s, SynthProfile::aggressive, 120.0, 10.0, 10);
  CHECK(other.current != a.current);
  CHECK_THROWS_AS(synth_cycle(s, SynthProfile::urban, 5.0, 25.0, 1), ConfigError);
  CHECK_THROWS_AS(synth_profile_from_string("rural"), ConfigError);
  SynthCellSpec bad = s;
  bad.branches.clear();
  CHECK_THROWS(bad.validate());
}

TEST_CASE("profiles hit their mean current") {
  for (auto p : {SynthProfile::urban, SynthProfile::aggressive, SynthProfile::highway}) {
    const auto i = synth_current(p, 36000, 0.1, 2.0, 5);
    double m = 0.0;
    for (double x : i) m += x;
    CHECK(m / static_cast<double>(i.size()) == doctest::Approx(2.0).epsilon(1e-9));
  }
}

TEST_CASE("colder ambient raises resistance") {
  const SynthCellSpec s = SynthCellSpec::reference();
  CHECK(s.resistance_scale(25.0) == 1.0);
  CHECK(s.resistance_scale(10.0) == doctest::Approx(1.3));
  CHECK(s.resistance_scale(35.0) == 1.0);
  const CycleRecord warm = synth_cycle(s, SynthProfile::urban, 600.0, 25.0, 3);
  const CycleRecord cold = synth_cycle(s, SynthProfile::urban, 600.0, 0.0, 3);
  double mw = 0.0, mc = 0.0;
  for (std::size_t k = 0; k < warm.size(); ++k) {
    mw += warm.voltage[k];
    mc += cold.voltage[k];
  }
  CHECK(mc < mw);
}

}  // TEST_SUITE
