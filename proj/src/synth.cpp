// SPDX-License-Identifier: Apache-2.0
#include "ecmude/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ecmude/errors.hpp"
#include "ecmude/rk4.hpp"
#include "ecmude/rng.hpp"

namespace ecmude {

SynthCellSpec SynthCellSpec::reference() {
  SynthCellSpec s;
  const double poly[] = {3.30, 1.25, -0.9, 0.5};
  s.ocv = ocv_from_power_series(poly);
  s.polarization_vt = 0.04;
  s.noise_std = 0.001;
  s.initial_soc = 0.98;
  return s;
}

void SynthCellSpec::validate() const {
  if (!(r0 > 0.0)) throw ConfigError("synthetic r0 must be positive");
  if (branches.empty()) throw ConfigError("synthetic cell needs at least one RC branch");
  for (const auto& b : branches) {
    if (b.r < 0.0 || !(b.c > 0.0)) throw ConfigError("synthetic RC branch must have r >= 0 and c > 0");
  }
  if (!(branches.front().r > 0.0)) throw ConfigError("first RC branch must have positive resistance");
  if (polarization_vt < 0.0 || temp_coeff < 0.0 || noise_std < 0.0) {
    throw ConfigError("synthetic cell coefficients must be non-negative");
  }
  if (!(capacity > 0.0)) throw ConfigError("synthetic capacity must be positive");
  if (soc_resistance_gain < 0.0 || !(soc_resistance_width > 0.0)) {
    throw ConfigError("invalid depletion resistance coefficients");
  }
  if (!(thermal_tau > 0.0) || heat_coeff < 0.0) throw ConfigError("invalid thermal coefficients");
}

double SynthCellSpec::resistance_scale(double temp_c) const {
  return 1.0 + temp_coeff * std::max(0.0, 25.0 - temp_c);
}

double SynthCellSpec::soc_resistance_scale(double soc) const {
  return 1.0 + soc_resistance_gain * std::exp(-std::max(0.0, soc) / soc_resistance_width);
}

SynthProfile synth_profile_from_string(const std::string& s) {
  if (s == "urban") return SynthProfile::urban;
  if (s == "aggressive") return SynthProfile::aggressive;
  if (s == "highway") return SynthProfile::highway;
  if (s == "constant") return SynthProfile::constant;
  throw ConfigError("unknown profile '" + s + "' (expected urban, aggressive, highway or constant)");
}

std::string to_string(SynthProfile p) {
  switch (p) {
    case SynthProfile::urban: return "urban";
    case SynthProfile::aggressive: return "aggressive";
    case SynthProfile::highway: return "highway";
    case SynthProfile::constant: return "constant";
  }
  return "unknown";
}

namespace {

struct Archetype {
  double hold_min, hold_max;  // s
  double ramp_min, ramp_max;  // s
  double idle_p, regen_p;     // level probabilities
  double peak;                // high level relative to mean
  double regen;               // regen level relative to mean (negative)
  double spread;              // cruise spread relative to mean
  double filter_tau;          // s
};

Archetype archetype(SynthProfile p) {
  switch (p) {
    case SynthProfile::urban: return {4.0, 30.0, 1.0, 3.0, 0.25, 0.15, 3.0, -1.0, 0.6, 0.5};
    case SynthProfile::aggressive: return {1.5, 10.0, 0.3, 1.0, 0.15, 0.25, 4.5, -2.0, 1.0, 0.2};
    case SynthProfile::highway: return {30.0, 120.0, 5.0, 10.0, 0.02, 0.05, 1.6, -0.4, 0.25, 2.0};
    case SynthProfile::constant: break;
  }
  return {};
}

}  // namespace

std::vector<double> synth_current(SynthProfile profile, std::size_t n, double dt, double mean_current,
                                  std::uint64_t seed) {
  if (profile == SynthProfile::constant) return std::vector<double>(n, mean_current);
  const Archetype a = archetype(profile);
  Rng rng(seed);

  // Piecewise-constant random levels joined by linear ramps.
  std::vector<double> raw(n);
  double level = 0.0;
  std::size_t k = 0;
  while (k < n) {
    const double u = rng.uniform();
    double target;
    if (u < a.idle_p) {
      target = 0.0;
    } else if (u < a.idle_p + a.regen_p) {
      target = a.regen * rng.uniform(0.3, 1.0);
    } else if (rng.uniform() < 0.3) {
      target = a.peak * rng.uniform(0.6, 1.0);
    } else {
      target = 1.0 + a.spread * (2.0 * rng.uniform() - 1.0);
    }
    const auto ramp = static_cast<std::size_t>(std::max(1.0, rng.uniform(a.ramp_min, a.ramp_max) / dt));
    const auto hold = static_cast<std::size_t>(std::max(1.0, rng.uniform(a.hold_min, a.hold_max) / dt));
    for (std::size_t j = 0; j < ramp && k < n; ++j, ++k) {
      raw[k] = level + (target - level) * static_cast<double>(j + 1) / static_cast<double>(ramp);
    }
    for (std::size_t j = 0; j < hold && k < n; ++j, ++k) raw[k] = target;
    level = target;
  }

  // First-order low-pass to band-limit the edges.
  const double alpha = 1.0 - std::exp(-dt / a.filter_tau);
  double y = raw.front();
  for (double& v : raw) {
    y += alpha * (v - y);
    v = y;
  }
  const double m = std::accumulate(raw.begin(), raw.end(), 0.0) / static_cast<double>(n);
  if (!(m > 0.0)) throw DataError("synthetic profile has no net discharge");
  for (double& v : raw) v *= mean_current / m;
  return raw;
}

std::vector<double> synth_temperature(const SynthCellSpec& spec, std::span<const double> current, double ambient,
                                      double dt) {
  std::vector<double> t(current.size());
  double rise = 0.0;
  const double a = std::exp(-dt / spec.thermal_tau);
  for (std::size_t k = 0; k < current.size(); ++k) {
    t[k] = ambient + rise;
    rise = a * rise + (1.0 - a) * spec.heat_coeff * current[k] * current[k];
  }
  return t;
}

TruthTrace simulate_truth(const SynthCellSpec& spec, std::span<const double> current, std::span<const double> temp,
                          double dt) {
  spec.validate();
  if (current.size() != temp.size()) throw DataError("current and temperature lengths differ");
  const std::size_t n = current.size();
  const std::size_t nb = spec.branches.size();
  constexpr int kSubSteps = 10;

  TruthTrace tr;
  tr.voltage.resize(n);
  tr.soc.resize(n);
  tr.branch_v.assign(nb, std::vector<double>(n));
  std::vector<double> v(nb, 0.0);
  double s = spec.initial_soc;
  for (std::size_t k = 0; k < n; ++k) {
    const double i = current[k];
    const double g = spec.resistance_scale(temp[k]) * spec.soc_resistance_scale(s);
    double sum_v = 0.0;
    for (std::size_t b = 0; b < nb; ++b) {
      tr.branch_v[b][k] = v[b];
      sum_v += v[b];
    }
    tr.soc[k] = s;
    tr.voltage[k] = ocv_eval(spec.ocv, s) - spec.r0 * g * i - sum_v;

    for (std::size_t b = 0; b < nb; ++b) {
      const double r = spec.branches[b].r * g;
      const double c = spec.branches[b].c;
      if (r == 0.0) {
        v[b] = 0.0;
      } else if (b == 0 && spec.polarization_vt > 0.0) {
        const double vt = spec.polarization_vt;
        const double h = dt / kSubSteps;
        for (int j = 0; j < kSubSteps; ++j) {
          v[b] = rk4_step(v[b], h, [&](double x) { return (i - vt / r * std::sinh(x / vt)) / c; });
        }
      } else {
        const double a = std::exp(-dt / (r * c));
        v[b] = a * v[b] + r * (1.0 - a) * i;
      }
    }
    s -= i * dt / spec.capacity;
  }
  return tr;
}

CycleRecord synth_cycle(const SynthCellSpec& spec, SynthProfile profile, double duration, double ambient,
                        std::uint64_t seed, double mean_current) {
  spec.validate();
  if (!(duration >= 10.0)) throw ConfigError("synthetic duration must be at least 10 s");
  const double dt = kSampleInterval;
  const auto n = static_cast<std::size_t>(std::llround(duration / dt)) + 1;

  CycleRecord c;
  c.name = to_string(profile) + "_" + format_double(ambient, 6) + "C";
  c.dt = dt;
  c.t.resize(n);
  for (std::size_t k = 0; k < n; ++k) c.t[k] = static_cast<double>(k) * dt;
  c.current = synth_current(profile, n, dt, mean_current, derive_seed(seed, 1));
  c.temp = synth_temperature(spec, c.current, ambient, dt);
  c.voltage = simulate_truth(spec, c.current, c.temp, dt).voltage;

  // Cumulative ampere-hours, trapezoidal, negative while discharging.
  c.ah.resize(n);
  c.ah[0] = 0.0;
  for (std::size_t k = 1; k < n; ++k) c.ah[k] = c.ah[k - 1] - 0.5 * (c.current[k - 1] + c.current[k]) * dt / 3600.0;

  if (spec.noise_std > 0.0) {
    Rng rng(derive_seed(seed, 2));
    for (double& v : c.voltage) v += spec.noise_std * rng.normal();
  }
  return c;
}

std::vector<double> ground_truth_residual(const SynthCellSpec& spec, const EcmParams& fitted,
                                          const CycleRecord& cycle) {
  const CycleRecord with_soc = cycle.has_soc() ? cycle : derive_soc(cycle);
  const TruthTrace truth = simulate_truth(spec, with_soc.current, with_soc.temp, with_soc.dt);
  const std::vector<double> ecm = simulate_ecm(fitted, with_soc.current, with_soc.soc, with_soc.dt);
  std::vector<double> r(truth.voltage.size());
  for (std::size_t k = 0; k < r.size(); ++k) r[k] = truth.voltage[k] - ecm[k];
  return r;
}

}  // namespace ecmude
