// SPDX-License-Identifier: Apache-2.0
//
// Synthetic drive cycles from a known higher-order cell: ohmic resistance,
// a slow polarization branch that may carry a charge-transfer (sinh)
// nonlinearity, and any number of linear RC branches. Resistances grow
// linearly with cold below 25 degC.
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ecmude/ecm.hpp"
#include "ecmude/pipeline.hpp"

namespace ecmude {

struct RcBranch {
  double r = 0.0;  // ohm
  double c = 1.0;  // farad
};

struct SynthCellSpec {
  OcvCoefficients ocv;
  double r0 = 0.030;
  /// Branch 0 is the slow polarization branch; for it `polarization_vt` > 0
  /// replaces the linear resistor by i = (vt / r) sinh(v / vt).
  std::vector<RcBranch> branches{{0.018, 850.0}, {0.008, 375.0}};
  double polarization_vt = 0.0;  // V; 0 keeps branch 0 linear
  double temp_coeff = 0.02;      // fractional resistance rise per degC below 25
  /// Depletion rise near empty: resistances scale by 1 + gain * exp(-s / width).
  double soc_resistance_gain = 0.0;
  double soc_resistance_width = 0.1;
  double capacity = 10440.0;     // C
  double initial_soc = 1.0;
  double noise_std = 0.0;        // V
  double heat_coeff = 0.12;      // steady-state degC per A^2
  double thermal_tau = 300.0;    // s

  /// OCV 3.30 + 1.25 s - 0.9 s^2 + 0.5 s^3, nonlinear slow branch,
  /// 1 mV measurement noise, initial SOC 0.98.
  static SynthCellSpec reference();

  void validate() const;
  /// Resistance multiplier at temperature `temp_c`.
  double resistance_scale(double temp_c) const;
  /// Resistance multiplier at true state of charge `soc`.
  double soc_resistance_scale(double soc) const;
};

enum class SynthProfile { urban, aggressive, highway, constant };
SynthProfile synth_profile_from_string(const std::string& s);
std::string to_string(SynthProfile p);

inline constexpr double kDefaultMeanCurrent = 4.2;  // A

/// Seeded current trace (positive = discharge) with the given mean.
std::vector<double> synth_current(SynthProfile profile, std::size_t n, double dt, double mean_current,
                                  std::uint64_t seed);

/// Ambient plus a first-order lagged I^2 heating rise.
std::vector<double> synth_temperature(const SynthCellSpec& spec, std::span<const double> current, double ambient,
                                      double dt);

struct TruthTrace {
  std::vector<double> voltage;  // noiseless terminal voltage
  std::vector<double> soc;      // true state of charge
  std::vector<std::vector<double>> branch_v;
};

/// Zero-order-hold simulation; linear branches use the exact exponential
/// update, the nonlinear branch RK4 on 10 sub-steps.
TruthTrace simulate_truth(const SynthCellSpec& spec, std::span<const double> current, std::span<const double> temp,
                          double dt = kSampleInterval);

/// duration >= 10 s; N = round(duration / dt) + 1 samples.
CycleRecord synth_cycle(const SynthCellSpec& spec, SynthProfile profile, double duration, double ambient,
                        std::uint64_t seed, double mean_current = kDefaultMeanCurrent);

/// Noiseless truth minus the 1RC simulation driven by the cycle's derived SOC.
std::vector<double> ground_truth_residual(const SynthCellSpec& spec, const EcmParams& fitted,
                                          const CycleRecord& cycle);

}  // namespace ecmude
