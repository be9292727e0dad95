// SPDX-License-Identifier: Apache-2.0
//
// Hybrid circuit/learned model. States (V1, z) evolve as
//   dV1/dt = -V1 / (R1 C1) + I / C1 + s_f * f_theta(V1 / 0.1, I~, z~, T~)
//   dz/dt  = -eta * I / Q_nom
// with I and T held constant across each RK4 step, and
//   V = OCV(z) - R0 I - V1.
// Gradients are exact reverse-mode derivatives of the unrolled RK4 steps.
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "ecmude/ecm.hpp"
#include "ecmude/mlp.hpp"
#include "ecmude/pipeline.hpp"

namespace ecmude {

/// f_theta sees V1 / kPolarizationScale.
inline constexpr double kPolarizationScale = 0.1;  // V
/// f_theta output is multiplied by this to give a rate in V/s.
inline constexpr double kCorrectionScale = 0.01;   // V/s
inline constexpr double kEtaMin = 0.8;
inline constexpr double kEtaMax = 1.1;
/// 2.9 Ah.
inline constexpr double kDefaultNominalCapacity = 10440.0;  // C

struct HybridState {
  double v1 = 0.0;
  double z = 1.0;
};

struct HybridRate {
  double dv1 = 0.0;
  double dz = 0.0;
};

struct UdeModel {
  EcmParams ecm;
  MlpCorrection net;
  double eta = 1.0;
  double q_nom = kDefaultNominalCapacity;
  bool train_circuit = true;

  /// Flat trainable vector: theta (1249), u (eta = 0.8 + 0.3 sigmoid(u)),
  /// c0..c5, ln R0, ln R1, ln C1.
  static constexpr std::size_t kParamCount = MlpCorrection::kParamCount + 1 + kEcmParamCount;
  static constexpr std::size_t kEtaIndex = MlpCorrection::kParamCount;
  static constexpr std::size_t kCircuitIndex = kEtaIndex + 1;

  std::vector<double> pack() const;
  void unpack(std::span<const double> flat);

  void validate() const;
};

double eta_from_raw(double u);
double raw_from_eta(double eta);

/// Circuit parameters copied verbatim, freshly initialized network with a
/// zero output layer, eta = 1.
UdeModel warm_start(const EcmParams& ecm_fit, double q_nom = kDefaultNominalCapacity, std::uint64_t seed = 0);

HybridRate hybrid_rhs(const UdeModel& model, const HybridState& state, double current_amps, double temp_c,
                      const NormalizationSpec& spec);

struct UdeTrace {
  std::vector<double> voltage;  // V
  std::vector<double> v1;       // V
  std::vector<double> soc;      // integrated z (unclamped)
};

/// Starts from (V1 = 0, z = window.init_soc). Throws DivergenceError on a
/// non-finite state.
UdeTrace ude_simulate(const UdeModel& model, const Window& window, const NormalizationSpec& spec);

/// Same integration for several equal-length windows at once.
std::vector<UdeTrace> ude_simulate_batch(const UdeModel& model, std::span<const Window* const> windows,
                                         const NormalizationSpec& spec);

/// Mean squared error in normalized voltage over all samples of the batch.
/// `grad` (size UdeModel::kParamCount) receives d(loss)/d(packed params).
double ude_loss_and_grad(const UdeModel& model, std::span<const Window* const> batch,
                         const NormalizationSpec& spec, std::span<double> grad);

/// Loss only, no recording.
double ude_loss(const UdeModel& model, std::span<const Window* const> batch, const NormalizationSpec& spec);

}  // namespace ecmude
