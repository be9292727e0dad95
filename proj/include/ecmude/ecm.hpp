// SPDX-License-Identifier: Apache-2.0
//
// First-order Thevenin circuit (ECM-1RC):
//   V = OCV(z) - R0 I - V1,   dV1/dt = -V1 / (R1 C1) + I / C1
// integrated with fixed-step RK4, V1 = 0 at every window start.
#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ecmude/kv_file.hpp"
#include "ecmude/ocv.hpp"
#include "ecmude/pipeline.hpp"

namespace ecmude {

inline constexpr std::size_t kEcmParamCount = kOcvTerms + 3;

struct EcmParams {
  OcvCoefficients ocv;
  double r0 = 0.010;   // ohm
  double r1 = 0.010;   // ohm
  double c1 = 1000.0;  // farad

  double tau() const { return r1 * c1; }
  void validate() const;

  /// Order: c0..c5, r0, r1, c1.
  std::array<double, kEcmParamCount> to_array() const;
  static EcmParams from_array(const std::array<double, kEcmParamCount>& a);

  void store(KvFile& kv, const std::string& prefix, int significant_digits) const;
  static EcmParams load(const KvFile& kv, const std::string& prefix);
  /// Standalone key-value file, SI units, 12 significant digits.
  void save(const std::filesystem::path& path) const;
  static EcmParams load(const std::filesystem::path& path);
};

/// Physical-unit view of a window.
struct PhysicalWindow {
  std::vector<double> current;  // A
  std::vector<double> temp;     // degC
  std::vector<double> soc;      // z
  std::vector<double> voltage;  // V
};

PhysicalWindow to_physical(const Window& window, const NormalizationSpec& spec);

/// RHS of the RC branch with the input held constant over the step.
inline double rc_rhs(double v1, double current, double tau, double c1) {
  return -v1 / tau + current / c1;
}

/// One RK4 step of the RC branch (dt in seconds).
double rc_rk4_step(double v1, double current, double tau, double c1, double dt);

/// Simulated terminal voltage for a supplied current/SOC trace.
std::vector<double> simulate_ecm(const EcmParams& params, std::span<const double> current,
                                 std::span<const double> soc, double dt = kSampleInterval);

/// Window-level simulation using the window's (denormalized) SOC channel.
std::vector<double> ecm_simulate(const EcmParams& params, const Window& window, const NormalizationSpec& spec);

/// Per-sample partials dV/dp for p = (c0..c5, r0, r1, c1), rows = samples of
/// all windows concatenated in order.
Eigen::MatrixXd jacobian(const EcmParams& params, std::span<const Window> windows, const NormalizationSpec& spec);

struct LmOptions {
  double initial_lambda = 1e-3;
  double lambda_up = 10.0;
  double lambda_down = 10.0;
  double relative_tolerance = 1e-10;
  int max_iterations = 200;
};

struct FitReport {
  EcmParams params;
  double rmse = 0.0;  // volts, over all training samples
  int iterations = 0;
  bool converged = false;
  std::vector<double> cost_history;  // sum of squares after each accepted step
};

/// r0 = r1 = 10 mOhm, c1 = 1000 F; OCV coefficients by linear least squares
/// of measured voltage on T_k(2z - 1).
EcmParams initial_guess(std::span<const Window> train, const NormalizationSpec& spec);

/// Levenberg-Marquardt on (c0..c5, ln r0, ln r1, ln c1), equal per-sample
/// weights over the concatenated windows, residuals in volts.
FitReport ecm_identify(std::span<const Window> train, const NormalizationSpec& spec, const EcmParams& init,
                       const LmOptions& options = {});

}  // namespace ecmude
