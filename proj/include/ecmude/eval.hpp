// SPDX-License-Identifier: Apache-2.0
//
// Voltage error metrics, overlap-averaged reconstruction, zero-shot transfer
// and inference-time SOC perturbation.
#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "ecmude/ecm.hpp"
#include "ecmude/pipeline.hpp"
#include "ecmude/trainer.hpp"
#include "ecmude/ude.hpp"

namespace ecmude {

struct MetricsReport {
  double mae = 0.0;  // V
  double p99 = 0.0;  // V
  std::size_t n_samples = 0;
  std::string condition;
};

/// Percentile (q in [0, 100]) with linear interpolation between order
/// statistics at position (n - 1) q / 100.
double percentile(std::vector<double> values, double q);

MetricsReport compute_metrics(std::span<const double> pred, std::span<const double> meas,
                              const std::string& condition = {});

struct WindowPrediction {
  std::size_t start_index = 0;
  std::vector<double> values;  // V
};

struct Reconstruction {
  std::vector<double> values;          // mean of covering windows, 0 where uncovered
  std::vector<unsigned char> covered;  // 1 where at least one window contributes
};

Reconstruction reconstruct(std::span<const WindowPrediction> predictions, std::size_t n);

/// A trained model mapping normalized windows to physical voltage traces.
class VoltagePredictor {
 public:
  virtual ~VoltagePredictor() = default;
  virtual ModelKind kind() const = 0;
  virtual const NormalizationSpec& spec() const = 0;
  virtual std::vector<std::vector<double>> predict(std::span<const Window> windows) const = 0;
};

std::unique_ptr<VoltagePredictor> make_ecm_predictor(const EcmParams& params, const NormalizationSpec& spec);
std::unique_ptr<VoltagePredictor> make_lstm_predictor(std::vector<double> params, const NormalizationSpec& spec);
std::unique_ptr<VoltagePredictor> make_ude_predictor(const UdeModel& model, const NormalizationSpec& spec);
std::unique_ptr<VoltagePredictor> make_predictor(const Checkpoint& checkpoint);

std::vector<WindowPrediction> predict_windows(const VoltagePredictor& model, std::span<const Window> windows);

/// Overlap-averaged prediction over the windows' raw range, scored against
/// the measured cycle voltage on covered samples.
MetricsReport evaluate_reconstructed(const VoltagePredictor& model, std::span<const Window> windows,
                                     const CycleRecord& cycle, const std::string& condition = {});

struct MatchedReport {
  std::vector<MetricsReport> per_seed;
  double mae_mean = 0.0;
  double mae_std = 0.0;  // sample std over seeds
  double p99_mean = 0.0;
  double p99_std = 0.0;
};

MatchedReport evaluate_matched(std::span<const VoltagePredictor* const> seeds, std::span<const Window> val,
                               const CycleRecord& cycle);

/// Windows of the target cycle under the model's (source) normalization;
/// predictions and measurements concatenated window by window.
MetricsReport evaluate_transfer(const VoltagePredictor& model, const CycleRecord& target, std::size_t length,
                                std::size_t stride, const std::string& condition = {});

struct PerturbationReport {
  double sigma_z = 0.0;
  std::vector<double> mae;  // V, one per draw
  std::vector<double> p99;  // V, one per draw
  double mae_mean = 0.0;
  double mae_std = 0.0;
};

/// Gaussian noise of sigma_z added to the raw z channel per sample, clipped
/// to [0, 1], renormalized with the model's spec; each window's initial SOC
/// comes from the perturbed channel. sigma_z = 0 runs the unperturbed path
/// once.
PerturbationReport perturb_soc(const VoltagePredictor& model, std::span<const Window> val, const CycleRecord& cycle,
                               double sigma_z, int draws, std::uint64_t seed);

}  // namespace ecmude
