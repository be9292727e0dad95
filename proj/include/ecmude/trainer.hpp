// SPDX-License-Identifier: Apache-2.0
//
// Gradient training loop shared by the LSTM baseline and the hybrid model.
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "ecmude/ecm.hpp"
#include "ecmude/kv_file.hpp"
#include "ecmude/lstm.hpp"
#include "ecmude/pipeline.hpp"
#include "ecmude/ude.hpp"

namespace ecmude {

struct TrainConfig {
  int max_epochs = 30;
  double peak_lr = 2e-4;
  double weight_decay = 1e-5;
  int warmup_epochs = 3;
  int patience = 8;
  double clip_norm = 0.5;
  int batch_size = 16;
  std::uint64_t seed = 0;

  static TrainConfig lstm_defaults();
  static TrainConfig ude_defaults();

  void validate() const;
  void store(KvFile& kv, const std::string& prefix) const;
  static TrainConfig load(const KvFile& kv, const std::string& prefix, const TrainConfig& fallback);
};

struct AdamState {
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEpsilon = 1e-8;

  std::vector<double> m;
  std::vector<double> v;
  long long step = 0;

  explicit AdamState(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

struct AdamStepResult {
  bool applied = false;     // false when the gradient was non-finite
  double grad_norm = 0.0;   // before clipping
};

/// Global-norm clipping, then Adam with bias correction and decoupled weight
/// decay (params *= 1 - lr * wd where decay_mask is set).
AdamStepResult adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, double lr,
                         double weight_decay, double clip_norm, std::span<const unsigned char> decay_mask = {});

/// Linear warmup peak * (epoch + 1) / warmup, then cosine from peak to 0 at
/// max_epochs.
double lr_schedule(const TrainConfig& config, int epoch);

/// What the training loop needs from a model.
class Trainable {
 public:
  virtual ~Trainable() = default;
  virtual std::vector<double> parameters() const = 0;
  virtual void set_parameters(std::span<const double> params) = 0;
  virtual std::vector<unsigned char> decay_mask() const = 0;
  /// Mean-squared normalized-voltage loss of the batch; writes the gradient.
  virtual double loss_and_grad(std::span<const Window* const> batch, std::span<double> grad) = 0;
  virtual double loss(std::span<const Window> windows) = 0;
};

class LstmTrainable final : public Trainable {
 public:
  explicit LstmTrainable(LstmBaseline net) : net_(std::move(net)) {}
  std::vector<double> parameters() const override;
  void set_parameters(std::span<const double> params) override;
  std::vector<unsigned char> decay_mask() const override;
  double loss_and_grad(std::span<const Window* const> batch, std::span<double> grad) override;
  double loss(std::span<const Window> windows) override;
  const LstmBaseline& net() const { return net_; }

 private:
  LstmBaseline net_;
};

class UdeTrainable final : public Trainable {
 public:
  UdeTrainable(UdeModel model, NormalizationSpec spec) : model_(std::move(model)), spec_(spec) {}
  std::vector<double> parameters() const override;
  void set_parameters(std::span<const double> params) override;
  /// Decay applies to the network weights only.
  std::vector<unsigned char> decay_mask() const override;
  double loss_and_grad(std::span<const Window* const> batch, std::span<double> grad) override;
  double loss(std::span<const Window> windows) override;
  const UdeModel& model() const { return model_; }

 private:
  UdeModel model_;
  NormalizationSpec spec_;
};

/// Batched LSTM predictions in normalized volts, one vector per window.
std::vector<std::vector<double>> lstm_predict(std::span<const double> params, std::span<const Window> windows);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;
  double grad_norm_mean = 0.0;
  double grad_norm_max = 0.0;
  int skipped_steps = 0;
};

struct TrainLog {
  double initial_val_loss = 0.0;  // before any update
  std::vector<EpochRecord> epochs;
  bool diverged = false;
  bool early_stopped = false;

  std::string to_csv() const;
};

enum class ModelKind { ecm, lstm, ude };
std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& s);

struct Checkpoint {
  static constexpr int kVersion = 1;

  ModelKind kind = ModelKind::lstm;
  std::vector<double> params;      // LSTM weights or packed UDE vector
  EcmParams ecm;                   // circuit parameters (hybrid and circuit-only kinds)
  NormalizationSpec spec;
  TrainConfig config;
  double q_nom = kDefaultNominalCapacity;
  bool train_circuit = true;
  double best_val_loss = 0.0;
  int epoch = -1;

  UdeModel ude_model() const;
  LstmBaseline lstm() const;

  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);
};

struct FitResult {
  std::vector<double> best_params;
  double best_val_loss = 0.0;
  int best_epoch = -1;
  TrainLog log;
};

/// Shuffled mini-batch epochs; keeps the parameters with the lowest
/// validation loss; stops after `patience` epochs without improvement.
FitResult fit(Trainable& model, std::span<const Window> train, std::span<const Window> val,
              const TrainConfig& config);

struct TrainResult {
  Checkpoint checkpoint;
  TrainLog log;
};

TrainResult fit_lstm(std::span<const Window> train, std::span<const Window> val, const NormalizationSpec& spec,
                     const TrainConfig& config);

TrainResult fit_ude(const EcmParams& ecm_fit, std::span<const Window> train, std::span<const Window> val,
                    const NormalizationSpec& spec, const TrainConfig& config,
                    double q_nom = kDefaultNominalCapacity, bool train_circuit = true);

struct SeedRun {
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  TrainResult result;
};

/// One independent run per seed (seeds must be distinct). Failures are
/// captured per seed. `workers` > 1 runs seeds on parallel threads.
std::vector<SeedRun> run_seeds(const std::function<TrainResult(std::uint64_t seed)>& train_one,
                               std::span<const std::uint64_t> seeds, unsigned workers = 1);

}  // namespace ecmude
