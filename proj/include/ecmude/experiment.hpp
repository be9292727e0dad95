// SPDX-License-Identifier: Apache-2.0
//
// The four evaluation settings: matched-condition training and validation,
// inference-time SOC noise, temperature transfer and drive-cycle transfer.
#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ecmude/ecm.hpp"
#include "ecmude/eval.hpp"
#include "ecmude/kv_file.hpp"
#include "ecmude/pipeline.hpp"
#include "ecmude/synth.hpp"
#include "ecmude/trainer.hpp"

namespace ecmude {

struct ExperimentConfig {
  std::size_t window_length = 1024;
  std::size_t stride = 512;
  std::size_t transfer_stride = 1024;
  double train_fraction = 0.8;
  std::vector<std::uint64_t> seeds;  // default 0..29
  TrainConfig lstm = TrainConfig::lstm_defaults();
  TrainConfig ude = TrainConfig::ude_defaults();
  /// Unset means the charge discharged over the source cycle, which is the
  /// scale of the cycle-relative SOC.
  std::optional<double> q_nom;
  bool ude_train_circuit = true;
  std::vector<double> sigmas{0.01, 0.02, 0.05};
  int draws = 5;
  std::uint64_t noise_seed = 0;
  unsigned workers = 1;

  ExperimentConfig();
  /// Keys: window.length, window.stride, window.transfer_stride,
  /// split.train_fraction, seeds ("0-29" or "1,4,7"), lstm.<train key>,
  /// ude.<train key>, ude.q_nom, ude.train_circuit, perturb.sigmas,
  /// perturb.draws, perturb.seed, workers.
  static ExperimentConfig from_kv(const KvFile& kv);
  void validate() const;
};

/// "0-4" or "0,3,9" (mixed allowed: "0-2,7").
std::vector<std::uint64_t> parse_seed_list(const std::string& text);
std::vector<double> parse_double_list(const std::string& text);

struct MatchedData {
  CycleRecord cycle;  // with derived SOC
  NormalizationSpec spec;
  IndexRange train_range;
  WindowSplit split;
  double discharged_charge = 0.0;  // C, the SOC scale b

  double q_nom(const ExperimentConfig& config) const { return config.q_nom.value_or(discharged_charge); }
};

/// Derives SOC, splits window indices, fits the normalization on the
/// training raw range only, then builds and splits the windows.
MatchedData prepare_matched(CycleRecord cycle, std::size_t length, std::size_t stride, double train_fraction);

struct SummaryRow {
  std::string experiment;
  std::string condition;
  std::string model;
  std::string seed_or_draw;
  double mae_mv = 0.0;
  double p99_mv = 0.0;
};

/// Rows tagged "mean" or "std" summarize the per-seed rows above them.
bool is_aggregate(const SummaryRow& row);
/// Mean and sample std rows over per-seed MAE/P99 values.
void append_aggregate_rows(std::vector<SummaryRow>& rows, const std::string& experiment, const std::string& condition,
                           const std::string& model, std::span<const MetricsReport> per_seed);
std::string summary_csv(std::span<const SummaryRow> rows);
/// Inverse of summary_csv; throws DataError on a malformed header or row.
std::vector<SummaryRow> parse_summary_csv(const std::string& text);

struct ModelRuns {
  std::vector<SeedRun> runs;
  MatchedReport report;  // successful seeds only, in seed order
};

struct MatchedResult {
  FitReport ecm_fit;
  MetricsReport ecm_report;
  std::optional<ModelRuns> lstm;
  std::optional<ModelRuns> ude;
  std::vector<SummaryRow> rows;
};

MatchedResult run_matched(const MatchedData& data, const ExperimentConfig& config, bool with_lstm = true,
                          bool with_ude = true);

/// Checkpoint with the lowest validation loss among successful seeds.
const SeedRun& best_run(std::span<const SeedRun> runs);

/// The three models carried from the matched setting into the others.
struct SelectedModels {
  EcmParams ecm;
  NormalizationSpec spec;
  std::optional<Checkpoint> lstm;
  std::optional<Checkpoint> ude;

  std::vector<std::pair<std::string, std::unique_ptr<VoltagePredictor>>> predictors() const;
};

SelectedModels select_models(const MatchedResult& result, const MatchedData& data);

struct PerturbationResult {
  std::vector<std::pair<std::string, std::vector<PerturbationReport>>> per_model;  // sigma 0 first
  std::vector<SummaryRow> rows;
};

PerturbationResult run_perturbation(const SelectedModels& models, const MatchedData& data,
                                    const ExperimentConfig& config);

struct TransferTarget {
  std::string condition;
  CycleRecord cycle;
};

struct TransferResult {
  /// [target][model] in predictor order.
  std::vector<std::vector<std::pair<std::string, MetricsReport>>> per_target;
  std::vector<SummaryRow> rows;
};

TransferResult run_transfer(const SelectedModels& models, std::span<const TransferTarget> targets,
                            const ExperimentConfig& config, const std::string& experiment);

/// Synthetic source and transfer targets from one cell description. Targets
/// use a fresh trace (target seed), so none of their samples were seen in
/// training. Each target list starts with the unshifted condition on that
/// trace, the like-for-like reference for the shifted ones.
struct SyntheticSuite {
  CycleRecord source;
  std::vector<TransferTarget> temperature;  // source ambient, then colder ambients
  std::vector<TransferTarget> profile;      // source profile, then other profiles
};

struct SyntheticSuiteOptions {
  SynthProfile source_profile = SynthProfile::urban;
  double duration = 2400.0;
  double ambient = 25.0;
  double mean_current = kDefaultMeanCurrent;
  std::uint64_t seed = 7;
  std::optional<std::uint64_t> target_seed;  // unset: seed + 1
  std::vector<double> shifted_ambients{10.0, 0.0};
  std::vector<SynthProfile> shifted_profiles{SynthProfile::aggressive, SynthProfile::highway};
};

SyntheticSuite make_synthetic_suite(const SynthCellSpec& cell, const SyntheticSuiteOptions& options);

/// Keys: cell.ocv (power series, comma separated), cell.r0, cell.r1,
/// cell.c1, cell.r2, cell.c2, cell.vt, cell.temp_coeff, cell.capacity,
/// cell.initial_soc, cell.noise_std. Missing keys keep the reference cell.
SynthCellSpec synth_cell_from_kv(const KvFile& kv);

/// Keys: synthetic.profile, synthetic.duration, synthetic.ambient,
/// synthetic.mean_current, synthetic.seed, synthetic.target_seed,
/// synthetic.shifted_ambients, synthetic.shifted_profiles.
SyntheticSuiteOptions synth_options_from_kv(const KvFile& kv);

}  // namespace ecmude
