// SPDX-License-Identifier: Apache-2.0
//
// Cycle ingestion, cycle-relative SOC derivation, windowing, temporal split
// with a leakage guard band, and the mixed empirical/fixed normalization.
#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ecmude/kv_file.hpp"

namespace ecmude {

/// Sampling interval of the drive-cycle data (10 Hz).
inline constexpr double kSampleInterval = 0.1;
/// Maximum tolerated deviation of a timestamp step from dt, seconds.
inline constexpr double kTimestampTolerance = 1e-6;

/// One drive cycle, uniformly sampled. Current is positive on discharge;
/// `ah` is cumulative ampere-hours (<= 0 while discharging). `soc` stays
/// empty until derive_soc() fills it.
struct CycleRecord {
  std::string name;
  double dt = kSampleInterval;
  std::vector<double> t;
  std::vector<double> current;
  std::vector<double> voltage;
  std::vector<double> temp;
  std::vector<double> ah;
  std::vector<double> soc;

  std::size_t size() const { return t.size(); }
  bool has_soc() const { return !soc.empty(); }
};

/// Reads a `t,current,voltage,temp,ah` CSV (column order free, extra columns
/// ignored) and validates uniform sampling against `dt`.
CycleRecord load_cycle_csv(const std::filesystem::path& path, double dt = kSampleInterval);

/// Writes the canonical CSV schema (soc is not written; it is always derived).
void write_cycle_csv(const CycleRecord& cycle, const std::filesystem::path& path);

/// Checks length, equal sequence sizes and uniform spacing; throws DataError.
void validate_cycle(const CycleRecord& cycle);

/// z(t) = (Ah(t) + b) / b with b = -min Ah, clipped to [0, 1].
CycleRecord derive_soc(CycleRecord cycle);

enum class Channel { current, voltage, temp, soc };

/// Current and voltage use z-scores from the training subset; temperature
/// and SOC use fixed physical constants that are never refitted.
struct NormalizationSpec {
  double current_mean = 0.0;
  double current_std = 1.0;
  double voltage_mean = 0.0;
  double voltage_std = 1.0;
  double temp_offset = 0.0;
  double temp_scale = 25.0;
  double soc_center = 0.5;
  double soc_scale = 0.3;

  double normalize(Channel channel, double x) const;
  double denormalize(Channel channel, double x) const;

  /// Throws ConfigError when a scale is not strictly positive.
  void validate() const;

  void store(KvFile& kv, const std::string& prefix, int significant_digits) const;
  static NormalizationSpec load(const KvFile& kv, const std::string& prefix);

  /// Standalone key-value file, 10 significant digits.
  void save(const std::filesystem::path& path) const;
  static NormalizationSpec load(const std::filesystem::path& path);
};

/// Half-open raw sample range [begin, end).
struct IndexRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - begin; }
};

/// Empirical current/voltage statistics over `train_range` only.
NormalizationSpec fit_normalization(const CycleRecord& cycle, IndexRange train_range);

/// Per-timestep input channels, in storage order.
enum InputChannel : std::size_t { kInCurrent = 0, kInTemp = 1, kInSoc = 2, kInputChannels = 3 };

/// A length-L slice of normalized inputs (I, T, z) plus the normalized
/// voltage target. `init_soc` is the physical z at start_index.
struct Window {
  std::size_t start_index = 0;
  std::size_t length = 0;
  std::vector<double> inputs;  // row-major L x 3
  std::vector<double> target;  // length L
  double init_soc = 1.0;

  double input(std::size_t k, std::size_t channel) const { return inputs[k * kInputChannels + channel]; }
  double& input(std::size_t k, std::size_t channel) { return inputs[k * kInputChannels + channel]; }
};

/// Windows starting at k*stride; count = floor((N - L) / S) + 1.
std::vector<Window> make_windows(const CycleRecord& cycle, const NormalizationSpec& spec,
                                 std::size_t length, std::size_t stride);

struct SplitSpec {
  double train_fraction = 0.8;
  std::size_t guard_windows = 0;

  /// guard = ceil(L / S) - 1.
  static SplitSpec for_windows(std::size_t length, std::size_t stride, double train_fraction = 0.8);
};

struct WindowSplit {
  std::vector<Window> train;
  std::vector<Window> val;
};

/// First train_fraction of the windows go to training, minus `guard_windows`
/// taken off the training side of the boundary; the rest is validation.
WindowSplit temporal_split(std::span<const Window> windows, const SplitSpec& split);

/// Number of windows assigned to training before the guard band is removed.
std::size_t train_window_count(std::size_t n_windows, double train_fraction);

/// Raw range covered by a contiguous run of windows.
IndexRange covered_range(std::span<const Window> windows);

}  // namespace ecmude
