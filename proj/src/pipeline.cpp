// SPDX-License-Identifier: Apache-2.0
#include "ecmude/pipeline.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "ecmude/errors.hpp"

namespace ecmude {

namespace {

constexpr std::array<const char*, 5> kColumns = {"t", "current", "voltage", "temp", "ah"};

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    const auto first = cell.find_first_not_of(' ');
    out.push_back(first == std::string::npos ? std::string{} : cell.substr(first));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double mean_of(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

double std_of(std::span<const double> x, double mean) {
  double s = 0.0;
  for (double v : x) s += (v - mean) * (v - mean);
  return std::sqrt(s / static_cast<double>(x.size()));
}

}  // namespace

void validate_cycle(const CycleRecord& c) {
  const std::size_t n = c.t.size();
  if (n < 2) throw DataError("cycle '" + c.name + "' has fewer than 2 samples");
  if (c.current.size() != n || c.voltage.size() != n || c.temp.size() != n || c.ah.size() != n) {
    throw DataError("cycle '" + c.name + "' has sequences of unequal length");
  }
  if (!c.soc.empty() && c.soc.size() != n) throw DataError("soc length mismatch");
  if (!(c.dt > 0.0)) throw DataError("sampling interval must be positive");
  for (std::size_t k = 1; k < n; ++k) {
    if (std::abs((c.t[k] - c.t[k - 1]) - c.dt) > kTimestampTolerance) {
      throw DataError("non-uniform sampling at row " + std::to_string(k));
    }
  }
}

CycleRecord load_cycle_csv(const std::filesystem::path& path, double dt) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path.string() + "'");

  std::string line;
  if (!std::getline(in, line)) throw DataError(path.string() + ": empty file");
  const auto header = split_csv_line(line);
  std::array<std::size_t, kColumns.size()> col{};
  for (std::size_t c = 0; c < kColumns.size(); ++c) {
    auto it = std::find(header.begin(), header.end(), kColumns[c]);
    if (it == header.end()) {
      throw DataError(path.string() + ": missing column '" + kColumns[c] + "'");
    }
    col[c] = static_cast<std::size_t>(it - header.begin());
  }

  CycleRecord cycle;
  cycle.name = path.stem().string();
  cycle.dt = dt;
  std::array<std::vector<double>*, kColumns.size()> dst = {&cycle.t, &cycle.current, &cycle.voltage,
                                                           &cycle.temp, &cycle.ah};
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    for (std::size_t c = 0; c < kColumns.size(); ++c) {
      if (col[c] >= cells.size()) {
        throw DataError(path.string() + ": row " + std::to_string(row) + " is missing column '" +
                        kColumns[c] + "'");
      }
      try {
        dst[c]->push_back(parse_double(cells[col[c]]));
      } catch (const DataError&) {
        throw DataError(path.string() + ": non-numeric cell in column '" + kColumns[c] + "' at row " +
                        std::to_string(row));
      }
    }
    ++row;
  }
  try {
    validate_cycle(cycle);
  } catch (const DataError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  return cycle;
}

void write_cycle_csv(const CycleRecord& cycle, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << "t,current,voltage,temp,ah\n";
  char buf[256];
  for (std::size_t k = 0; k < cycle.size(); ++k) {
    std::snprintf(buf, sizeof(buf), "%.10g,%.17g,%.17g,%.17g,%.17g\n", cycle.t[k], cycle.current[k],
                  cycle.voltage[k], cycle.temp[k], cycle.ah[k]);
    out << buf;
  }
}

CycleRecord derive_soc(CycleRecord cycle) {
  validate_cycle(cycle);
  const double min_ah = *std::min_element(cycle.ah.begin(), cycle.ah.end());
  if (!(min_ah < 0.0)) throw DataError("no discharge in cycle '" + cycle.name + "'");
  const double b = -min_ah;
  cycle.soc.resize(cycle.size());
  for (std::size_t k = 0; k < cycle.size(); ++k) {
    cycle.soc[k] = std::clamp((cycle.ah[k] + b) / b, 0.0, 1.0);
  }
  return cycle;
}

double NormalizationSpec::normalize(Channel channel, double x) const {
  switch (channel) {
    case Channel::current: return (x - current_mean) / current_std;
    case Channel::voltage: return (x - voltage_mean) / voltage_std;
    case Channel::temp: return (x - temp_offset) / temp_scale;
    case Channel::soc: return (x - soc_center) / soc_scale;
  }
  return x;
}

double NormalizationSpec::denormalize(Channel channel, double x) const {
  switch (channel) {
    case Channel::current: return x * current_std + current_mean;
    case Channel::voltage: return x * voltage_std + voltage_mean;
    case Channel::temp: return x * temp_scale + temp_offset;
    case Channel::soc: return x * soc_scale + soc_center;
  }
  return x;
}

void NormalizationSpec::validate() const {
  if (!(current_std > 0.0) || !(voltage_std > 0.0) || !(temp_scale > 0.0) || !(soc_scale > 0.0)) {
    throw ConfigError("normalization scales must be positive");
  }
}

void NormalizationSpec::store(KvFile& kv, const std::string& prefix, int digits) const {
  kv.set(prefix + "current_mean", current_mean, digits);
  kv.set(prefix + "current_std", current_std, digits);
  kv.set(prefix + "voltage_mean", voltage_mean, digits);
  kv.set(prefix + "voltage_std", voltage_std, digits);
  kv.set(prefix + "temp_offset", temp_offset, digits);
  kv.set(prefix + "temp_scale", temp_scale, digits);
  kv.set(prefix + "soc_center", soc_center, digits);
  kv.set(prefix + "soc_scale", soc_scale, digits);
}

NormalizationSpec NormalizationSpec::load(const KvFile& kv, const std::string& prefix) {
  NormalizationSpec s;
  s.current_mean = kv.get_double(prefix + "current_mean");
  s.current_std = kv.get_double(prefix + "current_std");
  s.voltage_mean = kv.get_double(prefix + "voltage_mean");
  s.voltage_std = kv.get_double(prefix + "voltage_std");
  s.temp_offset = kv.get_double(prefix + "temp_offset");
  s.temp_scale = kv.get_double(prefix + "temp_scale");
  s.soc_center = kv.get_double(prefix + "soc_center");
  s.soc_scale = kv.get_double(prefix + "soc_scale");
  s.validate();
  return s;
}

void NormalizationSpec::save(const std::filesystem::path& path) const {
  KvFile kv;
  store(kv, "", 10);
  kv.write(path);
}

NormalizationSpec NormalizationSpec::load(const std::filesystem::path& path) {
  return load(KvFile::read(path), "");
}

NormalizationSpec fit_normalization(const CycleRecord& cycle, IndexRange r) {
  if (r.begin >= r.end || r.end > cycle.size()) throw DataError("empty or out-of-range training range");
  const std::span<const double> cur(cycle.current.data() + r.begin, r.size());
  const std::span<const double> volt(cycle.voltage.data() + r.begin, r.size());
  NormalizationSpec spec;
  spec.current_mean = mean_of(cur);
  spec.current_std = std_of(cur, spec.current_mean);
  spec.voltage_mean = mean_of(volt);
  spec.voltage_std = std_of(volt, spec.voltage_mean);
  if (!(spec.current_std > 0.0)) throw DataError("degenerate signal: current has zero variance");
  if (!(spec.voltage_std > 0.0)) throw DataError("degenerate signal: voltage has zero variance");
  return spec;
}

std::vector<Window> make_windows(const CycleRecord& cycle, const NormalizationSpec& spec,
                                 std::size_t length, std::size_t stride) {
  if (!cycle.has_soc()) throw DataError("cycle '" + cycle.name + "' has no derived soc");
  if (length == 0 || stride == 0 || stride > length) throw ConfigError("require 1 <= stride <= length");
  const std::size_t n = cycle.size();
  if (n < length) {
    throw DataError("cycle '" + cycle.name + "' shorter (" + std::to_string(n) + ") than window length " +
                    std::to_string(length));
  }
  const std::size_t count = (n - length) / stride + 1;
  std::vector<Window> out;
  out.reserve(count);
  for (std::size_t w = 0; w < count; ++w) {
    Window win;
    win.start_index = w * stride;
    win.length = length;
    win.inputs.resize(length * kInputChannels);
    win.target.resize(length);
    for (std::size_t k = 0; k < length; ++k) {
      const std::size_t i = win.start_index + k;
      win.input(k, kInCurrent) = spec.normalize(Channel::current, cycle.current[i]);
      win.input(k, kInTemp) = spec.normalize(Channel::temp, cycle.temp[i]);
      win.input(k, kInSoc) = spec.normalize(Channel::soc, cycle.soc[i]);
      win.target[k] = spec.normalize(Channel::voltage, cycle.voltage[i]);
    }
    win.init_soc = cycle.soc[win.start_index];
    out.push_back(std::move(win));
  }
  return out;
}

SplitSpec SplitSpec::for_windows(std::size_t length, std::size_t stride, double train_fraction) {
  if (stride == 0) throw ConfigError("stride must be positive");
  SplitSpec s;
  s.train_fraction = train_fraction;
  s.guard_windows = (length + stride - 1) / stride - 1;
  return s;
}

std::size_t train_window_count(std::size_t n_windows, double train_fraction) {
  return static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(n_windows) + 1e-9));
}

WindowSplit temporal_split(std::span<const Window> windows, const SplitSpec& split) {
  if (!(split.train_fraction > 0.0 && split.train_fraction < 1.0)) {
    throw ConfigError("train_fraction must lie in (0, 1)");
  }
  const std::size_t n = windows.size();
  const std::size_t n_train = train_window_count(n, split.train_fraction);
  if (n_train <= split.guard_windows || n_train >= n) {
    throw DataError("too few windows (" + std::to_string(n) + ") for a temporal split with " +
                    std::to_string(split.guard_windows) + " guard window(s)");
  }
  WindowSplit out;
  out.train.assign(windows.begin(), windows.begin() + static_cast<std::ptrdiff_t>(n_train - split.guard_windows));
  out.val.assign(windows.begin() + static_cast<std::ptrdiff_t>(n_train), windows.end());
  return out;
}

IndexRange covered_range(std::span<const Window> windows) {
  if (windows.empty()) return {};
  IndexRange r{windows.front().start_index, windows.front().start_index};
  for (const auto& w : windows) {
    r.begin = std::min(r.begin, w.start_index);
    r.end = std::max(r.end, w.start_index + w.length);
  }
  return r;
}

}  // namespace ecmude
