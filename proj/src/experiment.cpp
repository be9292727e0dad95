// SPDX-License-Identifier: Apache-2.0
#include "ecmude/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "ecmude/errors.hpp"
#include "ecmude/rng.hpp"
#include "ecmude/stats.hpp"

namespace ecmude {

ExperimentConfig::ExperimentConfig() {
  for (std::uint64_t s = 0; s < 30; ++s) seeds.push_back(s);
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_commas(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::uint64_t parse_u64(const std::string& s) {
  if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos) {
    throw ConfigError("invalid seed '" + s + "'");
  }
  return std::stoull(s);
}

}  // namespace

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  for (const auto& item : split_commas(text)) {
    const auto dash = item.find('-');
    if (dash == std::string::npos) {
      seeds.push_back(parse_u64(item));
      continue;
    }
    const std::uint64_t lo = parse_u64(trim(item.substr(0, dash)));
    const std::uint64_t hi = parse_u64(trim(item.substr(dash + 1)));
    if (hi < lo) throw ConfigError("empty seed range '" + item + "'");
    for (std::uint64_t s = lo; s <= hi; ++s) seeds.push_back(s);
  }
  if (seeds.empty()) throw ConfigError("seed list is empty");
  return seeds;
}

std::vector<double> parse_double_list(const std::string& text) {
  std::vector<double> out;
  for (const auto& item : split_commas(text)) {
    try {
      out.push_back(parse_double(item));
    } catch (const DataError&) {
      throw ConfigError("invalid number '" + item + "'");
    }
  }
  return out;
}

ExperimentConfig ExperimentConfig::from_kv(const KvFile& kv) {
  ExperimentConfig c;
  c.window_length = static_cast<std::size_t>(kv.get_int_or("window.length", static_cast<long long>(c.window_length)));
  c.stride = static_cast<std::size_t>(kv.get_int_or("window.stride", static_cast<long long>(c.stride)));
  c.transfer_stride = static_cast<std::size_t>(
      kv.get_int_or("window.transfer_stride", static_cast<long long>(c.transfer_stride)));
  c.train_fraction = kv.get_double_or("split.train_fraction", c.train_fraction);
  if (auto s = kv.find("seeds")) c.seeds = parse_seed_list(*s);
  c.lstm = TrainConfig::load(kv, "lstm.", c.lstm);
  c.ude = TrainConfig::load(kv, "ude.", c.ude);
  if (kv.contains("ude.q_nom")) c.q_nom = kv.get_double("ude.q_nom");
  c.ude_train_circuit = kv.get_int_or("ude.train_circuit", 1) != 0;
  if (auto s = kv.find("perturb.sigmas")) c.sigmas = parse_double_list(*s);
  c.draws = static_cast<int>(kv.get_int_or("perturb.draws", c.draws));
  if (auto s = kv.find("perturb.seed")) c.noise_seed = parse_u64(*s);
  c.workers = static_cast<unsigned>(kv.get_int_or("workers", c.workers));
  c.validate();
  return c;
}

void ExperimentConfig::validate() const {
  if (window_length < 2 || stride < 1 || transfer_stride < 1) throw ConfigError("invalid window geometry");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("train fraction must be in (0, 1)");
  if (seeds.empty()) throw ConfigError("seed list is empty");
  lstm.validate();
  ude.validate();
  if (q_nom && !(*q_nom > 0.0)) throw ConfigError("nominal capacity must be positive");
  for (double s : sigmas) {
    if (!(s > 0.0)) throw ConfigError("noise levels must be positive (sigma 0 is always evaluated)");
  }
  if (draws < 1) throw ConfigError("need at least one Monte Carlo draw");
  if (workers < 1) throw ConfigError("workers must be >= 1");
}

MatchedData prepare_matched(CycleRecord cycle, std::size_t length, std::size_t stride, double train_fraction) {
  MatchedData d;
  d.cycle = derive_soc(std::move(cycle));
  d.discharged_charge = -*std::min_element(d.cycle.ah.begin(), d.cycle.ah.end()) * 3600.0;
  const std::size_t n = d.cycle.size();
  if (n < length) throw DataError("cycle shorter than one window");
  const std::size_t count = (n - length) / stride + 1;
  const SplitSpec split = SplitSpec::for_windows(length, stride, train_fraction);
  const std::size_t head = train_window_count(count, train_fraction);
  if (head <= split.guard_windows || head >= count) throw DataError("too few windows for a train/validation split");
  const std::size_t n_train = head - split.guard_windows;
  d.train_range = {0, (n_train - 1) * stride + length};
  d.spec = fit_normalization(d.cycle, d.train_range);
  const auto windows = make_windows(d.cycle, d.spec, length, stride);
  d.split = temporal_split(windows, split);
  return d;
}

bool is_aggregate(const SummaryRow& row) { return row.seed_or_draw == "mean" || row.seed_or_draw == "std"; }

void append_aggregate_rows(std::vector<SummaryRow>& rows, const std::string& experiment, const std::string& condition,
                           const std::string& model, std::span<const MetricsReport> per_seed) {
  std::vector<double> mae, p99;
  for (const auto& m : per_seed) {
    mae.push_back(m.mae * 1e3);
    p99.push_back(m.p99 * 1e3);
  }
  rows.push_back({experiment, condition, model, "mean", mean(mae), mean(p99)});
  rows.push_back({experiment, condition, model, "std", sample_std(mae), sample_std(p99)});
}

std::string summary_csv(std::span<const SummaryRow> rows) {
  std::ostringstream os;
  os << "experiment,condition,model,seed_or_draw,mae_mV,p99_mV\n";
  for (const auto& r : rows) {
    os << r.experiment << ',' << r.condition << ',' << r.model << ',' << r.seed_or_draw << ',' << format_double(r.mae_mv, 10)
       << ',' << format_double(r.p99_mv, 10) << '\n';
  }
  return os.str();
}

std::vector<SummaryRow> parse_summary_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "experiment,condition,model,seed_or_draw,mae_mV,p99_mV") {
    throw DataError("not a summary table (bad header)");
  }
  std::vector<SummaryRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string item;
    while (std::getline(ss, item, ',')) f.push_back(item);
    if (f.size() != 6) throw DataError("summary line " + std::to_string(lineno) + ": expected 6 fields");
    rows.push_back({f[0], f[1], f[2], f[3], parse_double(f[4]), parse_double(f[5])});
  }
  return rows;
}

namespace {

ModelRuns collect(std::vector<SeedRun> runs, const MatchedData& data, const std::string& model,
                  std::vector<SummaryRow>& rows) {
  ModelRuns out;
  std::vector<std::unique_ptr<VoltagePredictor>> owned;
  std::vector<const VoltagePredictor*> preds;
  std::vector<std::uint64_t> seeds;
  for (const auto& r : runs) {
    if (!r.ok) continue;
    owned.push_back(make_predictor(r.result.checkpoint));
    preds.push_back(owned.back().get());
    seeds.push_back(r.seed);
  }
  out.runs = std::move(runs);
  if (preds.empty()) throw DivergenceError("every " + model + " seed failed", 0);
  out.report = evaluate_matched(preds, data.split.val, data.cycle);
  for (std::size_t j = 0; j < seeds.size(); ++j) {
    const auto& m = out.report.per_seed[j];
    rows.push_back({"1", "matched", model, std::to_string(seeds[j]), m.mae * 1e3, m.p99 * 1e3});
  }
  append_aggregate_rows(rows, "1", "matched", model, out.report.per_seed);
  return out;
}

}  // namespace

MatchedResult run_matched(const MatchedData& data, const ExperimentConfig& config, bool with_lstm, bool with_ude) {
  config.validate();
  const auto& train = data.split.train;
  const auto& val = data.split.val;
  MatchedResult r;

  r.ecm_fit = ecm_identify(train, data.spec, initial_guess(train, data.spec));
  r.ecm_report = evaluate_reconstructed(*make_ecm_predictor(r.ecm_fit.params, data.spec), val, data.cycle, "matched");
  r.rows.push_back({"1", "matched", "ecm", "-", r.ecm_report.mae * 1e3, r.ecm_report.p99 * 1e3});

  if (with_lstm) {
    auto runs = run_seeds(
        [&](std::uint64_t seed) {
          TrainConfig c = config.lstm;
          c.seed = seed;
          return fit_lstm(train, val, data.spec, c);
        },
        config.seeds, config.workers);
    r.lstm = collect(std::move(runs), data, "lstm", r.rows);
  }
  if (with_ude) {
    auto runs = run_seeds(
        [&](std::uint64_t seed) {
          TrainConfig c = config.ude;
          c.seed = seed;
          return fit_ude(r.ecm_fit.params, train, val, data.spec, c, data.q_nom(config), config.ude_train_circuit);
        },
        config.seeds, config.workers);
    r.ude = collect(std::move(runs), data, "ude", r.rows);
  }
  return r;
}

const SeedRun& best_run(std::span<const SeedRun> runs) {
  const SeedRun* best = nullptr;
  for (const auto& r : runs) {
    if (!r.ok) continue;
    if (!best || r.result.checkpoint.best_val_loss < best->result.checkpoint.best_val_loss) best = &r;
  }
  if (!best) throw DivergenceError("no successful training run", 0);
  return *best;
}

std::vector<std::pair<std::string, std::unique_ptr<VoltagePredictor>>> SelectedModels::predictors() const {
  std::vector<std::pair<std::string, std::unique_ptr<VoltagePredictor>>> out;
  out.emplace_back("ecm", make_ecm_predictor(ecm, spec));
  if (lstm) out.emplace_back("lstm", make_predictor(*lstm));
  if (ude) out.emplace_back("ude", make_predictor(*ude));
  return out;
}

SelectedModels select_models(const MatchedResult& result, const MatchedData& data) {
  SelectedModels m;
  m.ecm = result.ecm_fit.params;
  m.spec = data.spec;
  if (result.lstm) m.lstm = best_run(result.lstm->runs).result.checkpoint;
  if (result.ude) m.ude = best_run(result.ude->runs).result.checkpoint;
  return m;
}

PerturbationResult run_perturbation(const SelectedModels& models, const MatchedData& data,
                                    const ExperimentConfig& config) {
  PerturbationResult out;
  for (const auto& [name, pred] : models.predictors()) {
    std::vector<PerturbationReport> reports;
    reports.push_back(perturb_soc(*pred, data.split.val, data.cycle, 0.0, 1, 0));
    out.rows.push_back({"2", "sigma=0", name, "-", reports.back().mae[0] * 1e3, reports.back().p99[0] * 1e3});
    for (std::size_t s = 0; s < config.sigmas.size(); ++s) {
      // Same noise realizations for every model.
      const std::uint64_t seed = derive_seed(config.noise_seed, s);
      reports.push_back(perturb_soc(*pred, data.split.val, data.cycle, config.sigmas[s], config.draws, seed));
      const auto& rep = reports.back();
      for (std::size_t d = 0; d < rep.mae.size(); ++d) {
        out.rows.push_back({"2", "sigma=" + format_double(config.sigmas[s], 6), name, std::to_string(d),
                            rep.mae[d] * 1e3, rep.p99[d] * 1e3});
      }
    }
    out.per_model.emplace_back(name, std::move(reports));
  }
  return out;
}

TransferResult run_transfer(const SelectedModels& models, std::span<const TransferTarget> targets,
                            const ExperimentConfig& config, const std::string& experiment) {
  TransferResult out;
  const auto preds = models.predictors();
  for (const auto& t : targets) {
    std::vector<std::pair<std::string, MetricsReport>> row;
    for (const auto& [name, pred] : preds) {
      MetricsReport m = evaluate_transfer(*pred, t.cycle, config.window_length, config.transfer_stride, t.condition);
      out.rows.push_back({experiment, t.condition, name, "-", m.mae * 1e3, m.p99 * 1e3});
      row.emplace_back(name, std::move(m));
    }
    out.per_target.push_back(std::move(row));
  }
  return out;
}

SyntheticSuite make_synthetic_suite(const SynthCellSpec& cell, const SyntheticSuiteOptions& o) {
  SyntheticSuite s;
  s.source = synth_cycle(cell, o.source_profile, o.duration, o.ambient, o.seed, o.mean_current);
  const std::uint64_t ts = o.target_seed.value_or(o.seed + 1);
  auto temp_target = [&](double t) {
    return TransferTarget{"T=" + format_double(t, 6) + "C",
                          synth_cycle(cell, o.source_profile, o.duration, t, ts, o.mean_current)};
  };
  auto profile_target = [&](SynthProfile p) {
    return TransferTarget{to_string(p), synth_cycle(cell, p, o.duration, o.ambient, ts, o.mean_current)};
  };
  s.temperature.push_back(temp_target(o.ambient));
  for (double t : o.shifted_ambients) s.temperature.push_back(temp_target(t));
  s.profile.push_back(profile_target(o.source_profile));
  for (SynthProfile p : o.shifted_profiles) s.profile.push_back(profile_target(p));
  return s;
}

SynthCellSpec synth_cell_from_kv(const KvFile& kv) {
  SynthCellSpec c = SynthCellSpec::reference();
  if (auto s = kv.find("cell.ocv")) c.ocv = ocv_from_power_series(parse_double_list(*s));
  c.r0 = kv.get_double_or("cell.r0", c.r0);
  c.branches[0].r = kv.get_double_or("cell.r1", c.branches[0].r);
  c.branches[0].c = kv.get_double_or("cell.c1", c.branches[0].c);
  c.branches[1].r = kv.get_double_or("cell.r2", c.branches[1].r);
  c.branches[1].c = kv.get_double_or("cell.c2", c.branches[1].c);
  c.polarization_vt = kv.get_double_or("cell.vt", c.polarization_vt);
  c.temp_coeff = kv.get_double_or("cell.temp_coeff", c.temp_coeff);
  c.capacity = kv.get_double_or("cell.capacity", c.capacity);
  c.initial_soc = kv.get_double_or("cell.initial_soc", c.initial_soc);
  c.noise_std = kv.get_double_or("cell.noise_std", c.noise_std);
  c.validate();
  return c;
}

SyntheticSuiteOptions synth_options_from_kv(const KvFile& kv) {
  SyntheticSuiteOptions o;
  if (auto s = kv.find("synthetic.profile")) o.source_profile = synth_profile_from_string(*s);
  o.duration = kv.get_double_or("synthetic.duration", o.duration);
  o.ambient = kv.get_double_or("synthetic.ambient", o.ambient);
  o.mean_current = kv.get_double_or("synthetic.mean_current", o.mean_current);
  if (auto s = kv.find("synthetic.seed")) o.seed = parse_u64(*s);
  if (auto s = kv.find("synthetic.target_seed")) o.target_seed = parse_u64(*s);
  if (auto s = kv.find("synthetic.shifted_ambients")) o.shifted_ambients = parse_double_list(*s);
  if (auto s = kv.find("synthetic.shifted_profiles")) {
    o.shifted_profiles.clear();
    for (const auto& name : split_commas(*s)) o.shifted_profiles.push_back(synth_profile_from_string(name));
  }
  if (!(o.duration >= 10.0)) throw ConfigError("synthetic duration must be at least 10 s");
  if (!(o.mean_current > 0.0)) throw ConfigError("synthetic mean current must be positive");
  return o;
}

}  // namespace ecmude
