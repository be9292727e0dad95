// SPDX-License-Identifier: Apache-2.0
//
// ecmude: drives ingestion, circuit identification, training and the four
// evaluation settings from a key-value config. Every stage reads what the
// previous one left under the output root, so stages can be re-run alone.
//
//   <out>/manifest.kv                      effective config and its hash
//   <out>/summary.csv                      all experiment summaries
//   <out>/<experiment>/summary.csv
//   <out>/1/ecm/fit/ecm.kv                 circuit fit and normalization
//   <out>/1/<model>/<seed>/checkpoint.txt  plus train_log.csv
//   <out>/stats.csv, <out>/plots/*.csv
#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ecmude/errors.hpp"
#include "ecmude/experiment.hpp"
#include "ecmude/stats.hpp"

namespace fs = std::filesystem;
using namespace ecmude;

namespace {

constexpr int kExitOther = 1;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitDivergence = 4;

constexpr const char* kOutEnv = "ECMUDE_OUT";
constexpr const char* kEcmRunDir = "fit";

struct Options {
  std::string config;
  std::string out;
  std::string data;
  std::vector<std::string> synthetic;
  std::string seeds;
  std::string seed;
  std::string model = "all";
  int experiment = 0;
  unsigned workers = 0;
};

struct Context {
  KvFile kv;
  ExperimentConfig config;
  fs::path out;
  std::vector<std::string> models;  // trainable models selected
};

double parse_duration(const std::string& text) {
  double scale = 1.0;
  std::string num = text;
  if (num.ends_with("min")) {
    scale = 60.0;
    num.resize(num.size() - 3);
  } else if (num.ends_with("h")) {
    scale = 3600.0;
    num.pop_back();
  } else if (num.ends_with("s")) {
    num.pop_back();
  }
  try {
    return parse_double(num) * scale;
  } catch (const DataError&) {
    throw ConfigError("invalid duration '" + text + "' (examples: 600, 600s, 40min, 2h)");
  }
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

Context load_context(const Options& o) {
  Context c;
  if (!o.config.empty()) c.kv = KvFile::read(o.config);
  if (!o.data.empty()) c.kv.set("data.source", o.data);
  if (!o.synthetic.empty()) {
    synth_profile_from_string(o.synthetic[0]);
    c.kv.set("synthetic.profile", o.synthetic[0]);
    c.kv.set("synthetic.duration", parse_duration(o.synthetic[1]), 17);
  }
  if (!o.seeds.empty()) c.kv.set("seeds", o.seeds);
  if (!o.seed.empty()) c.kv.set("seeds", o.seed);
  if (o.workers > 0) c.kv.set_int("workers", o.workers);
  c.config = ExperimentConfig::from_kv(c.kv);

  if (!o.out.empty()) {
    c.out = o.out;
  } else if (const char* env = std::getenv(kOutEnv); env && *env) {
    c.out = env;
  } else {
    c.out = "ecmude-runs";
  }

  if (o.model == "all") {
    c.models = {"lstm", "ude"};
  } else if (o.model == "lstm" || o.model == "ude") {
    c.models = {o.model};
  } else if (o.model != "ecm") {
    throw ConfigError("unknown model '" + o.model + "' (expected ecm, lstm, ude or all)");
  }
  return c;
}

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write '" + path.string() + "'");
  f << text;
}

std::optional<std::string> read_text(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) return std::nullopt;
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::string require_text(const fs::path& path, const std::string& producer) {
  auto t = read_text(path);
  if (!t) throw ConfigError("missing prerequisite '" + path.string() + "': run " + producer + " first");
  return *t;
}

void write_manifest(const Context& c) {
  KvFile m;
  m.set("config_hash", [&] {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(c.kv.to_string())));
    return std::string(buf);
  }());
  for (const auto& [k, v] : c.kv.entries()) m.set("config." + k, v);
  fs::create_directories(c.out);
  m.write(c.out / "manifest.kv");
}

bool is_synthetic(const KvFile& kv) { return kv.contains("synthetic.profile"); }

CycleRecord load_source(const KvFile& kv) {
  if (is_synthetic(kv)) {
    const auto o = synth_options_from_kv(kv);
    return synth_cycle(synth_cell_from_kv(kv), o.source_profile, o.duration, o.ambient, o.seed, o.mean_current);
  }
  if (auto p = kv.find("data.source")) return load_cycle_csv(*p);
  throw ConfigError("no source cycle: set data.source, or pass --data or --synthetic");
}

MatchedData load_matched(const Context& c) {
  return prepare_matched(load_source(c.kv), c.config.window_length, c.config.stride, c.config.train_fraction);
}

std::vector<TransferTarget> load_targets(const KvFile& kv, int experiment) {
  if (is_synthetic(kv)) {
    auto suite = make_synthetic_suite(synth_cell_from_kv(kv), synth_options_from_kv(kv));
    return experiment == 3 ? std::move(suite.temperature) : std::move(suite.profile);
  }
  const std::string prefix = experiment == 3 ? "target.temperature." : "target.profile.";
  std::vector<TransferTarget> out;
  for (const auto& [k, v] : kv.entries()) {
    if (k.starts_with(prefix)) out.push_back({k.substr(prefix.size()), load_cycle_csv(v)});
  }
  return out;
}

fs::path run_dir(const Context& c, const std::string& model, const std::string& seed) {
  return c.out / "1" / model / seed;
}

// --- fit-ecm ---------------------------------------------------------------

int cmd_fit_ecm(const Context& c) {
  const MatchedData d = load_matched(c);
  const FitReport fr = ecm_identify(d.split.train, d.spec, initial_guess(d.split.train, d.spec));
  KvFile kv;
  fr.params.store(kv, "ecm.", 17);
  d.spec.store(kv, "spec.", 17);
  kv.set("fit.rmse_mV", fr.rmse * 1e3, 10);
  kv.set_int("fit.iterations", fr.iterations);
  kv.set_int("fit.converged", fr.converged ? 1 : 0);
  fs::create_directories(run_dir(c, "ecm", kEcmRunDir));
  kv.write(run_dir(c, "ecm", kEcmRunDir) / "ecm.kv");
  std::printf("ecm: r0 %.6g ohm  r1 %.6g ohm  c1 %.6g F  rmse %.4g mV  (%d iterations)\n", fr.params.r0,
              fr.params.r1, fr.params.c1, fr.rmse * 1e3, fr.iterations);
  return 0;
}

struct EcmArtifact {
  EcmParams params;
  NormalizationSpec spec;
};

EcmArtifact load_ecm(const Context& c) {
  const fs::path p = run_dir(c, "ecm", kEcmRunDir) / "ecm.kv";
  const KvFile kv = KvFile::parse(require_text(p, "fit-ecm"));
  return {EcmParams::load(kv, "ecm."), NormalizationSpec::load(kv, "spec.")};
}

// --- train -------------------------------------------------------------------

int cmd_train(const Context& c) {
  if (c.models.empty()) return cmd_fit_ecm(c);
  const MatchedData d = load_matched(c);
  std::optional<EcmArtifact> ecm;
  bool any_failed = false;
  for (const auto& model : c.models) {
    if (model == "ude" && !ecm) ecm = load_ecm(c);
    auto runs = run_seeds(
        [&](std::uint64_t seed) {
          TrainConfig tc = model == "ude" ? c.config.ude : c.config.lstm;
          tc.seed = seed;
          if (model == "lstm") return fit_lstm(d.split.train, d.split.val, d.spec, tc);
          return fit_ude(ecm->params, d.split.train, d.split.val, d.spec, tc, d.q_nom(c.config),
                         c.config.ude_train_circuit);
        },
        c.config.seeds, c.config.workers);
    for (const auto& r : runs) {
      const fs::path dir = run_dir(c, model, std::to_string(r.seed));
      fs::create_directories(dir);
      fs::remove(dir / "error.txt");
      if (!r.ok) {
        any_failed = true;
        write_text(dir / "error.txt", r.error + "\n");
        std::printf("%s seed %llu: failed: %s\n", model.c_str(), static_cast<unsigned long long>(r.seed),
                    r.error.c_str());
        continue;
      }
      r.result.checkpoint.save(dir / "checkpoint.txt");
      write_text(dir / "train_log.csv", r.result.log.to_csv());
      std::printf("%s seed %llu: best epoch %d, validation loss %.6g\n", model.c_str(),
                  static_cast<unsigned long long>(r.seed), r.result.checkpoint.epoch,
                  r.result.checkpoint.best_val_loss);
    }
    if (std::none_of(runs.begin(), runs.end(), [](const SeedRun& r) { return r.ok; })) {
      throw DivergenceError("every " + model + " seed failed", 0);
    }
  }
  return any_failed ? kExitDivergence : 0;
}

// --- checkpoints -------------------------------------------------------------

struct SeedCheckpoint {
  std::uint64_t seed = 0;
  Checkpoint checkpoint;
};

std::vector<SeedCheckpoint> load_checkpoints(const Context& c, const std::string& model) {
  std::vector<SeedCheckpoint> out;
  for (std::uint64_t s : c.config.seeds) {
    const fs::path p = run_dir(c, model, std::to_string(s)) / "checkpoint.txt";
    if (fs::exists(p)) out.push_back({s, Checkpoint::load(p)});
  }
  return out;
}

SelectedModels load_selected(const Context& c) {
  const EcmArtifact ecm = load_ecm(c);
  SelectedModels m;
  m.ecm = ecm.params;
  m.spec = ecm.spec;
  for (const auto& model : c.models) {
    const auto cps = load_checkpoints(c, model);
    if (cps.empty()) {
      throw ConfigError("missing prerequisite: no " + model + " checkpoints under '" + (c.out / "1" / model).string() +
                        "': run train first");
    }
    // Lowest validation loss; ties go to the lower seed.
    const auto best = std::min_element(cps.begin(), cps.end(), [](const SeedCheckpoint& a, const SeedCheckpoint& b) {
      return a.checkpoint.best_val_loss < b.checkpoint.best_val_loss;
    });
    (model == "lstm" ? m.lstm : m.ude) = best->checkpoint;
  }
  return m;
}

void write_summary(const Context& c, int experiment, const std::vector<SummaryRow>& rows) {
  write_text(c.out / std::to_string(experiment) / "summary.csv", summary_csv(rows));
  std::vector<SummaryRow> all;
  for (int e = 1; e <= 4; ++e) {
    if (auto t = read_text(c.out / std::to_string(e) / "summary.csv")) {
      auto r = parse_summary_csv(*t);
      all.insert(all.end(), r.begin(), r.end());
    }
  }
  // Re-serialized from parsed values; the 10-digit format round-trips.
  write_text(c.out / "summary.csv", summary_csv(all));
}

void print_rows(const std::vector<SummaryRow>& rows) {
  for (const auto& r : rows) {
    std::printf("%-3s %-14s %-5s %-6s MAE %9.4f mV  P99 %9.4f mV\n", r.experiment.c_str(), r.condition.c_str(),
                r.model.c_str(), r.seed_or_draw.c_str(), r.mae_mv, r.p99_mv);
  }
}

// --- eval (matched) ----------------------------------------------------------

int cmd_eval(const Context& c) {
  const MatchedData d = load_matched(c);
  const EcmArtifact ecm = load_ecm(c);
  std::vector<SummaryRow> rows;
  const auto em = evaluate_reconstructed(*make_ecm_predictor(ecm.params, d.spec), d.split.val, d.cycle);
  rows.push_back({"1", "matched", "ecm", "-", em.mae * 1e3, em.p99 * 1e3});
  for (const auto& model : c.models) {
    std::vector<MetricsReport> per_seed;
    for (const auto& sc : load_checkpoints(c, model)) {
      per_seed.push_back(evaluate_reconstructed(*make_predictor(sc.checkpoint), d.split.val, d.cycle));
      const auto& m = per_seed.back();
      rows.push_back({"1", "matched", model, std::to_string(sc.seed), m.mae * 1e3, m.p99 * 1e3});
    }
    if (!per_seed.empty()) append_aggregate_rows(rows, "1", "matched", model, per_seed);
  }
  write_summary(c, 1, rows);
  print_rows(rows);
  return 0;
}

// --- perturb / transfer ------------------------------------------------------

int cmd_perturb(const Context& c) {
  const MatchedData d = load_matched(c);
  const auto result = run_perturbation(load_selected(c), d, c.config);
  write_summary(c, 2, result.rows);
  print_rows(result.rows);
  return 0;
}

int cmd_transfer(const Context& c, int experiment) {
  if (experiment != 3 && experiment != 4) throw ConfigError("transfer needs --experiment 3 or 4");
  const auto targets = load_targets(c.kv, experiment);
  if (targets.empty()) {
    throw ConfigError(std::string("no transfer targets: add ") +
                      (experiment == 3 ? "target.temperature.<name>" : "target.profile.<name>") + " = <csv>");
  }
  const auto result = run_transfer(load_selected(c), targets, c.config, std::to_string(experiment));
  write_summary(c, experiment, result.rows);
  print_rows(result.rows);
  return 0;
}

// --- stats -------------------------------------------------------------------

std::vector<SummaryRow> load_summary(const Context& c, int experiment, const std::string& producer) {
  return parse_summary_csv(require_text(c.out / std::to_string(experiment) / "summary.csv", producer));
}

int cmd_stats(const Context& c) {
  const auto rows = load_summary(c, 1, "eval");
  std::map<std::string, std::map<std::string, double>> by_model;  // model -> seed -> mae
  double ecm_mae = -1.0;
  for (const auto& r : rows) {
    if (r.model == "ecm") {
      ecm_mae = r.mae_mv;
    } else if (!is_aggregate(r)) {
      by_model[r.model][r.seed_or_draw] = r.mae_mv;
    }
  }
  std::ostringstream os;
  os << "model_a,model_b,n,w,w_plus,w_minus,p_value,exact,cohens_d,cv_a_pct,cv_b_pct,mean_rel_reduction_pct\n";
  auto emit = [&](const std::string& a_name, const std::string& b_name, const std::vector<double>& a,
                  const std::vector<double>& b) {
    const PairedStats s = paired_effect_stats(a, b);
    const auto& w = s.wilcoxon;
    os << a_name << ',' << b_name << ',' << w.n << ',' << format_double(w.w, 10) << ',' << format_double(w.w_plus, 10)
       << ',' << format_double(w.w_minus, 10) << ',' << format_double(w.p_value, 6) << ',' << (w.exact ? 1 : 0) << ','
       << format_double(s.cohens_d, 6) << ',' << format_double(s.cv_a, 6) << ',' << format_double(s.cv_b, 6) << ','
       << format_double(s.mean_rel_reduction, 6) << '\n';
    std::printf("%s vs %s: n %zu  W %g  p %.4g  d %.4g  CV %.3g%% / %.3g%%  reduction %.4g%%\n", a_name.c_str(),
                b_name.c_str(), w.n, w.w, w.p_value, s.cohens_d, s.cv_a, s.cv_b, s.mean_rel_reduction);
  };
  const auto ude = by_model.find("ude");
  if (ude == by_model.end() || ude->second.size() < 2) {
    throw DataError("stats need at least two ude seeds in the matched summary");
  }
  if (auto lstm = by_model.find("lstm"); lstm != by_model.end()) {
    std::vector<double> a, b;
    for (const auto& [seed, v] : ude->second) {
      if (auto it = lstm->second.find(seed); it != lstm->second.end()) {
        a.push_back(v);
        b.push_back(it->second);
      }
    }
    if (a.size() >= 2) emit("ude", "lstm", a, b);
  }
  if (ecm_mae >= 0.0) {
    std::vector<double> a, b;
    for (const auto& [seed, v] : ude->second) {
      a.push_back(v);
      b.push_back(ecm_mae);
    }
    emit("ude", "ecm", a, b);
  }
  write_text(c.out / "stats.csv", os.str());
  return 0;
}

// --- emit-plots --------------------------------------------------------------

std::string field(double v) { return format_double(v, 10); }

int cmd_emit_plots(const Context& c) {
  const fs::path dir = c.out / "plots";
  const MatchedData d = load_matched(c);
  const SelectedModels models = load_selected(c);
  const auto matched = load_summary(c, 1, "eval");

  // Validation trace of the selected models.
  const auto preds = models.predictors();
  std::vector<Reconstruction> recs;
  for (const auto& [name, p] : preds) recs.push_back(reconstruct(predict_windows(*p, d.split.val), d.cycle.size()));
  auto column = [&](const std::string& name) -> const Reconstruction* {
    for (std::size_t j = 0; j < preds.size(); ++j) {
      if (preds[j].first == name) return &recs[j];
    }
    return nullptr;
  };
  std::ostringstream trace;
  trace << "t_s,v_meas,v_ecm,v_lstm,v_ude\n";
  const Reconstruction* cols[] = {column("ecm"), column("lstm"), column("ude")};
  const IndexRange range = covered_range(d.split.val);
  for (std::size_t k = range.begin; k < range.end; ++k) {
    trace << field(d.cycle.t[k]) << ',' << field(d.cycle.voltage[k]);
    for (const auto* r : cols) {
      trace << ',';
      if (r && r->covered[k]) trace << field(r->values[k]);
    }
    trace << '\n';
  }
  write_text(dir / "trace.csv", trace.str());

  std::ostringstream box;
  box << "model,seed,mae_mV\n";
  for (const auto& r : matched) {
    if (!is_aggregate(r)) box << r.model << ',' << r.seed_or_draw << ',' << field(r.mae_mv) << '\n';
  }
  write_text(dir / "boxplot.csv", box.str());

  if (auto t = read_text(c.out / "2" / "summary.csv")) {
    // Mean and sample spread over draws per (model, sigma), in file order.
    std::vector<std::pair<std::string, std::vector<double>>> groups;
    for (const auto& r : parse_summary_csv(*t)) {
      const std::string key = r.model + ',' + r.condition.substr(r.condition.find('=') + 1);
      if (groups.empty() || groups.back().first != key) groups.push_back({key, {}});
      groups.back().second.push_back(r.mae_mv);
    }
    std::ostringstream noise;
    noise << "model,sigma_z,mae_mean_mV,mae_std_mV\n";
    for (const auto& [key, v] : groups) {
      noise << key << ',' << field(mean(v)) << ',' << field(v.size() > 1 ? sample_std(v) : 0.0) << '\n';
    }
    write_text(dir / "noise.csv", noise.str());
  }

  std::ostringstream tr;
  tr << "condition,model,mae_mV\n";
  for (const auto& r : matched) {
    if (r.model == "ecm") tr << "matched,ecm," << field(r.mae_mv) << '\n';
  }
  for (const auto& [name, cp] : {std::pair{"lstm", &models.lstm}, std::pair{"ude", &models.ude}}) {
    if (!*cp) continue;
    for (const auto& r : matched) {
      if (r.model == name && r.seed_or_draw == std::to_string(cp->value().config.seed)) {
        tr << "matched," << name << ',' << field(r.mae_mv) << '\n';
      }
    }
  }
  for (int e : {3, 4}) {
    if (auto t = read_text(c.out / std::to_string(e) / "summary.csv")) {
      for (const auto& r : parse_summary_csv(*t)) tr << r.condition << ',' << r.model << ',' << field(r.mae_mv) << '\n';
    }
  }
  write_text(dir / "transfer.csv", tr.str());
  std::printf("plot data written to %s\n", dir.string().c_str());
  return 0;
}

// --- ingest ------------------------------------------------------------------

int cmd_ingest(const Context& c) {
  CycleRecord cyc = derive_soc(load_source(c.kv));
  auto [imin, imax] = std::minmax_element(cyc.current.begin(), cyc.current.end());
  auto [vmin, vmax] = std::minmax_element(cyc.voltage.begin(), cyc.voltage.end());
  auto [tmin, tmax] = std::minmax_element(cyc.temp.begin(), cyc.temp.end());
  auto [zmin, zmax] = std::minmax_element(cyc.soc.begin(), cyc.soc.end());
  std::printf("cycle %s\n", cyc.name.c_str());
  std::printf("  samples %zu  duration %.1f s\n", cyc.size(), cyc.t.back() - cyc.t.front());
  std::printf("  current %.4g .. %.4g A  mean %.4g A\n", *imin, *imax, mean(cyc.current));
  std::printf("  voltage %.4g .. %.4g V\n", *vmin, *vmax);
  std::printf("  temp %.4g .. %.4g degC\n", *tmin, *tmax);
  std::printf("  discharged %.6g Ah\n", -*std::min_element(cyc.ah.begin(), cyc.ah.end()));
  std::printf("  soc_min %.6g  soc_max %.6g\n", *zmin, *zmax);
  if (is_synthetic(c.kv)) {
    const fs::path p = c.out / "data" / (cyc.name + ".csv");
    fs::create_directories(p.parent_path());
    write_cycle_csv(cyc, p);
    std::printf("  written to %s\n", p.string().c_str());
  }
  return 0;
}

// --- run (everything) --------------------------------------------------------

int cmd_run(const Context& c) {
  cmd_fit_ecm(c);
  int rc = c.models.empty() ? 0 : cmd_train(c);
  cmd_eval(c);
  if (c.models.empty()) return rc;
  cmd_perturb(c);
  for (int e : {3, 4}) {
    if (load_targets(c.kv, e).empty()) {
      std::printf("experiment %d skipped: no targets configured\n", e);
      continue;
    }
    cmd_transfer(c, e);
  }
  if (c.config.seeds.size() >= 2 && std::find(c.models.begin(), c.models.end(), "ude") != c.models.end()) {
    cmd_stats(c);
  }
  cmd_emit_plots(c);
  return rc;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hybrid circuit / neural battery voltage models: fit, train, evaluate"};
  app.require_subcommand(1);
  Options o;

  auto common = [&o](CLI::App* sub) {
    sub->add_option("--config", o.config, "key-value config file (include = <path> supported)");
    sub->add_option("--out", o.out, std::string("output root (default $") + kOutEnv + " or ./ecmude-runs)");
    sub->add_option("--data", o.data, "source cycle CSV (t,current,voltage,temp,ah)");
    sub->add_option("--synthetic", o.synthetic, "generate the source cycle: <profile> <duration>")->expected(2);
    sub->add_option("--seeds", o.seeds, "seed list, e.g. 0-29 or 1,4,7");
    sub->add_option("--seed", o.seed, "single seed");
    sub->add_option("--model", o.model, "ecm, lstm, ude or all")->check(CLI::IsMember({"ecm", "lstm", "ude", "all"}));
    sub->add_option("--workers", o.workers, "parallel seed workers");
  };

  struct Cmd {
    const char* name;
    const char* help;
    std::function<int(const Context&)> run;
  };
  const std::vector<Cmd> cmds{
      {"ingest", "load or generate a cycle and print its summary", cmd_ingest},
      {"fit-ecm", "identify the circuit model on the training windows", cmd_fit_ecm},
      {"train", "train the selected models for every seed", cmd_train},
      {"eval", "matched-condition validation metrics (experiment 1)", cmd_eval},
      {"perturb", "inference-time SOC noise (experiment 2)", cmd_perturb},
      {"transfer", "zero-shot transfer (--experiment 3 temperature, 4 profile)",
       [&o](const Context& c) { return cmd_transfer(c, o.experiment); }},
      {"stats", "paired seed statistics from the matched summary", cmd_stats},
      {"emit-plots", "CSV bundles for traces, boxplots, noise and transfer figures", cmd_emit_plots},
      {"run", "all stages in order", cmd_run},
  };
  std::vector<CLI::App*> subs;
  for (const auto& cmd : cmds) {
    CLI::App* sub = app.add_subcommand(cmd.name, cmd.help);
    common(sub);
    if (std::string(cmd.name) == "transfer") {
      sub->add_option("--experiment", o.experiment, "3 or 4")->required()->check(CLI::IsMember({3, 4}));
    } else {
      sub->add_option("--experiment", o.experiment, "experiment id (informational for this command)")
          ->check(CLI::Range(1, 4));
    }
    subs.push_back(sub);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    const Context ctx = load_context(o);
    for (std::size_t j = 0; j < cmds.size(); ++j) {
      if (subs[j]->parsed()) {
        write_manifest(ctx);
        return cmds[j].run(ctx);
      }
    }
    return kExitOther;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const DivergenceError& e) {
    std::cerr << "divergence: " << e.what() << '\n';
    return kExitDivergence;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitOther;
  }
}
