// SPDX-License-Identifier: Apache-2.0
#include "ecmude/eval.hpp"

#include <algorithm>
#include <cmath>

#include "ecmude/errors.hpp"
#include "ecmude/rng.hpp"
#include "ecmude/stats.hpp"

namespace ecmude {

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw DataError("percentile of an empty sample");
  std::sort(values.begin(), values.end());
  const double pos = (static_cast<double>(values.size()) - 1.0) * q / 100.0;
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

MetricsReport compute_metrics(std::span<const double> pred, std::span<const double> meas,
                              const std::string& condition) {
  if (pred.size() != meas.size()) throw DataError("prediction and measurement lengths differ");
  if (pred.empty()) throw DataError("no samples to score");
  std::vector<double> err(pred.size());
  double sum = 0.0;
  for (std::size_t j = 0; j < pred.size(); ++j) {
    err[j] = std::abs(pred[j] - meas[j]);
    sum += err[j];
  }
  MetricsReport r;
  r.condition = condition;
  r.n_samples = err.size();
  r.mae = sum / static_cast<double>(err.size());
  r.p99 = percentile(std::move(err), 99.0);
  return r;
}

Reconstruction reconstruct(std::span<const WindowPrediction> predictions, std::size_t n) {
  std::vector<double> sum(n, 0.0);
  std::vector<int> count(n, 0);
  for (const auto& p : predictions) {
    if (p.start_index + p.values.size() > n) throw DataError("window prediction exceeds the cycle length");
    for (std::size_t k = 0; k < p.values.size(); ++k) {
      sum[p.start_index + k] += p.values[k];
      ++count[p.start_index + k];
    }
  }
  Reconstruction r;
  r.values.assign(n, 0.0);
  r.covered.assign(n, 0);
  for (std::size_t j = 0; j < n; ++j) {
    if (count[j] == 0) continue;
    r.values[j] = sum[j] / count[j];
    r.covered[j] = 1;
  }
  return r;
}

namespace {

constexpr std::size_t kChunk = 16;

class EcmPredictor final : public VoltagePredictor {
 public:
  EcmPredictor(const EcmParams& p, const NormalizationSpec& s) : params_(p), spec_(s) {}
  ModelKind kind() const override { return ModelKind::ecm; }
  const NormalizationSpec& spec() const override { return spec_; }
  std::vector<std::vector<double>> predict(std::span<const Window> windows) const override {
    std::vector<std::vector<double>> out;
    out.reserve(windows.size());
    for (const auto& w : windows) out.push_back(ecm_simulate(params_, w, spec_));
    return out;
  }

 private:
  EcmParams params_;
  NormalizationSpec spec_;
};

class LstmPredictor final : public VoltagePredictor {
 public:
  LstmPredictor(std::vector<double> p, const NormalizationSpec& s) : params_(std::move(p)), spec_(s) {
    if (params_.size() != LstmBaseline::kParamCount) throw ConfigError("LSTM parameter size mismatch");
  }
  ModelKind kind() const override { return ModelKind::lstm; }
  const NormalizationSpec& spec() const override { return spec_; }
  std::vector<std::vector<double>> predict(std::span<const Window> windows) const override {
    auto out = lstm_predict(params_, windows);
    for (auto& v : out) {
      for (double& x : v) x = spec_.denormalize(Channel::voltage, x);
    }
    return out;
  }

 private:
  std::vector<double> params_;
  NormalizationSpec spec_;
};

class UdePredictor final : public VoltagePredictor {
 public:
  UdePredictor(const UdeModel& m, const NormalizationSpec& s) : model_(m), spec_(s) { model_.validate(); }
  ModelKind kind() const override { return ModelKind::ude; }
  const NormalizationSpec& spec() const override { return spec_; }
  std::vector<std::vector<double>> predict(std::span<const Window> windows) const override {
    std::vector<std::vector<double>> out;
    out.reserve(windows.size());
    for (std::size_t s = 0; s < windows.size();) {
      std::vector<const Window*> chunk{&windows[s]};
      std::size_t e = s + 1;
      while (e < windows.size() && chunk.size() < kChunk && windows[e].length == windows[s].length) {
        chunk.push_back(&windows[e++]);
      }
      for (auto& tr : ude_simulate_batch(model_, chunk, spec_)) out.push_back(std::move(tr.voltage));
      s = e;
    }
    return out;
  }

 private:
  UdeModel model_;
  NormalizationSpec spec_;
};

}  // namespace

std::unique_ptr<VoltagePredictor> make_ecm_predictor(const EcmParams& params, const NormalizationSpec& spec) {
  return std::make_unique<EcmPredictor>(params, spec);
}

std::unique_ptr<VoltagePredictor> make_lstm_predictor(std::vector<double> params, const NormalizationSpec& spec) {
  return std::make_unique<LstmPredictor>(std::move(params), spec);
}

std::unique_ptr<VoltagePredictor> make_ude_predictor(const UdeModel& model, const NormalizationSpec& spec) {
  return std::make_unique<UdePredictor>(model, spec);
}

std::unique_ptr<VoltagePredictor> make_predictor(const Checkpoint& checkpoint) {
  switch (checkpoint.kind) {
    case ModelKind::ecm: return make_ecm_predictor(checkpoint.ecm, checkpoint.spec);
    case ModelKind::lstm: return make_lstm_predictor(checkpoint.params, checkpoint.spec);
    case ModelKind::ude: return make_ude_predictor(checkpoint.ude_model(), checkpoint.spec);
  }
  throw ConfigError("unknown checkpoint kind");
}

std::vector<WindowPrediction> predict_windows(const VoltagePredictor& model, std::span<const Window> windows) {
  auto values = model.predict(windows);
  std::vector<WindowPrediction> out(windows.size());
  for (std::size_t j = 0; j < windows.size(); ++j) {
    out[j].start_index = windows[j].start_index;
    out[j].values = std::move(values[j]);
  }
  return out;
}

MetricsReport evaluate_reconstructed(const VoltagePredictor& model, std::span<const Window> windows,
                                     const CycleRecord& cycle, const std::string& condition) {
  const auto preds = predict_windows(model, windows);
  const Reconstruction rec = reconstruct(preds, cycle.size());
  std::vector<double> p, m;
  for (std::size_t j = 0; j < cycle.size(); ++j) {
    if (!rec.covered[j]) continue;
    p.push_back(rec.values[j]);
    m.push_back(cycle.voltage[j]);
  }
  return compute_metrics(p, m, condition);
}

MatchedReport evaluate_matched(std::span<const VoltagePredictor* const> seeds, std::span<const Window> val,
                               const CycleRecord& cycle) {
  if (seeds.empty()) throw ConfigError("matched evaluation needs at least one model");
  MatchedReport r;
  std::vector<double> mae, p99;
  for (const VoltagePredictor* m : seeds) {
    r.per_seed.push_back(evaluate_reconstructed(*m, val, cycle, "matched"));
    mae.push_back(r.per_seed.back().mae);
    p99.push_back(r.per_seed.back().p99);
  }
  r.mae_mean = mean(mae);
  r.mae_std = sample_std(mae);
  r.p99_mean = mean(p99);
  r.p99_std = sample_std(p99);
  return r;
}

MetricsReport evaluate_transfer(const VoltagePredictor& model, const CycleRecord& target, std::size_t length,
                                std::size_t stride, const std::string& condition) {
  const CycleRecord cycle = target.has_soc() ? target : derive_soc(target);
  const auto windows = make_windows(cycle, model.spec(), length, stride);
  const auto preds = model.predict(windows);
  std::vector<double> p, m;
  for (std::size_t j = 0; j < windows.size(); ++j) {
    for (std::size_t k = 0; k < windows[j].length; ++k) {
      p.push_back(preds[j][k]);
      m.push_back(cycle.voltage[windows[j].start_index + k]);
    }
  }
  return compute_metrics(p, m, condition);
}

PerturbationReport perturb_soc(const VoltagePredictor& model, std::span<const Window> val, const CycleRecord& cycle,
                               double sigma_z, int draws, std::uint64_t seed) {
  if (!(sigma_z >= 0.0)) throw ConfigError("noise level must be >= 0");
  if (!cycle.has_soc()) throw DataError("cycle has no derived SOC");
  PerturbationReport r;
  r.sigma_z = sigma_z;
  if (sigma_z == 0.0) {
    const MetricsReport m = evaluate_reconstructed(model, val, cycle, "sigma=0");
    r.mae.push_back(m.mae);
    r.p99.push_back(m.p99);
  } else {
    if (draws < 1) throw ConfigError("need at least one draw");
    const IndexRange range = covered_range(val);
    const NormalizationSpec& spec = model.spec();
    for (int d = 0; d < draws; ++d) {
      Rng rng(derive_seed(seed, static_cast<std::uint64_t>(d)));
      std::vector<double> z(range.size());
      for (std::size_t j = 0; j < z.size(); ++j) {
        z[j] = std::clamp(cycle.soc[range.begin + j] + sigma_z * rng.normal(), 0.0, 1.0);
      }
      std::vector<Window> noisy(val.begin(), val.end());
      for (auto& w : noisy) {
        const std::size_t off = w.start_index - range.begin;
        for (std::size_t k = 0; k < w.length; ++k) w.input(k, kInSoc) = spec.normalize(Channel::soc, z[off + k]);
        w.init_soc = z[off];
      }
      const MetricsReport m = evaluate_reconstructed(model, noisy, cycle);
      r.mae.push_back(m.mae);
      r.p99.push_back(m.p99);
    }
  }
  r.mae_mean = mean(r.mae);
  r.mae_std = sample_std(r.mae);
  return r;
}

}  // namespace ecmude
