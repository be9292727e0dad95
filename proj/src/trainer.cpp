// SPDX-License-Identifier: Apache-2.0
#include "ecmude/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include "ecmude/errors.hpp"
#include "ecmude/rng.hpp"

namespace ecmude {

TrainConfig TrainConfig::lstm_defaults() {
  TrainConfig c;
  c.max_epochs = 150;
  c.peak_lr = 1e-3;
  c.weight_decay = 1e-5;
  c.warmup_epochs = 5;
  c.patience = 30;
  c.clip_norm = 1.0;
  c.batch_size = 16;
  return c;
}

TrainConfig TrainConfig::ude_defaults() { return TrainConfig{}; }

void TrainConfig::validate() const {
  if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
  if (!(peak_lr > 0.0) || !std::isfinite(peak_lr)) throw ConfigError("peak learning rate must be positive");
  if (weight_decay < 0.0) throw ConfigError("weight decay must be >= 0");
  if (warmup_epochs < 0 || warmup_epochs >= max_epochs) throw ConfigError("warmup must be shorter than training");
  if (patience < 1) throw ConfigError("patience must be >= 1");
  if (!(clip_norm > 0.0)) throw ConfigError("clip norm must be positive");
  if (batch_size < 1) throw ConfigError("batch size must be >= 1");
}

void TrainConfig::store(KvFile& kv, const std::string& prefix) const {
  kv.set_int(prefix + "max_epochs", max_epochs);
  kv.set(prefix + "peak_lr", peak_lr, 17);
  kv.set(prefix + "weight_decay", weight_decay, 17);
  kv.set_int(prefix + "warmup_epochs", warmup_epochs);
  kv.set_int(prefix + "patience", patience);
  kv.set(prefix + "clip_norm", clip_norm, 17);
  kv.set_int(prefix + "batch_size", batch_size);
  kv.set(prefix + "seed", std::to_string(seed));
}

TrainConfig TrainConfig::load(const KvFile& kv, const std::string& prefix, const TrainConfig& fallback) {
  TrainConfig c = fallback;
  c.max_epochs = static_cast<int>(kv.get_int_or(prefix + "max_epochs", c.max_epochs));
  c.peak_lr = kv.get_double_or(prefix + "peak_lr", c.peak_lr);
  c.weight_decay = kv.get_double_or(prefix + "weight_decay", c.weight_decay);
  c.warmup_epochs = static_cast<int>(kv.get_int_or(prefix + "warmup_epochs", c.warmup_epochs));
  c.patience = static_cast<int>(kv.get_int_or(prefix + "patience", c.patience));
  c.clip_norm = kv.get_double_or(prefix + "clip_norm", c.clip_norm);
  c.batch_size = static_cast<int>(kv.get_int_or(prefix + "batch_size", c.batch_size));
  if (auto s = kv.find(prefix + "seed")) {
    try {
      c.seed = std::stoull(*s);
    } catch (const std::exception&) {
      throw ConfigError("invalid seed '" + *s + "'");
    }
  }
  return c;
}

AdamStepResult adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, double lr,
                         double weight_decay, double clip_norm, std::span<const unsigned char> decay_mask) {
  const std::size_t n = params.size();
  if (grads.size() != n || state.m.size() != n || state.v.size() != n) {
    throw ConfigError("optimizer size mismatch");
  }
  if (!decay_mask.empty() && decay_mask.size() != n) throw ConfigError("decay mask size mismatch");

  AdamStepResult r;
  double sq = 0.0;
  for (double g : grads) sq += g * g;
  r.grad_norm = std::sqrt(sq);
  if (!std::isfinite(r.grad_norm)) return r;

  const double scale = r.grad_norm > clip_norm ? clip_norm / r.grad_norm : 1.0;
  state.step += 1;
  const auto t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(AdamState::kBeta1, t);
  const double bc2 = 1.0 - std::pow(AdamState::kBeta2, t);
  for (std::size_t j = 0; j < n; ++j) {
    const double g = grads[j] * scale;
    state.m[j] = AdamState::kBeta1 * state.m[j] + (1.0 - AdamState::kBeta1) * g;
    state.v[j] = AdamState::kBeta2 * state.v[j] + (1.0 - AdamState::kBeta2) * g * g;
    const double m_hat = state.m[j] / bc1;
    const double v_hat = state.v[j] / bc2;
    if (decay_mask.empty() || decay_mask[j]) params[j] *= 1.0 - lr * weight_decay;
    params[j] -= lr * m_hat / (std::sqrt(v_hat) + AdamState::kEpsilon);
  }
  r.applied = true;
  return r;
}

double lr_schedule(const TrainConfig& config, int epoch) {
  const int w = config.warmup_epochs;
  if (epoch < w) return config.peak_lr * static_cast<double>(epoch + 1) / static_cast<double>(w);
  const double span = static_cast<double>(config.max_epochs - w);
  const double progress = static_cast<double>(epoch - w) / span;
  return config.peak_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

// --- LSTM adapter ----------------------------------------------------------

namespace {

Eigen::MatrixXd gather_inputs(std::span<const Window* const> batch) {
  const auto b = static_cast<Eigen::Index>(batch.size());
  const auto steps = static_cast<Eigen::Index>(batch.front()->length);
  Eigen::MatrixXd x(LstmBaseline::kInputs, steps * b);
  for (Eigen::Index j = 0; j < b; ++j) {
    const Window& w = *batch[static_cast<std::size_t>(j)];
    if (static_cast<Eigen::Index>(w.length) != steps) throw DataError("windows in a batch must share length");
    for (Eigen::Index t = 0; t < steps; ++t) {
      for (Eigen::Index c = 0; c < LstmBaseline::kInputs; ++c) {
        x(c, t * b + j) = w.inputs[static_cast<std::size_t>(t * LstmBaseline::kInputs + c)];
      }
    }
  }
  return x;
}

constexpr std::size_t kEvalChunk = 16;

}  // namespace

std::vector<double> LstmTrainable::parameters() const {
  auto p = net_.params();
  return {p.begin(), p.end()};
}

void LstmTrainable::set_parameters(std::span<const double> params) {
  net_ = LstmBaseline(std::vector<double>(params.begin(), params.end()));
}

std::vector<unsigned char> LstmTrainable::decay_mask() const {
  return std::vector<unsigned char>(LstmBaseline::kParamCount, 1);
}

double LstmTrainable::loss_and_grad(std::span<const Window* const> batch, std::span<double> grad) {
  std::fill(grad.begin(), grad.end(), 0.0);
  const auto b = static_cast<Eigen::Index>(batch.size());
  const Eigen::MatrixXd x = gather_inputs(batch);
  const Eigen::Index steps = x.cols() / b;
  LstmTape tape;
  const Eigen::RowVectorXd y = lstm_forward(net_.params(), x, b, &tape);
  Eigen::RowVectorXd err(y.size());
  for (Eigen::Index j = 0; j < b; ++j) {
    const Window& w = *batch[static_cast<std::size_t>(j)];
    for (Eigen::Index t = 0; t < steps; ++t) err(t * b + j) = y(t * b + j) - w.target[static_cast<std::size_t>(t)];
  }
  const double n = static_cast<double>(err.size());
  const Eigen::RowVectorXd dy = (2.0 / n) * err;
  lstm_backward(net_.params(), tape, dy, grad);
  return err.squaredNorm() / n;
}

double LstmTrainable::loss(std::span<const Window> windows) {
  const auto preds = lstm_predict(net_.params(), windows);
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t j = 0; j < windows.size(); ++j) {
    for (std::size_t t = 0; t < windows[j].length; ++t) {
      const double e = preds[j][t] - windows[j].target[t];
      sum += e * e;
    }
    count += windows[j].length;
  }
  return count ? sum / static_cast<double>(count) : 0.0;
}

std::vector<std::vector<double>> lstm_predict(std::span<const double> params, std::span<const Window> windows) {
  std::vector<std::vector<double>> out;
  out.reserve(windows.size());
  for (std::size_t s = 0; s < windows.size(); s += kEvalChunk) {
    const std::size_t e = std::min(windows.size(), s + kEvalChunk);
    std::vector<const Window*> chunk;
    for (std::size_t j = s; j < e; ++j) chunk.push_back(&windows[j]);
    // Chunks need equal lengths; fall back to one window at a time otherwise.
    const bool uniform = std::all_of(chunk.begin(), chunk.end(),
                                     [&](const Window* w) { return w->length == chunk.front()->length; });
    if (!uniform) {
      for (const Window* w : chunk) out.push_back(LstmBaseline(std::vector<double>(params.begin(), params.end())).forward(w->inputs));
      continue;
    }
    const auto b = static_cast<Eigen::Index>(chunk.size());
    const Eigen::MatrixXd x = gather_inputs(chunk);
    const Eigen::RowVectorXd y = lstm_forward(params, x, b);
    const Eigen::Index steps = x.cols() / b;
    for (Eigen::Index j = 0; j < b; ++j) {
      std::vector<double> v(static_cast<std::size_t>(steps));
      for (Eigen::Index t = 0; t < steps; ++t) v[static_cast<std::size_t>(t)] = y(t * b + j);
      out.push_back(std::move(v));
    }
  }
  return out;
}

// --- hybrid adapter --------------------------------------------------------

std::vector<double> UdeTrainable::parameters() const { return model_.pack(); }

void UdeTrainable::set_parameters(std::span<const double> params) { model_.unpack(params); }

std::vector<unsigned char> UdeTrainable::decay_mask() const {
  std::vector<unsigned char> mask(UdeModel::kParamCount, 0);
  std::fill(mask.begin(), mask.begin() + MlpCorrection::kParamCount, 1);
  return mask;
}

double UdeTrainable::loss_and_grad(std::span<const Window* const> batch, std::span<double> grad) {
  const double loss = ude_loss_and_grad(model_, batch, spec_, grad);
  if (!model_.train_circuit) std::fill(grad.begin() + UdeModel::kEtaIndex, grad.end(), 0.0);
  return loss;
}

double UdeTrainable::loss(std::span<const Window> windows) {
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t s = 0; s < windows.size(); s += kEvalChunk) {
    const std::size_t e = std::min(windows.size(), s + kEvalChunk);
    std::vector<const Window*> chunk;
    std::size_t n = 0;
    for (std::size_t j = s; j < e; ++j) {
      chunk.push_back(&windows[j]);
      n += windows[j].length;
    }
    sum += ude_loss(model_, chunk, spec_) * static_cast<double>(n);
    count += n;
  }
  return count ? sum / static_cast<double>(count) : 0.0;
}

// --- log and checkpoint ----------------------------------------------------

std::string TrainLog::to_csv() const {
  std::ostringstream os;
  os << "epoch,train_loss,val_loss,lr,grad_norm_mean,grad_norm_max,skipped_steps\n";
  os << "-1,," << format_double(initial_val_loss, 10) << ",,,,\n";
  for (const auto& e : epochs) {
    os << e.epoch << ',' << format_double(e.train_loss, 10) << ',' << format_double(e.val_loss, 10) << ','
       << format_double(e.lr, 10) << ',' << format_double(e.grad_norm_mean, 10) << ','
       << format_double(e.grad_norm_max, 10) << ',' << e.skipped_steps << '\n';
  }
  return os.str();
}

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::ecm: return "ecm";
    case ModelKind::lstm: return "lstm";
    case ModelKind::ude: return "ude";
  }
  return "unknown";
}

ModelKind model_kind_from_string(const std::string& s) {
  if (s == "ecm") return ModelKind::ecm;
  if (s == "lstm") return ModelKind::lstm;
  if (s == "ude") return ModelKind::ude;
  throw ConfigError("unknown model '" + s + "' (expected ecm, lstm or ude)");
}

UdeModel Checkpoint::ude_model() const {
  if (kind != ModelKind::ude) throw ConfigError("checkpoint does not hold a hybrid model");
  UdeModel m;
  m.q_nom = q_nom;
  m.train_circuit = train_circuit;
  m.unpack(params);
  return m;
}

LstmBaseline Checkpoint::lstm() const {
  if (kind != ModelKind::lstm) throw ConfigError("checkpoint does not hold an LSTM");
  return LstmBaseline(params);
}

namespace {
constexpr const char* kParamsMarker = "[params]";
constexpr int kExactDigits = 17;
}  // namespace

void Checkpoint::save(const std::filesystem::path& path) const {
  KvFile kv;
  kv.set("format", "ecmude-checkpoint");
  kv.set_int("version", kVersion);
  kv.set("kind", to_string(kind));
  kv.set_int("epoch", epoch);
  kv.set("best_val_loss", best_val_loss, kExactDigits);
  kv.set("q_nom", q_nom, kExactDigits);
  kv.set("train_circuit", train_circuit ? "1" : "0");
  ecm.store(kv, "ecm.", kExactDigits);
  spec.store(kv, "norm.", kExactDigits);
  config.store(kv, "train.");
  kv.set_int("param_count", static_cast<long long>(params.size()));

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ostringstream os;
  os << kv.to_string() << kParamsMarker << '\n';
  for (double p : params) os << format_double(p, kExactDigits) << '\n';
  std::FILE* f = std::fopen(path.c_str(), "wb");
  if (!f) throw DataError("cannot write checkpoint " + path.string());
  const std::string s = os.str();
  const bool ok = std::fwrite(s.data(), 1, s.size(), f) == s.size();
  std::fclose(f);
  if (!ok) throw DataError("cannot write checkpoint " + path.string());
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::FILE* f = std::fopen(path.c_str(), "rb");
  if (!f) throw DataError("cannot open checkpoint " + path.string());
  std::string text;
  char buf[1 << 16];
  std::size_t got;
  while ((got = std::fread(buf, 1, sizeof buf, f)) > 0) text.append(buf, got);
  std::fclose(f);

  const auto marker = text.find(std::string(kParamsMarker) + "\n");
  if (marker == std::string::npos) throw DataError("checkpoint " + path.string() + " has no parameter block");
  const KvFile kv = KvFile::parse(text.substr(0, marker));
  if (kv.get_or("format", "") != "ecmude-checkpoint") throw DataError("not a checkpoint: " + path.string());
  if (kv.get_int("version") != kVersion) throw DataError("unsupported checkpoint version");

  Checkpoint c;
  c.kind = model_kind_from_string(kv.get("kind"));
  c.epoch = static_cast<int>(kv.get_int("epoch"));
  c.best_val_loss = kv.get_double("best_val_loss");
  c.q_nom = kv.get_double("q_nom");
  c.train_circuit = kv.get("train_circuit") == "1";
  c.ecm = EcmParams::load(kv, "ecm.");
  c.spec = NormalizationSpec::load(kv, "norm.");
  c.config = TrainConfig::load(kv, "train.", TrainConfig{});
  const auto count = static_cast<std::size_t>(kv.get_int("param_count"));

  std::istringstream is(text.substr(marker + std::string(kParamsMarker).size() + 1));
  std::string line;
  c.params.reserve(count);
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    c.params.push_back(parse_double(line));
  }
  if (c.params.size() != count) throw DataError("checkpoint parameter count mismatch");
  return c;
}

// --- training loop ---------------------------------------------------------

FitResult fit(Trainable& model, std::span<const Window> train, std::span<const Window> val,
              const TrainConfig& config) {
  config.validate();
  if (train.empty() || val.empty()) throw DataError("training and validation sets must be non-empty");

  FitResult result;
  std::vector<double> params = model.parameters();
  const std::vector<unsigned char> mask = model.decay_mask();
  std::vector<double> grad(params.size());
  AdamState adam(params.size());

  result.log.initial_val_loss = model.loss(val);
  result.best_params = params;
  result.best_val_loss = std::numeric_limits<double>::infinity();

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  const auto batch = static_cast<std::size_t>(config.batch_size);
  int since_best = 0;

  for (int epoch = 0; epoch < config.max_epochs; ++epoch) {
    const double lr = lr_schedule(config, epoch);
    Rng rng(derive_seed(config.seed, static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    double loss_sum = 0.0;
    std::size_t sample_count = 0;
    int steps = 0;
    bool diverged = false;
    for (std::size_t s = 0; s < order.size(); s += batch) {
      const std::size_t e = std::min(order.size(), s + batch);
      std::vector<const Window*> b;
      std::size_t n = 0;
      for (std::size_t j = s; j < e; ++j) {
        b.push_back(&train[order[j]]);
        n += train[order[j]].length;
      }
      double loss;
      try {
        loss = model.loss_and_grad(b, grad);
      } catch (const DivergenceError&) {
        diverged = true;
        break;
      }
      if (!std::isfinite(loss)) {
        diverged = true;
        break;
      }
      const AdamStepResult step =
          adam_step(params, grad, adam, lr, config.weight_decay, config.clip_norm, mask);
      if (!step.applied) {
        ++rec.skipped_steps;
      } else {
        model.set_parameters(params);
        rec.grad_norm_mean += step.grad_norm;
        rec.grad_norm_max = std::max(rec.grad_norm_max, step.grad_norm);
        ++steps;
      }
      loss_sum += loss * static_cast<double>(n);
      sample_count += n;
    }
    if (!diverged) {
      try {
        rec.val_loss = model.loss(val);
      } catch (const DivergenceError&) {
        diverged = true;
      }
    }
    rec.train_loss = sample_count ? loss_sum / static_cast<double>(sample_count) : 0.0;
    if (steps > 0) rec.grad_norm_mean /= steps;
    if (diverged || !std::isfinite(rec.val_loss)) {
      rec.val_loss = std::numeric_limits<double>::quiet_NaN();
      result.log.epochs.push_back(rec);
      result.log.diverged = true;
      break;
    }
    result.log.epochs.push_back(rec);

    if (rec.val_loss < result.best_val_loss) {
      result.best_val_loss = rec.val_loss;
      result.best_epoch = epoch;
      result.best_params = params;
      since_best = 0;
    } else if (++since_best >= config.patience) {
      result.log.early_stopped = true;
      break;
    }
  }
  if (result.best_epoch < 0) result.best_val_loss = result.log.initial_val_loss;
  model.set_parameters(result.best_params);
  return result;
}

TrainResult fit_lstm(std::span<const Window> train, std::span<const Window> val, const NormalizationSpec& spec,
                     const TrainConfig& config) {
  LstmTrainable model(LstmBaseline::initialized(derive_seed(config.seed, 0x1157)));
  FitResult fr = fit(model, train, val, config);
  TrainResult out;
  out.checkpoint.kind = ModelKind::lstm;
  out.checkpoint.params = std::move(fr.best_params);
  out.checkpoint.spec = spec;
  out.checkpoint.config = config;
  out.checkpoint.best_val_loss = fr.best_val_loss;
  out.checkpoint.epoch = fr.best_epoch;
  out.log = std::move(fr.log);
  return out;
}

TrainResult fit_ude(const EcmParams& ecm_fit, std::span<const Window> train, std::span<const Window> val,
                    const NormalizationSpec& spec, const TrainConfig& config, double q_nom, bool train_circuit) {
  UdeModel init = warm_start(ecm_fit, q_nom, derive_seed(config.seed, 0x0DE));
  init.train_circuit = train_circuit;
  UdeTrainable model(init, spec);
  FitResult fr = fit(model, train, val, config);
  TrainResult out;
  out.checkpoint.kind = ModelKind::ude;
  out.checkpoint.params = std::move(fr.best_params);
  out.checkpoint.spec = spec;
  out.checkpoint.config = config;
  out.checkpoint.q_nom = q_nom;
  out.checkpoint.train_circuit = train_circuit;
  out.checkpoint.best_val_loss = fr.best_val_loss;
  out.checkpoint.epoch = fr.best_epoch;
  out.checkpoint.ecm = model.model().ecm;
  out.log = std::move(fr.log);
  return out;
}

std::vector<SeedRun> run_seeds(const std::function<TrainResult(std::uint64_t seed)>& train_one,
                               std::span<const std::uint64_t> seeds, unsigned workers) {
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) {
    throw ConfigError("seeds must be distinct");
  }
  std::vector<SeedRun> runs(seeds.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t j = next++; j < seeds.size(); j = next++) {
      runs[j].seed = seeds[j];
      try {
        runs[j].result = train_one(seeds[j]);
        runs[j].ok = !runs[j].result.log.diverged || runs[j].result.checkpoint.epoch >= 0;
        if (runs[j].result.log.diverged) runs[j].error = "training diverged";
      } catch (const std::exception& e) {
        runs[j].ok = false;
        runs[j].error = e.what();
      }
    }
  };
  workers = std::max(1u, std::min<unsigned>(workers, static_cast<unsigned>(seeds.size())));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  return runs;
}

}  // namespace ecmude
