// SPDX-License-Identifier: Apache-2.0
#include "ecmude/ude.hpp"

#include <algorithm>
#include <cmath>

#include "ecmude/errors.hpp"

namespace ecmude {

namespace {

using Eigen::Index;
using Array = Eigen::ArrayXd;

constexpr double kH = kSampleInterval;
constexpr std::array<double, 4> kStageOffset = {0.0, 0.5 * kH, 0.5 * kH, kH};
constexpr std::array<double, 4> kStageWeight = {1.0, 2.0, 2.0, 1.0};
constexpr int kStages = 4;

double sigmoid(double u) { return 1.0 / (1.0 + std::exp(-u)); }

// Inputs of a batch of equal-length windows, time-major.
struct BatchInputs {
  Index batch = 0;
  Index steps = 0;
  Eigen::MatrixXd current;     // physical A, steps x B
  Eigen::MatrixXd current_n;   // normalized
  Eigen::MatrixXd temp_n;      // normalized
  Eigen::MatrixXd target;      // normalized voltage
  Array init_soc;
};

BatchInputs gather(std::span<const Window* const> windows, const NormalizationSpec& spec) {
  if (windows.empty()) throw DataError("empty batch");
  BatchInputs in;
  in.batch = static_cast<Index>(windows.size());
  in.steps = static_cast<Index>(windows.front()->length);
  in.current.resize(in.steps, in.batch);
  in.current_n.resize(in.steps, in.batch);
  in.temp_n.resize(in.steps, in.batch);
  in.target.resize(in.steps, in.batch);
  in.init_soc.resize(in.batch);
  for (Index b = 0; b < in.batch; ++b) {
    const Window& w = *windows[static_cast<std::size_t>(b)];
    if (static_cast<Index>(w.length) != in.steps) throw DataError("batch windows differ in length");
    for (Index k = 0; k < in.steps; ++k) {
      const auto kk = static_cast<std::size_t>(k);
      in.current_n(k, b) = w.input(kk, kInCurrent);
      in.current(k, b) = spec.denormalize(Channel::current, in.current_n(k, b));
      in.temp_n(k, b) = w.input(kk, kInTemp);
      in.target(k, b) = w.target[kk];
    }
    in.init_soc[b] = w.init_soc;
  }
  return in;
}

struct Constants {
  double tau, c1, r0, eta, q_nom;
  double soc_center, soc_scale;
};

Constants constants_of(const UdeModel& m, const NormalizationSpec& spec) {
  return {m.ecm.tau(), m.ecm.c1, m.ecm.r0, m.eta, m.q_nom, spec.soc_center, spec.soc_scale};
}

// States at every sample (steps x B) and, when taping, per-stage V1 values and
// the network record (column ((k * 4 + s) * B + b)).
struct Rollout {
  Eigen::MatrixXd v1, z;
  Eigen::MatrixXd stage_v1;  // (steps * 4) x B
  MlpTape tape;
};

void integrate(const UdeModel& model, const BatchInputs& in, const Constants& k, Rollout& out, bool record) {
  const MlpView net(model.net.params());
  const Index nb = in.batch;
  out.v1.resize(in.steps, nb);
  out.z.resize(in.steps, nb);
  if (record) {
    // The last sample has no outgoing step.
    out.stage_v1.resize((in.steps - 1) * kStages, nb);
    out.tape.resize((in.steps - 1) * kStages * nb);
  }
  Array v = Array::Zero(nb);
  Array z = in.init_soc;
  Eigen::MatrixXd x(4, nb);
  Eigen::RowVectorXd f(nb);
  Array kv(nb), vs(nb), zs(nb), acc(nb);
  for (Index step = 0; step < in.steps; ++step) {
    out.v1.row(step) = v.matrix().transpose();
    out.z.row(step) = z.matrix().transpose();
    if (!v.allFinite() || !z.allFinite()) {
      throw DivergenceError("diverged integration at step " + std::to_string(step), static_cast<std::size_t>(step));
    }
    if (step + 1 == in.steps) break;
    const Array cur = in.current.row(step).transpose().array();
    const Array kz = -k.eta * cur / k.q_nom;
    x.row(1) = in.current_n.row(step);
    x.row(3) = in.temp_n.row(step);
    acc.setZero();
    for (int s = 0; s < kStages; ++s) {
      if (s == 0) {
        vs = v;
        zs = z;
      } else {
        vs = v + kStageOffset[static_cast<std::size_t>(s)] * kv;
        zs = z + kStageOffset[static_cast<std::size_t>(s)] * kz;
      }
      x.row(0) = (vs / kPolarizationScale).matrix().transpose();
      x.row(2) = ((zs - k.soc_center) / k.soc_scale).matrix().transpose();
      if (record) {
        const Index col0 = (step * kStages + s) * nb;
        out.stage_v1.row(step * kStages + s) = vs.matrix().transpose();
        mlp_forward(net, x, f, &out.tape, col0);
      } else {
        mlp_forward(net, x, f);
      }
      kv = (-vs / k.tau + cur / k.c1) + kCorrectionScale * f.transpose().array();
      acc += kStageWeight[static_cast<std::size_t>(s)] * kv;
    }
    v = v + (kH / 6.0) * acc;
    z = z + (kH / 6.0) * (6.0 * kz);
  }
}

void check_params(const UdeModel& m) {
  if (m.net.params().size() != MlpCorrection::kParamCount) throw ConfigError("bad network size");
}

}  // namespace

double eta_from_raw(double u) { return kEtaMin + (kEtaMax - kEtaMin) * sigmoid(u); }

double raw_from_eta(double eta) {
  const double s = (eta - kEtaMin) / (kEtaMax - kEtaMin);
  if (!(s > 0.0 && s < 1.0)) throw ConfigError("eta must lie strictly inside (0.8, 1.1)");
  return std::log(s / (1.0 - s));
}

std::vector<double> UdeModel::pack() const {
  std::vector<double> flat(kParamCount);
  std::copy(net.params().begin(), net.params().end(), flat.begin());
  flat[kEtaIndex] = raw_from_eta(eta);
  for (std::size_t k = 0; k < kOcvTerms; ++k) flat[kCircuitIndex + k] = ecm.ocv.c[k];
  flat[kCircuitIndex + kOcvTerms] = std::log(ecm.r0);
  flat[kCircuitIndex + kOcvTerms + 1] = std::log(ecm.r1);
  flat[kCircuitIndex + kOcvTerms + 2] = std::log(ecm.c1);
  return flat;
}

void UdeModel::unpack(std::span<const double> flat) {
  if (flat.size() != kParamCount) throw ConfigError("UDE parameter vector size mismatch");
  std::copy(flat.begin(), flat.begin() + MlpCorrection::kParamCount, net.params().begin());
  eta = eta_from_raw(flat[kEtaIndex]);
  for (std::size_t k = 0; k < kOcvTerms; ++k) ecm.ocv.c[k] = flat[kCircuitIndex + k];
  ecm.r0 = std::exp(flat[kCircuitIndex + kOcvTerms]);
  ecm.r1 = std::exp(flat[kCircuitIndex + kOcvTerms + 1]);
  ecm.c1 = std::exp(flat[kCircuitIndex + kOcvTerms + 2]);
}

void UdeModel::validate() const {
  ecm.validate();
  check_params(*this);
  if (!(eta >= kEtaMin && eta <= kEtaMax)) throw ConfigError("eta outside [0.8, 1.1]");
  if (!(q_nom > 0.0)) throw ConfigError("q_nom must be positive");
}

UdeModel warm_start(const EcmParams& ecm_fit, double q_nom, std::uint64_t seed) {
  ecm_fit.validate();
  UdeModel m;
  m.ecm = ecm_fit;
  m.net = MlpCorrection::initialized(seed);
  m.eta = 1.0;
  m.q_nom = q_nom;
  m.validate();
  return m;
}

HybridRate hybrid_rhs(const UdeModel& model, const HybridState& state, double current_amps, double temp_c,
                      const NormalizationSpec& spec) {
  const double f = model.net.forward(state.v1 / kPolarizationScale, spec.normalize(Channel::current, current_amps),
                                     spec.normalize(Channel::soc, state.z), spec.normalize(Channel::temp, temp_c));
  HybridRate r;
  r.dv1 = rc_rhs(state.v1, current_amps, model.ecm.tau(), model.ecm.c1) + kCorrectionScale * f;
  r.dz = -model.eta * current_amps / model.q_nom;
  return r;
}

std::vector<UdeTrace> ude_simulate_batch(const UdeModel& model, std::span<const Window* const> windows,
                                         const NormalizationSpec& spec) {
  check_params(model);
  const BatchInputs in = gather(windows, spec);
  const Constants k = constants_of(model, spec);
  Rollout roll;
  integrate(model, in, k, roll, false);
  std::vector<UdeTrace> out(static_cast<std::size_t>(in.batch));
  for (Index b = 0; b < in.batch; ++b) {
    UdeTrace& tr = out[static_cast<std::size_t>(b)];
    tr.voltage.resize(static_cast<std::size_t>(in.steps));
    tr.v1.resize(tr.voltage.size());
    tr.soc.resize(tr.voltage.size());
    for (Index s = 0; s < in.steps; ++s) {
      const auto ss = static_cast<std::size_t>(s);
      tr.v1[ss] = roll.v1(s, b);
      tr.soc[ss] = roll.z(s, b);
      tr.voltage[ss] = ocv_eval(model.ecm.ocv, roll.z(s, b)) - k.r0 * in.current(s, b) - roll.v1(s, b);
    }
  }
  return out;
}

UdeTrace ude_simulate(const UdeModel& model, const Window& window, const NormalizationSpec& spec) {
  const Window* one[] = {&window};
  return std::move(ude_simulate_batch(model, one, spec).front());
}

double ude_loss(const UdeModel& model, std::span<const Window* const> batch, const NormalizationSpec& spec) {
  const auto traces = ude_simulate_batch(model, batch, spec);
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    for (std::size_t s = 0; s < traces[b].voltage.size(); ++s) {
      const double e = spec.normalize(Channel::voltage, traces[b].voltage[s]) - batch[b]->target[s];
      sum += e * e;
      ++n;
    }
  }
  return sum / static_cast<double>(n);
}

double ude_loss_and_grad(const UdeModel& model, std::span<const Window* const> batch,
                         const NormalizationSpec& spec, std::span<double> grad) {
  check_params(model);
  if (grad.size() != UdeModel::kParamCount) throw ConfigError("gradient buffer size mismatch");
  const BatchInputs in = gather(batch, spec);
  const Constants k = constants_of(model, spec);
  Rollout roll;
  integrate(model, in, k, roll, true);

  const Index nb = in.batch;
  const Index steps = in.steps;
  const double n_total = static_cast<double>(nb * steps);
  const MlpView net(model.net.params());

  // Output residuals and their adjoints.
  Eigen::MatrixXd dv_out(steps, nb);  // d loss / d V (physical)
  double loss = 0.0;
  std::array<double, kOcvTerms> g_ocv{};
  double g_log_r0 = 0.0;
  Eigen::MatrixXd dz_out(steps, nb);
  for (Index b = 0; b < nb; ++b) {
    for (Index s = 0; s < steps; ++s) {
      const OcvGradient og = ocv_grad(model.ecm.ocv, roll.z(s, b));
      const double volt = og.value - k.r0 * in.current(s, b) - roll.v1(s, b);
      const double e = spec.normalize(Channel::voltage, volt) - in.target(s, b);
      loss += e * e;
      const double dv = 2.0 * e / (spec.voltage_std * n_total);
      dv_out(s, b) = dv;
      dz_out(s, b) = dv * og.d_dz;
      for (std::size_t j = 0; j < kOcvTerms; ++j) g_ocv[j] += dv * og.d_dc[j];
      g_log_r0 += dv * (-in.current(s, b) * k.r0);
    }
  }
  loss /= n_total;

  const double sig = (k.eta - kEtaMin) / (kEtaMax - kEtaMin);
  const double deta_du = (kEtaMax - kEtaMin) * sig * (1.0 - sig);
  double g_log_r1 = 0.0, g_log_c1 = 0.0, g_u = 0.0;

  Array av = Array::Zero(nb), az = Array::Zero(nb);
  std::array<Array, kStages> kbar_v, kbar_z;
  Eigen::MatrixXd dx(4, nb);
  Eigen::RowVectorXd dy(nb);
  for (Index step = steps - 1; step >= 0; --step) {
    if (step + 1 < steps) {
      // Adjoint of the RK4 step step -> step + 1; (av, az) holds d/d state[step+1].
      const Array cur = in.current.row(step).transpose().array();
      for (int s = 0; s < kStages; ++s) {
        kbar_v[static_cast<std::size_t>(s)] = (kH / 6.0) * kStageWeight[static_cast<std::size_t>(s)] * av;
        kbar_z[static_cast<std::size_t>(s)] = (kH / 6.0) * kStageWeight[static_cast<std::size_t>(s)] * az;
      }
      // The z update was written as z + h/6 * (6 kz); its adjoint equals the
      // weighted stage form above since every stage shares kz.
      Array xv = av, xz = az;
      for (int s = kStages - 1; s >= 0; --s) {
        const auto su = static_cast<std::size_t>(s);
        const Index col0 = (step * kStages + s) * nb;
        const Array vs = roll.stage_v1.row(step * kStages + s).transpose().array();
        dy = (kCorrectionScale * kbar_v[su]).matrix().transpose();
        mlp_backward_inputs(net, roll.tape, col0, dy, dx);
        const Array sv = kbar_v[su] * (-1.0 / k.tau) + dx.row(0).transpose().array() / kPolarizationScale;
        const Array sz = dx.row(2).transpose().array() / k.soc_scale;
        g_log_r1 += (kbar_v[su] * (vs / k.tau)).sum();
        g_log_c1 += (kbar_v[su] * (vs / k.tau - cur / k.c1)).sum();
        g_u += (kbar_z[su] * (-cur / k.q_nom)).sum() * deta_du;
        xv += sv;
        xz += sz;
        if (s > 0) {
          kbar_v[su - 1] += kStageOffset[su] * sv;
          kbar_z[su - 1] += kStageOffset[su] * sz;
        }
      }
      av = xv;
      az = xz;
    }
    av -= dv_out.row(step).transpose().array();
    az += dz_out.row(step).transpose().array();
  }

  std::fill(grad.begin(), grad.end(), 0.0);
  mlp_accumulate_param_grads(roll.tape, grad.subspan(0, MlpCorrection::kParamCount));
  grad[UdeModel::kEtaIndex] = g_u;
  for (std::size_t j = 0; j < kOcvTerms; ++j) grad[UdeModel::kCircuitIndex + j] = g_ocv[j];
  grad[UdeModel::kCircuitIndex + kOcvTerms] = g_log_r0;
  grad[UdeModel::kCircuitIndex + kOcvTerms + 1] = g_log_r1;
  grad[UdeModel::kCircuitIndex + kOcvTerms + 2] = g_log_c1;
  return loss;
}

}  // namespace ecmude
