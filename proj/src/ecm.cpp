// SPDX-License-Identifier: Apache-2.0
#include "ecmude/ecm.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <cmath>

#include "ecmude/errors.hpp"
#include "ecmude/rk4.hpp"

namespace ecmude {

void EcmParams::validate() const {
  for (double c : ocv.c) {
    if (!std::isfinite(c)) throw ConfigError("OCV coefficient is not finite");
  }
  if (!(r0 > 0.0) || !(r1 > 0.0) || !(c1 > 0.0) || !std::isfinite(tau())) {
    throw ConfigError("circuit parameters must be positive and finite");
  }
}

std::array<double, kEcmParamCount> EcmParams::to_array() const {
  std::array<double, kEcmParamCount> a{};
  for (std::size_t k = 0; k < kOcvTerms; ++k) a[k] = ocv.c[k];
  a[kOcvTerms] = r0;
  a[kOcvTerms + 1] = r1;
  a[kOcvTerms + 2] = c1;
  return a;
}

EcmParams EcmParams::from_array(const std::array<double, kEcmParamCount>& a) {
  EcmParams p;
  for (std::size_t k = 0; k < kOcvTerms; ++k) p.ocv.c[k] = a[k];
  p.r0 = a[kOcvTerms];
  p.r1 = a[kOcvTerms + 1];
  p.c1 = a[kOcvTerms + 2];
  return p;
}

void EcmParams::store(KvFile& kv, const std::string& prefix, int digits) const {
  for (std::size_t k = 0; k < kOcvTerms; ++k) kv.set(prefix + "ocv.c" + std::to_string(k), ocv.c[k], digits);
  kv.set(prefix + "r0", r0, digits);
  kv.set(prefix + "r1", r1, digits);
  kv.set(prefix + "c1", c1, digits);
}

EcmParams EcmParams::load(const KvFile& kv, const std::string& prefix) {
  EcmParams p;
  for (std::size_t k = 0; k < kOcvTerms; ++k) p.ocv.c[k] = kv.get_double(prefix + "ocv.c" + std::to_string(k));
  p.r0 = kv.get_double(prefix + "r0");
  p.r1 = kv.get_double(prefix + "r1");
  p.c1 = kv.get_double(prefix + "c1");
  p.validate();
  return p;
}

void EcmParams::save(const std::filesystem::path& path) const {
  KvFile kv;
  store(kv, "", 12);
  kv.write(path);
}

EcmParams EcmParams::load(const std::filesystem::path& path) { return load(KvFile::read(path), ""); }

PhysicalWindow to_physical(const Window& w, const NormalizationSpec& spec) {
  PhysicalWindow p;
  p.current.resize(w.length);
  p.temp.resize(w.length);
  p.soc.resize(w.length);
  p.voltage.resize(w.length);
  for (std::size_t k = 0; k < w.length; ++k) {
    p.current[k] = spec.denormalize(Channel::current, w.input(k, kInCurrent));
    p.temp[k] = spec.denormalize(Channel::temp, w.input(k, kInTemp));
    p.soc[k] = spec.denormalize(Channel::soc, w.input(k, kInSoc));
    p.voltage[k] = spec.denormalize(Channel::voltage, w.target[k]);
  }
  return p;
}

double rc_rk4_step(double v1, double current, double tau, double c1, double dt) {
  return rk4_step(v1, dt, [&](double v) { return rc_rhs(v, current, tau, c1); });
}

std::vector<double> simulate_ecm(const EcmParams& p, std::span<const double> current, std::span<const double> soc,
                                 double dt) {
  if (current.size() != soc.size()) throw DataError("current/soc length mismatch");
  const double tau = p.tau();
  std::vector<double> v(current.size());
  double v1 = 0.0;
  for (std::size_t k = 0; k < current.size(); ++k) {
    v[k] = ocv_eval(p.ocv, soc[k]) - p.r0 * current[k] - v1;
    v1 = rc_rk4_step(v1, current[k], tau, p.c1, dt);
  }
  return v;
}

std::vector<double> ecm_simulate(const EcmParams& params, const Window& window, const NormalizationSpec& spec) {
  const PhysicalWindow pw = to_physical(window, spec);
  return simulate_ecm(params, pw.current, pw.soc);
}

namespace {

struct Sample {
  double current;
  double soc;
  double voltage;
};

// Flattened physical training data; window boundaries reset V1.
struct EcmData {
  std::vector<Sample> samples;
  std::vector<std::size_t> window_starts;
};

EcmData flatten(std::span<const Window> windows, const NormalizationSpec& spec) {
  EcmData d;
  for (const auto& w : windows) {
    d.window_starts.push_back(d.samples.size());
    const PhysicalWindow pw = to_physical(w, spec);
    for (std::size_t k = 0; k < w.length; ++k) d.samples.push_back({pw.current[k], pw.soc[k], pw.voltage[k]});
  }
  d.window_starts.push_back(d.samples.size());
  return d;
}

// Predictions and (optionally) the Jacobian in natural parameters.
void evaluate(const EcmParams& p, const EcmData& d, Eigen::VectorXd& pred, Eigen::MatrixXd* jac) {
  using D2 = Dual<2>;
  const std::size_t n = d.samples.size();
  pred.resize(static_cast<Eigen::Index>(n));
  if (jac) jac->resize(static_cast<Eigen::Index>(n), kEcmParamCount);
  const D2 r1 = D2::variable(p.r1, 0);
  const D2 c1 = D2::variable(p.c1, 1);
  const D2 tau = r1 * c1;
  for (std::size_t w = 0; w + 1 < d.window_starts.size(); ++w) {
    D2 v1(0.0);
    for (std::size_t s = d.window_starts[w]; s < d.window_starts[w + 1]; ++s) {
      const Sample& smp = d.samples[s];
      const auto row = static_cast<Eigen::Index>(s);
      const OcvGradient og = ocv_grad(p.ocv, smp.soc);
      pred[row] = og.value - p.r0 * smp.current - v1.v;
      if (jac) {
        for (std::size_t k = 0; k < kOcvTerms; ++k) (*jac)(row, static_cast<Eigen::Index>(k)) = og.d_dc[k];
        (*jac)(row, kOcvTerms) = -smp.current;
        (*jac)(row, kOcvTerms + 1) = -v1.d[0];
        (*jac)(row, kOcvTerms + 2) = -v1.d[1];
      }
      const D2 cur(smp.current);
      v1 = rk4_step(v1, kSampleInterval, [&](const D2& v) { return -v / tau + cur / c1; });
    }
  }
}

Eigen::VectorXd measured(const EcmData& d) {
  Eigen::VectorXd m(static_cast<Eigen::Index>(d.samples.size()));
  for (std::size_t s = 0; s < d.samples.size(); ++s) m[static_cast<Eigen::Index>(s)] = d.samples[s].voltage;
  return m;
}

EcmParams from_log_space(const Eigen::VectorXd& q) {
  std::array<double, kEcmParamCount> a{};
  for (std::size_t k = 0; k < kOcvTerms; ++k) a[k] = q[static_cast<Eigen::Index>(k)];
  for (std::size_t k = kOcvTerms; k < kEcmParamCount; ++k) a[k] = std::exp(q[static_cast<Eigen::Index>(k)]);
  return EcmParams::from_array(a);
}

Eigen::VectorXd to_log_space(const EcmParams& p) {
  const auto a = p.to_array();
  Eigen::VectorXd q(kEcmParamCount);
  for (std::size_t k = 0; k < kOcvTerms; ++k) q[static_cast<Eigen::Index>(k)] = a[k];
  for (std::size_t k = kOcvTerms; k < kEcmParamCount; ++k) q[static_cast<Eigen::Index>(k)] = std::log(a[k]);
  return q;
}

}  // namespace

Eigen::MatrixXd jacobian(const EcmParams& params, std::span<const Window> windows, const NormalizationSpec& spec) {
  const EcmData d = flatten(windows, spec);
  Eigen::VectorXd pred;
  Eigen::MatrixXd jac;
  evaluate(params, d, pred, &jac);
  return jac;
}

EcmParams initial_guess(std::span<const Window> train, const NormalizationSpec& spec) {
  if (train.empty()) throw DataError("no training windows");
  const EcmData d = flatten(train, spec);
  Eigen::MatrixXd ata = Eigen::MatrixXd::Zero(kOcvTerms, kOcvTerms);
  Eigen::VectorXd atb = Eigen::VectorXd::Zero(kOcvTerms);
  for (const auto& s : d.samples) {
    const auto t = chebyshev_basis(2.0 * s.soc - 1.0);
    const Eigen::Map<const Eigen::VectorXd> row(t.data(), kOcvTerms);
    ata.noalias() += row * row.transpose();
    atb.noalias() += row * s.voltage;
  }
  // Small ridge keeps the solve well-posed when z covers a narrow range.
  ata.diagonal().array() += 1e-9 * (1.0 + ata.diagonal().maxCoeff());
  const Eigen::VectorXd c = ata.ldlt().solve(atb);
  EcmParams p;
  for (std::size_t k = 0; k < kOcvTerms; ++k) p.ocv.c[k] = c[static_cast<Eigen::Index>(k)];
  p.r0 = 0.010;
  p.r1 = 0.010;
  p.c1 = 1000.0;
  return p;
}

FitReport ecm_identify(std::span<const Window> train, const NormalizationSpec& spec, const EcmParams& init,
                       const LmOptions& opt) {
  if (train.empty()) throw DataError("no training windows");
  init.validate();
  // Heap-allocated (always aligned) so vectorized reductions do not depend
  // on stack addresses; keeps fits bit-reproducible across runs.

  const EcmData d = flatten(train, spec);
  const Eigen::VectorXd meas = measured(d);
  const double n = static_cast<double>(d.samples.size());

  Eigen::VectorXd q = to_log_space(init);
  EcmParams params = init;
  Eigen::VectorXd pred;
  Eigen::MatrixXd jac;
  evaluate(params, d, pred, &jac);
  Eigen::VectorXd resid = pred - meas;
  double cost = resid.squaredNorm();

  FitReport report;
  report.cost_history.push_back(cost);
  double lambda = opt.initial_lambda;

  for (int it = 0; it < opt.max_iterations; ++it) {
    report.iterations = it + 1;
    // Chain rule into log space for the circuit parameters.
    for (std::size_t k = kOcvTerms; k < kEcmParamCount; ++k) {
      jac.col(static_cast<Eigen::Index>(k)) *= params.to_array()[k];
    }
    const Eigen::MatrixXd jtj = jac.transpose() * jac;
    const Eigen::VectorXd grad = jac.transpose() * resid;
    Eigen::VectorXd scale = jtj.diagonal().cwiseMax(1e-12 * (1.0 + jtj.diagonal().maxCoeff()));

    bool accepted = false;
    while (!accepted) {
      Eigen::MatrixXd a = jtj;
      a.diagonal() += lambda * scale;
      const Eigen::VectorXd step = -a.ldlt().solve(grad);
      const Eigen::VectorXd q_new = q + step;
      const EcmParams trial = from_log_space(q_new);
      Eigen::VectorXd trial_pred;
      evaluate(trial, d, trial_pred, nullptr);
      const double trial_cost = (trial_pred - meas).squaredNorm();
      if (std::isfinite(trial_cost) && trial_cost < cost) {
        const double rel = (cost - trial_cost) / cost;
        q = q_new;
        params = trial;
        cost = trial_cost;
        report.cost_history.push_back(cost);
        lambda = std::max(lambda / opt.lambda_down, 1e-15);
        accepted = true;
        if (rel < opt.relative_tolerance) {
          report.converged = true;
        }
      } else {
        lambda *= opt.lambda_up;
        if (lambda > 1e16) {
          // No descent direction left at machine precision.
          report.converged = true;
          break;
        }
      }
    }
    if (report.converged) break;
    evaluate(params, d, pred, &jac);
    resid = pred - meas;
  }

  report.params = params;
  report.rmse = std::sqrt(cost / n);
  return report;
}

}  // namespace ecmude
