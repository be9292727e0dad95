// SPDX-License-Identifier: Apache-2.0
//
// Directional-derivative checks of the analytic gradients against central
// finite differences along random directions.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "ecmude/lstm.hpp"
#include "ecmude/mlp.hpp"
#include "ecmude/rng.hpp"
#include "ecmude/ude.hpp"
#include "oracles.hpp"

namespace gradcheck {

/// |g.d - fd| / max(|fd|, |g.d|) for one direction d.
inline double directional_error(const std::function<double(const std::vector<double>&)>& loss,
                                const std::vector<double>& p, const std::vector<double>& grad, ecmude::Rng& rng,
                                double eps) {
  std::vector<double> d(p.size());
  double norm = 0.0;
  for (double& v : d) {
    v = rng.normal();
    norm += v * v;
  }
  norm = std::sqrt(norm);
  double analytic = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    d[i] /= norm;
    analytic += grad[i] * d[i];
  }
  std::vector<double> plus = p, minus = p;
  for (std::size_t i = 0; i < d.size(); ++i) {
    plus[i] += eps * d[i];
    minus[i] -= eps * d[i];
  }
  const double fd = (loss(plus) - loss(minus)) / (2.0 * eps);
  return std::abs(analytic - fd) / std::max({std::abs(fd), std::abs(analytic), 1e-300});
}

inline double mlp_worst_relative_error(int draws, std::uint64_t seed) {
  using namespace ecmude;
  Rng rng(seed);
  double worst = 0.0;
  const Eigen::Index B = 7;
  for (int k = 0; k < draws; ++k) {
    std::vector<double> p(MlpCorrection::kParamCount);
    for (double& v : p) v = rng.uniform(-0.6, 0.6);
    Eigen::MatrixXd x(4, B);
    for (Eigen::Index j = 0; j < x.size(); ++j) x.data()[j] = rng.uniform(-2.0, 2.0);
    Eigen::RowVectorXd w(B);
    for (Eigen::Index j = 0; j < B; ++j) w(j) = rng.uniform(-1.0, 1.0);

    auto loss_at = [&](const std::vector<double>& q, const Eigen::MatrixXd& xin) {
      Eigen::RowVectorXd y(B);
      mlp_forward(MlpView(q), xin, y);
      return y.dot(w);
    };
    MlpTape tape;
    tape.resize(B);
    Eigen::RowVectorXd y(B);
    const MlpView view(p);
    mlp_forward(view, x, y, &tape, 0);
    Eigen::MatrixXd dx(4, B);
    mlp_backward_inputs(view, tape, 0, w, dx);
    std::vector<double> g(p.size(), 0.0);
    mlp_accumulate_param_grads(tape, g);

    worst = std::max(worst, directional_error([&](const std::vector<double>& q) { return loss_at(q, x); }, p, g,
                                              rng, 1e-5));
    // Input adjoints.
    std::vector<double> xv(x.data(), x.data() + x.size()), gx(dx.data(), dx.data() + dx.size());
    worst = std::max(worst, directional_error(
                                [&](const std::vector<double>& q) {
                                  return loss_at(p, Eigen::Map<const Eigen::MatrixXd>(q.data(), 4, B));
                                },
                                xv, gx, rng, 1e-5));
  }
  return worst;
}

inline double lstm_worst_relative_error(int draws, std::uint64_t seed) {
  using namespace ecmude;
  Rng rng(seed);
  double worst = 0.0;
  const Eigen::Index B = 2, L = 50;
  for (int k = 0; k < draws; ++k) {
    std::vector<double> p(LstmBaseline::kParamCount);
    for (double& v : p) v = rng.uniform(-0.35, 0.35);
    Eigen::MatrixXd x(3, L * B);
    for (Eigen::Index j = 0; j < x.size(); ++j) x.data()[j] = rng.uniform(-1.5, 1.5);
    Eigen::RowVectorXd w(L * B);
    for (Eigen::Index j = 0; j < w.size(); ++j) w(j) = rng.uniform(-1.0, 1.0);
    LstmTape tape;
    const Eigen::RowVectorXd y = lstm_forward(p, x, B, &tape);
    std::vector<double> g(p.size(), 0.0);
    lstm_backward(p, tape, w, g);
    worst = std::max(worst, directional_error(
                                [&](const std::vector<double>& q) { return lstm_forward(q, x, B).dot(w); }, p, g,
                                rng, 1e-5));
  }
  return worst;
}

/// Loss through the full RK4 unroll of two windows of `length` samples.
inline double ude_worst_relative_error(int draws, std::uint64_t seed, std::size_t length = 1024) {
  using namespace ecmude;
  Rng rng(seed);
  auto data = oracles::self_generated(oracles::reference_ecm(), 2, 0.002, seed);
  for (auto& w : data.windows) {
    w.length = length;
    w.inputs.resize(length * kInputChannels);
    w.target.resize(length);
  }
  const std::vector<const Window*> batch{&data.windows[0], &data.windows[1]};
  double worst = 0.0;
  for (int k = 0; k < draws; ++k) {
    UdeModel m = warm_start(oracles::reference_ecm(), 9000.0, seed + static_cast<std::uint64_t>(k));
    // Non-zero head so every block carries gradient.
    MlpGradView head(m.net.params());
    for (Eigen::Index j = 0; j < head.w3.size(); ++j) head.w3.data()[j] = rng.uniform(-0.5, 0.5);
    head.b3 = rng.uniform(-0.2, 0.2);
    m.eta = rng.uniform(0.85, 1.05);
    m.ecm.r1 *= rng.uniform(0.8, 1.2);
    const std::vector<double> p = m.pack();
    std::vector<double> g(p.size(), 0.0);
    ude_loss_and_grad(m, batch, data.spec, g);
    auto loss = [&](const std::vector<double>& q) {
      UdeModel t = m;
      t.unpack(q);
      return ude_loss(t, batch, data.spec);
    };
    worst = std::max(worst, directional_error(loss, p, g, rng, 1e-6));
  }
  return worst;
}

}  // namespace gradcheck
