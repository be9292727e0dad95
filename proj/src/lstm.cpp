// SPDX-License-Identifier: Apache-2.0
#include "ecmude/lstm.hpp"

#include <cmath>

#include "ecmude/errors.hpp"
#include "ecmude/rng.hpp"

namespace ecmude {

namespace {

constexpr Eigen::Index kH = LstmBaseline::kHidden;
constexpr Eigen::Index kG = 4 * kH;

Eigen::Index fan_in_of(std::size_t layer) { return layer == 0 ? LstmBaseline::kInputs : kH; }

std::size_t layer_offset(std::size_t layer) {
  std::size_t off = 0;
  for (std::size_t l = 0; l < layer; ++l) off += LstmBaseline::layer_param_count(fan_in_of(l));
  return off;
}

const std::size_t kHeadOffset = layer_offset(LstmBaseline::kLayers);

template <class Scalar>
struct LayerMaps {
  using Mat = std::conditional_t<std::is_const_v<Scalar>, const Eigen::MatrixXd, Eigen::MatrixXd>;
  using Vec = std::conditional_t<std::is_const_v<Scalar>, const Eigen::VectorXd, Eigen::VectorXd>;
  Eigen::Map<Mat> w_ih, w_hh;
  Eigen::Map<Vec> b_ih, b_hh;

  LayerMaps(Scalar* base, std::size_t layer)
      : w_ih(base + layer_offset(layer), kG, fan_in_of(layer)),
        w_hh(base + layer_offset(layer) + kG * fan_in_of(layer), kG, kH),
        b_ih(base + layer_offset(layer) + kG * (fan_in_of(layer) + kH), kG),
        b_hh(base + layer_offset(layer) + kG * (fan_in_of(layer) + kH) + kG, kG) {}
};

void activate(Eigen::Ref<Eigen::MatrixXd> g) {
  // i, f: sigmoid; g: tanh; o: sigmoid.
  g.topRows(2 * kH).array() = 1.0 / (1.0 + (-g.topRows(2 * kH).array()).exp());
  g.middleRows(2 * kH, kH).array() = g.middleRows(2 * kH, kH).array().tanh();
  g.bottomRows(kH).array() = 1.0 / (1.0 + (-g.bottomRows(kH).array()).exp());
}

}  // namespace

LstmBaseline::LstmBaseline() : params_(kParamCount, 0.0) {}

LstmBaseline::LstmBaseline(std::vector<double> params) : params_(std::move(params)) {
  if (params_.size() != kParamCount) throw ConfigError("LSTM parameter vector must have 13217 entries");
}

LstmBaseline LstmBaseline::initialized(std::uint64_t seed) {
  LstmBaseline net;
  Rng rng(seed);
  for (std::size_t l = 0; l < kLayers; ++l) {
    LayerMaps<double> m(net.params_.data(), l);
    const double a_ih = 1.0 / std::sqrt(static_cast<double>(fan_in_of(l)));
    const double a_hh = 1.0 / std::sqrt(static_cast<double>(kH));
    for (Eigen::Index j = 0; j < m.w_ih.size(); ++j) m.w_ih.data()[j] = rng.uniform(-a_ih, a_ih);
    for (Eigen::Index j = 0; j < m.w_hh.size(); ++j) m.w_hh.data()[j] = rng.uniform(-a_hh, a_hh);
    m.b_ih.segment(kH, kH).setOnes();
  }
  const double a_head = 1.0 / std::sqrt(static_cast<double>(kH));
  for (Eigen::Index j = 0; j < kH; ++j) {
    net.params_[kHeadOffset + static_cast<std::size_t>(j)] = rng.uniform(-a_head, a_head);
  }
  return net;
}

std::vector<double> LstmBaseline::forward(std::span<const double> inputs) const {
  const auto steps = static_cast<Eigen::Index>(inputs.size() / kInputs);
  Eigen::Map<const Eigen::MatrixXd> x(inputs.data(), kInputs, steps);
  const Eigen::RowVectorXd y = lstm_forward(params_, x, 1, nullptr);
  return {y.data(), y.data() + y.size()};
}

Eigen::RowVectorXd lstm_forward(std::span<const double> params, const Eigen::Ref<const Eigen::MatrixXd>& x,
                                Eigen::Index batch, LstmTape* tape) {
  if (params.size() != LstmBaseline::kParamCount) throw ConfigError("LSTM parameter size mismatch");
  const Eigen::Index cols = x.cols();
  const Eigen::Index steps = cols / batch;
  Eigen::MatrixXd layer_in = x;
  if (tape) {
    tape->batch = batch;
    tape->steps = steps;
    tape->x = x;
  }
  for (std::size_t l = 0; l < LstmBaseline::kLayers; ++l) {
    LayerMaps<const double> m(params.data(), l);
    Eigen::MatrixXd gates = m.w_ih * layer_in;
    gates.colwise() += m.b_ih + m.b_hh;
    Eigen::MatrixXd cell(kH, cols), tanh_cell(kH, cols), hidden(kH, cols);
    for (Eigen::Index t = 0; t < steps; ++t) {
      auto g = gates.middleCols(t * batch, batch);
      if (t > 0) g.noalias() += m.w_hh * hidden.middleCols((t - 1) * batch, batch);
      activate(g);
      auto c = cell.middleCols(t * batch, batch);
      c.array() = g.topRows(kH).array() * g.middleRows(2 * kH, kH).array();
      if (t > 0) c.array() += g.middleRows(kH, kH).array() * cell.middleCols((t - 1) * batch, batch).array();
      auto tc = tanh_cell.middleCols(t * batch, batch);
      tc.array() = c.array().tanh();
      hidden.middleCols(t * batch, batch).array() = g.bottomRows(kH).array() * tc.array();
    }
    layer_in = hidden;
    if (tape) {
      tape->gates[l] = std::move(gates);
      tape->cell[l] = std::move(cell);
      tape->tanh_cell[l] = std::move(tanh_cell);
      tape->hidden[l] = std::move(hidden);
    }
  }
  Eigen::Map<const Eigen::RowVectorXd> w_head(params.data() + kHeadOffset, kH);
  Eigen::RowVectorXd y = w_head * layer_in;
  y.array() += params[kHeadOffset + kH];
  return y;
}

void lstm_backward(std::span<const double> params, const LstmTape& tape,
                   const Eigen::Ref<const Eigen::RowVectorXd>& dy, std::span<double> grad) {
  const Eigen::Index batch = tape.batch;
  const Eigen::Index steps = tape.steps;
  const Eigen::Index cols = batch * steps;
  constexpr std::size_t top = LstmBaseline::kLayers - 1;

  Eigen::Map<const Eigen::RowVectorXd> w_head(params.data() + kHeadOffset, kH);
  Eigen::Map<Eigen::RowVectorXd> g_head(grad.data() + kHeadOffset, kH);
  g_head.noalias() += dy * tape.hidden[top].transpose();
  grad[kHeadOffset + kH] += dy.sum();

  // d(loss)/d(h_t) arriving from above (head or next layer).
  Eigen::MatrixXd dh_above = w_head.transpose() * dy;

  for (std::size_t li = LstmBaseline::kLayers; li-- > 0;) {
    LayerMaps<const double> m(params.data(), li);
    LayerMaps<double> gm(grad.data(), li);
    const Eigen::MatrixXd& a = tape.gates[li];
    const Eigen::MatrixXd& cell = tape.cell[li];
    const Eigen::MatrixXd& tc = tape.tanh_cell[li];
    const Eigen::MatrixXd& layer_in = li == 0 ? tape.x : tape.hidden[li - 1];

    Eigen::MatrixXd dgates(kG, cols);
    Eigen::MatrixXd dh_next = Eigen::MatrixXd::Zero(kH, batch);
    Eigen::MatrixXd dc_next = Eigen::MatrixXd::Zero(kH, batch);
    Eigen::MatrixXd dh(kH, batch), dc(kH, batch);
    for (Eigen::Index t = steps; t-- > 0;) {
      const Eigen::Index c0 = t * batch;
      const auto ig = a.middleCols(c0, batch).topRows(kH).array();
      const auto fg = a.middleCols(c0, batch).middleRows(kH, kH).array();
      const auto gg = a.middleCols(c0, batch).middleRows(2 * kH, kH).array();
      const auto og = a.middleCols(c0, batch).bottomRows(kH).array();
      const auto tct = tc.middleCols(c0, batch).array();

      dh = dh_above.middleCols(c0, batch) + dh_next;
      dc.array() = dc_next.array() + dh.array() * og * (1.0 - tct * tct);

      auto dg = dgates.middleCols(c0, batch);
      dg.topRows(kH).array() = dc.array() * gg * ig * (1.0 - ig);
      if (t > 0) {
        dg.middleRows(kH, kH).array() = dc.array() * cell.middleCols(c0 - batch, batch).array() * fg * (1.0 - fg);
      } else {
        dg.middleRows(kH, kH).setZero();
      }
      dg.middleRows(2 * kH, kH).array() = dc.array() * ig * (1.0 - gg * gg);
      dg.bottomRows(kH).array() = dh.array() * tct * og * (1.0 - og);

      dc_next.array() = dc.array() * fg;
      dh_next.noalias() = m.w_hh.transpose() * dg;
    }

    gm.w_ih.noalias() += dgates * layer_in.transpose();
    if (steps > 1) {
      gm.w_hh.noalias() +=
          dgates.rightCols(cols - batch) * tape.hidden[li].leftCols(cols - batch).transpose();
    }
    const Eigen::VectorXd db = dgates.rowwise().sum();
    gm.b_ih += db;
    gm.b_hh += db;
    if (li > 0) dh_above = m.w_ih.transpose() * dgates;
  }
}

}  // namespace ecmude
