// SPDX-License-Identifier: Apache-2.0
//
// Two-layer LSTM baseline (hidden 32, 3 input channels) with a scalar linear
// head applied at every time step.
//
// Per layer the flat parameter vector holds W_ih (4H x F, column-major),
// W_hh (4H x H), b_ih (4H), b_hh (4H); gate blocks are ordered i, f, g, o.
// The head (w: 1 x H, b) follows the last layer.
#pragma once

#include <Eigen/Core>
#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace ecmude {

/// W_ih, W_hh, b_ih, b_hh of one layer.
constexpr std::size_t lstm_layer_param_count(Eigen::Index fan_in, Eigen::Index hidden) {
  return static_cast<std::size_t>(4 * hidden * (fan_in + hidden) + 8 * hidden);
}

class LstmBaseline {
 public:
  static constexpr Eigen::Index kInputs = 3;
  static constexpr Eigen::Index kHidden = 32;
  static constexpr std::size_t kLayers = 2;

  static constexpr std::size_t layer_param_count(Eigen::Index fan_in) {
    return lstm_layer_param_count(fan_in, kHidden);
  }
  static constexpr std::size_t kParamCount = lstm_layer_param_count(kInputs, kHidden) +
                                             lstm_layer_param_count(kHidden, kHidden) +
                                             static_cast<std::size_t>(kHidden) + 1;
  static_assert(kParamCount == 13217);

  LstmBaseline();
  explicit LstmBaseline(std::vector<double> params);

  /// Weights uniform in +-1/sqrt(fan_in), biases zero except forget gate +1.
  static LstmBaseline initialized(std::uint64_t seed);

  std::span<const double> params() const { return params_; }
  std::span<double> params() { return params_; }

  /// inputs: row-major L x 3 normalized (I, T, z); returns L normalized volts.
  std::vector<double> forward(std::span<const double> inputs) const;

 private:
  std::vector<double> params_;
};

/// Forward record for one batch. Columns are indexed t * B + b.
struct LstmTape {
  Eigen::Index batch = 0;
  Eigen::Index steps = 0;
  Eigen::MatrixXd x;                                   // 3 x (L B)
  std::array<Eigen::MatrixXd, LstmBaseline::kLayers> gates;  // activated i, f, g, o: 4H x (L B)
  std::array<Eigen::MatrixXd, LstmBaseline::kLayers> cell;   // H x (L B)
  std::array<Eigen::MatrixXd, LstmBaseline::kLayers> tanh_cell;
  std::array<Eigen::MatrixXd, LstmBaseline::kLayers> hidden;
};

/// x: 3 x (L B) with column t * B + b. Returns 1 x (L B) outputs.
Eigen::RowVectorXd lstm_forward(std::span<const double> params, const Eigen::Ref<const Eigen::MatrixXd>& x,
                                Eigen::Index batch, LstmTape* tape = nullptr);

/// Backpropagation through time over the full sequence; adds d(loss)/d(params)
/// to `grad` given d(loss)/d(output) per column.
void lstm_backward(std::span<const double> params, const LstmTape& tape,
                   const Eigen::Ref<const Eigen::RowVectorXd>& dy, std::span<double> grad);

}  // namespace ecmude
