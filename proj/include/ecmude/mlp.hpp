// SPDX-License-Identifier: Apache-2.0
//
// Correction network f_theta: 4 -> 32 -> 32 -> 1, exact GELU on the hidden
// layers, identity output. Parameters live in one flat vector, laid out as
// W1 (32x4, column-major), b1, W2 (32x32), b2, W3 (1x32), b3.
#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace ecmude {

double gelu(double x);
/// d gelu / dx = Phi(x) + x phi(x).
double gelu_derivative(double x);

class MlpCorrection {
 public:
  static constexpr Eigen::Index kInputs = 4;
  static constexpr Eigen::Index kHidden = 32;
  static constexpr std::size_t kParamCount =
      kInputs * kHidden + kHidden + kHidden * kHidden + kHidden + kHidden + 1;
  static_assert(kParamCount == 1249);

  /// All-zero parameters.
  MlpCorrection();
  explicit MlpCorrection(std::vector<double> params);

  /// Hidden weights uniform in +-1/sqrt(fan_in), zero biases, zero output layer.
  static MlpCorrection initialized(std::uint64_t seed);

  std::span<const double> params() const { return params_; }
  std::span<double> params() { return params_; }

  double forward(double v1, double current, double soc, double temp) const;

 private:
  std::vector<double> params_;
};

/// Read-only matrices mapped over a flat parameter span.
struct MlpView {
  explicit MlpView(std::span<const double> p);
  Eigen::Map<const Eigen::MatrixXd> w1, w2, w3;
  Eigen::Map<const Eigen::VectorXd> b1, b2;
  double b3;
};

/// Writable matrices over a flat gradient span (same layout).
struct MlpGradView {
  explicit MlpGradView(std::span<double> g);
  Eigen::Map<Eigen::MatrixXd> w1, w2, w3;
  Eigen::Map<Eigen::VectorXd> b1, b2;
  double& b3;
};

/// Forward record for reverse accumulation. Column j holds one evaluation.
struct MlpTape {
  Eigen::MatrixXd x;          // 4 x N inputs
  Eigen::MatrixXd h1, d1;     // GELU outputs / derivatives, layer 1
  Eigen::MatrixXd h2, d2;     // layer 2
  Eigen::MatrixXd dz1, dz2;   // pre-activation adjoints (filled by backward)
  Eigen::RowVectorXd dy;      // output adjoints

  void resize(Eigen::Index columns);
  Eigen::Index columns() const { return x.cols(); }
};

/// y = f(x) for each column of x (4 x B). With a tape, records into columns
/// [col0, col0 + B).
void mlp_forward(const MlpView& net, const Eigen::Ref<const Eigen::MatrixXd>& x, Eigen::Ref<Eigen::RowVectorXd> y,
                 MlpTape* tape = nullptr, Eigen::Index col0 = 0);

/// Given output adjoints for columns [col0, col0 + B), stores the
/// pre-activation adjoints on the tape and returns input adjoints (4 x B).
void mlp_backward_inputs(const MlpView& net, MlpTape& tape, Eigen::Index col0,
                         const Eigen::Ref<const Eigen::RowVectorXd>& dy, Eigen::Ref<Eigen::MatrixXd> dx);

/// Accumulates parameter gradients from every recorded column (after all
/// mlp_backward_inputs calls) into `grad`.
void mlp_accumulate_param_grads(const MlpTape& tape, std::span<double> grad);

}  // namespace ecmude
