// SPDX-License-Identifier: Apache-2.0
#include "ecmude/mlp.hpp"

#include <cmath>
#include <numbers>

#include "ecmude/errors.hpp"
#include "ecmude/rng.hpp"

namespace ecmude {

namespace {

constexpr Eigen::Index kIn = MlpCorrection::kInputs;
constexpr Eigen::Index kH = MlpCorrection::kHidden;
constexpr std::size_t kOffW1 = 0;
constexpr std::size_t kOffB1 = kOffW1 + kIn * kH;
constexpr std::size_t kOffW2 = kOffB1 + kH;
constexpr std::size_t kOffB2 = kOffW2 + kH * kH;
constexpr std::size_t kOffW3 = kOffB2 + kH;
constexpr std::size_t kOffB3 = kOffW3 + kH;
static_assert(kOffB3 + 1 == MlpCorrection::kParamCount);

const double kInvSqrt2 = 1.0 / std::numbers::sqrt2;
const double kInvSqrt2Pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);

void gelu_block(const Eigen::Ref<const Eigen::MatrixXd>& z, Eigen::Ref<Eigen::MatrixXd> h) {
  for (Eigen::Index j = 0; j < z.cols(); ++j) {
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
      const double x = z(i, j);
      h(i, j) = 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
    }
  }
}

void gelu_block(const Eigen::Ref<const Eigen::MatrixXd>& z, Eigen::Ref<Eigen::MatrixXd> h,
                Eigen::Ref<Eigen::MatrixXd> d) {
  for (Eigen::Index j = 0; j < z.cols(); ++j) {
    for (Eigen::Index i = 0; i < z.rows(); ++i) {
      const double x = z(i, j);
      const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
      h(i, j) = x * cdf;
      d(i, j) = cdf + x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
    }
  }
}

}  // namespace

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }

double gelu_derivative(double x) {
  return 0.5 * (1.0 + std::erf(x * kInvSqrt2)) + x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

MlpCorrection::MlpCorrection() : params_(kParamCount, 0.0) {}

MlpCorrection::MlpCorrection(std::vector<double> params) : params_(std::move(params)) {
  if (params_.size() != kParamCount) throw ConfigError("MLP parameter vector must have 1249 entries");
}

MlpCorrection MlpCorrection::initialized(std::uint64_t seed) {
  MlpCorrection net;
  Rng rng(seed);
  const double a1 = 1.0 / std::sqrt(static_cast<double>(kIn));
  const double a2 = 1.0 / std::sqrt(static_cast<double>(kH));
  for (std::size_t i = kOffW1; i < kOffB1; ++i) net.params_[i] = rng.uniform(-a1, a1);
  for (std::size_t i = kOffW2; i < kOffB2; ++i) net.params_[i] = rng.uniform(-a2, a2);
  // Output layer stays exactly zero: the hybrid model starts as the pure circuit.
  return net;
}

double MlpCorrection::forward(double v1, double current, double soc, double temp) const {
  const MlpView net(params_);
  Eigen::Matrix<double, kIn, 1> x(v1, current, soc, temp);
  Eigen::Matrix<double, kH, 1> h1 = net.w1 * x + net.b1;
  for (Eigen::Index i = 0; i < kH; ++i) h1[i] = gelu(h1[i]);
  Eigen::Matrix<double, kH, 1> h2 = net.w2 * h1 + net.b2;
  for (Eigen::Index i = 0; i < kH; ++i) h2[i] = gelu(h2[i]);
  return (net.w3 * h2)(0, 0) + net.b3;
}

MlpView::MlpView(std::span<const double> p)
    : w1(p.data() + kOffW1, kH, kIn),
      w2(p.data() + kOffW2, kH, kH),
      w3(p.data() + kOffW3, 1, kH),
      b1(p.data() + kOffB1, kH),
      b2(p.data() + kOffB2, kH),
      b3(p[kOffB3]) {}

MlpGradView::MlpGradView(std::span<double> g)
    : w1(g.data() + kOffW1, kH, kIn),
      w2(g.data() + kOffW2, kH, kH),
      w3(g.data() + kOffW3, 1, kH),
      b1(g.data() + kOffB1, kH),
      b2(g.data() + kOffB2, kH),
      b3(g[kOffB3]) {}

void MlpTape::resize(Eigen::Index n) {
  x.resize(kIn, n);
  h1.resize(kH, n);
  d1.resize(kH, n);
  h2.resize(kH, n);
  d2.resize(kH, n);
  dz1.resize(kH, n);
  dz2.resize(kH, n);
  dy.resize(n);
}

void mlp_forward(const MlpView& net, const Eigen::Ref<const Eigen::MatrixXd>& x, Eigen::Ref<Eigen::RowVectorXd> y,
                 MlpTape* tape, Eigen::Index col0) {
  const Eigen::Index b = x.cols();
  Eigen::MatrixXd z1 = net.w1 * x;
  z1.colwise() += net.b1;
  Eigen::MatrixXd h1(kH, b);
  if (tape) {
    tape->x.middleCols(col0, b) = x;
    gelu_block(z1, h1, tape->d1.middleCols(col0, b));
    tape->h1.middleCols(col0, b) = h1;
  } else {
    gelu_block(z1, h1);
  }
  Eigen::MatrixXd z2 = net.w2 * h1;
  z2.colwise() += net.b2;
  Eigen::MatrixXd h2(kH, b);
  if (tape) {
    gelu_block(z2, h2, tape->d2.middleCols(col0, b));
    tape->h2.middleCols(col0, b) = h2;
  } else {
    gelu_block(z2, h2);
  }
  y.noalias() = net.w3 * h2;
  y.array() += net.b3;
}

void mlp_backward_inputs(const MlpView& net, MlpTape& tape, Eigen::Index col0,
                         const Eigen::Ref<const Eigen::RowVectorXd>& dy, Eigen::Ref<Eigen::MatrixXd> dx) {
  const Eigen::Index b = dy.cols();
  tape.dy.segment(col0, b) = dy;
  auto dz2 = tape.dz2.middleCols(col0, b);
  dz2.noalias() = net.w3.transpose() * dy;
  dz2.array() *= tape.d2.middleCols(col0, b).array();
  auto dz1 = tape.dz1.middleCols(col0, b);
  dz1.noalias() = net.w2.transpose() * dz2;
  dz1.array() *= tape.d1.middleCols(col0, b).array();
  dx.noalias() = net.w1.transpose() * dz1;
}

void mlp_accumulate_param_grads(const MlpTape& tape, std::span<double> grad) {
  MlpGradView g(grad);
  g.w1.noalias() += tape.dz1 * tape.x.transpose();
  g.b1 += tape.dz1.rowwise().sum();
  g.w2.noalias() += tape.dz2 * tape.h1.transpose();
  g.b2 += tape.dz2.rowwise().sum();
  g.w3.noalias() += tape.dy * tape.h2.transpose();
  g.b3 += tape.dy.sum();
}

}  // namespace ecmude
