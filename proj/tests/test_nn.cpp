// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include "doctest.h"
#include "ecmude/lstm.hpp"
#include "ecmude/mlp.hpp"
#include "ecmude/rng.hpp"
#include "gradcheck.hpp"

using namespace ecmude;

TEST_SUITE("nn") {

TEST_CASE("parameter counts") {
  CHECK(MlpCorrection::kParamCount == 1249);
  CHECK(MlpCorrection().params().size() == 1249);
  CHECK(LstmBaseline::kParamCount == 13217);
  CHECK(LstmBaseline().params().size() == 13217);
}

TEST_CASE("gelu") {
  CHECK(gelu(0.0) == 0.0);
  CHECK(gelu(1.0) == doctest::Approx(0.8413447460685429).epsilon(1e-14));
  for (double x : {-3.0, -0.7, 0.0, 0.4, 2.5}) {
    CHECK(gelu_derivative(x) == doctest::Approx((gelu(x + 1e-6) - gelu(x - 1e-6)) / 2e-6).epsilon(1e-8));
  }
}

TEST_CASE("initialization") {
  const MlpCorrection m = MlpCorrection::initialized(3);
  const MlpView v(m.params());
  CHECK(v.w3.norm() == 0.0);
  CHECK(v.b3 == 0.0);
  CHECK(v.w1.cwiseAbs().maxCoeff() <= 0.5);
  CHECK(v.w2.cwiseAbs().maxCoeff() <= 1.0 / std::sqrt(32.0));
  CHECK(m.forward(0.3, 1.0, -0.2, 1.0) == 0.0);

  const LstmBaseline l = LstmBaseline::initialized(3);
  // Forget-gate block of the first layer's b_ih is +1.
  const std::size_t h = LstmBaseline::kHidden;
  const std::size_t b_ih = 4 * h * 3 + 4 * h * h;
  CHECK(l.params()[b_ih + h] == 1.0);
  CHECK(l.params()[b_ih] == 0.0);
  CHECK(MlpCorrection::initialized(3).params()[0] == m.params()[0]);
}

TEST_CASE("mlp gradients match central differences") {
  CHECK(gradcheck::mlp_worst_relative_error(20, 17) < 1e-6);
}

TEST_CASE("lstm gradients match central differences") {
  CHECK(gradcheck::lstm_worst_relative_error(20, 18) < 1e-4);
}

TEST_CASE("lstm forward agrees with the batched path") {
  Rng rng(2);
  const LstmBaseline l = LstmBaseline::initialized(5);
  const std::size_t L = 30;
  std::vector<double> in(L * 3);
  for (double& v : in) v = rng.uniform(-1, 1);
  const auto y = l.forward(in);
  Eigen::MatrixXd x(3, static_cast<Eigen::Index>(L));
  for (std::size_t t = 0; t < L; ++t) {
    for (std::size_t c = 0; c < 3; ++c) x(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(t)) = in[t * 3 + c];
  }
  const Eigen::RowVectorXd yb = lstm_forward(l.params(), x, 1);
  for (std::size_t t = 0; t < L; ++t) CHECK(y[t] == doctest::Approx(yb(static_cast<Eigen::Index>(t))).epsilon(1e-14));
}

}  // TEST_SUITE
