// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <numeric>

#include "doctest.h"
#include "ecmude/errors.hpp"
#include "ecmude/eval.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace ecmude;

TEST_SUITE("eval") {

TEST_CASE("metrics") {
  const std::vector<double> zero(5, 3.7);
  const auto m0 = compute_metrics(zero, zero);
  CHECK(m0.mae == 0.0);
  CHECK(m0.p99 == 0.0);

  const std::vector<double> meas{0, 0, 0, 0}, pred{0.001, -0.002, 0.003, -0.004};
  CHECK(compute_metrics(pred, meas).mae == doctest::Approx(0.0025).epsilon(1e-14));

  std::vector<double> e(100);
  std::iota(e.begin(), e.end(), 1.0);
  CHECK(percentile(e, 99.0) == doctest::Approx(99.01).epsilon(1e-13));
  CHECK(percentile(e, 0.0) == 1.0);
  CHECK(percentile(e, 100.0) == 100.0);

  CHECK_THROWS(compute_metrics(std::vector<double>{1, 2}, std::vector<double>{1}));
}

TEST_CASE("metrics ignore sample order") {
  Rng rng(3);
  std::vector<double> p(200), m(200);
  for (std::size_t k = 0; k < p.size(); ++k) {
    p[k] = rng.uniform(3.0, 4.0);
    m[k] = rng.uniform(3.0, 4.0);
  }
  const auto a = compute_metrics(p, m);
  std::vector<std::size_t> idx(p.size());
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
  std::vector<double> ps, ms;
  for (std::size_t i : idx) {
    ps.push_back(p[i]);
    ms.push_back(m[i]);
  }
  const auto b = compute_metrics(ps, ms);
  CHECK(a.mae == doctest::Approx(b.mae).epsilon(1e-14));
  CHECK(a.p99 == b.p99);
}

TEST_CASE("reconstruction") {
  SUBCASE("overlap average") {
    const std::vector<WindowPrediction> w{{0, {1, 1, 1, 1}}, {2, {3, 3, 3, 3}}};
    const auto r = reconstruct(w, 8);
    CHECK(r.values[0] == 1.0);
    CHECK(r.values[2] == 2.0);
    CHECK(r.values[3] == 2.0);
    CHECK(r.values[5] == 3.0);
    CHECK(r.covered[5] == 1);
    CHECK(r.covered[6] == 0);
  }
  SUBCASE("single window passthrough") {
    const std::vector<WindowPrediction> w{{1, {4, 5, 6}}};
    const auto r = reconstruct(w, 4);
    CHECK(r.values == std::vector<double>{0, 4, 5, 6});
  }
  SUBCASE("perfect predictions for arbitrary geometry") {
    Rng rng(4);
    for (int trial = 0; trial < 20; ++trial) {
      const std::size_t L = 2 + rng.below(40);
      const std::size_t S = 1 + rng.below(L);
      const std::size_t N = L + rng.below(300);
      std::vector<double> truth(N);
      for (double& v : truth) v = rng.uniform(3, 4);
      std::vector<WindowPrediction> w;
      for (std::size_t s = 0; s + L <= N; s += S) w.push_back({s, {truth.begin() + s, truth.begin() + s + L}});
      const auto r = reconstruct(w, N);
      for (std::size_t k = 0; k < N; ++k) {
        if (r.covered[k]) CHECK(r.values[k] == doctest::Approx(truth[k]).epsilon(1e-15));
      }
    }
  }
}

TEST_CASE("circuit evaluation on its own data is exact") {
  const EcmParams truth = oracles::reference_ecm();
  const auto d = oracles::self_generated(truth, 4, 0.0, 8);
  const auto model = make_ecm_predictor(truth, d.spec);
  for (const auto& p : model->predict(d.windows)) CHECK(p.size() == 1024);
  // Each window's own target is the ECM output.
  const auto preds = model->predict(d.windows);
  double worst = 0.0;
  for (std::size_t i = 0; i < d.windows.size(); ++i) {
    for (std::size_t k = 0; k < 1024; ++k) {
      worst = std::max(worst, std::abs(preds[i][k] - d.spec.denormalize(Channel::voltage, d.windows[i].target[k])));
    }
  }
  CHECK(worst < 1e-12);
}

TEST_CASE("matched aggregation and zero-noise perturbation") {
  CycleRecord c = derive_soc(oracles::excitation_cycle(8000, 6));
  const EcmParams truth = oracles::reference_ecm();
  const auto spec = fit_normalization(c, {0, c.size()});
  const auto windows = make_windows(c, spec, 1024, 512);
  const auto model = make_ecm_predictor(truth, spec);
  const VoltagePredictor* same[] = {model.get(), model.get(), model.get()};
  const auto rep = evaluate_matched(same, windows, c);
  CHECK(rep.per_seed.size() == 3);
  CHECK(rep.mae_std == 0.0);
  CHECK(rep.mae_mean == rep.per_seed[0].mae);

  const auto p0 = perturb_soc(*model, windows, c, 0.0, 5, 11);
  REQUIRE(p0.mae.size() == 1);
  CHECK(p0.mae[0] == evaluate_reconstructed(*model, windows, c).mae);

  const auto p1 = perturb_soc(*model, windows, c, 0.02, 5, 11);
  CHECK(p1.mae.size() == 5);
  CHECK(p1.mae_std > 0.0);
  const auto p1b = perturb_soc(*model, windows, c, 0.02, 5, 11);
  CHECK(p1.mae == p1b.mae);
}

TEST_CASE("self transfer agrees with window-level evaluation") {
  CycleRecord c = derive_soc(oracles::excitation_cycle(5 * 1024, 7));
  const auto spec = fit_normalization(c, {0, c.size()});
  EcmParams p = oracles::reference_ecm();
  p.r0 *= 1.4;
  const auto model = make_ecm_predictor(p, spec);
  const auto t = evaluate_transfer(*model, c, 1024, 1024, "self");
  const auto windows = make_windows(c, spec, 1024, 1024);
  const auto r = evaluate_reconstructed(*model, windows, c);
  CHECK(t.mae == doctest::Approx(r.mae).epsilon(1e-12));
  CHECK(t.condition == "self");
  CHECK(t.n_samples == 5 * 1024);
}

TEST_CASE("ranking is invariant to common scaling") {
  Rng rng(12);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> mae(3);
    for (double& v : mae) v = rng.uniform(0.001, 0.2);
    const double s = rng.uniform(0.01, 100.0);
    std::vector<double> scaled = mae;
    for (double& v : scaled) v *= s;
    CHECK(std::min_element(mae.begin(), mae.end()) - mae.begin() ==
          std::min_element(scaled.begin(), scaled.end()) - scaled.begin());
  }
}

}  // TEST_SUITE
