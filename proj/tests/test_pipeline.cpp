// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <functional>

#include "doctest.h"
#include "ecmude/errors.hpp"
#include "ecmude/pipeline.hpp"
#include "ecmude/rng.hpp"
#include "helpers.hpp"

using namespace ecmude;
using testing::TempDir;

namespace {

CycleRecord with_ah(std::vector<double> ah) {
  CycleRecord c;
  for (std::size_t k = 0; k < ah.size(); ++k) {
    c.t.push_back(0.1 * static_cast<double>(k));
    c.current.push_back(1.0);
    c.voltage.push_back(3.7);
    c.temp.push_back(25.0);
  }
  c.ah = std::move(ah);
  return c;
}

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const std::exception& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_SUITE("pipeline") {

TEST_CASE("csv ingestion") {
  TempDir dir;
  SUBCASE("three uniform rows") {
    const auto p = dir.write("ok.csv", "t,current,voltage,temp,ah\n0,1,4.1,25,0\n0.1,1,4.0,25,-0.0001\n0.2,1,3.9,25,-0.0002\n");
    const CycleRecord c = load_cycle_csv(p);
    CHECK(c.size() == 3);
    CHECK(c.voltage[2] == doctest::Approx(3.9));
    CHECK_FALSE(c.has_soc());
  }
  SUBCASE("column order is free and extra columns are ignored") {
    const auto p = dir.write("perm.csv", "ah,extra,temp,voltage,current,t\n0,9,25,4.1,1,0\n-0.1,9,25,4.0,2,0.1\n");
    const CycleRecord c = load_cycle_csv(p);
    CHECK(c.current[1] == 2.0);
    CHECK(c.ah[1] == -0.1);
  }
  SUBCASE("non-uniform sampling names the row") {
    const auto p = dir.write("bad.csv", "t,current,voltage,temp,ah\n0,1,4,25,0\n0.1,1,4,25,0\n0.25,1,4,25,0\n");
    const auto msg = error_of([&] { load_cycle_csv(p); });
    CHECK(msg.find("non-uniform sampling at row 2") != std::string::npos);
    CHECK_THROWS_AS(load_cycle_csv(p), DataError);
  }
  SUBCASE("missing column is named") {
    const auto p = dir.write("noah.csv", "t,current,voltage,temp\n0,1,4,25\n0.1,1,4,25\n");
    CHECK(error_of([&] { load_cycle_csv(p); }).find("'ah'") != std::string::npos);
  }
  SUBCASE("non-numeric cell") {
    const auto p = dir.write("nan.csv", "t,current,voltage,temp,ah\n0,1,4,25,0\n0.1,x,4,25,0\n");
    CHECK_THROWS_AS(load_cycle_csv(p), DataError);
  }
  SUBCASE("write then read reproduces the signals") {
    const CycleRecord c = testing::toy_cycle(200);
    const auto p = dir.path() / "rt.csv";
    write_cycle_csv(c, p);
    const CycleRecord r = load_cycle_csv(p);
    REQUIRE(r.size() == c.size());
    for (std::size_t k = 0; k < c.size(); ++k) {
      CHECK(r.voltage[k] == c.voltage[k]);
      CHECK(r.ah[k] == c.ah[k]);
    }
  }
}

TEST_CASE("cycle-relative soc") {
  auto z = derive_soc(with_ah({0.0, -1.0, -2.0})).soc;
  CHECK(z == std::vector<double>{1.0, 0.5, 0.0});
  z = derive_soc(with_ah({0.0, -2.0, -1.0})).soc;
  CHECK(z == std::vector<double>{1.0, 0.0, 0.5});
  z = derive_soc(with_ah({0.001, -1.0, -2.0})).soc;
  CHECK(z[0] == 1.0);
  CHECK(z[2] == 0.0);
  CHECK_THROWS_AS(derive_soc(with_ah({0.0, 0.0, 0.0})), DataError);
  CHECK_THROWS_AS(derive_soc(with_ah({0.0, 0.5, 1.0})), DataError);
}

TEST_CASE("normalization") {
  CycleRecord c = testing::toy_cycle(500);
  const NormalizationSpec spec = fit_normalization(c, {0, 250});
  CHECK(spec.temp_offset == 0.0);
  CHECK(spec.temp_scale == 25.0);
  CHECK(spec.soc_center == 0.5);
  CHECK(spec.soc_scale == 0.3);
  CHECK(spec.normalize(Channel::temp, 25.0) == 1.0);
  CHECK(spec.normalize(Channel::temp, -20.0) == -0.8);
  CHECK(spec.normalize(Channel::soc, 0.5) == 0.0);

  // Statistics come from the requested range only.
  double m = 0.0;
  for (std::size_t k = 0; k < 250; ++k) m += c.current[k];
  CHECK(spec.current_mean == doctest::Approx(m / 250.0).epsilon(1e-12));

  Rng rng(3);
  for (int j = 0; j < 1000; ++j) {
    const double x = rng.uniform(-50.0, 50.0);
    for (Channel ch : {Channel::current, Channel::voltage, Channel::temp, Channel::soc}) {
      CHECK(testing::rel_err(spec.denormalize(ch, spec.normalize(ch, x)), x) < 1e-12);
    }
  }

  CycleRecord flat = c;
  std::fill(flat.current.begin(), flat.current.end(), 2.0);
  CHECK_THROWS_AS(fit_normalization(flat, {0, 250}), DataError);
}

TEST_CASE("windows") {
  CycleRecord c = derive_soc(testing::toy_cycle(2048));
  const NormalizationSpec spec = fit_normalization(c, {0, 2048});
  const auto w = make_windows(c, spec, 1024, 512);
  REQUIRE(w.size() == 3);
  CHECK(w[0].start_index == 0);
  CHECK(w[1].start_index == 512);
  CHECK(w[2].start_index == 1024);
  CHECK(w[1].init_soc == c.soc[512]);
  CHECK(w[1].input(3, kInCurrent) == spec.normalize(Channel::current, c.current[515]));
  CHECK(w[1].target[3] == spec.normalize(Channel::voltage, c.voltage[515]));

  CycleRecord shorter = derive_soc(testing::toy_cycle(1024));
  CHECK(make_windows(shorter, spec, 1024, 512).size() == 1);
  CycleRecord too_short = derive_soc(testing::toy_cycle(1023));
  CHECK_THROWS_AS(make_windows(too_short, spec, 1024, 512), DataError);

  // Half-overlap windows cover each sample at most twice.
  CycleRecord big = derive_soc(testing::toy_cycle(10000));
  std::vector<int> cover(big.size(), 0);
  for (const auto& win : make_windows(big, spec, 1024, 512)) {
    for (std::size_t k = 0; k < win.length; ++k) ++cover[win.start_index + k];
  }
  CHECK(*std::max_element(cover.begin(), cover.end()) <= 2);
}

TEST_CASE("temporal split with guard band") {
  CycleRecord c = derive_soc(testing::toy_cycle(1024 + 9 * 512));
  const NormalizationSpec spec = fit_normalization(c, {0, c.size()});
  const auto w = make_windows(c, spec, 1024, 512);
  REQUIRE(w.size() == 10);
  const SplitSpec split = SplitSpec::for_windows(1024, 512, 0.8);
  CHECK(split.guard_windows == 1);
  const auto s = temporal_split(w, split);
  REQUIRE(s.train.size() == 7);
  REQUIRE(s.val.size() == 2);
  CHECK(s.train.back().start_index == 6 * 512);
  CHECK(s.val.front().start_index == 8 * 512);

  CHECK(SplitSpec::for_windows(1024, 1024).guard_windows == 0);
  std::vector<Window> two(w.begin(), w.begin() + 2);
  CHECK_THROWS(temporal_split(two, split));
}

TEST_CASE("train and validation raw indices never intersect") {
  Rng rng(11);
  int checked = 0;
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t L = 2 + rng.below(200);
    const std::size_t S = 1 + rng.below(L);
    const std::size_t N = L + rng.below(40 * L);
    const double frac = rng.uniform(0.3, 0.95);
    std::vector<Window> w;
    for (std::size_t k = 0; k * S + L <= N; ++k) {
      Window win;
      win.start_index = k * S;
      win.length = L;
      w.push_back(win);
    }
    const SplitSpec split = SplitSpec::for_windows(L, S, frac);
    WindowSplit s;
    try {
      s = temporal_split(w, split);
    } catch (const DataError&) {
      continue;  // too few windows for this geometry
    }
    ++checked;
    const IndexRange tr = covered_range(s.train);
    const IndexRange va = covered_range(s.val);
    CHECK(tr.end <= va.begin);
  }
  CHECK(checked > 100);
}

}  // TEST_SUITE
