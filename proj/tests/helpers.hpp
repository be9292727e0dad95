// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <unistd.h>

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "ecmude/pipeline.hpp"
#include "ecmude/rng.hpp"

namespace testing {

/// Fresh directory under the system temp root, removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("ecmude_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path write(const std::string& name, const std::string& text) const {
    const auto p = path_ / name;
    std::ofstream(p) << text;
    return p;
  }

 private:
  std::filesystem::path path_;
};

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

/// Discharging cycle with a piecewise current, linear-ish voltage and
/// coulomb-counted Ah; enough structure to window and normalize.
inline ecmude::CycleRecord toy_cycle(std::size_t n, std::uint64_t seed = 1) {
  ecmude::CycleRecord c;
  c.name = "toy";
  ecmude::Rng rng(seed);
  double ah = 0.0;
  double level = 1.0;
  for (std::size_t k = 0; k < n; ++k) {
    if (k % 50 == 0) level = rng.uniform(-0.5, 3.0);
    c.t.push_back(0.1 * static_cast<double>(k));
    c.current.push_back(level);
    c.temp.push_back(25.0 + 0.1 * std::sin(0.001 * static_cast<double>(k)));
    c.ah.push_back(ah);
    c.voltage.push_back(4.1 + 0.9 * ah - 0.03 * level);
    ah -= level * 0.1 / 3600.0;
  }
  return c;
}

}  // namespace testing
