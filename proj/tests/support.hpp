#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

#include "dislo/grid.hpp"

namespace testing_support {

inline constexpr double kTau = 2.0 * std::numbers::pi;

inline dislo::Grid cube(int n, dislo::Vec3 origin = {0.0, 0.0, 0.0}) {
  return dislo::Grid({n, n, n}, {kTau, kTau, kTau}, origin);
}

/// Deterministic uniform values in [lo, hi).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : g_(seed) {}
  double uniform(double lo = -1.0, double hi = 1.0) {
    return lo + (hi - lo) * static_cast<double>(g_() >> 11) * 0x1.0p-53;
  }
  dislo::Mat3 mat(double scale) {
    dislo::Mat3 m{};
    for (auto& row : m)
      for (auto& x : row) x = scale * uniform();
    return m;
  }
  /// Identity plus a small random perturbation, symmetrized: SPD.
  dislo::Mat3 spd(double scale) {
    dislo::Mat3 a = mat(scale);
    dislo::Mat3 g = dislo::identity3();
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) g[i][j] += 0.5 * (a[i][j] + a[j][i]);
    return g;
  }

 private:
  std::mt19937_64 g_;
};

}  // namespace testing_support
