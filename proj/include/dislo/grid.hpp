#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numbers>
#include <string>

#include "dislo/errors.hpp"

namespace dislo {

using Vec3 = std::array<double, 3>;
using Mat3 = std::array<std::array<double, 3>, 3>;
/// Three-index block, row-major: t[(a * 3 + b) * 3 + c].
using Tensor3 = std::array<double, 27>;
using Tensor4 = std::array<double, 81>;

inline constexpr Mat3 identity3() {
  return Mat3{{{1.0, 0.0, 0.0}, {0.0, 1.0, 0.0}, {0.0, 0.0, 1.0}}};
}

inline double det3(const Mat3& m) {
  return m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
         m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
         m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
}

inline Mat3 matmul(const Mat3& a, const Mat3& b) {
  Mat3 c{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double s = 0.0;
      for (int k = 0; k < 3; ++k) s += a[i][k] * b[k][j];
      c[i][j] = s;
    }
  return c;
}

inline Mat3 transpose(const Mat3& a) {
  Mat3 t{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) t[i][j] = a[j][i];
  return t;
}

/// Levi-Civita symbol with eps(0,1,2) = +1.
inline constexpr double levi_civita(int i, int j, int k) {
  return static_cast<double>((i - j) * (j - k) * (k - i)) / 2.0;
}

struct EpsilonTerm {
  int i, j, k;
  double sign;
};

/// The six nonzero entries of the Levi-Civita symbol.
inline constexpr std::array<EpsilonTerm, 6> kEpsilonTerms{{{0, 1, 2, 1.0},
                                                           {1, 2, 0, 1.0},
                                                           {2, 0, 1, 1.0},
                                                           {0, 2, 1, -1.0},
                                                           {2, 1, 0, -1.0},
                                                           {1, 0, 2, -1.0}}};

/// Periodic structured 3D grid. Node coordinates are origin + n * h along
/// each axis; node index is i0 + N0 * (i1 + N1 * i2).
class Grid {
 public:
  static constexpr int kMinPoints = 8;

  Grid(std::array<int, 3> dims, Vec3 lengths, Vec3 origin = {0.0, 0.0, 0.0})
      : dims_(dims), lengths_(lengths), origin_(origin) {
    for (int a = 0; a < 3; ++a) {
      if (dims_[a] < kMinPoints)
        throw InvalidGrid("grid axis " + std::to_string(a) + " has " +
                          std::to_string(dims_[a]) + " points, need >= " +
                          std::to_string(kMinPoints));
      if (!(lengths_[a] > 0.0) || !std::isfinite(lengths_[a]))
        throw InvalidGrid("grid axis " + std::to_string(a) +
                          " length must be positive and finite");
      if (!std::isfinite(origin_[a]))
        throw InvalidGrid("grid origin must be finite");
      spacing_[a] = lengths_[a] / dims_[a];
    }
  }

  const std::array<int, 3>& dims() const { return dims_; }
  const Vec3& lengths() const { return lengths_; }
  const Vec3& origin() const { return origin_; }
  const Vec3& spacing() const { return spacing_; }
  int dim(int axis) const { return dims_[axis]; }
  double h(int axis) const { return spacing_[axis]; }
  double min_spacing() const {
    return std::min({spacing_[0], spacing_[1], spacing_[2]});
  }

  std::size_t size() const {
    return static_cast<std::size_t>(dims_[0]) * dims_[1] * dims_[2];
  }

  std::size_t index(int i0, int i1, int i2) const {
    return static_cast<std::size_t>(i0) +
           static_cast<std::size_t>(dims_[0]) *
               (static_cast<std::size_t>(i1) +
                static_cast<std::size_t>(dims_[1]) * i2);
  }

  std::array<int, 3> ijk(std::size_t node) const {
    const int i0 = static_cast<int>(node % dims_[0]);
    node /= dims_[0];
    const int i1 = static_cast<int>(node % dims_[1]);
    const int i2 = static_cast<int>(node / dims_[1]);
    return {i0, i1, i2};
  }

  double coord(int axis, double n) const {
    return origin_[axis] + n * spacing_[axis];
  }

  Vec3 coords(std::size_t node) const {
    const auto c = ijk(node);
    return {coord(0, c[0]), coord(1, c[1]), coord(2, c[2])};
  }

  /// Memory stride of one step along an axis.
  std::size_t stride(int axis) const {
    if (axis == 0) return 1;
    if (axis == 1) return static_cast<std::size_t>(dims_[0]);
    return static_cast<std::size_t>(dims_[0]) * dims_[1];
  }

  /// Periodic neighbor `offset` steps away along `axis`.
  std::size_t neighbor(std::size_t node, int axis, int offset) const {
    auto c = ijk(node);
    const int n = dims_[axis];
    c[axis] = ((c[axis] + offset) % n + n) % n;
    return index(c[0], c[1], c[2]);
  }

  friend bool operator==(const Grid& a, const Grid& b) {
    return a.dims_ == b.dims_ && a.lengths_ == b.lengths_ &&
           a.origin_ == b.origin_;
  }

 private:
  std::array<int, 3> dims_;
  Vec3 lengths_;
  Vec3 origin_;
  Vec3 spacing_{};
};

inline Grid build_grid(std::array<int, 3> dims, Vec3 lengths,
                       Vec3 origin = {0.0, 0.0, 0.0}) {
  return Grid(dims, lengths, origin);
}

/// Same box, `factor` times more points per axis.
inline Grid refine(const Grid& grid, int factor) {
  if (factor < 2)
    throw InvalidArgument("refinement factor must be >= 2, got " +
                          std::to_string(factor));
  return Grid({grid.dim(0) * factor, grid.dim(1) * factor,
               grid.dim(2) * factor},
              grid.lengths(), grid.origin());
}

/// Closed-form map y -> x into Cartesian space with its first and second
/// derivatives. jacobian[k][i] = dx^k/dy^i, hessian[k][i][j] =
/// d2x^k/dy^i dy^j.
struct Chart {
  enum class Kind { Identity, Analytic };
  using Hessian = std::array<Mat3, 3>;

  Kind kind = Kind::Identity;
  std::string name = "identity";
  std::function<Vec3(const Vec3&)> map;
  std::function<Mat3(const Vec3&)> jacobian;
  std::function<Hessian(const Vec3&)> hessian;
};

inline Chart identity_chart() {
  Chart c;
  c.kind = Chart::Kind::Identity;
  c.name = "identity";
  c.map = [](const Vec3& y) { return y; };
  c.jacobian = [](const Vec3&) { return identity3(); };
  c.hessian = [](const Vec3&) { return Chart::Hessian{}; };
  return c;
}

/// x = (y1 cos y2, y1 sin y2, y3). Nondegenerate for y1 > 0.
inline Chart cylindrical_chart() {
  Chart c;
  c.kind = Chart::Kind::Analytic;
  c.name = "cylindrical";
  c.map = [](const Vec3& y) {
    return Vec3{y[0] * std::cos(y[1]), y[0] * std::sin(y[1]), y[2]};
  };
  c.jacobian = [](const Vec3& y) {
    const double cs = std::cos(y[1]), sn = std::sin(y[1]);
    return Mat3{{{cs, -y[0] * sn, 0.0}, {sn, y[0] * cs, 0.0}, {0.0, 0.0, 1.0}}};
  };
  c.hessian = [](const Vec3& y) {
    const double cs = std::cos(y[1]), sn = std::sin(y[1]);
    Chart::Hessian h{};
    h[0][0][1] = h[0][1][0] = -sn;
    h[0][1][1] = -y[0] * cs;
    h[1][0][1] = h[1][1][0] = cs;
    h[1][1][1] = -y[0] * sn;
    return h;
  };
  return c;
}

/// Periodic flat chart x^i = y^i + a sin(k y^{i+1}) with k = 2 pi / L.
/// Nondegenerate while |a k| < 1.
inline Chart warped_chart(double amplitude, double length = 2.0 * std::numbers::pi) {
  const double k = 2.0 * std::numbers::pi / length;
  const double a = amplitude;
  Chart c;
  c.kind = Chart::Kind::Analytic;
  c.name = "warped";
  c.map = [a, k](const Vec3& y) {
    return Vec3{y[0] + a * std::sin(k * y[1]), y[1] + a * std::sin(k * y[2]),
                y[2] + a * std::sin(k * y[0])};
  };
  c.jacobian = [a, k](const Vec3& y) {
    Mat3 j = identity3();
    for (int i = 0; i < 3; ++i) j[i][(i + 1) % 3] = a * k * std::cos(k * y[(i + 1) % 3]);
    return j;
  };
  c.hessian = [a, k](const Vec3& y) {
    Chart::Hessian h{};
    for (int i = 0; i < 3; ++i) {
      const int m = (i + 1) % 3;
      h[i][m][m] = -a * k * k * std::sin(k * y[m]);
    }
    return h;
  };
  return c;
}

}  // namespace dislo
