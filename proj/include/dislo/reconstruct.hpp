#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "dislo/errors.hpp"
#include "dislo/field.hpp"
#include "dislo/geometry.hpp"
#include "dislo/tensor.hpp"

namespace dislo {

inline const Signature kDistortion{IndexKind::BurgersUpper, IndexKind::RealLower};
inline const Signature kCodistortion{IndexKind::RealUpper, IndexKind::BurgersLower};
inline const Signature kBurgersMetric{IndexKind::BurgersLower, IndexKind::BurgersLower};

/// Incompatible distortion t(i, q) = T^i_q (Burgers row, real column)
/// together with its node-wise inverse sinv(r, i) = S^r_i.
struct Distortion {
  TensorField t;
  TensorField sinv;

  const Grid& grid() const { return t.grid(); }
};

inline Distortion make_distortion(TensorField t) {
  if (t.signature() != kDistortion)
    throw SignatureError("distortion needs signature (B^,R_), got " +
                         to_string(t.signature()));
  TensorField s = invert3(t, kCodistortion);
  return Distortion{std::move(t), std::move(s)};
}

/// Euclidean Burgers-space metric: constant identity with two Burgers-lower
/// slots.
inline TensorField burgers_metric(const Grid& grid) {
  TensorField g(grid, kBurgersMetric);
  for (int i = 0; i < 3; ++i)
    std::fill_n(g.component(TensorField::comp(i, i)), grid.size(), 1.0);
  return g;
}

/// Ghat_pq = sum_ij gB_ij T^i_p T^j_q with gB = identity.
inline TensorField deformation_from_distortion(const Distortion& d) {
  TensorField G(d.grid(), kLower2);
  for (std::size_t n = 0; n < d.grid().size(); ++n) {
    const Mat3 T = d.t.mat(n);
    Mat3 out{};
    for (int p = 0; p < 3; ++p)
      for (int q = p; q < 3; ++q) {
        double s = 0.0;
        for (int i = 0; i < 3; ++i) s += T[i][p] * T[i][q];
        out[p][q] = out[q][p] = s;
      }
    G.set_mat(n, out);
  }
  return G;
}

/// d_p Ghat_ab = sum_i (d_p T^i_a T^i_b + T^i_a d_p T^i_b) from the partial
/// gradient dT(p, i, q).
inline TensorField deformation_gradient(const Distortion& d, const TensorField& dT) {
  TensorField dG(d.grid(), kLower3);
  for (std::size_t n = 0; n < d.grid().size(); ++n) {
    const Mat3 T = d.t.mat(n);
    const Tensor3 g = dT.gather<27>(n);
    Tensor3 out{};
    for (int p = 0; p < 3; ++p)
      for (int a = 0; a < 3; ++a)
        for (int b = a; b < 3; ++b) {
          double s = 0.0;
          for (int i = 0; i < 3; ++i)
            s += g[(p * 3 + i) * 3 + a] * T[i][b] + T[i][a] * g[(p * 3 + i) * 3 + b];
          out[(p * 3 + a) * 3 + b] = out[(p * 3 + b) * 3 + a] = s;
        }
    dG.scatter(n, out);
  }
  return dG;
}

/// nabla_p T^i_q from the partial gradient dT(p, i, q); the Burgers index
/// takes no connection term.
inline TensorField distortion_derivative(const Distortion& d, const TensorField& dT,
                                         const Connection& lc) {
  return covariant_derivative(d.t, dT, lc);
}

/// Z^r_pq = sum_i S^r_i nabla_p T^i_q, with dT the partial gradient of T.
inline TensorField z_from_distortion(const Distortion& d, const TensorField& dT,
                                     const Connection& lc) {
  const TensorField DT = distortion_derivative(d, dT, lc);
  TensorField Z(d.grid(), kConnection);
  for (std::size_t n = 0; n < d.grid().size(); ++n) {
    const Mat3 S = d.sinv.mat(n);
    const Tensor3 dt = DT.gather<27>(n);
    Tensor3 z{};
    for (int r = 0; r < 3; ++r)
      for (int p = 0; p < 3; ++p)
        for (int q = 0; q < 3; ++q) {
          double s = 0.0;
          for (int i = 0; i < 3; ++i) s += S[r][i] * dt[(p * 3 + i) * 3 + q];
          z[(r * 3 + p) * 3 + q] = s;
        }
    Z.scatter(n, z);
  }
  return Z;
}

inline TensorField z_from_distortion(const Distortion& d, const Connection& lc) {
  return z_from_distortion(d, gradient(d.t), lc);
}

/// R^r_k = sum S^r_i g_sk omega^spq nabla_p T^i_q.
inline TensorField burgers_from_distortion(const Distortion& d, const TensorField& dT,
                                           const Metric& metric,
                                           const VolumeTensor& omega,
                                           const Connection& lc) {
  const TensorField DT = distortion_derivative(d, dT, lc);
  TensorField R(d.grid(), kMixed);
  for (std::size_t n = 0; n < d.grid().size(); ++n) {
    const Mat3 S = d.sinv.mat(n);
    const Mat3 g = metric.g.mat(n);
    const Tensor3 dt = DT.gather<27>(n);
    const Tensor3 w = omega.upper.gather<27>(n);
    // curl(i, s) = sum omega^spq nabla_p T^i_q
    Mat3 curl{};
    for (int i = 0; i < 3; ++i)
      for (int s = 0; s < 3; ++s) {
        double a = 0.0;
        for (int p = 0; p < 3; ++p)
          for (int q = 0; q < 3; ++q)
            a += w[(s * 3 + p) * 3 + q] * dt[(p * 3 + i) * 3 + q];
        curl[i][s] = a;
      }
    for (int r = 0; r < 3; ++r)
      for (int k = 0; k < 3; ++k) {
        double a = 0.0;
        for (int i = 0; i < 3; ++i)
          for (int s = 0; s < 3; ++s) a += S[r][i] * g[s][k] * curl[i][s];
        R(TensorField::comp(r, k), n) = a;
      }
  }
  return R;
}

inline TensorField burgers_from_distortion(const Distortion& d, const Metric& metric,
                                           const VolumeTensor& omega,
                                           const Connection& lc) {
  return burgers_from_distortion(d, gradient(d.t), metric, omega, lc);
}

enum class Conversion { ToReal, ToBurgers };

/// Swap the space of one slot using the distortion:
///   ToReal:    B^ -> R^ via S^p_i, B_ -> R_ via T^j_q
///   ToBurgers: R^ -> B^ via T^i_p, R_ -> B_ via S^q_i
inline TensorField convert_index(const TensorField& X, const Distortion& d,
                                 int slot, Conversion direction) {
  if (slot < 0 || static_cast<std::size_t>(slot) >= X.rank())
    throw SignatureError("convert_index: slot out of range");
  const IndexKind kind = X.signature()[slot];
  TensorField c(X.grid(), kScalar);
  if (direction == Conversion::ToReal) {
    if (kind == IndexKind::BurgersUpper)
      c = contract(X, d.sinv, {{slot, 1}});
    else if (kind == IndexKind::BurgersLower)
      c = contract(X, d.t, {{slot, 0}});
    else
      throw SignatureError("convert_index: slot is already a real index");
  } else {
    if (kind == IndexKind::RealUpper)
      c = contract(X, d.t, {{slot, 1}});
    else if (kind == IndexKind::RealLower)
      c = contract(X, d.sinv, {{slot, 0}});
    else
      throw SignatureError("convert_index: slot is already a Burgers index");
  }
  const int r = static_cast<int>(X.rank());
  std::vector<int> perm(r);
  for (int i = 0; i < r; ++i) perm[i] = i < slot ? i : (i == slot ? r - 1 : i - 1);
  return permute(c, perm);
}

// -- Pfaff integration --------------------------------------------------------

struct PfaffOptions {
  /// Sweep order: integrate along axis_order[0] from the base, then
  /// axis_order[1] from every node of that line, then axis_order[2].
  std::array<int, 3> axis_order{0, 1, 2};
  bool check_compatibility = true;
  /// Curvature is accepted when sup|R| <= relative * scale + absolute, with
  /// scale = sup|dGamma| + sup|Gamma|^2.
  double relative_tolerance = 1e-2;
  double absolute_tolerance = 1e-8;
};

struct CompatibilityReport {
  double curvature_sup = 0.0;
  double scale = 0.0;
  double threshold = 0.0;
  /// Sup gap between sweeps (0,1,2) and (2,1,0) started from identity.
  double path_defect = 0.0;
  /// Closure defect after one full periodic cycle along each axis.
  std::array<double, 3> monodromy{};
  bool compatible = true;
};

namespace detail {

inline Mat3 matmul_add(const Mat3& T, const Mat3& K, double s) {
  Mat3 r;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) r[i][j] = T[i][j] + s * K[i][j];
  return r;
}

/// Coefficient matrix A[r][q] = Gamma^r_{axis q} of dT/ds = T A.
inline Mat3 pfaff_matrix(const Tensor3& gamma, int axis) {
  Mat3 a;
  for (int r = 0; r < 3; ++r)
    for (int q = 0; q < 3; ++q) a[r][q] = gamma[(r * 3 + axis) * 3 + q];
  return a;
}

/// One classical RK4 step of dT/ds = T A(s) over a lattice edge of length h
/// with coefficients at the start, midpoint and end.
inline Mat3 rk4_edge(const Mat3& T, const Mat3& a0, const Mat3& am, const Mat3& a1,
                     double h) {
  const Mat3 k1 = matmul(T, a0);
  const Mat3 k2 = matmul(matmul_add(T, k1, 0.5 * h), am);
  const Mat3 k3 = matmul(matmul_add(T, k2, 0.5 * h), am);
  const Mat3 k4 = matmul(matmul_add(T, k3, h), a1);
  Mat3 r;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      r[i][j] = T[i][j] + h / 6.0 * (k1[i][j] + 2.0 * k2[i][j] + 2.0 * k3[i][j] + k4[i][j]);
  return r;
}

/// Source of connection coefficients along lattice edges: at a node, and
/// at the midpoint between a node and its +1 neighbor along an axis.
struct EdgeCoefficients {
  std::function<Tensor3(std::size_t node)> at_node;
  std::function<Tensor3(std::size_t node, int axis)> at_midpoint;
};

/// 4th-order midpoint interpolation of a grid connection.
inline EdgeCoefficients grid_coefficients(const Connection& conn) {
  EdgeCoefficients e;
  const TensorField* g = &conn.gamma;
  e.at_node = [g](std::size_t n) { return g->gather<27>(n); };
  e.at_midpoint = [g](std::size_t n, int axis) {
    const Grid& grid = g->grid();
    const std::size_t m1 = grid.neighbor(n, axis, -1);
    const std::size_t p1 = grid.neighbor(n, axis, 1);
    const std::size_t p2 = grid.neighbor(n, axis, 2);
    Tensor3 out;
    for (std::size_t c = 0; c < 27; ++c)
      out[c] = (-(*g)(c, m1) + 9.0 * (*g)(c, n) + 9.0 * (*g)(c, p1) - (*g)(c, p2)) / 16.0;
    return out;
  };
  return e;
}

inline Mat3 transport_edge(const EdgeCoefficients& e, const Grid& grid,
                           std::size_t from, int axis, const Mat3& T) {
  const std::size_t to = grid.neighbor(from, axis, 1);
  return rk4_edge(T, pfaff_matrix(e.at_node(from), axis),
                  pfaff_matrix(e.at_midpoint(from, axis), axis),
                  pfaff_matrix(e.at_node(to), axis), grid.h(axis));
}

inline TensorField sweep(const EdgeCoefficients& e, const Grid& grid, const Mat3& t0,
                         std::size_t base, const std::array<int, 3>& order) {
  TensorField out(grid, kDistortion);
  out.set_mat(base, t0);
  std::vector<std::size_t> front{base};
  for (int axis : order) {
    std::vector<std::size_t> next;
    next.reserve(front.size() * grid.dim(axis));
    for (std::size_t start : front) {
      std::size_t node = start;
      Mat3 T = out.mat(node);
      next.push_back(node);
      for (int k = 1; k < grid.dim(axis); ++k) {
        T = transport_edge(e, grid, node, axis, T);
        node = grid.neighbor(node, axis, 1);
        out.set_mat(node, T);
        next.push_back(node);
      }
    }
    front = std::move(next);
  }
  return out;
}

inline double max_abs_diff(const Mat3& a, const Mat3& b) {
  double m = 0.0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) m = std::max(m, std::abs(a[i][j] - b[i][j]));
  return m;
}

inline void validate_axis_order(const std::array<int, 3>& order) {
  std::array<bool, 3> seen{};
  for (int a : order) {
    if (a < 0 || a > 2 || seen[a])
      throw InvalidArgument("axis order must be a permutation of 0, 1, 2");
    seen[a] = true;
  }
}

inline void curvature_scale(const Connection& conn, const PfaffOptions& opts,
                            CompatibilityReport& rep) {
  const TensorField dgamma = gradient(conn.gamma);
  rep.curvature_sup = sup_norm(curvature(conn, dgamma));
  const double g = sup_norm(conn.gamma);
  rep.scale = sup_norm(dgamma) + g * g;
  rep.threshold = opts.relative_tolerance * rep.scale + opts.absolute_tolerance;
  rep.compatible = rep.curvature_sup <= rep.threshold;
}

}  // namespace detail

/// Compatibility diagnostics of the Pfaff system dT/dy^p = T Gamma_p:
/// curvature sup-norm against its threshold, two-sweep path defect and the
/// per-axis monodromy from `base` with identity initial value.
inline CompatibilityReport compatibility_residual(const Connection& conn,
                                                  const PfaffOptions& opts = {},
                                                  std::size_t base = 0) {
  CompatibilityReport rep;
  detail::curvature_scale(conn, opts, rep);
  const Grid& grid = conn.grid();
  const auto e = detail::grid_coefficients(conn);
  const Mat3 id = identity3();
  const TensorField a = detail::sweep(e, grid, id, base, {0, 1, 2});
  const TensorField b = detail::sweep(e, grid, id, base, {2, 1, 0});
  rep.path_defect = sup_diff(a, b);
  for (int axis = 0; axis < 3; ++axis) {
    Mat3 T = id;
    std::size_t node = base;
    for (int k = 0; k < grid.dim(axis); ++k) {
      T = detail::transport_edge(e, grid, node, axis, T);
      node = grid.neighbor(node, axis, 1);
    }
    rep.monodromy[axis] = detail::max_abs_diff(T, id);
  }
  return rep;
}

/// Solve dT^i_q/dy^p = sum_r Gamma^r_pq T^i_r with T(base) = t0 by RK4
/// along axis-ordered lattice lines. Midpoint coefficients come from 4th-order
/// interpolation of the grid connection.
inline Distortion integrate_pfaff(const Connection& conn, const Mat3& t0,
                                  std::size_t base = 0, const PfaffOptions& opts = {}) {
  detail::validate_axis_order(opts.axis_order);
  const double det = det3(t0);
  if (!(std::abs(det) >= kSingularDet))
    throw InvalidInitialValue("initial distortion is singular (det = " +
                              std::to_string(det) + ")");
  if (base >= conn.grid().size()) throw InvalidArgument("base node out of range");
  if (opts.check_compatibility) {
    CompatibilityReport rep;
    detail::curvature_scale(conn, opts, rep);
    if (!rep.compatible)
      throw IncompatibleConnection(
          "connection is not flat: curvature sup " + std::to_string(rep.curvature_sup) +
              " exceeds threshold " + std::to_string(rep.threshold),
          rep.curvature_sup, rep.threshold);
  }
  return make_distortion(
      detail::sweep(detail::grid_coefficients(conn), conn.grid(), t0, base, opts.axis_order));
}

/// Same integration with coefficients evaluated in closed form at nodes and
/// edge midpoints. `gamma_at(y)` returns Gamma^k_ij at coordinates y.
inline Distortion integrate_pfaff(const std::function<Tensor3(const Vec3&)>& gamma_at,
                                  const Grid& grid, const Mat3& t0, std::size_t base = 0,
                                  const PfaffOptions& opts = {}) {
  detail::validate_axis_order(opts.axis_order);
  const double det = det3(t0);
  if (!(std::abs(det) >= kSingularDet))
    throw InvalidInitialValue("initial distortion is singular (det = " +
                              std::to_string(det) + ")");
  if (opts.check_compatibility) {
    TensorField g(grid, kConnection);
    for (std::size_t n = 0; n < grid.size(); ++n) g.scatter(n, gamma_at(grid.coords(n)));
    const Connection conn = make_connection(std::move(g), Connection::Kind::WithTorsion);
    CompatibilityReport rep;
    detail::curvature_scale(conn, opts, rep);
    if (!rep.compatible)
      throw IncompatibleConnection("connection is not flat", rep.curvature_sup,
                                   rep.threshold);
  }
  detail::EdgeCoefficients e;
  e.at_node = [&](std::size_t n) { return gamma_at(grid.coords(n)); };
  e.at_midpoint = [&](std::size_t n, int axis) {
    Vec3 y = grid.coords(n);
    y[axis] += 0.5 * grid.h(axis);
    return gamma_at(y);
  };
  return make_distortion(detail::sweep(e, grid, t0, base, opts.axis_order));
}

/// Constant Burgers-space gauge O with T2 = O T1 (O acts on the Burgers
/// index: T2^i_s = sum_j O^i_j T1^j_s).
struct GaugeMatrix {
  Mat3 o{};
  double orthogonality_residual = 0.0;
  /// sup over all nodes of |T2 - O T1|.
  double global_residual = 0.0;
  bool reflection = false;
};

inline constexpr double kGaugeOrthogonalityTol = 1e-8;

/// Solve for O at the base node, check O^T O = 1, then measure how well the
/// relation holds at every node.
inline GaugeMatrix gauge_align(const Distortion& d1, const Distortion& d2,
                               std::size_t base = 0) {
  d1.t.check_same_shape(d2.t);
  GaugeMatrix g;
  g.o = matmul(d2.t.mat(base), invert3(d1.t.mat(base), base));
  const Mat3 oto = matmul(transpose(g.o), g.o);
  g.orthogonality_residual = detail::max_abs_diff(oto, identity3());
  if (g.orthogonality_residual > kGaugeOrthogonalityTol)
    throw GaugeMismatch("gauge matrix is not orthogonal (residual " +
                            std::to_string(g.orthogonality_residual) +
                            "); the distortions do not share Ghat",
                        g.orthogonality_residual);
  g.reflection = det3(g.o) < 0.0;
  for (std::size_t n = 0; n < d1.grid().size(); ++n)
    g.global_residual = std::max(
        g.global_residual, detail::max_abs_diff(d2.t.mat(n), matmul(g.o, d1.t.mat(n))));
  return g;
}

/// (Ghat, R) -> connection -> Pfaff solution, the inverse direction of the
/// (Ghat, R) <- T correspondence.
struct Reconstruction {
  Connection connection;
  Distortion distortion;
};

inline Reconstruction reconstruct_distortion(const TensorField& Ghat,
                                             const TensorField& dGhat,
                                             const TensorField& R, const Metric& metric,
                                             const VolumeTensor& omega, const Mat3& t0,
                                             std::size_t base = 0,
                                             const PfaffOptions& opts = {}) {
  Connection conn = connection_from_metric_and_torsion(
      Ghat, dGhat, torsion_from_burgers_density(R, metric, omega));
  Distortion d = integrate_pfaff(conn, t0, base, opts);
  return {std::move(conn), std::move(d)};
}

inline Reconstruction reconstruct_distortion(const TensorField& Ghat, const TensorField& R,
                                             const Metric& metric,
                                             const VolumeTensor& omega, const Mat3& t0,
                                             std::size_t base = 0,
                                             const PfaffOptions& opts = {}) {
  return reconstruct_distortion(Ghat, gradient(Ghat), R, metric, omega, t0, base, opts);
}

}  // namespace dislo
