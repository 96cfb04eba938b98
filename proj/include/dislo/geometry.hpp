#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <utility>

#include "dislo/errors.hpp"
#include "dislo/field.hpp"
#include "dislo/tensor.hpp"

namespace dislo {

/// Christoffel symbols gamma(k, i, j) = Gamma^k_{ij} with cached torsion
/// torsion(k, i, j) = Gamma^k_{ij} - Gamma^k_{ji}. The first lower index is
/// the differentiation index: nabla_i X^k = d_i X^k + Gamma^k_{im} X^m.
struct Connection {
  enum class Kind { LeviCivita, WithTorsion };

  TensorField gamma;
  TensorField torsion;
  Kind kind = Kind::WithTorsion;

  const Grid& grid() const { return gamma.grid(); }
};

inline TensorField torsion_of(const TensorField& gamma) {
  TensorField t(gamma.grid(), kConnection);
  for (int k = 0; k < 3; ++k)
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        const double* a = gamma.component(TensorField::comp(k, i, j));
        const double* b = gamma.component(TensorField::comp(k, j, i));
        double* o = t.component(TensorField::comp(k, i, j));
        for (std::size_t n = 0; n < gamma.nodes(); ++n) o[n] = a[n] - b[n];
      }
  return t;
}

inline Connection make_connection(TensorField gamma, Connection::Kind kind) {
  if (gamma.signature() != kConnection)
    throw SignatureError("connection needs signature (R^,R_,R_), got " +
                         to_string(gamma.signature()));
  TensorField t = torsion_of(gamma);
  return Connection{std::move(gamma), std::move(t), kind};
}

/// Levi-Civita connection of g. Uses the analytic metric partials when the
/// metric carries them, otherwise 4th-order differences of g.
inline Connection christoffel(const Metric& metric) {
  const TensorField dg = metric.dg ? *metric.dg : gradient(metric.g);
  const Grid& grid = metric.grid();
  TensorField gamma(grid, kConnection);
  for (std::size_t n = 0; n < grid.size(); ++n) {
    const Tensor3 d = dg.gather<27>(n);
    const Mat3 gi = metric.ginv.mat(n);
    auto D = [&](int p, int a, int b) { return d[(p * 3 + a) * 3 + b]; };
    for (int k = 0; k < 3; ++k)
      for (int i = 0; i < 3; ++i)
        for (int j = i; j < 3; ++j) {
          double s = 0.0;
          for (int r = 0; r < 3; ++r)
            s += gi[k][r] * (D(i, r, j) + D(j, i, r) - D(r, i, j));
          gamma(TensorField::comp(k, i, j), n) = 0.5 * s;
          gamma(TensorField::comp(k, j, i), n) = 0.5 * s;
        }
  }
  return make_connection(std::move(gamma), Connection::Kind::LeviCivita);
}

/// Covariant derivative with a precomputed partial gradient `grad`
/// (leading derivative slot). Output slot 0 is the derivative index p;
/// Burgers slots take no connection terms.
inline TensorField covariant_derivative(const TensorField& field,
                                        const TensorField& grad,
                                        const Connection& conn) {
  if (grad.signature() != with_derivative_slot(field.signature()))
    throw SignatureError("covariant_derivative: gradient signature mismatch");
  TensorField out = grad;
  const std::size_t r = field.rank();
  const std::size_t nc = field.components();
  const std::size_t nn = field.nodes();
  for (int p = 0; p < 3; ++p)
    for (std::size_t c = 0; c < nc; ++c) {
      const auto idx = detail::decode(c, r);
      double* o = out.component(p * nc + c);
      for (std::size_t s = 0; s < r; ++s) {
        const IndexKind kind = field.signature()[s];
        if (!is_real(kind)) continue;
        auto src = idx;
        for (int m = 0; m < 3; ++m) {
          src[s] = m;
          const double* x = field.component(detail::encode(src));
          if (kind == IndexKind::RealUpper) {
            const double* g = conn.gamma.component(TensorField::comp(idx[s], p, m));
            for (std::size_t n = 0; n < nn; ++n) o[n] += g[n] * x[n];
          } else {
            const double* g = conn.gamma.component(TensorField::comp(m, p, idx[s]));
            for (std::size_t n = 0; n < nn; ++n) o[n] -= g[n] * x[n];
          }
        }
      }
    }
  return out;
}

inline TensorField covariant_derivative(const TensorField& field,
                                        const Connection& conn) {
  return covariant_derivative(field, gradient(field), conn);
}

namespace detail {

inline constexpr double kTorsionAntisymmetryTol = 1e-12;

/// Cholesky-style positive definiteness test of a symmetric 3x3 matrix.
inline bool positive_definite(const Mat3& m) {
  const double d1 = m[0][0];
  const double d2 = m[0][0] * m[1][1] - m[0][1] * m[1][0];
  return d1 > 0.0 && d2 > 0.0 && det3(m) > 0.0;
}

}  // namespace detail

/// Pointwise kernel of the unique connection concordant with G whose
/// torsion is T:
///
///   Gamma^k_ij = 1/2 Gi^kr (d_i G_jr + d_j G_ri - d_r G_ij)
///              - 1/2 (G_is T^s_jr + G_js T^s_ir) Gi^kr + 1/2 T^k_ij
///
/// with Gi = G^{-1} and dG(p, a, b) = d_p G_ab. Throws on a non-SPD G or a
/// torsion that is not antisymmetric in its lower slots.
inline Tensor3 concordant_connection_at(const Mat3& G, const Tensor3& dG,
                                        const Tensor3& T, std::size_t node = 0) {
  if (!detail::positive_definite(G))
    throw InvalidMetric("Ghat not positive definite at node " +
                        std::to_string(node));
  const Mat3 Gi = invert3(G, node);
  auto D = [&](int p, int a, int b) { return dG[(p * 3 + a) * 3 + b]; };
  auto Tt = [&](int k, int i, int j) { return T[(k * 3 + i) * 3 + j]; };
  for (int k = 0; k < 3; ++k)
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        if (std::abs(Tt(k, i, j) + Tt(k, j, i)) > detail::kTorsionAntisymmetryTol)
          throw InvalidTorsion("torsion not antisymmetric at node " +
                               std::to_string(node));
  // L(r, a, b) = sum_q G_rq T^q_ab
  Tensor3 L{};
  for (int r = 0; r < 3; ++r)
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) {
        double s = 0.0;
        for (int q = 0; q < 3; ++q) s += G[r][q] * Tt(q, a, b);
        L[(r * 3 + a) * 3 + b] = s;
      }
  Tensor3 gamma{};
  for (int k = 0; k < 3; ++k)
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        double s = 0.0;
        for (int r = 0; r < 3; ++r) {
          const double metric_part = D(i, j, r) + D(j, r, i) - D(r, i, j);
          const double torsion_part = L[(i * 3 + j) * 3 + r] + L[(j * 3 + i) * 3 + r];
          s += Gi[k][r] * (metric_part - torsion_part);
        }
        gamma[(k * 3 + i) * 3 + j] = 0.5 * s + 0.5 * Tt(k, i, j);
      }
  return gamma;
}

/// Field version of concordant_connection_at.
inline Connection connection_from_metric_and_torsion(const TensorField& Ghat,
                                                     const TensorField& dGhat,
                                                     const TensorField& torsion) {
  if (Ghat.signature() != kLower2)
    throw SignatureError("Ghat needs signature (R_,R_)");
  if (dGhat.signature() != kLower3)
    throw SignatureError("dGhat needs signature (R_,R_,R_)");
  if (torsion.signature() != kConnection)
    throw SignatureError("torsion needs signature (R^,R_,R_)");
  const Grid& grid = Ghat.grid();
  TensorField gamma(grid, kConnection);
  for (std::size_t n = 0; n < grid.size(); ++n)
    gamma.scatter(n, concordant_connection_at(Ghat.mat(n), dGhat.gather<27>(n),
                                              torsion.gather<27>(n), n));
  return make_connection(std::move(gamma), Connection::Kind::WithTorsion);
}

inline Connection connection_from_metric_and_torsion(const TensorField& Ghat,
                                                     const TensorField& torsion) {
  return connection_from_metric_and_torsion(Ghat, gradient(Ghat), torsion);
}

/// Torsion from the real-space Burgers density at one point:
/// T^k_ij = sum_{s,r} omega_sij g^sr R^k_r, with omega_sij = vol * eps_sij.
inline Tensor3 torsion_at(const Mat3& R, const Mat3& ginv, double vol) {
  // Rs(k, s) = sum_r g^sr R^k_r
  Mat3 Rs{};
  for (int k = 0; k < 3; ++k)
    for (int s = 0; s < 3; ++s) {
      double a = 0.0;
      for (int r = 0; r < 3; ++r) a += ginv[s][r] * R[k][r];
      Rs[k][s] = a;
    }
  Tensor3 T{};
  for (int k = 0; k < 3; ++k)
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        double a = 0.0;
        for (int s = 0; s < 3; ++s) {
          const double w = vol * levi_civita(s, i, j);
          a += w * Rs[k][s];
        }
        T[(k * 3 + i) * 3 + j] = a;
      }
  return T;
}

inline TensorField torsion_from_burgers_density(const TensorField& R,
                                                const Metric& metric,
                                                const VolumeTensor& omega) {
  if (R.signature() != kMixed)
    throw SignatureError("R needs signature (R^,R_)");
  const Grid& grid = R.grid();
  TensorField T(grid, kConnection);
  const std::size_t c123 = TensorField::comp(0, 1, 2);
  for (std::size_t n = 0; n < grid.size(); ++n)
    T.scatter(n, torsion_at(R.mat(n), metric.ginv.mat(n), omega.lower(c123, n)));
  return T;
}

/// R^k_q = sum g_qn omega^nrs Z^k_rs; only the (r,s)-antisymmetric part of
/// Z contributes.
inline TensorField burgers_density_from_Z(const TensorField& Z,
                                          const Metric& metric,
                                          const VolumeTensor& omega) {
  if (Z.signature() != kConnection)
    throw SignatureError("Z needs signature (R^,R_,R_)");
  const Grid& grid = Z.grid();
  TensorField R(grid, kMixed);
  for (std::size_t n = 0; n < grid.size(); ++n) {
    const Tensor3 z = Z.gather<27>(n);
    const Tensor3 w = omega.upper.gather<27>(n);
    const Mat3 g = metric.g.mat(n);
    // dual(k, m) = sum omega^mrs Z^k_rs
    Mat3 dual{};
    for (int k = 0; k < 3; ++k)
      for (int m = 0; m < 3; ++m) {
        double a = 0.0;
        for (int r = 0; r < 3; ++r)
          for (int s = 0; s < 3; ++s)
            a += w[(m * 3 + r) * 3 + s] * z[(k * 3 + r) * 3 + s];
        dual[k][m] = a;
      }
    for (int k = 0; k < 3; ++k)
      for (int q = 0; q < 3; ++q) {
        double a = 0.0;
        for (int m = 0; m < 3; ++m) a += g[q][m] * dual[k][m];
        R(TensorField::comp(k, q), n) = a;
      }
  }
  return R;
}

/// Z = Gamma_hat - Gamma (difference of two connections is a tensor).
inline TensorField z_tensor(const Connection& hat, const Connection& lc) {
  return hat.gamma - lc.gamma;
}

/// Curvature from a connection and the partials dgamma(i, p, j, q) =
/// d_i Gamma^p_jq:
///
///   R^p_qij = d_i Gamma^p_jq - d_j Gamma^p_iq
///           + Gamma^m_jq Gamma^p_im - Gamma^m_iq Gamma^p_jm
inline TensorField curvature(const Connection& conn, const TensorField& dgamma) {
  const Grid& grid = conn.grid();
  TensorField R(grid, kCurvature);
  for (std::size_t n = 0; n < grid.size(); ++n) {
    const Tensor3 G = conn.gamma.gather<27>(n);
    const Tensor4 dG = dgamma.gather<81>(n);
    auto g = [&](int a, int b, int c) { return G[(a * 3 + b) * 3 + c]; };
    auto d = [&](int i, int p, int j, int q) {
      return dG[((i * 3 + p) * 3 + j) * 3 + q];
    };
    for (int p = 0; p < 3; ++p)
      for (int q = 0; q < 3; ++q)
        for (int i = 0; i < 3; ++i)
          for (int j = 0; j < 3; ++j) {
            double s = d(i, p, j, q) - d(j, p, i, q);
            for (int m = 0; m < 3; ++m)
              s += g(m, j, q) * g(p, i, m) - g(m, i, q) * g(p, j, m);
            R(TensorField::comp(p, q, i, j), n) = s;
          }
  }
  return R;
}

inline TensorField curvature(const Connection& conn) {
  return curvature(conn, gradient(conn.gamma));
}

/// Second evaluation path for a connection Gamma + Z over the flat
/// Levi-Civita connection `lc`:
///
///   R^p_qij = nabla_i Z^p_jq - nabla_j Z^p_iq
///           + Z^m_jq Z^p_im - Z^m_iq Z^p_jm
inline TensorField curvature_from_z(const TensorField& Z, const Connection& lc) {
  const TensorField dZ = covariant_derivative(Z, lc);
  const Connection as_conn{Z, TensorField(Z.grid(), kConnection),
                           Connection::Kind::WithTorsion};
  return curvature(as_conn, dZ);
}

/// Concordance residual sup |d_p G_qk - Gamma^s_pq G_sk - Gamma^s_pk G_qs|.
inline double concordance_residual(const TensorField& Ghat,
                                   const TensorField& dGhat,
                                   const Connection& conn) {
  double sup = 0.0;
  for (std::size_t n = 0; n < Ghat.nodes(); ++n) {
    const Mat3 G = Ghat.mat(n);
    const Tensor3 d = dGhat.gather<27>(n);
    const Tensor3 g = conn.gamma.gather<27>(n);
    for (int p = 0; p < 3; ++p)
      for (int q = 0; q < 3; ++q)
        for (int k = 0; k < 3; ++k) {
          double r = d[(p * 3 + q) * 3 + k];
          for (int s = 0; s < 3; ++s)
            r -= g[(s * 3 + p) * 3 + q] * G[s][k] + g[(s * 3 + p) * 3 + k] * G[q][s];
          sup = std::max(sup, std::abs(r));
        }
  }
  return sup;
}

/// Sup-norm of the commutator identity defect
///   [nabla_i, nabla_j] X^k - (R^k_nij X^n - T^n_ij nabla_n X^k)
/// for a vector, or with the extra -R^n_qij X^k_n term for a (1,1) field.
inline double commutator_residual(const TensorField& X, const Connection& conn) {
  const bool vector = X.signature() == kVector;
  if (!vector && X.signature() != kMixed)
    throw SignatureError("commutator_residual needs (R^) or (R^,R_), got " +
                         to_string(X.signature()));
  const TensorField R = curvature(conn);
  const TensorField DX = covariant_derivative(X, conn);
  const TensorField DDX = covariant_derivative(DX, conn);
  const std::size_t nc = X.components();
  double sup = 0.0;
  for (std::size_t n = 0; n < X.nodes(); ++n) {
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j)
        for (std::size_t c = 0; c < nc; ++c) {
          const int k = vector ? static_cast<int>(c) : static_cast<int>(c / 3);
          const int q = vector ? 0 : static_cast<int>(c % 3);
          const double lhs = DDX((i * 3 + j) * nc + c, n) - DDX((j * 3 + i) * nc + c, n);
          double rhs = 0.0;
          for (int m = 0; m < 3; ++m) {
            const std::size_t xm = vector ? m : m * 3 + q;
            rhs += R(TensorField::comp(k, m, i, j), n) * X(xm, n);
            rhs -= conn.torsion(TensorField::comp(m, i, j), n) * DX(m * nc + c, n);
            if (!vector)
              rhs -= R(TensorField::comp(m, q, i, j), n) * X(k * 3 + m, n);
          }
          sup = std::max(sup, std::abs(lhs - rhs));
        }
  }
  return sup;
}

}  // namespace dislo
