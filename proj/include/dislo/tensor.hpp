#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dislo/errors.hpp"
#include "dislo/field.hpp"
#include "dislo/grid.hpp"

namespace dislo {

inline constexpr double kSingularDet = 1e-12;

/// Closed-form 3x3 inverse via the adjugate. Throws SingularMatrix when
/// |det| < 1e-12; `node` only labels the error.
inline Mat3 invert3(const Mat3& m, std::size_t node = 0) {
  const double det = det3(m);
  if (!(std::abs(det) >= kSingularDet))
    throw SingularMatrix("singular 3x3 matrix at node " + std::to_string(node) +
                             " (det = " + std::to_string(det) + ")",
                         node, det);
  const double inv = 1.0 / det;
  Mat3 r;
  r[0][0] = (m[1][1] * m[2][2] - m[1][2] * m[2][1]) * inv;
  r[0][1] = (m[0][2] * m[2][1] - m[0][1] * m[2][2]) * inv;
  r[0][2] = (m[0][1] * m[1][2] - m[0][2] * m[1][1]) * inv;
  r[1][0] = (m[1][2] * m[2][0] - m[1][0] * m[2][2]) * inv;
  r[1][1] = (m[0][0] * m[2][2] - m[0][2] * m[2][0]) * inv;
  r[1][2] = (m[0][2] * m[1][0] - m[0][0] * m[1][2]) * inv;
  r[2][0] = (m[1][0] * m[2][1] - m[1][1] * m[2][0]) * inv;
  r[2][1] = (m[0][1] * m[2][0] - m[0][0] * m[2][1]) * inv;
  r[2][2] = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) * inv;
  return r;
}

/// Node-wise inverse of a rank-2 field. The result carries `out_signature`
/// (e.g. the inverse of a (R_,R_) metric is (R^,R^)).
inline TensorField invert3(const TensorField& m, Signature out_signature) {
  if (m.rank() != 2) throw SignatureError("invert3 needs a rank-2 field");
  TensorField out(m.grid(), std::move(out_signature));
  for (std::size_t n = 0; n < m.nodes(); ++n) out.set_mat(n, invert3(m.mat(n), n));
  return out;
}

/// Euclidean metric of the chart, its inverse, determinant, and optionally
/// the analytic partials dg(p, i, j) = d_p g_ij.
struct Metric {
  TensorField g;
  TensorField ginv;
  std::vector<double> detg;
  std::optional<TensorField> dg;

  const Grid& grid() const { return g.grid(); }

  /// Set when g = identity at every node.
  bool cartesian = false;
};

namespace detail {

inline void finish_metric(Metric& m) {
  const std::size_t n = m.g.nodes();
  m.detg.resize(n);
  for (std::size_t node = 0; node < n; ++node) {
    const Mat3 g = m.g.mat(node);
    for (int i = 0; i < 3; ++i)
      for (int j = i + 1; j < 3; ++j)
        if (g[i][j] != g[j][i])
          throw InvalidMetric("metric not symmetric at node " +
                              std::to_string(node));
    const double d = det3(g);
    const double minor2 = g[0][0] * g[1][1] - g[0][1] * g[1][0];
    if (!(g[0][0] > 0.0 && minor2 > 0.0 && d > 0.0))
      throw InvalidMetric("metric not positive definite at node " +
                          std::to_string(node));
    m.detg[node] = d;
    m.ginv.set_mat(node, invert3(g, node));
  }
}

}  // namespace detail

/// Pullback g_ij = sum_k dx^k/dy^i dx^k/dy^j with analytic derivatives from
/// the chart Hessian.
inline Metric metric_from_chart(const Chart& chart, const Grid& grid) {
  Metric m{TensorField(grid, kLower2), TensorField(grid, kUpper2), {},
           TensorField(grid, kLower3)};
  m.cartesian = chart.kind == Chart::Kind::Identity;
  for (std::size_t node = 0; node < grid.size(); ++node) {
    const Vec3 y = grid.coords(node);
    const Mat3 jac = chart.jacobian(y);
    const double dj = det3(jac);
    if (!(std::abs(dj) >= kSingularDet))
      throw DegenerateChart("chart '" + chart.name +
                            "' has degenerate jacobian at node " +
                            std::to_string(node) + " (det = " +
                            std::to_string(dj) + ")");
    const auto hess = chart.hessian(y);
    for (int i = 0; i < 3; ++i)
      for (int j = i; j < 3; ++j) {
        double s = 0.0;
        for (int k = 0; k < 3; ++k) s += jac[k][i] * jac[k][j];
        m.g(TensorField::comp(i, j), node) = s;
        m.g(TensorField::comp(j, i), node) = s;
      }
    for (int p = 0; p < 3; ++p)
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
          double s = 0.0;
          for (int k = 0; k < 3; ++k)
            s += hess[k][p][i] * jac[k][j] + jac[k][i] * hess[k][p][j];
          (*m.dg)(TensorField::comp(p, i, j), node) = s;
        }
  }
  detail::finish_metric(m);
  return m;
}

/// Metric given directly in closed form. Without `dg_fn` the partials are
/// left to finite differences.
inline Metric metric_from_function(
    const Grid& grid, const std::function<Mat3(const Vec3&)>& g_fn,
    const std::function<std::array<Mat3, 3>(const Vec3&)>& dg_fn = {}) {
  Metric m{TensorField(grid, kLower2), TensorField(grid, kUpper2), {}, {}};
  if (dg_fn) m.dg = TensorField(grid, kLower3);
  for (std::size_t node = 0; node < grid.size(); ++node) {
    const Vec3 y = grid.coords(node);
    m.g.set_mat(node, g_fn(y));
    if (dg_fn) {
      const auto d = dg_fn(y);
      for (int p = 0; p < 3; ++p)
        for (int i = 0; i < 3; ++i)
          for (int j = 0; j < 3; ++j)
            (*m.dg)(TensorField::comp(p, i, j), node) = d[p][i][j];
    }
  }
  detail::finish_metric(m);
  return m;
}

/// Totally antisymmetric volume tensor, right-handed:
/// lower = sqrt(det g) eps, upper = eps / sqrt(det g).
struct VolumeTensor {
  TensorField lower;
  TensorField upper;
  int orientation = +1;
};

inline VolumeTensor volume_tensor(const Metric& metric) {
  const Grid& grid = metric.grid();
  VolumeTensor w{TensorField(grid, kLower3), TensorField(grid, kUpper3), +1};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) {
        const double e = levi_civita(i, j, k);
        if (e == 0.0) continue;
        const std::size_t c = TensorField::comp(i, j, k);
        for (std::size_t n = 0; n < grid.size(); ++n) {
          const double s = std::sqrt(metric.detg[n]);
          w.lower(c, n) = e * s;
          w.upper(c, n) = e / s;
        }
      }
  return w;
}

// -- generic index algebra ---------------------------------------------------

namespace detail {

inline std::vector<int> decode(std::size_t comp, std::size_t rank) {
  std::vector<int> idx(rank);
  for (std::size_t s = rank; s-- > 0;) {
    idx[s] = static_cast<int>(comp % 3);
    comp /= 3;
  }
  return idx;
}

inline std::size_t encode(const std::vector<int>& idx) {
  std::size_t c = 0;
  for (int i : idx) c = c * 3 + static_cast<std::size_t>(i);
  return c;
}

inline bool contractible(IndexKind a, IndexKind b) {
  return is_real(a) == is_real(b) && is_upper(a) != is_upper(b);
}

}  // namespace detail

/// Pointwise contraction of `a` and `b` over the listed slot pairs (0-based
/// a-slot, b-slot). Result slots: unpaired slots of a, then of b, in order.
inline TensorField contract(const TensorField& a, const TensorField& b,
                            const std::vector<std::pair<int, int>>& pairs) {
  if (!(a.grid() == b.grid())) throw SignatureError("contract: grid mismatch");
  const int ra = static_cast<int>(a.rank()), rb = static_cast<int>(b.rank());
  std::vector<int> a_pair(ra, -1), b_pair(rb, -1);
  for (auto [sa, sb] : pairs) {
    if (sa < 0 || sa >= ra || sb < 0 || sb >= rb)
      throw SignatureError("contract: slot out of range");
    if (a_pair[sa] >= 0 || b_pair[sb] >= 0)
      throw SignatureError("contract: slot paired twice");
    if (!detail::contractible(a.signature()[sa], b.signature()[sb]))
      throw SignatureError("contract: cannot pair slot " + std::to_string(sa) +
                           " of " + to_string(a.signature()) + " with slot " +
                           std::to_string(sb) + " of " +
                           to_string(b.signature()));
    a_pair[sa] = sb;
    b_pair[sb] = sa;
  }
  Signature out_sig;
  std::vector<int> b_free;
  for (int s = 0; s < ra; ++s)
    if (a_pair[s] < 0) out_sig.push_back(a.signature()[s]);
  for (int s = 0; s < rb; ++s)
    if (b_pair[s] < 0) {
      out_sig.push_back(b.signature()[s]);
      b_free.push_back(s);
    }
  TensorField out(a.grid(), out_sig);
  const std::size_t n = a.nodes();
  const std::size_t nbf = pow3(b_free.size());
  for (std::size_t ca = 0; ca < a.components(); ++ca) {
    const auto ia = detail::decode(ca, ra);
    std::vector<int> ib(rb, 0), io;
    for (int s = 0; s < ra; ++s) {
      if (a_pair[s] >= 0)
        ib[a_pair[s]] = ia[s];
      else
        io.push_back(ia[s]);
    }
    const std::size_t na_free = io.size();
    for (std::size_t cf = 0; cf < nbf; ++cf) {
      const auto ifree = detail::decode(cf, b_free.size());
      io.resize(na_free);
      for (std::size_t f = 0; f < b_free.size(); ++f) {
        ib[b_free[f]] = ifree[f];
        io.push_back(ifree[f]);
      }
      const double* pa = a.component(ca);
      const double* pb = b.component(detail::encode(ib));
      double* po = out.component(detail::encode(io));
      for (std::size_t node = 0; node < n; ++node) po[node] += pa[node] * pb[node];
    }
  }
  return out;
}

/// Reorder slots: output slot i is input slot perm[i].
inline TensorField permute(const TensorField& a, const std::vector<int>& perm) {
  const std::size_t r = a.rank();
  std::vector<bool> seen(r, false);
  if (perm.size() != r) throw InvalidArgument("permute: wrong permutation length");
  for (int p : perm) {
    if (p < 0 || static_cast<std::size_t>(p) >= r || seen[p])
      throw InvalidArgument("permute: not a permutation of the slots");
    seen[p] = true;
  }
  Signature sig(r);
  for (std::size_t i = 0; i < r; ++i) sig[i] = a.signature()[perm[i]];
  TensorField out(a.grid(), sig);
  const std::size_t n = a.nodes();
  for (std::size_t co = 0; co < out.components(); ++co) {
    const auto io = detail::decode(co, r);
    std::vector<int> ia(r);
    for (std::size_t i = 0; i < r; ++i) ia[perm[i]] = io[i];
    const double* src = a.component(detail::encode(ia));
    std::copy(src, src + n, out.component(co));
  }
  return out;
}

/// Half the difference of `a` and `a` with slots s1, s2 swapped.
inline TensorField antisymmetrize(const TensorField& a, int s1, int s2) {
  std::vector<int> perm(a.rank());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = static_cast<int>(i);
  std::swap(perm.at(s1), perm.at(s2));
  TensorField out = a;
  out -= permute(a, perm);
  out *= 0.5;
  return out;
}

/// Lower a real-upper slot with g, keeping slot order.
inline TensorField lower_slot(const TensorField& x, int slot, const Metric& m) {
  TensorField c = contract(m.g, x, {{1, slot}});
  std::vector<int> perm;
  for (int s = 1; s <= slot; ++s) perm.push_back(s);
  perm.push_back(0);
  for (int s = slot + 1; s < static_cast<int>(x.rank()); ++s) perm.push_back(s);
  return permute(c, perm);
}

/// Raise a real-lower slot with g^{-1}, keeping slot order.
inline TensorField raise_slot(const TensorField& x, int slot, const Metric& m) {
  TensorField c = contract(m.ginv, x, {{1, slot}});
  std::vector<int> perm;
  for (int s = 1; s <= slot; ++s) perm.push_back(s);
  perm.push_back(0);
  for (int s = slot + 1; s < static_cast<int>(x.rank()); ++s) perm.push_back(s);
  return permute(c, perm);
}

}  // namespace dislo
