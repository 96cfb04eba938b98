#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <utility>

#include "dislo/errors.hpp"
#include "dislo/field.hpp"
#include "dislo/geometry.hpp"
#include "dislo/reconstruct.hpp"
#include "dislo/tensor.hpp"

namespace dislo {

/// Deformation state: Ghat (R_,R_), Burgers density R (R^,R_), optional
/// plastic tensor Gcheck (R^,R_), time t.
struct KinematicState {
  TensorField Ghat;
  TensorField R;
  std::optional<TensorField> Gcheck;
  double t = 0.0;

  const Grid& grid() const { return Ghat.grid(); }
};

/// Prescribed velocity v (R^) and Burgers flow density J (R^,R_).
struct Drivers {
  FieldProvider v;
  FieldProvider J;
};

/// Drivers and their partial gradients sampled at one instant.
struct DriverFields {
  TensorField v;
  TensorField dv;
  TensorField J;
  TensorField dJ;
};

inline DriverFields sample_drivers(const Drivers& d, const Grid& grid, double t) {
  if (d.v.signature != kVector) throw SignatureError("velocity provider must be (R^)");
  if (d.J.signature != kMixed) throw SignatureError("J provider must be (R^,R_)");
  return {sample(d.v, grid, t), sample_gradient(d.v, grid, t), sample(d.J, grid, t),
          sample_gradient(d.J, grid, t)};
}

/// Time-independent Euclidean geometry of the chart.
struct Background {
  Metric metric;
  VolumeTensor omega;
  Connection lc;

  const Grid& grid() const { return metric.grid(); }
};

inline Background make_background(const Metric& metric) {
  return {metric, volume_tensor(metric), christoffel(metric)};
}

inline Background make_background(const Chart& chart, const Grid& grid) {
  return make_background(metric_from_chart(chart, grid));
}

/// Material connection and its derived quantities, rebuilt from (Ghat, R).
struct MaterialGeometry {
  TensorField dGhat;
  Connection hat;
  TensorField Z;
};

inline MaterialGeometry material_geometry(const TensorField& Ghat, const TensorField& R,
                                          const Background& bg) {
  TensorField dG = gradient(Ghat);
  Connection hat = connection_from_metric_and_torsion(
      Ghat, dG, torsion_from_burgers_density(R, bg.metric, bg.omega));
  TensorField Z = z_tensor(hat, bg.lc);
  return {std::move(dG), std::move(hat), std::move(Z)};
}

inline MaterialGeometry material_geometry(const KinematicState& s, const Background& bg) {
  return material_geometry(s.Ghat, s.R, bg);
}

/// theta^r_q = -J^r_q + sum_p v^p (Z^r_pq - Z^r_qp).
inline TensorField theta(const TensorField& J, const TensorField& Z, const TensorField& v) {
  if (J.signature() != kMixed || Z.signature() != kConnection || v.signature() != kVector)
    throw SignatureError("theta needs J (R^,R_), Z (R^,R_,R_), v (R^)");
  TensorField th(J.grid(), kMixed);
  for (std::size_t n = 0; n < J.nodes(); ++n)
    for (int r = 0; r < 3; ++r)
      for (int q = 0; q < 3; ++q) {
        double s = -J(TensorField::comp(r, q), n);
        for (int p = 0; p < 3; ++p)
          s += v(p, n) * (Z(TensorField::comp(r, p, q), n) - Z(TensorField::comp(r, q, p), n));
        th(TensorField::comp(r, q), n) = s;
      }
  return th;
}

/// Double-space form:
///   theta^r_q = -S^r_i j^i_q + sum v^p S^r_i (nabla_p T^i_q - nabla_q T^i_p)
/// with DT(p, i, q) = nabla_p T^i_q and j (B^,R_).
inline TensorField theta_from_distortion(const Distortion& d, const TensorField& DT,
                                         const TensorField& j, const TensorField& v) {
  if (j.signature() != kDistortion) throw SignatureError("j needs signature (B^,R_)");
  TensorField th(d.grid(), kMixed);
  for (std::size_t n = 0; n < d.grid().size(); ++n) {
    const Mat3 S = d.sinv.mat(n);
    for (int r = 0; r < 3; ++r)
      for (int q = 0; q < 3; ++q) {
        double s = 0.0;
        for (int i = 0; i < 3; ++i) {
          s -= S[r][i] * j(TensorField::comp(i, q), n);
          for (int p = 0; p < 3; ++p)
            s += v(p, n) * S[r][i] *
                 (DT(TensorField::comp(p, i, q), n) - DT(TensorField::comp(q, i, p), n));
        }
        th(TensorField::comp(r, q), n) = s;
      }
  }
  return th;
}

/// Hatted form of the Ghat equation:
///   dGhat_kq/dt = -nabla^_k v^r G_rq - nabla^_q v^r G_kr - J^r_k G_rq - G_kr J^r_q
inline TensorField rhs_G_hat(const TensorField& Ghat, const DriverFields& df,
                             const Connection& hat) {
  const TensorField Dv = covariant_derivative(df.v, df.dv, hat);  // (p, k)
  TensorField out(Ghat.grid(), kLower2);
  for (std::size_t n = 0; n < Ghat.nodes(); ++n) {
    const Mat3 G = Ghat.mat(n);
    const Mat3 dv = Dv.mat(n);
    const Mat3 J = df.J.mat(n);
    Mat3 d{};
    for (int k = 0; k < 3; ++k)
      for (int q = k; q < 3; ++q) {
        double s = 0.0;
        for (int r = 0; r < 3; ++r)
          s -= (dv[k][r] + J[r][k]) * G[r][q] + G[k][r] * (dv[q][r] + J[r][q]);
        d[k][q] = d[q][k] = s;
      }
    out.set_mat(n, d);
  }
  return out;
}

/// Hatted form of the R equation:
///   dR^k_q/dt = nabla^_m v^k R^m_q - g_qm omega^mrs nabla^_r J^k_s
inline TensorField rhs_R_hat(const TensorField& R, const DriverFields& df,
                             const Connection& hat, const Background& bg) {
  const TensorField Dv = covariant_derivative(df.v, df.dv, hat);  // (m, k)
  const TensorField DJ = covariant_derivative(df.J, df.dJ, hat);  // (r, k, s)
  TensorField out(R.grid(), kMixed);
  for (std::size_t n = 0; n < R.nodes(); ++n) {
    const Mat3 g = bg.metric.g.mat(n);
    const double wv = bg.omega.upper(TensorField::comp(0, 1, 2), n);
    // curlJ(k, m) = sum omega^mrs nabla^_r J^k_s
    Mat3 curl{};
    for (const auto& e : kEpsilonTerms)
      for (int k = 0; k < 3; ++k)
        curl[k][e.i] += e.sign * wv * DJ(TensorField::comp(e.j, k, e.k), n);
    for (int k = 0; k < 3; ++k)
      for (int q = 0; q < 3; ++q) {
        double s = 0.0;
        for (int m = 0; m < 3; ++m)
          s += Dv(TensorField::comp(m, k), n) * R(TensorField::comp(m, q), n) -
               g[q][m] * curl[k][m];
        out(TensorField::comp(k, q), n) = s;
      }
  }
  return out;
}

struct StateDerivative {
  TensorField dGhat;
  TensorField dR;
  std::optional<TensorField> dGcheck;
};

/// Reference forms over the Euclidean connection:
///   dG_kq = -v^r nabla_r G_kq - nabla_k v^r G_rq - G_kr nabla_q v^r
///           + theta^r_k G_rq + G_kr theta^r_q
///   dR^k_q = J^k_p R^p_q + nabla_m v^k R^m_q + v^p Z^k_mp R^m_q
///           - g_qm omega^mrs nabla_r J^k_s - g_qm omega^mrs Z^k_rp J^p_s
/// dGhat is the partial gradient d_p Ghat_kq.
inline StateDerivative rhs_reference(const TensorField& Ghat, const TensorField& dGhat,
                                     const TensorField& R, const DriverFields& df,
                                     const Background& bg, const TensorField& Z,
                                     const TensorField& th) {
  const TensorField DG = covariant_derivative(Ghat, dGhat, bg.lc);  // (r, k, q)
  const TensorField Dv = covariant_derivative(df.v, df.dv, bg.lc);  // (m, k)
  const TensorField DJ = covariant_derivative(df.J, df.dJ, bg.lc);  // (r, k, s)
  StateDerivative out{TensorField(Ghat.grid(), kLower2), TensorField(R.grid(), kMixed), {}};
  for (std::size_t n = 0; n < Ghat.nodes(); ++n) {
    const Mat3 G = Ghat.mat(n);
    const Mat3 dv = Dv.mat(n);
    const Mat3 T = th.mat(n);
    const Mat3 J = df.J.mat(n);
    const Mat3 Rn = R.mat(n);
    const Mat3 g = bg.metric.g.mat(n);
    const Vec3 v = df.v.vec(n);
    const Tensor3 z = Z.gather<27>(n);
    const double wv = bg.omega.upper(TensorField::comp(0, 1, 2), n);
    const Tensor3 dg = DG.gather<27>(n);
    auto zz = [&](int a, int b, int c) { return z[(a * 3 + b) * 3 + c]; };

    Mat3 dG{};
    for (int k = 0; k < 3; ++k)
      for (int q = k; q < 3; ++q) {
        double s = 0.0;
        for (int r = 0; r < 3; ++r) {
          s -= v[r] * dg[(r * 3 + k) * 3 + q];
          s -= dv[k][r] * G[r][q] + G[k][r] * dv[q][r];
          s += T[r][k] * G[r][q] + G[k][r] * T[r][q];
        }
        dG[k][q] = dG[q][k] = s;
      }
    out.dGhat.set_mat(n, dG);

    // src(k, m) = sum_rs omega^mrs (nabla_r J^k_s + Z^k_rp J^p_s)
    Mat3 src{};
    for (const auto& e : kEpsilonTerms)
      for (int k = 0; k < 3; ++k) {
        double a = DJ(TensorField::comp(e.j, k, e.k), n);
        for (int p = 0; p < 3; ++p) a += zz(k, e.j, p) * J[p][e.k];
        src[k][e.i] += e.sign * wv * a;
      }
    Mat3 dR{};
    for (int k = 0; k < 3; ++k)
      for (int q = 0; q < 3; ++q) {
        double s = 0.0;
        for (int m = 0; m < 3; ++m) {
          s += J[k][m] * Rn[m][q];
          double adv = dv[m][k];
          for (int p = 0; p < 3; ++p) adv += v[p] * zz(k, m, p);
          s += adv * Rn[m][q];
          s -= g[q][m] * src[k][m];
        }
        dR[k][q] = s;
      }
    out.dR.set_mat(n, dR);
  }
  return out;
}

/// Plastic tensor equation with advection moved to the right side:
///   dGc^k_i = -v^r nabla_r Gc^k_i + Gc^r_i nabla_r v^k - nabla_i v^r Gc^k_r
///             - theta^k_r Gc^r_i
inline TensorField rhs_plastic(const TensorField& Gcheck, const DriverFields& df,
                               const TensorField& th, const Connection& lc) {
  if (Gcheck.signature() != kMixed) throw SignatureError("Gcheck needs signature (R^,R_)");
  const TensorField DGc = covariant_derivative(Gcheck, lc);        // (r, k, i)
  const TensorField Dv = covariant_derivative(df.v, df.dv, lc);    // (r, k)
  TensorField out(Gcheck.grid(), kMixed);
  for (std::size_t n = 0; n < Gcheck.nodes(); ++n) {
    const Mat3 Gc = Gcheck.mat(n);
    const Mat3 dv = Dv.mat(n);
    const Mat3 T = th.mat(n);
    const Vec3 v = df.v.vec(n);
    for (int k = 0; k < 3; ++k)
      for (int i = 0; i < 3; ++i) {
        double s = 0.0;
        for (int r = 0; r < 3; ++r) {
          s -= v[r] * DGc(TensorField::comp(r, k, i), n);
          s += Gc[r][i] * dv[r][k] - dv[i][r] * Gc[k][r] - T[k][r] * Gc[r][i];
        }
        out(TensorField::comp(k, i), n) = s;
      }
  }
  return out;
}

enum class Form { Hatted, Reference };

namespace detail {

inline void check_state(const TensorField& Ghat, const TensorField& R,
                        const std::optional<TensorField>& Gc, double t) {
  for (const TensorField* f : {&Ghat, &R, Gc ? &*Gc : nullptr}) {
    if (!f) continue;
    const std::size_t bad = f->first_non_finite();
    if (bad != TensorField::npos)
      throw DivergenceError("non-finite state at node " + std::to_string(bad) +
                                ", t = " + std::to_string(t),
                            bad, t);
  }
  for (std::size_t n = 0; n < Ghat.nodes(); ++n)
    if (!positive_definite(Ghat.mat(n)))
      throw BlowUpError("Ghat lost positive definiteness at node " + std::to_string(n) +
                            ", t = " + std::to_string(t),
                        n, t);
}

}  // namespace detail

/// Full right-hand side at one stage. When `form_gap` is given, both forms
/// are evaluated and the sup gap between them is stored there.
inline StateDerivative evaluate_rhs(const KinematicState& s, const Drivers& drivers,
                                    const Background& bg, Form form,
                                    double* form_gap = nullptr) {
  detail::check_state(s.Ghat, s.R, s.Gcheck, s.t);
  const MaterialGeometry mg = material_geometry(s, bg);
  const DriverFields df = sample_drivers(drivers, s.grid(), s.t);
  const bool need_theta = form == Form::Reference || form_gap || s.Gcheck;
  const std::optional<TensorField> th =
      need_theta ? std::optional<TensorField>(theta(df.J, mg.Z, df.v)) : std::nullopt;

  std::optional<StateDerivative> hatted, reference;
  if (form == Form::Hatted || form_gap)
    hatted = StateDerivative{rhs_G_hat(s.Ghat, df, mg.hat), rhs_R_hat(s.R, df, mg.hat, bg), {}};
  if (form == Form::Reference || form_gap)
    reference = rhs_reference(s.Ghat, mg.dGhat, s.R, df, bg, mg.Z, *th);
  if (form_gap)
    *form_gap = std::max(sup_diff(hatted->dGhat, reference->dGhat),
                         sup_diff(hatted->dR, reference->dR));

  StateDerivative out = form == Form::Hatted ? std::move(*hatted) : std::move(*reference);
  if (s.Gcheck) out.dGcheck = rhs_plastic(*s.Gcheck, df, *th, bg.lc);
  return out;
}

struct StepOptions {
  Form form = Form::Hatted;
  /// Evaluate the other form at every stage and record the largest gap.
  bool track_form_gap = false;
};

struct StepStats {
  double max_form_gap = 0.0;
};

namespace detail {

inline KinematicState advance(const KinematicState& s, const StateDerivative& k, double h) {
  KinematicState out = s;
  out.Ghat.axpy(h, k.dGhat);
  out.R.axpy(h, k.dR);
  if (out.Gcheck) out.Gcheck->axpy(h, *k.dGcheck);
  out.t = s.t + h;
  return out;
}

inline void symmetrize(TensorField& G) {
  for (int i = 0; i < 3; ++i)
    for (int j = i + 1; j < 3; ++j) {
      double* a = G.component(TensorField::comp(i, j));
      double* b = G.component(TensorField::comp(j, i));
      for (std::size_t n = 0; n < G.nodes(); ++n) a[n] = b[n] = 0.5 * (a[n] + b[n]);
    }
}

}  // namespace detail

/// One classical RK4 step. Ghat, R torsion and the material connection are
/// rebuilt from the stage state at every stage.
inline KinematicState step(const KinematicState& s, const Drivers& drivers,
                           const Background& bg, double dt, const StepOptions& opts = {},
                           StepStats* stats = nullptr) {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw InvalidArgument("dt must be positive");
  double gap = 0.0;
  double* gp = opts.track_form_gap ? &gap : nullptr;
  auto rhs = [&](const KinematicState& st) {
    StateDerivative d = evaluate_rhs(st, drivers, bg, opts.form, gp);
    if (stats) stats->max_form_gap = std::max(stats->max_form_gap, gap);
    return d;
  };
  const StateDerivative k1 = rhs(s);
  const StateDerivative k2 = rhs(detail::advance(s, k1, 0.5 * dt));
  const StateDerivative k3 = rhs(detail::advance(s, k2, 0.5 * dt));
  const StateDerivative k4 = rhs(detail::advance(s, k3, dt));
  KinematicState out = s;
  const double w = dt / 6.0;
  out.Ghat.axpy(w, k1.dGhat).axpy(2 * w, k2.dGhat).axpy(2 * w, k3.dGhat).axpy(w, k4.dGhat);
  out.R.axpy(w, k1.dR).axpy(2 * w, k2.dR).axpy(2 * w, k3.dR).axpy(w, k4.dR);
  if (out.Gcheck)
    out.Gcheck->axpy(w, *k1.dGcheck)
        .axpy(2 * w, *k2.dGcheck)
        .axpy(2 * w, *k3.dGcheck)
        .axpy(w, *k4.dGcheck);
  out.t = s.t + dt;
  detail::symmetrize(out.Ghat);
  detail::check_state(out.Ghat, out.R, out.Gcheck, out.t);
  return out;
}

/// 0.25 min(h) / max|v| over the grid at time t, capped at dt_max.
inline double default_dt(const Drivers& drivers, const Grid& grid, double t, double dt_max) {
  const TensorField v = sample(drivers.v, grid, t);
  double vmax = 0.0;
  for (std::size_t n = 0; n < grid.size(); ++n) {
    const Vec3 x = v.vec(n);
    vmax = std::max(vmax, std::sqrt(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]));
  }
  if (vmax == 0.0) return dt_max;
  return std::min(dt_max, 0.25 * grid.min_spacing() / vmax);
}

// -- monitors -----------------------------------------------------------------

struct Diagnostics {
  double time = 0.0;
  double curvature_sup = 0.0;
  double divergency_sup = 0.0;
  double concordance_sup = 0.0;
  double form_equiv_sup = 0.0;
};

/// div^k = sum g^pq nabla_p R^k_q + sum g^pq R^m_q Z^k_pm.
inline TensorField divergency(const TensorField& R, const TensorField& Z, const Background& bg) {
  const TensorField DR = covariant_derivative(R, bg.lc);  // (p, k, q)
  TensorField out(R.grid(), kVector);
  for (std::size_t n = 0; n < R.nodes(); ++n) {
    const Mat3 gi = bg.metric.ginv.mat(n);
    for (int k = 0; k < 3; ++k) {
      double s = 0.0;
      for (int p = 0; p < 3; ++p)
        for (int q = 0; q < 3; ++q) {
          if (gi[p][q] == 0.0) continue;
          double a = DR(TensorField::comp(p, k, q), n);
          for (int m = 0; m < 3; ++m)
            a += R(TensorField::comp(m, q), n) * Z(TensorField::comp(k, p, m), n);
          s += gi[p][q] * a;
        }
      out(k, n) = s;
    }
  }
  return out;
}

/// The same quantity written through U^k_spr = nabla_p Z^k_rs + Z^m_rs Z^k_pm:
///   sum g^pq g_qn omega^nrs U^k_spr
inline TensorField divergency_from_u(const TensorField& Z, const Background& bg) {
  const TensorField DZ = covariant_derivative(Z, bg.lc);  // (p, k, r, s)
  TensorField out(Z.grid(), kVector);
  for (std::size_t n = 0; n < Z.nodes(); ++n) {
    const Mat3 g = bg.metric.g.mat(n);
    const Mat3 gi = bg.metric.ginv.mat(n);
    const Tensor3 w = bg.omega.upper.gather<27>(n);
    const Tensor3 z = Z.gather<27>(n);
    // raised(p, n') = sum_q g^pq g_qn'
    const Mat3 gg = matmul(gi, g);
    for (int k = 0; k < 3; ++k) {
      double s = 0.0;
      for (int p = 0; p < 3; ++p)
        for (int m = 0; m < 3; ++m) {
          if (gg[p][m] == 0.0) continue;
          for (int r = 0; r < 3; ++r)
            for (int t = 0; t < 3; ++t) {
              const double wm = w[(m * 3 + r) * 3 + t];
              if (wm == 0.0) continue;
              double u = DZ(TensorField::comp(p, k, r, t), n);
              for (int q = 0; q < 3; ++q) u += z[(q * 3 + r) * 3 + t] * z[(k * 3 + p) * 3 + q];
              s += gg[p][m] * wm * u;
            }
        }
      out(k, n) = s;
    }
  }
  return out;
}

/// Invariant monitors of a state: curvature and zero-divergency of the
/// rebuilt material connection, concordance with Ghat, and the gap between
/// the two right-hand-side forms at this instant.
inline Diagnostics monitor(const KinematicState& s, const Background& bg,
                           const Drivers* drivers = nullptr) {
  const MaterialGeometry mg = material_geometry(s, bg);
  Diagnostics d;
  d.time = s.t;
  d.curvature_sup = sup_norm(curvature(mg.hat));
  d.divergency_sup = sup_norm(divergency(s.R, mg.Z, bg));
  d.concordance_sup = concordance_residual(s.Ghat, mg.dGhat, mg.hat);
  if (drivers) evaluate_rhs(s, *drivers, bg, Form::Hatted, &d.form_equiv_sup);
  return d;
}

}  // namespace dislo
