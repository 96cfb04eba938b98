#include <gtest/gtest.h>

#include <cmath>

#include "dislo/scenario.hpp"
#include "support.hpp"

using namespace dislo;
using testing_support::cube;
using testing_support::kTau;
using testing_support::Rng;

namespace {

struct Truth {
  Background bg;
  Distortion d;
  TensorField dT;
};

Truth truth(const FieldProvider& p, const Chart& chart, int n) {
  Background bg = make_background(chart, cube(n));
  Distortion d = make_distortion(sample(p, bg.grid(), 0.0));
  TensorField dT = sample_gradient(p, bg.grid(), 0.0);
  return {std::move(bg), std::move(d), std::move(dT)};
}

Mat3 rotation3(double deg) {
  const double c = std::cos(deg * std::numbers::pi / 180), s = std::sin(deg * std::numbers::pi / 180);
  return Mat3{{{c, -s, 0}, {s, c, 0}, {0, 0, 1}}};
}

Distortion left_multiply(const Mat3& o, const Distortion& d) {
  TensorField t = d.t;
  for (std::size_t n = 0; n < t.nodes(); ++n) t.set_mat(n, matmul(o, d.t.mat(n)));
  return make_distortion(std::move(t));
}

double sin_shear_roundtrip_error(int n) {
  const Truth tr = truth(sin_shear_distortion(0.1), identity_chart(), n);
  const TensorField G = deformation_from_distortion(tr.d);
  const TensorField R = burgers_from_distortion(tr.d, tr.dT, tr.bg.metric, tr.bg.omega, tr.bg.lc);
  const Reconstruction rec =
      reconstruct_distortion(G, R, tr.bg.metric, tr.bg.omega, tr.d.t.mat(0));
  return sup_diff(rec.distortion.t, tr.d.t);
}

}  // namespace

TEST(Distortion, ShearDeformationMatrix) {
  const Grid g = cube(8);
  TensorField t(g, kDistortion);
  Mat3 m = identity3();
  m[0][1] = 0.3;
  for (std::size_t n = 0; n < g.size(); ++n) t.set_mat(n, m);
  const Mat3 G = deformation_from_distortion(make_distortion(t)).mat(3);
  const Mat3 want{{{1, 0.3, 0}, {0.3, 1.09, 0}, {0, 0, 1}}};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) EXPECT_NEAR(G[i][j], want[i][j], 1e-15);
}

TEST(Distortion, SingularOrWrongSignatureRejected) {
  const Grid g = cube(8);
  EXPECT_THROW(make_distortion(TensorField(g, kDistortion)), SingularMatrix);
  TensorField real(g, kMixed);
  for (std::size_t n = 0; n < g.size(); ++n) real.set_mat(n, identity3());
  EXPECT_THROW(make_distortion(real), SignatureError);
}

TEST(Distortion, ShearZAndBurgersClosedForm) {
  const double a = 0.1;
  const Truth tr = truth(sin_shear_distortion(a), identity_chart(), 16);
  const TensorField Z = z_from_distortion(tr.d, tr.dT, tr.bg.lc);
  const TensorField R = burgers_from_distortion(tr.d, tr.dT, tr.bg.metric, tr.bg.omega, tr.bg.lc);
  for (std::size_t n = 0; n < tr.bg.grid().size(); n += 7) {
    const double c = a * std::cos(tr.bg.grid().coords(n)[2]);
    for (std::size_t k = 0; k < 27; ++k)
      EXPECT_NEAR(Z(k, n), k == TensorField::comp(0, 2, 1) ? c : 0.0, 1e-15);
    for (std::size_t k = 0; k < 9; ++k)
      EXPECT_NEAR(R(k, n), k == TensorField::comp(0, 0) ? -c : 0.0, 1e-15);
  }
}

TEST(Distortion, AnalyticDeformationGradientMatchesDifferences) {
  const Truth tr = truth(random_smooth_distortion(3, 0.05, {kTau, kTau, kTau}),
                         identity_chart(), 32);
  const TensorField G = deformation_from_distortion(tr.d);
  EXPECT_LE(sup_diff(deformation_gradient(tr.d, tr.dT), gradient(G)), 1e-5);
}

TEST(Distortion, ConcordantConnectionEqualsDistortionConnection) {
  // Both maps from T agree: Gamma(Ghat, T(R)) = Gamma_lc + S nabla T.
  for (const Chart& chart : {identity_chart(), warped_chart(0.1)}) {
    const Truth tr = truth(random_smooth_distortion(11, 0.05, {kTau, kTau, kTau}), chart, 16);
    const TensorField G = deformation_from_distortion(tr.d);
    const TensorField dG = deformation_gradient(tr.d, tr.dT);
    const TensorField R = burgers_from_distortion(tr.d, tr.dT, tr.bg.metric, tr.bg.omega, tr.bg.lc);
    const Connection hat = connection_from_metric_and_torsion(
        G, dG, torsion_from_burgers_density(R, tr.bg.metric, tr.bg.omega));
    const TensorField Z = z_from_distortion(tr.d, tr.dT, tr.bg.lc);
    EXPECT_LE(sup_diff(hat.gamma, tr.bg.lc.gamma + Z), 1e-13) << chart.name;
    EXPECT_LE(concordance_residual(G, dG, hat), 1e-13) << chart.name;
  }
}

TEST(ConvertIndex, DistortionMapsToIdentity) {
  const Truth tr = truth(random_smooth_distortion(5, 0.05, {kTau, kTau, kTau}),
                         identity_chart(), 8);
  const TensorField a = convert_index(tr.d.t, tr.d, 0, Conversion::ToReal);
  EXPECT_EQ(a.signature(), kMixed);
  const TensorField b = convert_index(tr.d.t, tr.d, 1, Conversion::ToBurgers);
  EXPECT_EQ(b.signature(), (Signature{IndexKind::BurgersUpper, IndexKind::BurgersLower}));
  const TensorField G = deformation_from_distortion(tr.d);
  const TensorField gb =
      convert_index(convert_index(G, tr.d, 0, Conversion::ToBurgers), tr.d, 1, Conversion::ToBurgers);
  EXPECT_EQ(gb.signature(), kBurgersMetric);
  for (std::size_t n = 0; n < 512; n += 17)
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        const double id = i == j ? 1.0 : 0.0;
        EXPECT_NEAR(a(TensorField::comp(i, j), n), id, 1e-14);
        EXPECT_NEAR(b(TensorField::comp(i, j), n), id, 1e-14);
        EXPECT_NEAR(gb(TensorField::comp(i, j), n), id, 1e-14);
      }
}

TEST(ConvertIndex, RoundTripOnMiddleSlot) {
  const Truth tr = truth(random_smooth_distortion(5, 0.05, {kTau, kTau, kTau}),
                         identity_chart(), 8);
  Rng rng(2);
  TensorField x(tr.d.grid(), kConnection);
  for (double& v : x.data()) v = rng.uniform();
  const TensorField b = convert_index(x, tr.d, 1, Conversion::ToBurgers);
  EXPECT_EQ(b.signature(),
            (Signature{IndexKind::RealUpper, IndexKind::BurgersLower, IndexKind::RealLower}));
  EXPECT_LE(sup_diff(convert_index(b, tr.d, 1, Conversion::ToReal), x), 1e-14);
  EXPECT_THROW(convert_index(x, tr.d, 1, Conversion::ToReal), SignatureError);
  EXPECT_THROW(convert_index(b, tr.d, 1, Conversion::ToBurgers), SignatureError);
  EXPECT_THROW(convert_index(x, tr.d, 3, Conversion::ToBurgers), SignatureError);
}

TEST(Pfaff, ZeroConnectionKeepsInitialValue) {
  const Grid g = cube(8);
  const Connection c = make_connection(TensorField(g, kConnection), Connection::Kind::WithTorsion);
  const Mat3 t0{{{2, 0.1, 0}, {0, 1, 0.3}, {0.2, 0, 1}}};
  const Distortion d = integrate_pfaff(c, t0, g.index(3, 4, 5));
  for (std::size_t n = 0; n < g.size(); ++n) EXPECT_EQ(d.t.mat(n), t0);
}

TEST(Pfaff, RoundTripConvergesAtFourthOrder) {
  const double e16 = sin_shear_roundtrip_error(16);
  const double e32 = sin_shear_roundtrip_error(32);
  EXPECT_LE(e32, 1e-4);
  EXPECT_GT(std::log2(e16 / e32), 3.5) << e16 << " " << e32;
}

TEST(Pfaff, ClosedFormCoefficientsReproduceTruth) {
  const double a = 0.1;
  auto gamma_at = [a](const Vec3& y) {
    Tensor3 t{};
    t[TensorField::comp(0, 2, 1)] = a * std::cos(y[2]);
    return t;
  };
  auto error = [&](int n) {
    const Grid g = cube(n);
    const Distortion d = integrate_pfaff(gamma_at, g, identity3(), 0);
    return sup_diff(d.t, sample(sin_shear_distortion(a), g, 0.0));
  };
  const double e16 = error(16), e32 = error(32);
  EXPECT_LE(e32, 1e-7);
  EXPECT_NEAR(std::log2(e16 / e32), 4.0, 0.3) << e16 << " " << e32;
}

TEST(Pfaff, LinearInInitialValue) {
  const Truth tr = truth(sin_shear_distortion(0.1), identity_chart(), 16);
  const TensorField G = deformation_from_distortion(tr.d);
  const TensorField R = burgers_from_distortion(tr.d, tr.dT, tr.bg.metric, tr.bg.omega, tr.bg.lc);
  const Connection c = connection_from_metric_and_torsion(
      G, deformation_gradient(tr.d, tr.dT),
      torsion_from_burgers_density(R, tr.bg.metric, tr.bg.omega));
  const Mat3 m{{{1.5, 0.2, 0}, {-0.1, 0.9, 0.4}, {0, 0.3, 1.1}}};
  const Distortion d1 = integrate_pfaff(c, identity3());
  const Distortion d2 = integrate_pfaff(c, m);
  EXPECT_LE(sup_diff(d2.t, left_multiply(m, d1).t), 1e-14);
}

TEST(Pfaff, PathIndependentForFlatConnection) {
  const Truth tr = truth(random_smooth_distortion(9, 0.05, {kTau, kTau, kTau}),
                         identity_chart(), 32);
  const Connection c = make_connection(tr.bg.lc.gamma + z_from_distortion(tr.d, tr.dT, tr.bg.lc),
                                       Connection::Kind::WithTorsion);
  const CompatibilityReport rep = compatibility_residual(c);
  EXPECT_TRUE(rep.compatible);
  EXPECT_LE(rep.path_defect, 1e-5);
  for (double m : rep.monodromy) EXPECT_LE(m, 1e-5);
  PfaffOptions rev;
  rev.axis_order = {2, 0, 1};
  const Distortion a = integrate_pfaff(c, tr.d.t.mat(0));
  const Distortion b = integrate_pfaff(c, tr.d.t.mat(0), 0, rev);
  EXPECT_LE(sup_diff(a.t, b.t), 1e-5);
  EXPECT_LE(sup_diff(a.t, tr.d.t), 1e-5);
}

TEST(Pfaff, ConstantContorsionIsRefused) {
  const Grid g = cube(8);
  const Background bg = make_background(identity_chart(), g);
  const KinematicState s = direct_state(make_direct_providers("contorsion-const", {}), g);
  const Connection c = connection_from_metric_and_torsion(
      s.Ghat, torsion_from_burgers_density(s.R, bg.metric, bg.omega));
  const CompatibilityReport rep = compatibility_residual(c);
  EXPECT_FALSE(rep.compatible);
  EXPECT_NEAR(rep.curvature_sup, 0.25, 1e-14);
  EXPECT_GT(rep.path_defect, 0.1);
  try {
    (void)integrate_pfaff(c, identity3());
    FAIL() << "expected IncompatibleConnection";
  } catch (const IncompatibleConnection& e) {
    EXPECT_NEAR(e.residual(), 0.25, 1e-14);
    EXPECT_LT(e.threshold(), e.residual());
  }
  PfaffOptions off;
  off.check_compatibility = false;
  EXPECT_NO_THROW(integrate_pfaff(c, identity3(), 0, off));
}

TEST(Pfaff, RejectsBadArguments) {
  const Grid g = cube(8);
  const Connection c = make_connection(TensorField(g, kConnection), Connection::Kind::WithTorsion);
  Mat3 sing = identity3();
  sing[2][2] = 0.0;
  EXPECT_THROW(integrate_pfaff(c, sing), InvalidInitialValue);
  EXPECT_THROW(integrate_pfaff(c, identity3(), g.size()), InvalidArgument);
  PfaffOptions bad;
  bad.axis_order = {0, 0, 1};
  EXPECT_THROW(integrate_pfaff(c, identity3(), 0, bad), InvalidArgument);
}

TEST(Gauge, IdentityAndRotation) {
  const Truth tr = truth(random_smooth_distortion(13, 0.05, {kTau, kTau, kTau}),
                         identity_chart(), 8);
  const GaugeMatrix same = gauge_align(tr.d, tr.d);
  EXPECT_LE(same.orthogonality_residual, 1e-14);
  EXPECT_LE(same.global_residual, 1e-14);
  EXPECT_FALSE(same.reflection);

  const Mat3 rot = rotation3(90.0);
  const GaugeMatrix g = gauge_align(tr.d, left_multiply(rot, tr.d), 17);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) EXPECT_NEAR(g.o[i][j], rot[i][j], 1e-14);
  EXPECT_LE(g.global_residual, 1e-14);
  // Rotated distortions share Ghat.
  EXPECT_LE(sup_diff(deformation_from_distortion(tr.d),
                     deformation_from_distortion(left_multiply(rot, tr.d))),
            1e-14);
}

TEST(Gauge, ScaledDistortionIsRejected) {
  const Truth tr = truth(sin_shear_distortion(0.1), identity_chart(), 8);
  Mat3 two{};
  for (int i = 0; i < 3; ++i) two[i][i] = 2.0;
  try {
    (void)gauge_align(tr.d, left_multiply(two, tr.d));
    FAIL() << "expected GaugeMismatch";
  } catch (const GaugeMismatch& e) {
    EXPECT_NEAR(e.residual(), 3.0, 1e-14);
  }
}

TEST(Gauge, ReflectionAcceptedAndFlagged) {
  const Truth tr = truth(sin_shear_distortion(0.1), identity_chart(), 8);
  Mat3 flip = identity3();
  flip[2][2] = -1.0;
  const GaugeMatrix g = gauge_align(tr.d, left_multiply(flip, tr.d));
  EXPECT_TRUE(g.reflection);
  EXPECT_LE(g.global_residual, 1e-15);
}
