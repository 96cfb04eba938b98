#pragma once

// Built-in catalog of charts, manufactured initial states and drivers.
// Every provider has a closed-form gradient.

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "dislo/errors.hpp"
#include "dislo/evolve.hpp"
#include "dislo/field.hpp"
#include "dislo/grid.hpp"
#include "dislo/reconstruct.hpp"

namespace dislo {

using Params = std::map<std::string, double>;

namespace detail {

/// Reads named parameters and rejects names outside `allowed`.
class ParamReader {
 public:
  ParamReader(const Params& p, std::string owner, std::set<std::string> allowed)
      : p_(p), owner_(std::move(owner)) {
    for (const auto& [k, v] : p_) {
      if (!allowed.count(k))
        throw ConfigError(owner_ + ": unknown parameter '" + k + "'");
      if (!std::isfinite(v)) throw ConfigError(owner_ + ": parameter '" + k + "' not finite");
    }
  }
  double get(const std::string& k, double fallback) const {
    const auto it = p_.find(k);
    return it == p_.end() ? fallback : it->second;
  }

 private:
  const Params& p_;
  std::string owner_;
};

inline Vec3 wavenumbers(const Vec3& lengths) {
  const double tau = 2.0 * std::numbers::pi;
  return {tau / lengths[0], tau / lengths[1], tau / lengths[2]};
}

/// Uniform double in [-1, 1) from the top 53 bits, independent of the
/// standard library's distribution implementation.
inline double unit_symmetric(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-52 - 1.0;
}

}  // namespace detail

inline const std::vector<std::string>& chart_names() {
  static const std::vector<std::string> n{"identity", "cylindrical", "warped"};
  return n;
}

inline Chart make_chart(const std::string& name, const Params& params, const Vec3& lengths) {
  if (name == "identity") {
    detail::ParamReader(params, "chart identity", {});
    return identity_chart();
  }
  if (name == "cylindrical") {
    detail::ParamReader(params, "chart cylindrical", {});
    return cylindrical_chart();
  }
  if (name == "warped") {
    const detail::ParamReader r(params, "chart warped", {"amplitude"});
    if (lengths[0] != lengths[1] || lengths[1] != lengths[2])
      throw ConfigError("chart warped needs a cubic box");
    return warped_chart(r.get("amplitude", 0.1), lengths[0]);
  }
  throw ConfigError("unknown chart '" + name + "'");
}

// -- distortion providers (B^,R_) ---------------------------------------------

inline FieldProvider flat_distortion() {
  const Mat3 id = identity3();
  std::vector<double> v;
  for (const auto& row : id) v.insert(v.end(), row.begin(), row.end());
  auto p = constant_provider("flat", kDistortion, v);
  return p;
}

/// T = delta + a sin(k y3) e1 (x) e2^*.
inline FieldProvider sin_shear_distortion(double amplitude, double length = 2.0 * std::numbers::pi) {
  const double a = amplitude;
  const double k = 2.0 * std::numbers::pi / length;
  FieldProvider p;
  p.name = "sin-shear";
  p.signature = kDistortion;
  p.value = [a, k](const Vec3& y, double, std::span<double> out) {
    std::fill(out.begin(), out.end(), 0.0);
    out[0] = out[4] = out[8] = 1.0;
    out[TensorField::comp(0, 1)] = a * std::sin(k * y[2]);
  };
  p.gradient = [a, k](const Vec3& y, double, std::span<double> out) {
    std::fill(out.begin(), out.end(), 0.0);
    out[2 * 9 + TensorField::comp(0, 1)] = a * k * std::cos(k * y[2]);
  };
  return p;
}

/// delta plus a seeded sum of the lowest periodic Fourier modes,
/// wave vectors n with entries in {-1, 0, 1}, one of each +-n pair.
inline FieldProvider random_smooth_distortion(std::uint64_t seed, double amplitude,
                                              const Vec3& lengths) {
  struct Mode {
    Vec3 k;
    std::array<double, 9> c, s;
  };
  const Vec3 kw = detail::wavenumbers(lengths);
  std::mt19937_64 rng(seed);
  std::vector<Mode> modes;
  for (int a = -1; a <= 1; ++a)
    for (int b = -1; b <= 1; ++b)
      for (int c = -1; c <= 1; ++c) {
        const int key = (a * 3 + b) * 3 + c;
        if (key <= 0) continue;  // skip zero and the negated half
        Mode m{{a * kw[0], b * kw[1], c * kw[2]}, {}, {}};
        modes.push_back(m);
      }
  const double scale = amplitude / std::sqrt(2.0 * static_cast<double>(modes.size()));
  for (auto& m : modes)
    for (int i = 0; i < 9; ++i) {
      m.c[i] = scale * detail::unit_symmetric(rng);
      m.s[i] = scale * detail::unit_symmetric(rng);
    }
  FieldProvider p;
  p.name = "seeded-random-smooth";
  p.signature = kDistortion;
  p.value = [modes](const Vec3& y, double, std::span<double> out) {
    std::fill(out.begin(), out.end(), 0.0);
    out[0] = out[4] = out[8] = 1.0;
    for (const auto& m : modes) {
      const double ph = m.k[0] * y[0] + m.k[1] * y[1] + m.k[2] * y[2];
      const double cs = std::cos(ph), sn = std::sin(ph);
      for (int i = 0; i < 9; ++i) out[i] += m.c[i] * cs + m.s[i] * sn;
    }
  };
  p.gradient = [modes](const Vec3& y, double, std::span<double> out) {
    std::fill(out.begin(), out.end(), 0.0);
    for (const auto& m : modes) {
      const double ph = m.k[0] * y[0] + m.k[1] * y[1] + m.k[2] * y[2];
      const double cs = std::cos(ph), sn = std::sin(ph);
      for (int d = 0; d < 3; ++d) {
        if (m.k[d] == 0.0) continue;
        for (int i = 0; i < 9; ++i) out[d * 9 + i] += m.k[d] * (m.s[i] * cs - m.c[i] * sn);
      }
    }
  };
  return p;
}

inline const std::vector<std::string>& distortion_names() {
  static const std::vector<std::string> n{"flat", "sin-shear", "seeded-random-smooth"};
  return n;
}

inline FieldProvider make_distortion_provider(const std::string& name, const Params& params,
                                              const Vec3& lengths) {
  if (name == "flat") {
    detail::ParamReader(params, "distortion flat", {});
    return flat_distortion();
  }
  if (name == "sin-shear") {
    const detail::ParamReader r(params, "distortion sin-shear", {"amplitude"});
    return sin_shear_distortion(r.get("amplitude", 0.1), lengths[2]);
  }
  if (name == "seeded-random-smooth") {
    const detail::ParamReader r(params, "distortion seeded-random-smooth",
                                {"seed", "amplitude"});
    const double seed = r.get("seed", 1.0);
    if (seed < 0.0 || seed != std::floor(seed))
      throw ConfigError("distortion seeded-random-smooth: seed must be a non-negative integer");
    return random_smooth_distortion(static_cast<std::uint64_t>(seed), r.get("amplitude", 0.05),
                                    lengths);
  }
  throw ConfigError("unknown distortion provider '" + name + "'");
}

// -- direct (Ghat, R) providers ------------------------------------------------

struct DirectProviders {
  FieldProvider Ghat;
  FieldProvider R;
};

inline const std::vector<std::string>& direct_names() {
  static const std::vector<std::string> n{"flat", "contorsion-const"};
  return n;
}

/// "contorsion-const": Ghat = delta, R^1_1 = strength, other components 0.
/// Not realizable by any distortion: the resulting connection is curved.
inline DirectProviders make_direct_providers(const std::string& name, const Params& params) {
  std::vector<double> g(9, 0.0), r(9, 0.0);
  g[0] = g[4] = g[8] = 1.0;
  if (name == "flat") {
    detail::ParamReader(params, "direct flat", {});
  } else if (name == "contorsion-const") {
    const detail::ParamReader pr(params, "direct contorsion-const", {"strength"});
    r[0] = pr.get("strength", 1.0);
  } else {
    throw ConfigError("unknown direct provider '" + name + "'");
  }
  return {constant_provider(name + ".Ghat", kLower2, g), constant_provider(name + ".R", kMixed, r)};
}

// -- drivers -----------------------------------------------------------------

inline FieldProvider zero_velocity() {
  return constant_provider("zero.v", kVector, {0.0, 0.0, 0.0});
}

inline FieldProvider zero_flow() {
  return constant_provider("zero.J", kMixed, std::vector<double>(9, 0.0));
}

/// Rigid rotation about axis 3 with angular speed w, v = w (-y2, y1, 0).
/// Not periodic; only for pointwise use.
inline FieldProvider rigid_rotation_velocity(double w) {
  FieldProvider p;
  p.name = "rigid-rotation.v";
  p.signature = kVector;
  p.value = [w](const Vec3& y, double, std::span<double> out) {
    out[0] = -w * y[1];
    out[1] = w * y[0];
    out[2] = 0.0;
  };
  p.gradient = [w](const Vec3&, double, std::span<double> out) {
    std::fill(out.begin(), out.end(), 0.0);
    out[1 * 3 + 0] = -w;
    out[0 * 3 + 1] = w;
  };
  return p;
}

/// Periodic rotation-like velocity v = w (-sin(k2 y2)/k2, sin(k1 y1)/k1, 0),
/// which equals the rigid rotation to first order near the origin.
inline FieldProvider periodic_rotation_velocity(double w, const Vec3& lengths) {
  const Vec3 k = detail::wavenumbers(lengths);
  FieldProvider p;
  p.name = "rotation.v";
  p.signature = kVector;
  p.value = [w, k](const Vec3& y, double, std::span<double> out) {
    out[0] = -w * std::sin(k[1] * y[1]) / k[1];
    out[1] = w * std::sin(k[0] * y[0]) / k[0];
    out[2] = 0.0;
  };
  p.gradient = [w, k](const Vec3& y, double, std::span<double> out) {
    std::fill(out.begin(), out.end(), 0.0);
    out[1 * 3 + 0] = -w * std::cos(k[1] * y[1]);
    out[0 * 3 + 1] = w * std::cos(k[0] * y[0]);
  };
  return p;
}

/// Smooth time-dependent Burgers flow
///   J^r_q = a (1 + sin(t)/2) c_rq sin(k_s y^s + (r + q)),   s = (r + 2q) mod 3
/// with fixed coefficients c_rq in [0.5, 1].
inline FieldProvider driven_flow(double a, const Vec3& lengths) {
  const Vec3 k = detail::wavenumbers(lengths);
  FieldProvider p;
  p.name = "driven-J.J";
  p.signature = kMixed;
  auto coef = [](int r, int q) { return 0.5 + 0.5 * ((r * 3 + q) % 5) / 4.0; };
  p.value = [a, k, coef](const Vec3& y, double t, std::span<double> out) {
    const double amp = a * (1.0 + 0.5 * std::sin(t));
    for (int r = 0; r < 3; ++r)
      for (int q = 0; q < 3; ++q) {
        const int s = (r + 2 * q) % 3;
        out[r * 3 + q] = amp * coef(r, q) * std::sin(k[s] * y[s] + (r + q));
      }
  };
  p.gradient = [a, k, coef](const Vec3& y, double t, std::span<double> out) {
    std::fill(out.begin(), out.end(), 0.0);
    const double amp = a * (1.0 + 0.5 * std::sin(t));
    for (int r = 0; r < 3; ++r)
      for (int q = 0; q < 3; ++q) {
        const int s = (r + 2 * q) % 3;
        out[s * 9 + r * 3 + q] = amp * coef(r, q) * k[s] * std::cos(k[s] * y[s] + (r + q));
      }
  };
  return p;
}

inline const std::vector<std::string>& driver_names() {
  static const std::vector<std::string> n{"zero", "rotation", "driven-J"};
  return n;
}

inline Drivers make_drivers(const std::string& name, const Params& params, const Vec3& lengths) {
  if (name == "zero") {
    detail::ParamReader(params, "drivers zero", {});
    return {zero_velocity(), zero_flow()};
  }
  if (name == "rotation") {
    const detail::ParamReader r(params, "drivers rotation", {"omega"});
    return {periodic_rotation_velocity(r.get("omega", 0.1), lengths), zero_flow()};
  }
  if (name == "driven-J") {
    const detail::ParamReader r(params, "drivers driven-J", {"amplitude", "omega"});
    return {periodic_rotation_velocity(r.get("omega", 0.05), lengths),
            driven_flow(r.get("amplitude", 0.05), lengths)};
  }
  throw ConfigError("unknown drivers '" + name + "'");
}

// -- initial states ------------------------------------------------------------

/// A state realized by a known distortion, with the analytic partials of T.
struct RealizedState {
  Distortion distortion;
  TensorField dT;
  TensorField dGhat;
  KinematicState state;
};

inline RealizedState realize(const FieldProvider& T, const Background& bg, double t = 0.0) {
  if (T.signature != kDistortion) throw SignatureError("distortion provider must be (B^,R_)");
  Distortion d = make_distortion(sample(T, bg.grid(), t));
  TensorField dT = sample_gradient(T, bg.grid(), t);
  TensorField G = deformation_from_distortion(d);
  TensorField dG = deformation_gradient(d, dT);
  TensorField R = burgers_from_distortion(d, dT, bg.metric, bg.omega, bg.lc);
  KinematicState s{std::move(G), std::move(R), std::nullopt, t};
  return {std::move(d), std::move(dT), std::move(dG), std::move(s)};
}

inline KinematicState direct_state(const DirectProviders& p, const Grid& grid, double t = 0.0) {
  return {sample(p.Ghat, grid, t), sample(p.R, grid, t), std::nullopt, t};
}

}  // namespace dislo
