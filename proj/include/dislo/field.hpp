#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dislo/errors.hpp"
#include "dislo/grid.hpp"

namespace dislo {

/// Kind of a tensor slot: which space it lives in and its variance.
enum class IndexKind : std::uint8_t {
  RealUpper = 0,
  RealLower = 1,
  BurgersUpper = 2,
  BurgersLower = 3,
};

using Signature = std::vector<IndexKind>;

inline constexpr bool is_upper(IndexKind k) {
  return k == IndexKind::RealUpper || k == IndexKind::BurgersUpper;
}
inline constexpr bool is_real(IndexKind k) {
  return k == IndexKind::RealUpper || k == IndexKind::RealLower;
}

inline std::string to_string(const Signature& sig) {
  static constexpr const char* kNames[] = {"R^", "R_", "B^", "B_"};
  std::string s = "(";
  for (std::size_t i = 0; i < sig.size(); ++i) {
    if (i) s += ",";
    s += kNames[static_cast<int>(sig[i])];
  }
  return s + ")";
}

inline constexpr std::size_t pow3(std::size_t rank) {
  std::size_t n = 1;
  for (std::size_t i = 0; i < rank; ++i) n *= 3;
  return n;
}

inline const Signature kScalar{};
inline const Signature kVector{IndexKind::RealUpper};
inline const Signature kCovector{IndexKind::RealLower};
inline const Signature kMixed{IndexKind::RealUpper, IndexKind::RealLower};
inline const Signature kLower2{IndexKind::RealLower, IndexKind::RealLower};
inline const Signature kUpper2{IndexKind::RealUpper, IndexKind::RealUpper};
inline const Signature kConnection{IndexKind::RealUpper, IndexKind::RealLower,
                                   IndexKind::RealLower};
inline const Signature kLower3{IndexKind::RealLower, IndexKind::RealLower,
                               IndexKind::RealLower};
inline const Signature kUpper3{IndexKind::RealUpper, IndexKind::RealUpper,
                               IndexKind::RealUpper};
inline const Signature kCurvature{IndexKind::RealUpper, IndexKind::RealLower,
                                  IndexKind::RealLower, IndexKind::RealLower};

/// Grid-sampled tensor field. Components are stored component-major:
/// data[comp * nodes + node], with comp the row-major flattening of the
/// index tuple.
class TensorField {
 public:
  static constexpr std::size_t kMaxRank = 4;

  TensorField(Grid grid, Signature signature)
      : grid_(std::move(grid)), signature_(std::move(signature)) {
    if (signature_.size() > kMaxRank)
      throw SignatureError("tensor rank " + std::to_string(signature_.size()) +
                           " exceeds " + std::to_string(kMaxRank));
    data_.assign(components() * grid_.size(), 0.0);
  }

  TensorField(Grid grid, Signature signature, std::vector<double> data)
      : TensorField(std::move(grid), std::move(signature)) {
    if (data.size() != data_.size())
      throw InvalidArgument("tensor data size " + std::to_string(data.size()) +
                            " does not match " + std::to_string(data_.size()));
    data_ = std::move(data);
  }

  const Grid& grid() const { return grid_; }
  const Signature& signature() const { return signature_; }
  std::size_t rank() const { return signature_.size(); }
  std::size_t components() const { return pow3(signature_.size()); }
  std::size_t nodes() const { return grid_.size(); }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  double* component(std::size_t c) { return data_.data() + c * nodes(); }
  const double* component(std::size_t c) const {
    return data_.data() + c * nodes();
  }

  double& operator()(std::size_t comp, std::size_t node) {
    return data_[comp * nodes() + node];
  }
  double operator()(std::size_t comp, std::size_t node) const {
    return data_[comp * nodes() + node];
  }

  /// Row-major flat component index of an index tuple.
  template <typename... I>
  static constexpr std::size_t comp(I... idx) {
    std::size_t c = 0;
    ((c = c * 3 + static_cast<std::size_t>(idx)), ...);
    return c;
  }

  /// All components at one node.
  template <std::size_t N>
  std::array<double, N> gather(std::size_t node) const {
    std::array<double, N> out{};
    const std::size_t n = nodes();
    for (std::size_t c = 0; c < N; ++c) out[c] = data_[c * n + node];
    return out;
  }

  template <std::size_t N>
  void scatter(std::size_t node, const std::array<double, N>& v) {
    const std::size_t n = nodes();
    for (std::size_t c = 0; c < N; ++c) data_[c * n + node] = v[c];
  }

  Mat3 mat(std::size_t node) const {
    const auto v = gather<9>(node);
    Mat3 m;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) m[i][j] = v[i * 3 + j];
    return m;
  }

  void set_mat(std::size_t node, const Mat3& m) {
    const std::size_t n = nodes();
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) data_[(i * 3 + j) * n + node] = m[i][j];
  }

  Vec3 vec(std::size_t node) const { return gather<3>(node); }

  /// Index of the first non-finite value, or npos.
  std::size_t first_non_finite() const {
    for (std::size_t i = 0; i < data_.size(); ++i)
      if (!std::isfinite(data_[i])) return i;
    return npos;
  }
  bool all_finite() const { return first_non_finite() == npos; }

  TensorField& operator+=(const TensorField& o) {
    check_same_shape(o);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }
  TensorField& operator-=(const TensorField& o) {
    check_same_shape(o);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
    return *this;
  }
  TensorField& operator*=(double s) {
    for (double& x : data_) x *= s;
    return *this;
  }
  /// this += s * o
  TensorField& axpy(double s, const TensorField& o) {
    check_same_shape(o);
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += s * o.data_[i];
    return *this;
  }

  void check_same_shape(const TensorField& o) const {
    if (!(grid_ == o.grid_) || signature_ != o.signature_)
      throw SignatureError("field shape mismatch: " + to_string(signature_) +
                           " vs " + to_string(o.signature_));
  }

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

 private:
  Grid grid_;
  Signature signature_;
  std::vector<double> data_;
};

inline TensorField operator+(TensorField a, const TensorField& b) {
  a += b;
  return a;
}
inline TensorField operator-(TensorField a, const TensorField& b) {
  a -= b;
  return a;
}
inline TensorField operator*(double s, TensorField a) {
  a *= s;
  return a;
}

inline double sup_norm(const TensorField& f) {
  double m = 0.0;
  for (double x : f.data()) m = std::max(m, std::abs(x));
  return m;
}

inline double sup_diff(const TensorField& a, const TensorField& b) {
  a.check_same_shape(b);
  double m = 0.0;
  for (std::size_t i = 0; i < a.data().size(); ++i)
    m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

/// Signature with a new leading real-lower slot (the derivative index).
inline Signature with_derivative_slot(const Signature& sig) {
  Signature out{IndexKind::RealLower};
  out.insert(out.end(), sig.begin(), sig.end());
  return out;
}

namespace detail {

inline constexpr double kStencil1 = 8.0 / 12.0;
inline constexpr double kStencil2 = -1.0 / 12.0;

/// 4th-order central first derivative of one component line set along
/// `axis`, written to `out`. Periodic wrap.
inline void derivative_component(const Grid& g, int axis, const double* in,
                                 double* out) {
  const int n0 = g.dim(0), n1 = g.dim(1), n2 = g.dim(2);
  const double inv_h = 1.0 / g.h(axis);
  const int n = g.dim(axis);
  std::vector<int> m2(n), m1(n), p1(n), p2(n);
  for (int i = 0; i < n; ++i) {
    m2[i] = (i - 2 + n) % n;
    m1[i] = (i - 1 + n) % n;
    p1[i] = (i + 1) % n;
    p2[i] = (i + 2) % n;
  }
  const std::size_t s = g.stride(axis);
  for (int k = 0; k < n2; ++k)
    for (int j = 0; j < n1; ++j)
      for (int i = 0; i < n0; ++i) {
        const std::size_t node = g.index(i, j, k);
        const int c = axis == 0 ? i : (axis == 1 ? j : k);
        const std::size_t base = node - static_cast<std::size_t>(c) * s;
        const double d =
            kStencil1 * (in[base + p1[c] * s] - in[base + m1[c] * s]) +
            kStencil2 * (in[base + p2[c] * s] - in[base + m2[c] * s]);
        out[node] = d * inv_h;
      }
}

inline void require_finite(const TensorField& f, const char* op) {
  const std::size_t bad = f.first_non_finite();
  if (bad != TensorField::npos)
    throw NonFiniteError(std::string(op) + ": non-finite input at node " +
                         std::to_string(bad % f.nodes()) + ", component " +
                         std::to_string(bad / f.nodes()));
}

}  // namespace detail

/// Component-wise 4th-order central difference d/dy^axis (axis in 0..2).
inline TensorField partial_derivative(const TensorField& field, int axis) {
  if (axis < 0 || axis > 2)
    throw InvalidArgument("axis must be 0, 1 or 2, got " + std::to_string(axis));
  detail::require_finite(field, "partial_derivative");
  TensorField out(field.grid(), field.signature());
  for (std::size_t c = 0; c < field.components(); ++c)
    detail::derivative_component(field.grid(), axis, field.component(c),
                                 out.component(c));
  return out;
}

/// All three partial derivatives stacked into a leading real-lower slot:
/// out(p, idx...) = d_p field(idx...).
inline TensorField gradient(const TensorField& field) {
  detail::require_finite(field, "gradient");
  TensorField out(field.grid(), with_derivative_slot(field.signature()));
  const std::size_t nc = field.components();
  for (int p = 0; p < 3; ++p)
    for (std::size_t c = 0; c < nc; ++c)
      detail::derivative_component(field.grid(), p, field.component(c),
                                   out.component(p * nc + c));
  return out;
}

/// Closed-form field (y, t) -> components. `gradient`, when set, writes the
/// analytic partials as out[p * ncomp + c].
struct FieldProvider {
  using Eval = std::function<void(const Vec3& y, double t, std::span<double> out)>;

  std::string name;
  Signature signature;
  Eval value;
  Eval gradient;

  std::size_t components() const { return pow3(signature.size()); }
  bool has_gradient() const { return static_cast<bool>(gradient); }
};

/// Constant-valued provider.
inline FieldProvider constant_provider(std::string name, Signature sig,
                                       std::vector<double> values) {
  FieldProvider p;
  p.name = std::move(name);
  p.signature = std::move(sig);
  if (values.size() != p.components())
    throw InvalidArgument("constant provider needs " +
                          std::to_string(p.components()) + " values");
  p.value = [values](const Vec3&, double, std::span<double> out) {
    std::copy(values.begin(), values.end(), out.begin());
  };
  p.gradient = [](const Vec3&, double, std::span<double> out) {
    std::fill(out.begin(), out.end(), 0.0);
  };
  return p;
}

namespace detail {

inline TensorField sample_with(const FieldProvider::Eval& eval,
                               const std::string& name, Signature sig,
                               std::size_t ncomp, const Grid& grid, double t) {
  TensorField out(grid, std::move(sig));
  std::vector<double> buf(ncomp);
  const std::size_t n = grid.size();
  for (std::size_t node = 0; node < n; ++node) {
    eval(grid.coords(node), t, buf);
    for (std::size_t c = 0; c < ncomp; ++c) {
      if (!std::isfinite(buf[c])) {
        const auto ijk = grid.ijk(node);
        throw SamplingError("provider '" + name + "' is non-finite at node " +
                                std::to_string(node) + " (" +
                                std::to_string(ijk[0]) + "," +
                                std::to_string(ijk[1]) + "," +
                                std::to_string(ijk[2]) + ")",
                            node);
      }
      out(c, node) = buf[c];
    }
  }
  return out;
}

}  // namespace detail

/// Pointwise evaluation of a provider on every grid node at time t.
inline TensorField sample(const FieldProvider& provider, const Grid& grid,
                          double t) {
  return detail::sample_with(provider.value, provider.name, provider.signature,
                             provider.components(), grid, t);
}

/// Gradient of a provider: analytic when available, otherwise 4th-order
/// differences of the sampled field.
inline TensorField sample_gradient(const FieldProvider& provider,
                                   const Grid& grid, double t) {
  if (!provider.has_gradient()) return gradient(sample(provider, grid, t));
  return detail::sample_with(provider.gradient, provider.name + "'",
                             with_derivative_slot(provider.signature),
                             3 * provider.components(), grid, t);
}

}  // namespace dislo
