#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <ios>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dislo/errors.hpp"
#include "dislo/evolve.hpp"
#include "dislo/field.hpp"

namespace dislo {

static_assert(std::endian::native == std::endian::little,
              "binary field dumps assume a little-endian host");

/// Index tuple suffix used for component array names, e.g. "_0_1".
inline std::string component_suffix(std::size_t comp, std::size_t rank) {
  std::string s;
  for (std::size_t k = rank; k-- > 0;) {
    std::size_t div = 1;
    for (std::size_t j = 0; j < k; ++j) div *= 3;
    s += "_" + std::to_string((comp / div) % 3);
  }
  return s;
}

/// Legacy VTK STRUCTURED_POINTS, ASCII, one SCALARS array per component.
inline void write_vtk(std::ostream& os, const TensorField& f, const std::string& name) {
  const Grid& g = f.grid();
  os << "# vtk DataFile Version 3.0\n"
     << name << " signature " << to_string(f.signature()) << "\n"
     << "ASCII\nDATASET STRUCTURED_POINTS\n"
     << "DIMENSIONS " << g.dim(0) << ' ' << g.dim(1) << ' ' << g.dim(2) << "\n"
     << std::setprecision(17) << "ORIGIN " << g.origin()[0] << ' ' << g.origin()[1] << ' '
     << g.origin()[2] << "\n"
     << "SPACING " << g.h(0) << ' ' << g.h(1) << ' ' << g.h(2) << "\n"
     << "POINT_DATA " << g.size() << "\n";
  for (std::size_t c = 0; c < f.components(); ++c) {
    os << "SCALARS " << name << component_suffix(c, f.rank()) << " double 1\n"
       << "LOOKUP_TABLE default\n";
    const double* x = f.component(c);
    for (std::size_t n = 0; n < f.nodes(); ++n) os << x[n] << '\n';
  }
}

/// Writes <dir>/<name>_<step>.vtk and returns the path.
inline std::filesystem::path write_vtk_file(const std::filesystem::path& dir,
                                            const TensorField& f, const std::string& name,
                                            long step) {
  std::filesystem::create_directories(dir);
  const auto path = dir / (name + "_" + std::to_string(step) + ".vtk");
  std::ofstream os(path);
  if (!os) throw Error("cannot open " + path.string() + " for writing");
  write_vtk(os, f, name);
  if (!os) throw Error("write failed: " + path.string());
  return path;
}

// -- raw binary dump -----------------------------------------------------------
//
// "TDGF", dims as 3 x u32, rank as u32, one byte per slot kind, then all
// components as float64, component-major, little endian.

inline constexpr std::array<char, 4> kDumpMagic{'T', 'D', 'G', 'F'};

namespace detail {

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T take(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw Error("binary dump truncated");
  return v;
}

}  // namespace detail

inline void write_binary(std::ostream& os, const TensorField& f) {
  os.write(kDumpMagic.data(), kDumpMagic.size());
  for (int a = 0; a < 3; ++a) detail::put<std::uint32_t>(os, f.grid().dim(a));
  detail::put<std::uint32_t>(os, static_cast<std::uint32_t>(f.rank()));
  for (IndexKind k : f.signature()) detail::put<std::uint8_t>(os, static_cast<std::uint8_t>(k));
  os.write(reinterpret_cast<const char*>(f.data().data()),
           static_cast<std::streamsize>(f.data().size() * sizeof(double)));
}

/// Reads a dump written on `grid`; the dump carries no box lengths, so the
/// caller supplies them through the grid and dims must match.
inline TensorField read_binary(std::istream& is, const Grid& grid) {
  std::array<char, 4> magic{};
  is.read(magic.data(), magic.size());
  if (!is || magic != kDumpMagic) throw Error("not a TDGF field dump");
  for (int a = 0; a < 3; ++a)
    if (detail::take<std::uint32_t>(is) != static_cast<std::uint32_t>(grid.dim(a)))
      throw Error("field dump dims do not match the grid");
  const auto rank = detail::take<std::uint32_t>(is);
  if (rank > TensorField::kMaxRank) throw Error("field dump rank too large");
  Signature sig;
  for (std::uint32_t s = 0; s < rank; ++s) {
    const auto k = detail::take<std::uint8_t>(is);
    if (k > 3) throw Error("field dump has an invalid index kind");
    sig.push_back(static_cast<IndexKind>(k));
  }
  std::vector<double> data(pow3(rank) * grid.size());
  is.read(reinterpret_cast<char*>(data.data()),
          static_cast<std::streamsize>(data.size() * sizeof(double)));
  if (!is) throw Error("binary dump truncated");
  return TensorField(grid, std::move(sig), std::move(data));
}

inline void write_binary_file(const std::filesystem::path& path, const TensorField& f) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open " + path.string() + " for writing");
  write_binary(os, f);
}

inline TensorField read_binary_file(const std::filesystem::path& path, const Grid& grid) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open " + path.string());
  return read_binary(is, grid);
}

// -- diagnostics ---------------------------------------------------------------

inline nlohmann::json to_json(const Diagnostics& d) {
  return {{"time", d.time},
          {"curvature_sup", d.curvature_sup},
          {"divergency_sup", d.divergency_sup},
          {"concordance_sup", d.concordance_sup},
          {"form_equiv_sup", d.form_equiv_sup}};
}

/// One JSON object per line.
inline void write_ndjson(std::ostream& os, const std::vector<Diagnostics>& records) {
  for (const auto& d : records) os << to_json(d).dump() << '\n';
}

inline std::vector<Diagnostics> read_ndjson(std::istream& is) {
  std::vector<Diagnostics> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    Diagnostics d;
    d.time = j.at("time").get<double>();
    d.curvature_sup = j.at("curvature_sup").get<double>();
    d.divergency_sup = j.at("divergency_sup").get<double>();
    d.concordance_sup = j.at("concordance_sup").get<double>();
    d.form_equiv_sup = j.at("form_equiv_sup").get<double>();
    out.push_back(d);
  }
  return out;
}

}  // namespace dislo
