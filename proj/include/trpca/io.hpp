#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "trpca/core.hpp"

namespace trpca {

// ---------------------------------------------------------------------------
// TNSR binary tensor format
//   magic "TNSR" | u32 version=1 | u32 order | order x u64 dims |
//   prod(dims) x f64 values, little-endian, first index fastest.
// ---------------------------------------------------------------------------

namespace detail {

template <typename T>
void store_le(std::ostream& os, T value) {
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
#if defined(__BYTE_ORDER__) && __BYTE_ORDER__ == __ORDER_BIG_ENDIAN__
  std::reverse(buf, buf + sizeof(T));
#endif
  os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T load_le(std::istream& is) {
  unsigned char buf[sizeof(T)];
  is.read(reinterpret_cast<char*>(buf), sizeof(T));
  if (!is) throw std::runtime_error("TNSR: truncated file");
#if defined(__BYTE_ORDER__) && __BYTE_ORDER__ == __ORDER_BIG_ENDIAN__
  std::reverse(buf, buf + sizeof(T));
#endif
  T value;
  std::memcpy(&value, buf, sizeof(T));
  return value;
}

}  // namespace detail

inline void write_tnsr(std::ostream& os, const DenseTensor& t) {
  os.write("TNSR", 4);
  detail::store_le<std::uint32_t>(os, 1u);
  detail::store_le<std::uint32_t>(os, static_cast<std::uint32_t>(t.order()));
  for (Index d : t.dims) detail::store_le<std::uint64_t>(os, static_cast<std::uint64_t>(d));
  for (double v : t.data) detail::store_le<double>(os, v);
  if (!os) throw std::runtime_error("TNSR: write failed");
}

inline void write_tnsr(const std::string& path, const DenseTensor& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("TNSR: cannot open for writing: " + path);
  write_tnsr(os, t);
}

inline DenseTensor read_tnsr(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "TNSR", 4) != 0)
    throw std::runtime_error("TNSR: bad magic");
  const auto version = detail::load_le<std::uint32_t>(is);
  if (version != 1u) throw std::runtime_error("TNSR: unsupported version");
  const auto order = detail::load_le<std::uint32_t>(is);
  if (order == 0 || order > 16) throw std::runtime_error("TNSR: implausible order");
  std::vector<Index> dims(order);
  for (auto& d : dims) {
    const auto v = detail::load_le<std::uint64_t>(is);
    if (v == 0) throw std::runtime_error("TNSR: zero dimension");
    d = static_cast<Index>(v);
  }
  DenseTensor t(dims);
  for (double& v : t.data) v = detail::load_le<double>(is);
  return t;
}

inline DenseTensor read_tnsr(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("TNSR: cannot open: " + path);
  return read_tnsr(is);
}

// ---------------------------------------------------------------------------
// Support-set text format: one zero-based "i j k" triple per line.
// Blank lines and lines starting with '#' are skipped.
// ---------------------------------------------------------------------------

inline std::vector<std::array<Index, 3>> read_support_triples(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("support file: cannot open: " + path);
  std::vector<std::array<Index, 3>> triples;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::array<Index, 3> t{};
    if (!(ss >> t[0] >> t[1] >> t[2]))
      throw std::runtime_error("support file: malformed line " + std::to_string(lineno));
    triples.push_back(t);
  }
  return triples;
}

}  // namespace trpca
