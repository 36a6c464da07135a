#pragma once

#include <bit>
#include <cstdint>
#include <istream>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>

// Little-endian binary primitives shared by the index and checkpoint file
// formats. Byte order is explicit so the files are portable between hosts.

namespace expanet::io {

inline void write_u32(std::ostream& out, std::uint32_t v) {
  char b[4];
  for (int k = 0; k < 4; ++k) b[k] = static_cast<char>((v >> (8 * k)) & 0xff);
  out.write(b, 4);
}

inline void write_u64(std::ostream& out, std::uint64_t v) {
  char b[8];
  for (int k = 0; k < 8; ++k) b[k] = static_cast<char>((v >> (8 * k)) & 0xff);
  out.write(b, 8);
}

inline void write_i64(std::ostream& out, std::int64_t v) {
  write_u64(out, static_cast<std::uint64_t>(v));
}

inline void write_f64(std::ostream& out, double v) {
  write_u64(out, std::bit_cast<std::uint64_t>(v));
}

inline void write_string(std::ostream& out, std::string_view s) {
  write_u64(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::uint32_t read_u32(std::istream& in) {
  char b[4];
  if (!in.read(b, 4)) throw std::runtime_error("unexpected end of file");
  std::uint32_t v = 0;
  for (int k = 0; k < 4; ++k) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(b[k])) << (8 * k);
  return v;
}

inline std::uint64_t read_u64(std::istream& in) {
  char b[8];
  if (!in.read(b, 8)) throw std::runtime_error("unexpected end of file");
  std::uint64_t v = 0;
  for (int k = 0; k < 8; ++k) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(b[k])) << (8 * k);
  return v;
}

inline std::int64_t read_i64(std::istream& in) {
  return static_cast<std::int64_t>(read_u64(in));
}

inline double read_f64(std::istream& in) {
  return std::bit_cast<double>(read_u64(in));
}

inline std::string read_string(std::istream& in) {
  const std::uint64_t n = read_u64(in);
  // guards against reading a corrupt length field as a huge allocation
  if (n > (1ULL << 30)) throw std::runtime_error("corrupt file: string length out of range");
  std::string s(n, '\0');
  if (n > 0 && !in.read(s.data(), static_cast<std::streamsize>(n)))
    throw std::runtime_error("unexpected end of file");
  return s;
}

// FNV-1a, used for vocabulary and config fingerprints.
inline std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 1469598103934665603ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace expanet::io
