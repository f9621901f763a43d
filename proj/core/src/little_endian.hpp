#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>

namespace crt::detail {

inline void append_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

inline std::uint64_t read_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

inline std::uint64_t read_u64(const char* p) {
  return read_u64(reinterpret_cast<const unsigned char*>(p));
}

inline void append_f64(std::string& out, double v) { append_u64(out, std::bit_cast<std::uint64_t>(v)); }

inline double read_f64(const unsigned char* p) { return std::bit_cast<double>(read_u64(p)); }
inline double read_f64(const char* p) { return std::bit_cast<double>(read_u64(p)); }

inline std::string pack_f64(std::span<const double> values) {
  std::string out;
  out.reserve(values.size() * 8);
  for (double v : values) append_f64(out, v);
  return out;
}

}  // namespace crt::detail
