#pragma once

// Little helpers for the checkpoint and memory containers. Values are written
// in host byte order; doubles are copied bit for bit.

#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "kasimp/error.hpp"

namespace kas::binary {

inline void write_u64(std::ostream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

inline void write_string(std::ostream& out, const std::string& s) {
  write_u64(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline void write_doubles(std::ostream& out, std::span<const double> values) {
  write_u64(out, values.size());
  out.write(reinterpret_cast<const char*>(values.data()),
            static_cast<std::streamsize>(values.size() * sizeof(double)));
}

inline std::uint64_t read_u64(std::istream& in) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  require(in.good(), ErrorKind::kFormat, "truncated binary file");
  return v;
}

inline std::string read_string(std::istream& in, std::uint64_t limit = 1u << 30) {
  const auto n = read_u64(in);
  require(n <= limit, ErrorKind::kFormat, "corrupt string length in binary file");
  std::string s(n, '\0');
  in.read(s.data(), static_cast<std::streamsize>(n));
  require(in.good() || (n == 0 && !in.bad()), ErrorKind::kFormat, "truncated binary file");
  return s;
}

inline std::vector<double> read_doubles(std::istream& in, std::uint64_t limit = 1u << 28) {
  const auto n = read_u64(in);
  require(n <= limit, ErrorKind::kFormat, "corrupt array length in binary file");
  std::vector<double> values(n);
  in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(n * sizeof(double)));
  require(in.good() || (n == 0 && !in.bad()), ErrorKind::kFormat, "truncated binary file");
  return values;
}

}  // namespace kas::binary
