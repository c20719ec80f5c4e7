#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>

#include "photocon/error.hpp"

// Little-endian primitives for the binary container formats.
namespace photocon::binio {

template <typename T>
void put(std::ostream& os, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big)
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(buf[i], buf[sizeof(T) - 1 - i]);
  os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T get(std::istream& is, std::string_view what) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char buf[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(buf), sizeof(T)))
    throw FormatError("truncated file while reading " + std::string(what));
  if constexpr (std::endian::native == std::endian::big)
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(buf[i], buf[sizeof(T) - 1 - i]);
  T value;
  std::memcpy(&value, buf, sizeof(T));
  return value;
}

inline void put_floats(std::ostream& os, std::span<const float> values) {
  if constexpr (std::endian::native == std::endian::little) {
    os.write(reinterpret_cast<const char*>(values.data()),
             static_cast<std::streamsize>(values.size_bytes()));
  } else {
    for (float v : values) put(os, v);
  }
}

inline void get_floats(std::istream& is, std::span<float> values, std::string_view what) {
  if constexpr (std::endian::native == std::endian::little) {
    if (!is.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size_bytes())))
      throw FormatError("truncated payload for " + std::string(what));
  } else {
    for (float& v : values) v = get<float>(is, what);
  }
}

inline void put_string16(std::ostream& os, std::string_view s) {
  if (s.size() > 0xFFFF) throw FormatError("string too long for u16 length prefix");
  put<std::uint16_t>(os, static_cast<std::uint16_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_string16(std::istream& is, std::string_view what) {
  const auto n = get<std::uint16_t>(is, what);
  std::string s(n, '\0');
  if (n && !is.read(s.data(), n)) throw FormatError("truncated string for " + std::string(what));
  return s;
}

inline void expect_magic(std::istream& is, std::string_view magic, std::string_view file) {
  char buf[4] = {};
  if (!is.read(buf, 4) || std::string_view(buf, 4) != magic)
    throw FormatError("bad magic in '" + std::string(file) + "', expected " + std::string(magic));
}

}  // namespace photocon::binio
