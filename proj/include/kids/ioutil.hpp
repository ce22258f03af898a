#pragma once

#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include <zlib.h>

#include "kids/errors.hpp"

// Binary containers are written little-endian via raw copies.
static_assert(std::endian::native == std::endian::little,
              "big-endian hosts would need byte swaps in ioutil");

namespace kids {

inline std::uint32_t crc32_bytes(const void* data, std::size_t n,
                                 std::uint32_t seed = 0) {
  return static_cast<std::uint32_t>(
      ::crc32(seed, static_cast<const Bytef*>(data), static_cast<uInt>(n)));
}

inline std::string read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open file: " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)),
                    std::istreambuf_iterator<char>());
  return bytes;
}

inline void write_file_bytes(const std::string& path,
                             const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write file: " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("short write: " + path);
}

// Shortest round-trip decimal text (std::to_chars), so emitted artifacts are
// byte-stable across runs and parse back to the identical value.
inline std::string fmt_real(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::string fmt_real(float v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

struct BinWriter {
  std::string buf;

  void raw(const void* p, std::size_t n) {
    buf.append(static_cast<const char*>(p), n);
  }
  void u8(std::uint8_t v) { raw(&v, 1); }
  void u16(std::uint16_t v) { raw(&v, 2); }
  void u32(std::uint32_t v) { raw(&v, 4); }
  void u64(std::uint64_t v) { raw(&v, 8); }
  void f32(float v) { raw(&v, 4); }
  void i32(std::int32_t v) { raw(&v, 4); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    raw(s.data(), s.size());
  }
  // Appends the CRC32 of everything written so far, then writes to disk.
  void finish_to_file(const std::string& path) {
    u32(crc32_bytes(buf.data(), buf.size()));
    write_file_bytes(path, buf);
  }
};

struct BinReader {
  std::string_view buf;
  std::size_t pos = 0;
  std::string origin;  // for error messages

  BinReader(std::string_view b, std::string from)
      : buf(b), origin(std::move(from)) {}

  void raw(void* out, std::size_t n) {
    if (pos + n > buf.size())
      throw DataError("truncated file: " + origin + " (needed " +
                      std::to_string(n) + " bytes at offset " +
                      std::to_string(pos) + ")");
    std::memcpy(out, buf.data() + pos, n);
    pos += n;
  }
  std::uint8_t u8() {
    std::uint8_t v;
    raw(&v, 1);
    return v;
  }
  std::uint16_t u16() {
    std::uint16_t v;
    raw(&v, 2);
    return v;
  }
  std::uint32_t u32() {
    std::uint32_t v;
    raw(&v, 4);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v;
    raw(&v, 8);
    return v;
  }
  float f32() {
    float v;
    raw(&v, 4);
    return v;
  }
  std::int32_t i32() {
    std::int32_t v;
    raw(&v, 4);
    return v;
  }
  std::string str() {
    std::uint32_t n = u32();
    std::string s(n, '\0');
    raw(s.data(), n);
    return s;
  }
  std::size_t remaining() const { return buf.size() - pos; }
};

// Loads a container and verifies its trailing CRC32; returns the payload
// bytes (checksum stripped).
inline std::string read_checked_container(const std::string& path) {
  std::string bytes = read_file_bytes(path);
  if (bytes.size() < 4)
    throw DataError("file too small to hold a checksum: " + path);
  std::uint32_t stored;
  std::memcpy(&stored, bytes.data() + bytes.size() - 4, 4);
  std::uint32_t actual = crc32_bytes(bytes.data(), bytes.size() - 4);
  if (stored != actual)
    throw DataError("checksum mismatch in " + path +
                    " (file corrupt or produced by an interrupted run)");
  bytes.resize(bytes.size() - 4);
  return bytes;
}

}  // namespace kids
