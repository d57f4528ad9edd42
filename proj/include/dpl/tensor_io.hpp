#pragma once

// .tns container: magic "TNS1", u8 ndim (1..4), ndim little-endian u32 dims,
// then product(dims) little-endian IEEE-754 float32 values, row-major.
// Byte order is assembled explicitly so output is host-independent.

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "dpl/errors.hpp"
#include "dpl/tensor.hpp"

namespace dpl {

namespace detail {

inline void put_u32_le(std::string& out, uint32_t x) {
  out.push_back(static_cast<char>(x & 0xff));
  out.push_back(static_cast<char>((x >> 8) & 0xff));
  out.push_back(static_cast<char>((x >> 16) & 0xff));
  out.push_back(static_cast<char>((x >> 24) & 0xff));
}

inline uint32_t get_u32_le(const unsigned char* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) |
         (static_cast<uint32_t>(p[3]) << 24);
}

inline std::string read_file_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw io_error("cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(f)),
                    std::istreambuf_iterator<char>());
  return bytes;
}

inline void write_file_bytes(const std::string& path, const std::string& bytes) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw io_error("cannot open " + path + " for writing");
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw io_error("short write to " + path);
}

}  // namespace detail

inline std::string tensor_to_bytes(const Tensor& t) {
  if (t.dims.empty() || t.dims.size() > 4)
    throw shape_error("tensor rank must be 1..4");
  std::string out;
  out.reserve(5 + 4 * t.dims.size() + 4 * t.count());
  out += "TNS1";
  out.push_back(static_cast<char>(t.dims.size()));
  for (uint32_t d : t.dims) detail::put_u32_le(out, d);
  for (float x : t.v) detail::put_u32_le(out, std::bit_cast<uint32_t>(x));
  return out;
}

inline void write_tensor(const std::string& path, const Tensor& t) {
  detail::write_file_bytes(path, tensor_to_bytes(t));
}

inline Tensor tensor_from_bytes(const std::string& bytes, const std::string& origin = "<memory>") {
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  if (bytes.size() < 5 || bytes.compare(0, 4, "TNS1") != 0)
    throw io_error(origin + ": bad tensor magic");
  const size_t ndim = p[4];
  if (ndim < 1 || ndim > 4) throw io_error(origin + ": bad tensor rank");
  if (bytes.size() < 5 + 4 * ndim) throw io_error(origin + ": truncated header");
  std::vector<uint32_t> dims(ndim);
  uint64_t n = 1;
  for (size_t i = 0; i < ndim; ++i) {
    dims[i] = detail::get_u32_le(p + 5 + 4 * i);
    n *= dims[i];
    if (n > (1ull << 32)) throw io_error(origin + ": dim overflow");
  }
  const size_t payload_at = 5 + 4 * ndim;
  if (bytes.size() != payload_at + 4 * n)
    throw io_error(origin + ": payload length mismatch");
  Tensor t(dims);
  for (size_t i = 0; i < n; ++i)
    t.v[i] = std::bit_cast<float>(detail::get_u32_le(p + payload_at + 4 * i));
  return t;
}

inline Tensor read_tensor(const std::string& path) {
  return tensor_from_bytes(detail::read_file_bytes(path), path);
}

}  // namespace dpl
