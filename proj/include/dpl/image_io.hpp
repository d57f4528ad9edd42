#pragma once

// Binary PPM (P6) and PGM (P5) with maxval 255. Values in [0,1] are
// quantized with round-half-up: byte = floor(v*255 + 0.5).

#include <cctype>
#include <cmath>
#include <cstdint>
#include <string>

#include "dpl/errors.hpp"
#include "dpl/tensor.hpp"
#include "dpl/tensor_io.hpp"

namespace dpl {

inline uint8_t quantize_byte(float v) {
  return static_cast<uint8_t>(std::floor(v * 255.0f + 0.5f));
}

namespace detail {

// Token scanner for PNM headers; skips whitespace and '#' comments.
inline std::string pnm_token(const std::string& bytes, size_t& pos) {
  while (pos < bytes.size()) {
    const char c = bytes[pos];
    if (c == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
      ++pos;
    } else {
      break;
    }
  }
  const size_t start = pos;
  while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos])))
    ++pos;
  return bytes.substr(start, pos - start);
}

inline uint32_t pnm_uint(const std::string& bytes, size_t& pos, const std::string& origin) {
  const std::string tok = pnm_token(bytes, pos);
  if (tok.empty()) throw io_error(origin + ": truncated header");
  uint64_t x = 0;
  for (char c : tok) {
    if (c < '0' || c > '9') throw io_error(origin + ": bad header token '" + tok + "'");
    x = x * 10 + static_cast<uint64_t>(c - '0');
    if (x > 0xffffffffull) throw io_error(origin + ": header value overflow");
  }
  return static_cast<uint32_t>(x);
}

inline Tensor read_pnm(const std::string& path, const char* magic, uint32_t channels) {
  const std::string bytes = read_file_bytes(path);
  size_t pos = 0;
  if (pnm_token(bytes, pos) != magic)
    throw io_error(path + ": expected " + magic + " header");
  const uint32_t w = pnm_uint(bytes, pos, path);
  const uint32_t h = pnm_uint(bytes, pos, path);
  const uint32_t maxval = pnm_uint(bytes, pos, path);
  if (maxval != 255) throw io_error(path + ": maxval must be 255");
  ++pos;  // single whitespace byte after maxval
  const size_t n = static_cast<size_t>(w) * h * channels;
  if (pos > bytes.size() || bytes.size() - pos != n)
    throw io_error(path + ": payload length mismatch");
  Tensor t(channels == 1 ? std::vector<uint32_t>{h, w}
                         : std::vector<uint32_t>{h, w, channels});
  for (size_t i = 0; i < n; ++i)
    t.v[i] = static_cast<float>(static_cast<unsigned char>(bytes[pos + i])) / 255.0f;
  return t;
}

inline void write_pnm(const std::string& path, const char* magic, const Tensor& t,
                      uint32_t w, uint32_t h) {
  std::string out = std::string(magic) + "\n" + std::to_string(w) + " " +
                    std::to_string(h) + "\n255\n";
  out.reserve(out.size() + t.count());
  for (float v : t.v) out.push_back(static_cast<char>(quantize_byte(v)));
  write_file_bytes(path, out);
}

}  // namespace detail

// image: H x W x 3 in [0, 1]
inline void write_image_ppm(const std::string& path, const Image& image) {
  if (image.dims.size() != 3 || image.dims[2] != 3)
    throw shape_error("write_image_ppm expects H x W x 3");
  detail::write_pnm(path, "P6", image, image.dims[1], image.dims[0]);
}

inline Image read_image_ppm(const std::string& path) {
  return detail::read_pnm(path, "P6", 3);
}

// mask: one H x W channel of a label map, values in {0, 1}
inline void write_mask_pgm(const std::string& path, const Tensor& mask) {
  if (mask.dims.size() != 2) throw shape_error("write_mask_pgm expects H x W");
  detail::write_pnm(path, "P5", mask, mask.dims[1], mask.dims[0]);
}

inline Tensor read_mask_pgm(const std::string& path) {
  Tensor t = detail::read_pnm(path, "P5", 1);
  for (float& v : t.v) v = v > 0.5f ? 1.0f : 0.0f;
  return t;
}

// Grayscale P5 without binarization (heatmaps, debugging).
inline Tensor read_gray_pgm(const std::string& path) {
  return detail::read_pnm(path, "P5", 1);
}

}  // namespace dpl
