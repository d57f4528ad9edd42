#pragma once

// On-disk dataset layout: <stem>.ppm, <stem>.disc.pgm, <stem>.cup.pgm and a
// newline-delimited manifest.txt of stems.

#include <sstream>
#include <string>
#include <vector>

#include "dpl/errors.hpp"
#include "dpl/image_io.hpp"
#include "dpl/synthgen.hpp"

namespace dpl {

inline std::vector<std::string> read_manifest(const std::string& dir) {
  const std::string text = detail::read_file_bytes(dir + "/manifest.txt");
  std::vector<std::string> stems;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) stems.push_back(line);
  }
  if (stems.empty()) throw io_error(dir + "/manifest.txt: empty manifest");
  return stems;
}

inline Sample load_sample(const std::string& dir, const std::string& stem) {
  Sample s;
  s.image = read_image_ppm(dir + "/" + stem + ".ppm");
  const Tensor disc = read_mask_pgm(dir + "/" + stem + ".disc.pgm");
  const Tensor cup = read_mask_pgm(dir + "/" + stem + ".cup.pgm");
  if (disc.dims[0] != s.image.dims[0] || disc.dims[1] != s.image.dims[1] ||
      !disc.same_shape(cup))
    throw io_error(dir + "/" + stem + ": image/mask size mismatch");
  s.label = LabelMap({s.image.dims[0], s.image.dims[1], 2});
  for (uint32_t y = 0; y < disc.dims[0]; ++y)
    for (uint32_t x = 0; x < disc.dims[1]; ++x) {
      s.label.at(y, x, 0) = disc.at(y, x);
      s.label.at(y, x, 1) = cup.at(y, x);
    }
  return s;
}

struct Dataset {
  std::vector<std::string> stems;
  std::vector<Sample> samples;

  size_t size() const { return samples.size(); }
};

inline Dataset load_dataset(const std::string& dir) {
  Dataset d;
  d.stems = read_manifest(dir);
  d.samples.reserve(d.stems.size());
  for (const auto& stem : d.stems) d.samples.push_back(load_sample(dir, stem));
  return d;
}

}  // namespace dpl
