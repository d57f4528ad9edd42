#pragma once

// Seeded synthetic fundus-like samples: an elliptical disc with a concentric
// brighter cup on a textured background, plus a per-domain appearance
// transform (channel scale, gamma, blur, noise). Labels are the exact
// ellipse interiors and are never touched by the appearance transform, so
// two domains rendered from the same seed share identical geometry.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "dpl/errors.hpp"
#include "dpl/image_io.hpp"
#include "dpl/interp.hpp"
#include "dpl/rng.hpp"
#include "dpl/tensor.hpp"

namespace dpl {

struct DomainParams {
  std::array<float, 3> base_intensity;
  float gamma;
  std::array<float, 3> channel_scale;
  float blur_radius;
  float noise_sigma;
  float texture_amp;
};

inline DomainParams default_source_params() {
  return {{0.55f, 0.35f, 0.25f}, 1.0f, {1.0f, 1.0f, 1.0f}, 0.5f, 0.01f, 0.05f};
}

inline DomainParams default_target_params() {
  return {{0.45f, 0.40f, 0.30f}, 1.4f, {0.85f, 1.0f, 1.15f}, 1.5f, 0.03f, 0.08f};
}

struct Sample {
  Image image;     // H x W x 3 in [0, 1]
  LabelMap label;  // H x W x 2, channel 0 = disc, channel 1 = cup
};

// Added on top of the background inside the disc / cup interiors.
inline constexpr std::array<float, 3> kDiscDelta = {0.22f, 0.20f, 0.12f};
inline constexpr std::array<float, 3> kCupDelta = {0.16f, 0.14f, 0.10f};

// Separable Gaussian blur, kernel truncated at 3*radius, replicate-edge.
inline Tensor gaussian_blur(const Tensor& in, float radius) {
  const int half = static_cast<int>(std::floor(3.0f * radius));
  if (half < 1) return in;
  const uint32_t H = in.dims[0], W = in.dims[1], C = in.dims[2];
  std::vector<float> k(2 * half + 1);
  float sum = 0.0f;
  for (int t = -half; t <= half; ++t) {
    k[t + half] = std::exp(-0.5f * (t * t) / (radius * radius));
    sum += k[t + half];
  }
  for (float& w : k) w /= sum;

  Tensor tmp(in.dims), out(in.dims);
  for (uint32_t y = 0; y < H; ++y)
    for (uint32_t x = 0; x < W; ++x)
      for (uint32_t c = 0; c < C; ++c) {
        float acc = 0.0f;
        for (int t = -half; t <= half; ++t) {
          const int xx = std::clamp<int>(static_cast<int>(x) + t, 0, static_cast<int>(W) - 1);
          acc += k[t + half] * in.at(y, xx, c);
        }
        tmp.at(y, x, c) = acc;
      }
  for (uint32_t y = 0; y < H; ++y)
    for (uint32_t x = 0; x < W; ++x)
      for (uint32_t c = 0; c < C; ++c) {
        float acc = 0.0f;
        for (int t = -half; t <= half; ++t) {
          const int yy = std::clamp<int>(static_cast<int>(y) + t, 0, static_cast<int>(H) - 1);
          acc += k[t + half] * tmp.at(yy, x, c);
        }
        out.at(y, x, c) = acc;
      }
  return out;
}

inline void validate(const DomainParams& p) {
  if (!(p.gamma > 0.0f)) throw shape_error("DomainParams: gamma must be > 0");
  if (p.noise_sigma < 0.0f) throw shape_error("DomainParams: noise_sigma must be >= 0");
  if (p.blur_radius < 0.0f) throw shape_error("DomainParams: blur_radius must be >= 0");
  for (float s : p.channel_scale)
    if (!(s > 0.0f)) throw shape_error("DomainParams: channel_scale must be > 0");
}

// RNG draw order is frozen: geometry first, then texture field, then pixel
// noise. Draw counts depend only on (H, W), so two DomainParams rendered
// from the same seed produce identical geometry (hence identical labels).
inline Sample gen_sample(Rng& rng, const DomainParams& params, uint32_t H, uint32_t W) {
  validate(params);
  if (H < 32 || W < 32) throw shape_error("gen_sample: H and W must be >= 32");
  const float m = static_cast<float>(std::min(H, W));

  const float ry = rng.uniform(0.25f, 0.38f) * m;
  const float rx = rng.uniform(0.25f, 0.38f) * m;
  const float cy = rng.uniform(H / 3.0f, 2.0f * H / 3.0f);
  const float cx = rng.uniform(W / 3.0f, 2.0f * W / 3.0f);
  const float cup_factor = rng.uniform(0.4f, 0.7f);

  LabelMap label({H, W, 2});
  for (uint32_t y = 0; y < H; ++y)
    for (uint32_t x = 0; x < W; ++x) {
      const float dy = (y - cy) / ry, dx = (x - cx) / rx;
      const float dyc = (y - cy) / (ry * cup_factor), dxc = (x - cx) / (rx * cup_factor);
      label.at(y, x, 0) = (dy * dy + dx * dx <= 1.0f) ? 1.0f : 0.0f;
      label.at(y, x, 1) = (dyc * dyc + dxc * dxc <= 1.0f) ? 1.0f : 0.0f;
    }

  // Smooth background texture: coarse noise grid upsampled to full size.
  const uint32_t gh = (H + 7) / 8 + 1, gw = (W + 7) / 8 + 1;
  Tensor grid({gh, gw, 1});
  for (float& g : grid.v) g = rng.normal();
  const Tensor texture = bilinear_upsample(grid, H, W);

  Image img({H, W, 3});
  for (uint32_t y = 0; y < H; ++y)
    for (uint32_t x = 0; x < W; ++x) {
      const bool in_disc = label.at(y, x, 0) > 0.5f;
      const bool in_cup = label.at(y, x, 1) > 0.5f;
      for (uint32_t c = 0; c < 3; ++c) {
        float v = params.base_intensity[c] + params.texture_amp * texture.at(y, x, 0);
        if (in_disc) v += kDiscDelta[c];
        if (in_cup) v += kCupDelta[c];
        img.at(y, x, c) = std::clamp(v, 0.0f, 1.0f);
      }
    }

  // Appearance transform: scale -> gamma -> blur -> noise -> clamp.
  for (uint32_t y = 0; y < H; ++y)
    for (uint32_t x = 0; x < W; ++x)
      for (uint32_t c = 0; c < 3; ++c) {
        float v = img.at(y, x, c) * params.channel_scale[c];
        if (params.gamma != 1.0f) v = std::pow(v, params.gamma);
        img.at(y, x, c) = v;
      }
  img = gaussian_blur(img, params.blur_radius);
  for (float& v : img.v) v = std::clamp(v + params.noise_sigma * rng.normal(), 0.0f, 1.0f);

  return {std::move(img), std::move(label)};
}

inline Tensor label_channel(const LabelMap& label, uint32_t c) {
  Tensor out({label.dims[0], label.dims[1]});
  for (uint32_t y = 0; y < label.dims[0]; ++y)
    for (uint32_t x = 0; x < label.dims[1]; ++x) out.at(y, x) = label.at(y, x, c);
  return out;
}

inline std::string sample_stem(uint32_t index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "img_%06u", index);
  return buf;
}

// Writes <stem>.ppm, <stem>.disc.pgm, <stem>.cup.pgm per sample plus a
// newline-delimited manifest.txt. Per-sample RNG is derived from
// (seed, index), so a dataset can be extended without reshuffling.
inline std::vector<std::string> gen_dataset(uint64_t seed, const DomainParams& params,
                                            uint32_t n, uint32_t H, uint32_t W,
                                            const std::string& out_dir) {
  if (n < 1) throw shape_error("gen_dataset: n must be >= 1");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  std::vector<std::string> stems;
  stems.reserve(n);
  std::string manifest;
  for (uint32_t i = 0; i < n; ++i) {
    Rng rng(derive_seed(seed, i));
    const Sample s = gen_sample(rng, params, H, W);
    const std::string stem = sample_stem(i);
    const std::string base = out_dir + "/" + stem;
    write_image_ppm(base + ".ppm", s.image);
    write_mask_pgm(base + ".disc.pgm", label_channel(s.label, 0));
    write_mask_pgm(base + ".cup.pgm", label_channel(s.label, 1));
    stems.push_back(stem);
    manifest += stem + "\n";
  }
  detail::write_file_bytes(out_dir + "/manifest.txt", manifest);
  return stems;
}

}  // namespace dpl
