#pragma once

// Denoised pseudo-labeling core: threshold pseudo labels, per-pixel BCE,
// MC-dropout uncertainty, pixel-level and class-level selection masks, and
// the masked segmentation loss. All operations are pure functions over
// H x W x C maps; C and the feature depth L are taken from the inputs.

#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "dpl/errors.hpp"
#include "dpl/tensor.hpp"

namespace dpl {

inline constexpr float kProbClamp = 1e-7f;  // applied before logs
inline constexpr float kDefaultGamma = 0.75f;
inline constexpr float kDefaultEta = 0.05f;

// Pseudo label = 1 where p >= gamma, per class channel (boundary inclusive).
inline LabelMap gen_pseudo_labels(const ProbMap& p, float gamma) {
  if (!(gamma > 0.0f && gamma < 1.0f))
    throw shape_error("gen_pseudo_labels: gamma must be in (0, 1)");
  LabelMap y(p.dims);
  for (size_t i = 0; i < p.v.size(); ++i) y.v[i] = p.v[i] >= gamma ? 1.0f : 0.0f;
  return y;
}

struct BcePerPixel {
  Tensor loss;      // H x W x C, elementwise loss (>= 0)
  Tensor dloss_dp;  // H x W x C, gradient wrt the probability
};

inline BcePerPixel bce_per_pixel(const ProbMap& p, const LabelMap& y) {
  require_same_shape(p, y, "bce_per_pixel");
  BcePerPixel out{Tensor(p.dims), Tensor(p.dims)};
  for (size_t i = 0; i < p.v.size(); ++i) {
    const float pc = std::min(std::max(p.v[i], kProbClamp), 1.0f - kProbClamp);
    const float t = y.v[i];
    out.loss.v[i] = -(t * std::log(pc) + (1.0f - t) * std::log(1.0f - pc));
    out.dloss_dp.v[i] = (pc - t) / (pc * (1.0f - pc));
  }
  return out;
}

// Per-pixel population standard deviation over K stochastic passes
// (divide by K). Accumulates in double so K identical maps give exactly 0.
inline UncertaintyMap uncertainty(const std::vector<ProbMap>& probs) {
  if (probs.size() < 2) throw shape_error("uncertainty: need K >= 2 maps");
  for (const auto& p : probs) require_same_shape(p, probs[0], "uncertainty");
  const size_t n = probs[0].v.size();
  const double K = static_cast<double>(probs.size());
  UncertaintyMap u(probs[0].dims);
  for (size_t i = 0; i < n; ++i) {
    double sum = 0.0, sumsq = 0.0;
    for (const auto& p : probs) {
      const double x = p.v[i];
      sum += x;
      sumsq += x * x;
    }
    const double mean = sum / K;
    const double var = std::max(0.0, sumsq / K - mean * mean);
    u.v[i] = static_cast<float>(std::sqrt(var));
  }
  return u;
}

// Pixel-level mask: keep where u < eta (strict).
inline SelectionMask pixel_mask(const UncertaintyMap& u, float eta) {
  if (!(eta > 0.0f)) throw shape_error("pixel_mask: eta must be > 0");
  SelectionMask m(u.dims);
  for (size_t i = 0; i < u.v.size(); ++i) m.v[i] = u.v[i] < eta ? 1.0f : 0.0f;
  return m;
}

struct ClassMasks {
  SelectionMask b_obj;  // confident pseudo-foreground
  SelectionMask b_bg;   // confident pseudo-background
};

// b_obj = 1[yhat=1] 1[u<eta], b_bg = 1[yhat=0] 1[u<eta]. Disjoint by
// construction; their sum is the pixel-level mask.
inline ClassMasks class_masks(const LabelMap& yhat, const UncertaintyMap& u, float eta) {
  require_same_shape(yhat, u, "class_masks");
  ClassMasks out{SelectionMask(u.dims), SelectionMask(u.dims)};
  for (size_t i = 0; i < u.v.size(); ++i) {
    const bool confident = u.v[i] < eta;
    const bool fg = yhat.v[i] > 0.5f;
    out.b_obj.v[i] = (confident && fg) ? 1.0f : 0.0f;
    out.b_bg.v[i] = (confident && !fg) ? 1.0f : 0.0f;
  }
  return out;
}

struct Prototypes {
  // Per class: probability-weighted feature centroid, or nullopt when the
  // weighted mass for that side is zero (degenerate).
  std::vector<std::optional<std::vector<float>>> obj, bg;
};

// e: H x W x L upsampled features; masks and p: H x W x C. The object
// centroid weights each selected pixel by p, the background one by (1 - p).
inline Prototypes prototypes(const FeatureMap& e, const SelectionMask& b_obj,
                             const SelectionMask& b_bg, const ProbMap& p) {
  require_same_shape(b_obj, p, "prototypes");
  require_same_shape(b_bg, p, "prototypes");
  if (e.dims.size() != 3 || p.dims.size() != 3 || e.dims[0] != p.dims[0] ||
      e.dims[1] != p.dims[1])
    throw shape_error("prototypes: feature/probability grids disagree");
  const uint32_t H = e.dims[0], W = e.dims[1], L = e.dims[2], C = p.dims[2];
  Prototypes out;
  out.obj.resize(C);
  out.bg.resize(C);
  for (uint32_t c = 0; c < C; ++c) {
    std::vector<double> acc_obj(L, 0.0), acc_bg(L, 0.0);
    double mass_obj = 0.0, mass_bg = 0.0;
    for (uint32_t y = 0; y < H; ++y)
      for (uint32_t x = 0; x < W; ++x) {
        const float pv = p.at(y, x, c);
        const float wo = b_obj.at(y, x, c) * pv;
        const float wb = b_bg.at(y, x, c) * (1.0f - pv);
        if (wo != 0.0f) {
          const float* ev = &e.at(y, x, 0);
          for (uint32_t l = 0; l < L; ++l) acc_obj[l] += wo * ev[l];
          mass_obj += wo;
        }
        if (wb != 0.0f) {
          const float* ev = &e.at(y, x, 0);
          for (uint32_t l = 0; l < L; ++l) acc_bg[l] += wb * ev[l];
          mass_bg += wb;
        }
      }
    if (mass_obj > 0.0) {
      std::vector<float> z(L);
      for (uint32_t l = 0; l < L; ++l) z[l] = static_cast<float>(acc_obj[l] / mass_obj);
      out.obj[c] = std::move(z);
    }
    if (mass_bg > 0.0) {
      std::vector<float> z(L);
      for (uint32_t l = 0; l < L; ++l) z[l] = static_cast<float>(acc_bg[l] / mass_bg);
      out.bg[c] = std::move(z);
    }
  }
  return out;
}

struct DistanceMaps {
  Tensor d_obj, d_bg;           // H x W x C, Euclidean feature distances
  std::vector<uint8_t> defined; // per class: both prototypes available
};

inline DistanceMaps feature_distances(const FeatureMap& e, const Prototypes& protos) {
  const uint32_t H = e.dims[0], W = e.dims[1], L = e.dims[2];
  const auto C = static_cast<uint32_t>(protos.obj.size());
  DistanceMaps out{Tensor({H, W, C}), Tensor({H, W, C}), std::vector<uint8_t>(C, 0)};
  for (uint32_t c = 0; c < C; ++c) {
    if (!protos.obj[c] || !protos.bg[c]) continue;
    out.defined[c] = 1;
    const std::vector<float>& zo = *protos.obj[c];
    const std::vector<float>& zb = *protos.bg[c];
    for (uint32_t y = 0; y < H; ++y)
      for (uint32_t x = 0; x < W; ++x) {
        const float* ev = &e.at(y, x, 0);
        float so = 0.0f, sb = 0.0f;
        for (uint32_t l = 0; l < L; ++l) {
          const float doq = ev[l] - zo[l];
          const float dbq = ev[l] - zb[l];
          so += doq * doq;
          sb += dbq * dbq;
        }
        out.d_obj.at(y, x, c) = std::sqrt(so);
        out.d_bg.at(y, x, c) = std::sqrt(sb);
      }
  }
  return out;
}

// Combined selection mask:
//   m = 1[u<eta] 1[yhat=1] 1[d_obj<d_bg] + 1[u<eta] 1[yhat=0] 1[d_obj>d_bg]
// Ties d_obj == d_bg fail both strict inequalities and are excluded. A class
// with a degenerate prototype falls back to the pixel-level mask alone.
inline SelectionMask combined_mask(const UncertaintyMap& u, float eta,
                                   const LabelMap& yhat, const DistanceMaps& d) {
  require_same_shape(u, yhat, "combined_mask");
  require_same_shape(u, d.d_obj, "combined_mask");
  if (!(eta > 0.0f)) throw shape_error("combined_mask: eta must be > 0");
  const uint32_t C = u.dims[2];
  SelectionMask m(u.dims);
  for (uint32_t y = 0; y < u.dims[0]; ++y)
    for (uint32_t x = 0; x < u.dims[1]; ++x)
      for (uint32_t c = 0; c < C; ++c) {
        if (!(u.at(y, x, c) < eta)) {
          m.at(y, x, c) = 0.0f;
          continue;
        }
        if (!d.defined[c]) {
          m.at(y, x, c) = 1.0f;  // pixel-level mask only for this class
          continue;
        }
        const bool fg = yhat.at(y, x, c) > 0.5f;
        const float dobj = d.d_obj.at(y, x, c);
        const float dbg = d.d_bg.at(y, x, c);
        const bool keep = fg ? (dobj < dbg) : (dobj > dbg);
        m.at(y, x, c) = keep ? 1.0f : 0.0f;
      }
  return m;
}

struct MaskedLoss {
  float loss = 0.0f;
  Tensor dloss_dp;          // zero wherever the mask is zero
  size_t selected = 0;      // number of mask=1 entries
};

// Mean of the per-pixel BCE over selected entries; the sum is divided by
// max(1, #selected) so an all-zero mask yields loss 0 and zero gradient.
inline MaskedLoss masked_loss(const ProbMap& p, const LabelMap& yhat,
                              const SelectionMask& m) {
  require_same_shape(p, yhat, "masked_loss");
  require_same_shape(p, m, "masked_loss");
  const BcePerPixel bce = bce_per_pixel(p, yhat);
  MaskedLoss out;
  out.dloss_dp = Tensor(p.dims);
  double sum = 0.0;
  for (size_t i = 0; i < p.v.size(); ++i)
    if (m.v[i] > 0.5f) {
      sum += bce.loss.v[i];
      ++out.selected;
    }
  const auto denom = static_cast<float>(std::max<size_t>(1, out.selected));
  out.loss = static_cast<float>(sum) / denom;
  for (size_t i = 0; i < p.v.size(); ++i)
    if (m.v[i] > 0.5f) out.dloss_dp.v[i] = bce.dloss_dp.v[i] / denom;
  return out;
}

}  // namespace dpl
