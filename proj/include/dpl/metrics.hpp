#pragma once

// Evaluation metrics: Dice overlap, Average Surface Distance via an exact
// Euclidean distance transform, and pooled pseudo-label selection accuracy.
//
// Boundary convention: a foreground pixel with at least one background
// 4-neighbor, where pixels outside the image count as background. Distances
// are Euclidean between pixel centers.

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "dpl/dataset.hpp"
#include "dpl/errors.hpp"
#include "dpl/segnet.hpp"
#include "dpl/tensor.hpp"

namespace dpl {

inline constexpr float kEvalThreshold = 0.5f;  // prediction binarization

// 2|A n B| / (|A| + |B|); both masks empty counts as perfect agreement.
inline double dice(const Tensor& pred, const Tensor& gt) {
  require_same_shape(pred, gt, "dice");
  size_t a = 0, b = 0, both = 0;
  for (size_t i = 0; i < pred.v.size(); ++i) {
    const bool pa = pred.v[i] > 0.5f, pb = gt.v[i] > 0.5f;
    a += pa;
    b += pb;
    both += pa && pb;
  }
  if (a + b == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(a + b);
}

namespace detail {

inline std::vector<uint8_t> boundary_of(const Tensor& mask) {
  const uint32_t H = mask.dims[0], W = mask.dims[1];
  std::vector<uint8_t> out(static_cast<size_t>(H) * W, 0);
  auto fg = [&](int y, int x) {
    if (y < 0 || x < 0 || y >= static_cast<int>(H) || x >= static_cast<int>(W))
      return false;  // outside the image is background
    return mask.at(static_cast<uint32_t>(y), static_cast<uint32_t>(x)) > 0.5f;
  };
  for (int y = 0; y < static_cast<int>(H); ++y)
    for (int x = 0; x < static_cast<int>(W); ++x)
      if (fg(y, x) &&
          (!fg(y - 1, x) || !fg(y + 1, x) || !fg(y, x - 1) || !fg(y, x + 1)))
        out[static_cast<size_t>(y) * W + x] = 1;
  return out;
}

// Exact squared Euclidean distance transform to the set pixels of `set`
// (row pass for column distances, then a parabola lower envelope per
// column). Squared distances of integer grids are exact in double.
inline std::vector<double> squared_edt(const std::vector<uint8_t>& set, uint32_t H,
                                       uint32_t W) {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<double> rowsq(static_cast<size_t>(H) * W, kInf);
  for (uint32_t y = 0; y < H; ++y) {
    double d = kInf;
    for (uint32_t x = 0; x < W; ++x) {
      if (set[y * W + x]) d = 0.0; else if (d < kInf) d += 1.0;
      rowsq[y * W + x] = d < kInf ? d * d : kInf;
    }
    d = kInf;
    for (int x = static_cast<int>(W) - 1; x >= 0; --x) {
      if (set[y * W + x]) d = 0.0; else if (d < kInf) d += 1.0;
      const double dd = d < kInf ? d * d : kInf;
      if (dd < rowsq[y * W + x]) rowsq[y * W + x] = dd;
    }
  }

  std::vector<double> out(static_cast<size_t>(H) * W, kInf);
  std::vector<uint32_t> site(H);
  std::vector<double> f(H), z(H + 1);
  std::vector<uint32_t> v(H);
  for (uint32_t x = 0; x < W; ++x) {
    uint32_t n = 0;
    for (uint32_t y = 0; y < H; ++y) {
      const double fy = rowsq[y * W + x];
      if (fy < kInf) {
        site[n] = y;
        f[n] = fy;
        ++n;
      }
    }
    if (n == 0) continue;
    uint32_t k = 0;
    v[0] = 0;
    z[0] = -kInf;
    z[1] = kInf;
    for (uint32_t q = 1; q < n; ++q) {
      const double yq = site[q];
      double s;
      for (;;) {
        const double yk = site[v[k]];
        s = ((f[q] + yq * yq) - (f[v[k]] + yk * yk)) / (2.0 * yq - 2.0 * yk);
        if (s <= z[k] && k > 0) { --k; continue; }
        break;
      }
      ++k;
      v[k] = q;
      z[k] = s;
      z[k + 1] = kInf;
    }
    k = 0;
    for (uint32_t y = 0; y < H; ++y) {
      while (z[k + 1] < static_cast<double>(y)) ++k;
      const double dy = static_cast<double>(y) - static_cast<double>(site[v[k]]);
      out[y * W + x] = dy * dy + f[v[k]];
    }
  }
  return out;
}

}  // namespace detail

// Symmetrized average surface distance in pixels; undefined (nullopt) if
// either mask is empty.
inline std::optional<double> asd(const Tensor& pred, const Tensor& gt) {
  require_same_shape(pred, gt, "asd");
  const uint32_t H = pred.dims[0], W = pred.dims[1];
  bool any_pred = false, any_gt = false;
  for (size_t i = 0; i < pred.v.size(); ++i) {
    any_pred |= pred.v[i] > 0.5f;
    any_gt |= gt.v[i] > 0.5f;
  }
  if (!any_pred || !any_gt) return std::nullopt;

  const std::vector<uint8_t> ba = detail::boundary_of(pred);
  const std::vector<uint8_t> bb = detail::boundary_of(gt);
  const std::vector<double> dist_to_b = detail::squared_edt(bb, H, W);
  const std::vector<double> dist_to_a = detail::squared_edt(ba, H, W);

  double sum_a = 0.0, sum_b = 0.0;
  size_t na = 0, nb = 0;
  for (size_t i = 0; i < ba.size(); ++i) {
    if (ba[i]) {
      sum_a += std::sqrt(dist_to_b[i]);
      ++na;
    }
    if (bb[i]) {
      sum_b += std::sqrt(dist_to_a[i]);
      ++nb;
    }
  }
  return 0.5 * (sum_a / static_cast<double>(na) + sum_b / static_cast<double>(nb));
}

// Pools selected entries across calls (micro average over a dataset).
struct PlAccuracyPool {
  uint64_t selected = 0;
  uint64_t correct = 0;

  void add(const Tensor& yhat, const Tensor& mask, const Tensor& gt) {
    require_same_shape(yhat, mask, "pl_accuracy");
    require_same_shape(yhat, gt, "pl_accuracy");
    for (size_t i = 0; i < yhat.v.size(); ++i)
      if (mask.v[i] > 0.5f) {
        ++selected;
        correct += (yhat.v[i] > 0.5f) == (gt.v[i] > 0.5f);
      }
  }

  std::optional<double> value() const {
    if (selected == 0) return std::nullopt;
    return static_cast<double>(correct) / static_cast<double>(selected);
  }
};

// Fraction of selected entries whose pseudo label matches the ground truth.
inline std::optional<double> pl_accuracy(const Tensor& yhat, const Tensor& mask,
                                         const Tensor& gt) {
  PlAccuracyPool pool;
  pool.add(yhat, mask, gt);
  return pool.value();
}

struct PerImageEval {
  std::string stem;
  std::array<double, kNumClasses> dice;
  std::array<std::optional<double>, kNumClasses> asd;
};

struct ClassAggregate {
  double dice_mean = 0.0, dice_std = 0.0;
  std::optional<double> asd_mean, asd_std;
  size_t asd_undefined = 0;
};

struct EvalReport {
  std::vector<PerImageEval> per_image;
  std::array<ClassAggregate, kNumClasses> cls;

  double mean_dice() const { return 0.5 * (cls[0].dice_mean + cls[1].dice_mean); }
};

namespace detail {

inline std::pair<double, double> mean_std(const std::vector<double>& xs) {
  const double n = static_cast<double>(xs.size());
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= n;
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  return {mean, std::sqrt(var / n)};  // population std, fixed aggregation
}

}  // namespace detail

inline Tensor binarize_channel(const Tensor& map, uint32_t c, float threshold) {
  Tensor out({map.dims[0], map.dims[1]});
  for (uint32_t y = 0; y < map.dims[0]; ++y)
    for (uint32_t x = 0; x < map.dims[1]; ++x)
      out.at(y, x) = map.at(y, x, c) >= threshold ? 1.0f : 0.0f;
  return out;
}

// Deterministic eval-mode forward, binarize at 0.5, per-image Dice/ASD per
// class, mean +- std across images. Undefined ASD values are excluded from
// the aggregate and counted.
inline EvalReport evaluate(const ModelParams& params, const Dataset& data) {
  if (data.samples.empty()) throw shape_error("evaluate: empty dataset");
  EvalReport report;
  std::array<std::vector<double>, kNumClasses> dices, asds;
  for (size_t i = 0; i < data.samples.size(); ++i) {
    const Sample& s = data.samples[i];
    const auto cache = forward(params, s.image, Mode::kEval);
    PerImageEval row;
    row.stem = data.stems[i];
    for (uint32_t c = 0; c < kNumClasses; ++c) {
      const Tensor pred = binarize_channel(cache.prob, c, kEvalThreshold);
      const Tensor gt = binarize_channel(s.label, c, 0.5f);
      row.dice[c] = dice(pred, gt);
      row.asd[c] = asd(pred, gt);
      dices[c].push_back(row.dice[c]);
      if (row.asd[c]) asds[c].push_back(*row.asd[c]);
    }
    report.per_image.push_back(std::move(row));
  }
  for (uint32_t c = 0; c < kNumClasses; ++c) {
    auto [dm, ds] = detail::mean_std(dices[c]);
    report.cls[c].dice_mean = dm;
    report.cls[c].dice_std = ds;
    report.cls[c].asd_undefined = data.samples.size() - asds[c].size();
    if (!asds[c].empty()) {
      auto [am, as] = detail::mean_std(asds[c]);
      report.cls[c].asd_mean = am;
      report.cls[c].asd_std = as;
    }
  }
  return report;
}

}  // namespace dpl
