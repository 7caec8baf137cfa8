#pragma once

#include "regioncl/image.hpp"
#include "regioncl/rng.hpp"

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace regioncl {

// Region sampling grid. `ratio` is the network downsampling ratio R: every
// sampled rectangle has origin and extent that are multiples of it.
struct SwapConfig {
  int ratio = 8;
  int c_lower = 2;
  int c_upper = 4;
  int image_h = 64;
  int image_w = 64;

  void validate() const {
    if (ratio <= 0 || c_lower <= 0 || c_upper <= 0 || image_h <= 0 || image_w <= 0)
      throw std::invalid_argument("SwapConfig: all fields must be positive");
    if (c_lower > c_upper)
      throw std::invalid_argument("SwapConfig: c_lower " + std::to_string(c_lower) +
                                  " exceeds c_upper " + std::to_string(c_upper));
    if (c_upper * ratio > std::min(image_h, image_w))
      throw std::invalid_argument("SwapConfig: largest region " +
                                  std::to_string(c_upper * ratio) + " px does not fit in " +
                                  std::to_string(image_h) + "x" + std::to_string(image_w));
    if (image_h % ratio != 0 || image_w % ratio != 0)
      throw std::invalid_argument("SwapConfig: ratio must divide both image dimensions");
  }
};

struct RegionSpec {
  int r_x = 0, r_y = 0;  // pixel origin
  int r_w = 0, r_h = 0;  // pixel extent

  bool operator==(const RegionSpec&) const = default;
};

inline void check_region_bounds(const RegionSpec& spec, int image_h, int image_w) {
  if (spec.r_w <= 0 || spec.r_h <= 0 || spec.r_x < 0 || spec.r_y < 0 ||
      spec.r_x + spec.r_w > image_w || spec.r_y + spec.r_h > image_h)
    throw std::invalid_argument("region (" + std::to_string(spec.r_x) + "," +
                                std::to_string(spec.r_y) + "," + std::to_string(spec.r_w) + "," +
                                std::to_string(spec.r_h) + ") out of bounds for " +
                                std::to_string(image_h) + "x" + std::to_string(image_w));
}

// Fixed-point-free involution over the batch: each image swaps with exactly one partner.
struct PairingPlan {
  std::vector<int> permutation;

  void validate() const {
    const int b = static_cast<int>(permutation.size());
    if (b % 2 != 0) throw std::invalid_argument("pairing plan: batch size must be even");
    for (int i = 0; i < b; ++i) {
      const int j = permutation[static_cast<std::size_t>(i)];
      if (j < 0 || j >= b) throw std::invalid_argument("pairing plan: index out of range");
      if (j == i) throw std::invalid_argument("pairing plan: fixed point at " + std::to_string(i));
      if (permutation[static_cast<std::size_t>(j)] != i)
        throw std::invalid_argument("pairing plan: not an involution at " + std::to_string(i));
    }
  }
};

enum class PairingForm { adjacent, half_shift };

inline PairingPlan make_pairing(int batch, PairingForm form) {
  if (batch <= 0 || batch % 2 != 0)
    throw std::invalid_argument("make_pairing: batch size must be positive and even");
  PairingPlan plan;
  plan.permutation.resize(static_cast<std::size_t>(batch));
  if (form == PairingForm::adjacent) {
    for (int j = 0; j < batch / 2; ++j) {
      plan.permutation[static_cast<std::size_t>(2 * j)] = 2 * j + 1;
      plan.permutation[static_cast<std::size_t>(2 * j + 1)] = 2 * j;
    }
  } else {
    for (int i = 0; i < batch; ++i)
      plan.permutation[static_cast<std::size_t>(i)] = (i + batch / 2) % batch;
  }
  return plan;
}

// Extent cells drawn uniformly from {c_lower..c_upper} per axis, then the origin
// uniformly over the ratio-aligned placements that keep the region inside.
// Draw order: height cells, width cells, origin y, origin x.
inline RegionSpec sample_region(const SwapConfig& cfg, Rng& rng) {
  cfg.validate();
  RegionSpec spec;
  spec.r_h = rng.uniform_int(cfg.c_lower, cfg.c_upper) * cfg.ratio;
  spec.r_w = rng.uniform_int(cfg.c_lower, cfg.c_upper) * cfg.ratio;
  spec.r_y = rng.uniform_int(0, (cfg.image_h - spec.r_h) / cfg.ratio) * cfg.ratio;
  spec.r_x = rng.uniform_int(0, (cfg.image_w - spec.r_w) / cfg.ratio) * cfg.ratio;
  return spec;
}

// 1 inside [r_y, r_y+r_h) x [r_x, r_x+r_w), 0 elsewhere, row-major.
inline std::vector<std::uint8_t> region_mask(const RegionSpec& spec, int image_h, int image_w) {
  check_region_bounds(spec, image_h, image_w);
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(image_h) * image_w, 0);
  for (int y = spec.r_y; y < spec.r_y + spec.r_h; ++y)
    std::fill_n(mask.begin() + static_cast<std::int64_t>(y) * image_w + spec.r_x, spec.r_w,
                std::uint8_t(1));
  return mask;
}

struct FeatureRect {
  int x = 0, y = 0, w = 0, h = 0;

  bool operator==(const FeatureRect&) const = default;
};

inline FeatureRect to_feature_coords(const RegionSpec& spec, int ratio) {
  if (ratio <= 0) throw std::invalid_argument("to_feature_coords: ratio must be positive");
  if (spec.r_x % ratio || spec.r_y % ratio || spec.r_w % ratio || spec.r_h % ratio)
    throw std::invalid_argument("to_feature_coords: region (" + std::to_string(spec.r_x) + "," +
                                std::to_string(spec.r_y) + "," + std::to_string(spec.r_w) + "," +
                                std::to_string(spec.r_h) + ") is not aligned to ratio " +
                                std::to_string(ratio));
  return {spec.r_x / ratio, spec.r_y / ratio, spec.r_w / ratio, spec.r_h / ratio};
}

// Swapped batch plus the bookkeeping needed to pair features with their keys:
// image i keeps its own pixels outside the region (canvas_source[i] = i) and
// carries partner pixels inside it (paste_source[i] = plan[i]).
struct CompositeBatch {
  ImageBatch images;
  RegionSpec spec;
  std::vector<int> canvas_source;
  std::vector<int> paste_source;
};

inline CompositeBatch swap_regions(const ImageBatch& batch, const RegionSpec& spec,
                                   const PairingPlan& plan) {
  if (batch.n % 2 != 0)
    throw std::invalid_argument("swap_regions: batch size " + std::to_string(batch.n) +
                                " is odd");
  if (static_cast<int>(plan.permutation.size()) != batch.n)
    throw std::invalid_argument("swap_regions: pairing plan length does not match batch");
  plan.validate();
  check_region_bounds(spec, batch.h, batch.w);
  if (spec.r_w == batch.w && spec.r_h == batch.h)
    throw std::invalid_argument("swap_regions: region covers the whole image, canvas is empty");

  CompositeBatch out;
  out.images = batch;  // canvas pixels come along for free
  out.spec = spec;
  out.canvas_source.resize(static_cast<std::size_t>(batch.n));
  out.paste_source = plan.permutation;
  const std::int64_t plane = static_cast<std::int64_t>(batch.h) * batch.w;
  for (int i = 0; i < batch.n; ++i) {
    out.canvas_source[static_cast<std::size_t>(i)] = i;
    const int partner = plan.permutation[static_cast<std::size_t>(i)];
    const float* src = batch.image(partner);
    float* dst = out.images.image(i);
    for (int c = 0; c < batch.ch; ++c)
      for (int y = spec.r_y; y < spec.r_y + spec.r_h; ++y) {
        const std::int64_t off = c * plane + static_cast<std::int64_t>(y) * batch.w + spec.r_x;
        std::copy_n(src + off, spec.r_w, dst + off);
      }
  }
  return out;
}

}  // namespace regioncl
