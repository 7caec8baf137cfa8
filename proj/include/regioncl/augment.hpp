#pragma once

#include "regioncl/image.hpp"
#include "regioncl/rng.hpp"

#include <stdexcept>
#include <vector>

namespace regioncl {

struct AugConfig {
  double crop_min_frac = 0.2;  // crop area as a fraction of the source area
  double crop_max_frac = 1.0;
  double aspect_min = 0.75;  // crop aspect ratio (w/h), drawn log-uniform
  double aspect_max = 4.0 / 3.0;
  int out_h = 64;
  int out_w = 64;
  double p_flip = 0.5;
  double p_jitter = 0.8;
  double p_grayscale = 0.2;
  double p_blur = 0.0;  // full-recipe value is 0.5; off by default, it dominates CPU cost
  double jitter_brightness = 0.4;
  double jitter_contrast = 0.4;
  double jitter_saturation = 0.4;

  void validate() const {
    if (!(crop_min_frac > 0) || crop_min_frac > crop_max_frac || crop_max_frac > 1.0)
      throw std::invalid_argument("AugConfig: need 0 < crop_min_frac <= crop_max_frac <= 1");
    if (!(aspect_min > 0) || aspect_min > aspect_max)
      throw std::invalid_argument("AugConfig: need 0 < aspect_min <= aspect_max");
    if (out_h < 1 || out_w < 1) throw std::invalid_argument("AugConfig: bad output size");
    for (double p : {p_flip, p_jitter, p_grayscale, p_blur})
      if (p < 0 || p > 1) throw std::invalid_argument("AugConfig: probability outside [0,1]");
    for (double s : {jitter_brightness, jitter_contrast, jitter_saturation})
      if (s < 0) throw std::invalid_argument("AugConfig: negative jitter strength");
  }
};

struct CropRect {
  int x = 0, y = 0, w = 0, h = 0;
};

// Area fraction in [min,max] of the source, aspect drawn log-uniform in [3/4, 4/3],
// 10 placement attempts, then a centered max-size square fallback. Bilinear resize
// with half-pixel centers. `chosen` (optional) reports the crop actually taken.
void random_resized_crop(ImageView src, const AugConfig& cfg, Rng& rng, float* out,
                         CropRect* chosen = nullptr);

// In-place on a CHW buffer: additive brightness, contrast about the image mean,
// saturation toward per-pixel luminance, each with strength drawn from the config;
// then optional grayscale. Output clamped to [0,1].
void photometric_jitter(float* img, int h, int w, const AugConfig& cfg, Rng& rng);

void gaussian_blur3(float* img, int h, int w, double sigma);

void hflip(float* img, int h, int w);

// One full augmentation draw: crop, jitter, grayscale, blur, flip.
void augment_view(ImageView src, const AugConfig& cfg, Rng& rng, float* out);

// The query/key pair: two independent draws of the same source image.
void make_views(ImageView src, const AugConfig& cfg, Rng& rng, float* out_q, float* out_k);

}  // namespace regioncl
