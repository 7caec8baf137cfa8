#include "regioncl/augment.hpp"

#include <algorithm>
#include <cmath>

namespace regioncl {

namespace {

inline float clamp01(float v) { return std::min(std::max(v, 0.f), 1.f); }

inline float luminance(float r, float g, float b) {
  return 0.299f * r + 0.587f * g + 0.114f * b;
}

// bilinear sample of one channel plane with half-pixel centers, border-clamped
inline float sample_bilinear(const float* plane, int h, int w, float sy, float sx) {
  const float fy = std::max(0.f, std::min(sy, static_cast<float>(h) - 1.f));
  const float fx = std::max(0.f, std::min(sx, static_cast<float>(w) - 1.f));
  const int y0 = static_cast<int>(fy);
  const int x0 = static_cast<int>(fx);
  const int y1 = std::min(y0 + 1, h - 1);
  const int x1 = std::min(x0 + 1, w - 1);
  const float wy = fy - static_cast<float>(y0);
  const float wx = fx - static_cast<float>(x0);
  const float top = plane[y0 * w + x0] * (1.f - wx) + plane[y0 * w + x1] * wx;
  const float bot = plane[y1 * w + x0] * (1.f - wx) + plane[y1 * w + x1] * wx;
  return top * (1.f - wy) + bot * wy;
}

void resize_bilinear(const float* src, int ch, int sh, int sw, CropRect crop, float* dst,
                     int dh, int dw) {
  const float scale_y = static_cast<float>(crop.h) / static_cast<float>(dh);
  const float scale_x = static_cast<float>(crop.w) / static_cast<float>(dw);
  const std::int64_t splane = static_cast<std::int64_t>(sh) * sw;
  const std::int64_t dplane = static_cast<std::int64_t>(dh) * dw;
  for (int c = 0; c < ch; ++c) {
    const float* plane = src + c * splane;
    for (int y = 0; y < dh; ++y) {
      const float sy = (static_cast<float>(y) + 0.5f) * scale_y - 0.5f + static_cast<float>(crop.y);
      for (int x = 0; x < dw; ++x) {
        const float sx =
            (static_cast<float>(x) + 0.5f) * scale_x - 0.5f + static_cast<float>(crop.x);
        dst[c * dplane + static_cast<std::int64_t>(y) * dw + x] =
            sample_bilinear(plane, sh, sw, sy, sx);
      }
    }
  }
}

}  // namespace

void random_resized_crop(ImageView src, const AugConfig& cfg, Rng& rng, float* out,
                         CropRect* chosen) {
  if (src.h < 2 || src.w < 2) throw std::invalid_argument("random_resized_crop: image too small");
  const double area = static_cast<double>(src.h) * src.w;
  const double log_lo = std::log(cfg.aspect_min), log_hi = std::log(cfg.aspect_max);
  CropRect crop;
  bool placed = false;
  for (int attempt = 0; attempt < 10 && !placed; ++attempt) {
    const double target = area * rng.uniform(cfg.crop_min_frac, cfg.crop_max_frac);
    const double aspect = std::exp(rng.uniform(log_lo, log_hi));
    const int cw = static_cast<int>(std::lround(std::sqrt(target * aspect)));
    const int chh = static_cast<int>(std::lround(std::sqrt(target / aspect)));
    if (cw >= 1 && chh >= 1 && cw <= src.w && chh <= src.h) {
      crop.w = cw;
      crop.h = chh;
      crop.y = rng.uniform_int(0, src.h - chh);
      crop.x = rng.uniform_int(0, src.w - cw);
      placed = true;
    }
  }
  if (!placed) {
    const int s = std::min(src.h, src.w);
    crop = {(src.w - s) / 2, (src.h - s) / 2, s, s};
  }
  if (chosen) *chosen = crop;
  resize_bilinear(src.data, src.ch, src.h, src.w, crop, out, cfg.out_h, cfg.out_w);
}

void photometric_jitter(float* img, int h, int w, const AugConfig& cfg, Rng& rng) {
  const std::int64_t plane = static_cast<std::int64_t>(h) * w;
  if (rng.uniform() < cfg.p_jitter) {
    const float db = static_cast<float>(rng.uniform(-cfg.jitter_brightness, cfg.jitter_brightness));
    const float dc = static_cast<float>(rng.uniform(-cfg.jitter_contrast, cfg.jitter_contrast));
    const float ds =
        static_cast<float>(rng.uniform(-cfg.jitter_saturation, cfg.jitter_saturation));
    for (std::int64_t i = 0; i < 3 * plane; ++i) img[i] = clamp01(img[i] + db);
    float mean_lum = 0.f;
    for (std::int64_t i = 0; i < plane; ++i)
      mean_lum += luminance(img[i], img[plane + i], img[2 * plane + i]);
    mean_lum /= static_cast<float>(plane);
    for (std::int64_t i = 0; i < 3 * plane; ++i)
      img[i] = clamp01(mean_lum + (1.f + dc) * (img[i] - mean_lum));
    for (std::int64_t i = 0; i < plane; ++i) {
      const float lum = luminance(img[i], img[plane + i], img[2 * plane + i]);
      for (int c = 0; c < 3; ++c)
        img[c * plane + i] = clamp01(lum + (1.f + ds) * (img[c * plane + i] - lum));
    }
  }
  if (rng.uniform() < cfg.p_grayscale) {
    for (std::int64_t i = 0; i < plane; ++i) {
      const float lum = luminance(img[i], img[plane + i], img[2 * plane + i]);
      img[i] = img[plane + i] = img[2 * plane + i] = lum;
    }
  }
}

void gaussian_blur3(float* img, int h, int w, double sigma) {
  if (sigma <= 0) throw std::invalid_argument("gaussian_blur3: sigma must be positive");
  float k[3];
  const double inv = 1.0 / (2.0 * sigma * sigma);
  k[0] = k[2] = static_cast<float>(std::exp(-inv));
  k[1] = 1.f;
  const float norm = k[0] + k[1] + k[2];
  for (float& v : k) v /= norm;
  const std::int64_t plane = static_cast<std::int64_t>(h) * w;
  std::vector<float> tmp(static_cast<std::size_t>(plane));
  for (int c = 0; c < 3; ++c) {
    float* p = img + c * plane;
    // horizontal then vertical pass, borders clamped
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const int xm = std::max(x - 1, 0), xp = std::min(x + 1, w - 1);
        tmp[static_cast<std::size_t>(y * w + x)] =
            k[0] * p[y * w + xm] + k[1] * p[y * w + x] + k[2] * p[y * w + xp];
      }
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const int ym = std::max(y - 1, 0), yp = std::min(y + 1, h - 1);
        p[y * w + x] = k[0] * tmp[static_cast<std::size_t>(ym * w + x)] +
                       k[1] * tmp[static_cast<std::size_t>(y * w + x)] +
                       k[2] * tmp[static_cast<std::size_t>(yp * w + x)];
      }
  }
}

void hflip(float* img, int h, int w) {
  const std::int64_t plane = static_cast<std::int64_t>(h) * w;
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < h; ++y) {
      float* row = img + c * plane + static_cast<std::int64_t>(y) * w;
      std::reverse(row, row + w);
    }
}

void augment_view(ImageView src, const AugConfig& cfg, Rng& rng, float* out) {
  cfg.validate();
  if (src.ch != 3) throw std::invalid_argument("augment_view: need a 3-channel image");
  random_resized_crop(src, cfg, rng, out);
  photometric_jitter(out, cfg.out_h, cfg.out_w, cfg, rng);
  if (rng.uniform() < cfg.p_blur) gaussian_blur3(out, cfg.out_h, cfg.out_w, rng.uniform(0.1, 2.0));
  if (rng.uniform() < cfg.p_flip) hflip(out, cfg.out_h, cfg.out_w);
}

void make_views(ImageView src, const AugConfig& cfg, Rng& rng, float* out_q, float* out_k) {
  augment_view(src, cfg, rng, out_q);
  augment_view(src, cfg, rng, out_k);
}

}  // namespace regioncl
