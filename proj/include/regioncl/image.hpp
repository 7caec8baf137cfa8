#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace regioncl {

// Channel-major (CHW) float images in [0,1], batch-packed.
struct ImageBatch {
  int n = 0, ch = 0, h = 0, w = 0;
  std::vector<float> data;

  static ImageBatch zeros(int n, int ch, int h, int w) {
    if (n < 0 || ch <= 0 || h <= 0 || w <= 0)
      throw std::invalid_argument("ImageBatch: bad dimensions");
    ImageBatch b;
    b.n = n;
    b.ch = ch;
    b.h = h;
    b.w = w;
    b.data.assign(static_cast<std::size_t>(n) * ch * h * w, 0.f);
    return b;
  }
  std::int64_t image_floats() const { return static_cast<std::int64_t>(ch) * h * w; }
  float* image(int i) { return data.data() + static_cast<std::int64_t>(i) * image_floats(); }
  const float* image(int i) const {
    return data.data() + static_cast<std::int64_t>(i) * image_floats();
  }
};

// Non-owning view of one CHW image.
struct ImageView {
  const float* data = nullptr;
  int ch = 0, h = 0, w = 0;
};

// Binary PPM (P6), 8-bit, for visual inspection dumps. Expects a 3-channel image.
void write_ppm(const std::string& path, ImageView img);
ImageBatch read_ppm(const std::string& path);

}  // namespace regioncl
