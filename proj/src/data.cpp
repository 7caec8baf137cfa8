#include "regioncl/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace regioncl {

namespace {

enum class ShapeKind { circle, square, triangle, cross, ring, diamond, plus, bar };
constexpr int kShapeKinds = 8;

bool inside_shape(ShapeKind kind, float dx, float dy, float rad) {
  const float ax = std::abs(dx), ay = std::abs(dy);
  switch (kind) {
    case ShapeKind::circle:
      return dx * dx + dy * dy <= rad * rad;
    case ShapeKind::square:
      return ax <= rad * 0.8f && ay <= rad * 0.8f;
    case ShapeKind::triangle: {
      // apex at (0, -rad), base at y = +0.8 rad
      if (dy < -rad || dy > 0.8f * rad) return false;
      const float half = (dy + rad) / (1.8f * rad) * rad;
      return ax <= half;
    }
    case ShapeKind::cross:  // diagonal X
      return ax <= rad && ay <= rad && std::abs(ax - ay) <= 0.35f * rad;
    case ShapeKind::ring: {
      const float d2 = dx * dx + dy * dy;
      return d2 <= rad * rad && d2 >= 0.55f * 0.55f * rad * rad;
    }
    case ShapeKind::diamond:
      return ax + ay <= rad;
    case ShapeKind::plus:
      return (ax <= 0.3f * rad && ay <= rad) || (ay <= 0.3f * rad && ax <= rad);
    case ShapeKind::bar:
      return ay <= 0.35f * rad && ax <= rad;
  }
  return false;
}

}  // namespace

LabeledSet gen_shapes(int n, int h, int w, int num_classes, std::uint64_t seed) {
  if (num_classes < 2 || num_classes > kShapeKinds)
    throw std::invalid_argument("gen_shapes: num_classes must be in [2, " +
                                std::to_string(kShapeKinds) + "]");
  if (n <= 0) throw std::invalid_argument("gen_shapes: n must be positive");
  if (h < 16 || w < 16)
    throw std::invalid_argument("gen_shapes: canvas " + std::to_string(h) + "x" +
                                std::to_string(w) + " is too small for the minimum shape size");

  LabeledSet set;
  set.n = n;
  set.h = h;
  set.w = w;
  set.num_classes = num_classes;
  set.images.resize(static_cast<std::size_t>(n) * 3 * h * w);
  set.labels.resize(static_cast<std::size_t>(n));
  const std::int64_t plane = static_cast<std::int64_t>(h) * w;

  for (int i = 0; i < n; ++i) {
    const int label = i % num_classes;
    set.labels[static_cast<std::size_t>(i)] = label;
    const auto kind = static_cast<ShapeKind>(label);
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(i)));

    // The foreground is always the brighter color. A free luminance ordering
    // would be a per-image fingerprint that instance discrimination latches
    // onto instead of the shape itself.
    float bg[3], fg[3];
    float contrast = 0.f, lum_gap = 0.f;
    do {
      contrast = 0.f;
      for (int c = 0; c < 3; ++c) {
        bg[c] = rng.uniformf(0.f, 1.f);
        fg[c] = rng.uniformf(0.f, 1.f);
        contrast += std::abs(fg[c] - bg[c]);
      }
      const float lb = 0.299f * bg[0] + 0.587f * bg[1] + 0.114f * bg[2];
      const float lf = 0.299f * fg[0] + 0.587f * fg[1] + 0.114f * fg[2];
      lum_gap = lf - lb;
    } while (contrast < 0.9f || lum_gap < 0.25f);

    const float min_side = static_cast<float>(std::min(h, w));
    const float rad = rng.uniformf(0.22f, 0.30f) * min_side;
    const float cy = rng.uniformf(rad, static_cast<float>(h) - rad);
    const float cx = rng.uniformf(rad, static_cast<float>(w) - rad);

    float* img = set.images.data() + static_cast<std::int64_t>(i) * 3 * plane;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const bool in = inside_shape(kind, static_cast<float>(x) + 0.5f - cx,
                                     static_cast<float>(y) + 0.5f - cy, rad);
        const float* color = in ? fg : bg;
        for (int c = 0; c < 3; ++c) {
          float v = color[c] + rng.uniformf(-0.02f, 0.02f);
          img[c * plane + static_cast<std::int64_t>(y) * w + x] =
              std::min(std::max(v, 0.f), 1.f);
        }
      }
  }
  return set;
}

LabeledSet load_cifar10_binary(const std::string& path) {
  constexpr std::int64_t kRecord = 3073;  // 1 label byte + 3*1024 pixel bytes
  constexpr int kSide = 32;
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw std::runtime_error("load_cifar10_binary: cannot open " + path);
  const std::int64_t size = static_cast<std::int64_t>(in.tellg());
  if (size % kRecord != 0)
    throw std::runtime_error("load_cifar10_binary: file size " + std::to_string(size) +
                             " is not a multiple of the " + std::to_string(kRecord) +
                             "-byte record");
  in.seekg(0);
  const int n = static_cast<int>(size / kRecord);

  LabeledSet set;
  set.n = n;
  set.h = set.w = kSide;
  set.num_classes = 10;
  set.images.resize(static_cast<std::size_t>(n) * 3 * kSide * kSide);
  set.labels.resize(static_cast<std::size_t>(n));
  std::vector<unsigned char> record(static_cast<std::size_t>(kRecord));
  for (int i = 0; i < n; ++i) {
    in.read(reinterpret_cast<char*>(record.data()), kRecord);
    if (!in) throw std::runtime_error("load_cifar10_binary: short read in " + path);
    if (record[0] > 9)
      throw std::runtime_error("load_cifar10_binary: label " + std::to_string(record[0]) +
                               " out of range in record " + std::to_string(i));
    set.labels[static_cast<std::size_t>(i)] = record[0];
    float* img = set.images.data() + static_cast<std::int64_t>(i) * 3 * kSide * kSide;
    for (std::int64_t j = 0; j < 3 * kSide * kSide; ++j)
      img[j] = static_cast<float>(record[static_cast<std::size_t>(1 + j)]) / 255.f;
  }
  return set;
}

std::vector<std::vector<int>> epoch_batches(int set_n, int batch_size, std::uint64_t seed,
                                            long epoch, bool drop_last) {
  if (batch_size <= 0 || batch_size % 2 != 0)
    throw std::invalid_argument("epoch_batches: batch size must be positive and even");
  if (batch_size > set_n)
    throw std::invalid_argument("epoch_batches: batch size " + std::to_string(batch_size) +
                                " exceeds dataset size " + std::to_string(set_n));
  std::vector<int> order(static_cast<std::size_t>(set_n));
  for (int i = 0; i < set_n; ++i) order[static_cast<std::size_t>(i)] = i;
  Rng rng(mix_seed(seed, static_cast<std::uint64_t>(epoch)));
  for (int i = set_n - 1; i > 0; --i)
    std::swap(order[static_cast<std::size_t>(i)],
              order[static_cast<std::size_t>(rng.uniform_int(0, i))]);

  std::vector<std::vector<int>> batches;
  for (int start = 0; start + batch_size <= set_n; start += batch_size)
    batches.emplace_back(order.begin() + start, order.begin() + start + batch_size);
  if (!drop_last && set_n % batch_size != 0)
    batches.emplace_back(order.begin() + (set_n / batch_size) * batch_size, order.end());
  return batches;
}

ImageBatch gather_images(const LabeledSet& set, const std::vector<int>& indices) {
  auto batch = ImageBatch::zeros(static_cast<int>(indices.size()), set.ch, set.h, set.w);
  for (std::size_t j = 0; j < indices.size(); ++j) {
    const int i = indices[j];
    if (i < 0 || i >= set.n) throw std::invalid_argument("gather_images: index out of range");
    std::copy_n(set.images.data() + static_cast<std::int64_t>(i) * set.image_floats(),
                set.image_floats(), batch.image(static_cast<int>(j)));
  }
  return batch;
}

}  // namespace regioncl
