#pragma once

#include "regioncl/image.hpp"
#include "regioncl/rng.hpp"

#include <string>
#include <vector>

namespace regioncl {

struct LabeledSet {
  int n = 0, ch = 3, h = 0, w = 0;
  std::vector<float> images;  // n x 3 x h x w
  std::vector<int> labels;
  int num_classes = 0;

  std::int64_t image_floats() const { return static_cast<std::int64_t>(ch) * h * w; }
  ImageView view(int i) const {
    return {images.data() + static_cast<std::int64_t>(i) * image_floats(), ch, h, w};
  }
};

// Procedural dataset: one colored shape per image on a contrasting background,
// light pixel noise on top. Classes are balanced round-robin and everything is
// a pure function of the seed.
LabeledSet gen_shapes(int n, int h, int w, int num_classes, std::uint64_t seed);

// CIFAR-10 binary records: 1 label byte + 3072 pixel bytes (R, G, B planes of a
// 32x32 image), pixels scaled to [0,1].
LabeledSet load_cifar10_binary(const std::string& path);

// Seeded uniform permutation of [0, set_n), cut into batches. drop_last discards
// the ragged tail.
std::vector<std::vector<int>> epoch_batches(int set_n, int batch_size, std::uint64_t seed,
                                            long epoch, bool drop_last = true);

ImageBatch gather_images(const LabeledSet& set, const std::vector<int>& indices);

}  // namespace regioncl
