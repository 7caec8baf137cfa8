#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "regioncl/augment.hpp"
#include "regioncl/rng.hpp"

using namespace regioncl;

namespace {

// 3-channel CHW buffer where channel c holds base + 4y + x, a bilinear-friendly ramp.
std::vector<float> ramp_image(int h, int w, float channel_stride) {
  std::vector<float> img(static_cast<std::size_t>(3) * h * w);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        img[(static_cast<std::size_t>(c) * h + y) * w + x] =
            static_cast<float>(c) * channel_stride + static_cast<float>(w) * y + x;
  return img;
}

std::vector<float> random_image(int h, int w, std::uint64_t seed) {
  std::vector<float> img(static_cast<std::size_t>(3) * h * w);
  Rng rng(seed);
  for (auto& v : img) v = static_cast<float>(rng.uniform());
  return img;
}

float lum(float r, float g, float b) { return 0.299f * r + 0.587f * g + 0.114f * b; }

AugConfig fixed_full_crop(int out_h, int out_w) {
  AugConfig cfg;
  cfg.crop_min_frac = 1.0;
  cfg.crop_max_frac = 1.0;
  cfg.aspect_min = 1.0;
  cfg.aspect_max = 1.0;
  cfg.out_h = out_h;
  cfg.out_w = out_w;
  return cfg;
}

}  // namespace

TEST_SUITE("crop and resize") {
  TEST_CASE("downscale by two averages each aligned quad") {
    auto img = ramp_image(4, 4, 100.f);
    ImageView src{img.data(), 3, 4, 4};
    AugConfig cfg = fixed_full_crop(2, 2);
    Rng rng(1);
    std::vector<float> out(3 * 2 * 2);
    CropRect chosen;
    random_resized_crop(src, cfg, rng, out.data(), &chosen);
    CHECK(chosen.x == 0);
    CHECK(chosen.y == 0);
    CHECK(chosen.w == 4);
    CHECK(chosen.h == 4);
    // Sample centers land between pixels, so each output is a 4-pixel mean.
    const float want[4] = {2.5f, 4.5f, 10.5f, 12.5f};
    for (int c = 0; c < 3; ++c)
      for (int i = 0; i < 4; ++i)
        CHECK(out[c * 4 + i] == doctest::Approx(100.f * c + want[i]).epsilon(1e-6));
  }

  TEST_CASE("same-size full crop is the identity") {
    auto img = random_image(6, 6, 9);
    ImageView src{img.data(), 3, 6, 6};
    AugConfig cfg = fixed_full_crop(6, 6);
    Rng rng(2);
    std::vector<float> out(3 * 6 * 6);
    random_resized_crop(src, cfg, rng, out.data());
    for (std::size_t i = 0; i < img.size(); ++i) CHECK(out[i] == img[i]);
  }

  TEST_CASE("upscaling clamps sample coordinates at the borders") {
    auto img = ramp_image(4, 4, 0.f);
    ImageView src{img.data(), 3, 4, 4};
    AugConfig cfg = fixed_full_crop(8, 8);
    Rng rng(3);
    std::vector<float> out(3 * 8 * 8);
    random_resized_crop(src, cfg, rng, out.data());
    CHECK(out[0] == doctest::Approx(0.0f));          // top-left clamps to source corner
    CHECK(out[63] == doctest::Approx(15.0f));        // bottom-right likewise
  }

  TEST_CASE("impossible aspect falls back to the centered max square") {
    auto img = ramp_image(8, 4, 0.f);
    ImageView src{img.data(), 3, 8, 4};
    AugConfig cfg = fixed_full_crop(4, 4);  // area 32 at aspect 1 needs a 6x6 crop
    Rng rng(4);
    std::vector<float> out(3 * 4 * 4);
    CropRect chosen;
    random_resized_crop(src, cfg, rng, out.data(), &chosen);
    CHECK(chosen.x == 0);
    CHECK(chosen.y == 2);
    CHECK(chosen.w == 4);
    CHECK(chosen.h == 4);
    // Fallback burns all ten attempts, two draws each, and no placement draws.
    Rng replay(4);
    for (int i = 0; i < 20; ++i) replay.uniform(0.0, 1.0);
    CHECK(rng.uniform() == replay.uniform());
  }

  TEST_CASE("crops always fit inside the source") {
    auto img = random_image(16, 12, 11);
    ImageView src{img.data(), 3, 16, 12};
    AugConfig cfg;
    cfg.out_h = 8;
    cfg.out_w = 8;
    Rng rng(12);
    std::vector<float> out(3 * 8 * 8);
    for (int t = 0; t < 300; ++t) {
      CropRect chosen;
      random_resized_crop(src, cfg, rng, out.data(), &chosen);
      CHECK(chosen.w >= 1);
      CHECK(chosen.h >= 1);
      CHECK(chosen.x >= 0);
      CHECK(chosen.y >= 0);
      CHECK(chosen.x + chosen.w <= 12);
      CHECK(chosen.y + chosen.h <= 16);
    }
  }

  TEST_CASE("tiny sources are rejected") {
    auto img = random_image(1, 4, 13);
    ImageView src{img.data(), 3, 1, 4};
    AugConfig cfg;
    Rng rng(1);
    std::vector<float> out(3 * 64 * 64);
    CHECK_THROWS_AS(random_resized_crop(src, cfg, rng, out.data()), std::invalid_argument);
  }
}

TEST_SUITE("photometric jitter") {
  TEST_CASE("disabled gates leave the image untouched and burn two draws") {
    auto img = random_image(4, 4, 21);
    auto orig = img;
    AugConfig cfg;
    cfg.p_jitter = 0.0;
    cfg.p_grayscale = 0.0;
    Rng rng(7);
    photometric_jitter(img.data(), 4, 4, cfg, rng);
    CHECK(img == orig);
    Rng replay(7);
    replay.uniform();
    replay.uniform();
    CHECK(rng.uniform() == replay.uniform());
  }

  TEST_CASE("zero strengths apply cleanly even when the gate fires") {
    auto img = random_image(4, 4, 22);
    auto orig = img;
    AugConfig cfg;
    cfg.p_jitter = 1.0;
    cfg.p_grayscale = 0.0;
    cfg.jitter_brightness = 0.0;
    cfg.jitter_contrast = 0.0;
    cfg.jitter_saturation = 0.0;
    Rng rng(8);
    photometric_jitter(img.data(), 4, 4, cfg, rng);
    for (std::size_t i = 0; i < img.size(); ++i)
      CHECK(img[i] == doctest::Approx(orig[i]).epsilon(1e-6));
  }

  TEST_CASE("forced grayscale writes the exact luminance into all channels") {
    auto img = random_image(3, 5, 23);
    auto orig = img;
    AugConfig cfg;
    cfg.p_jitter = 0.0;
    cfg.p_grayscale = 1.0;
    Rng rng(9);
    photometric_jitter(img.data(), 3, 5, cfg, rng);
    const std::size_t plane = 15;
    for (std::size_t i = 0; i < plane; ++i) {
      const float want = lum(orig[i], orig[plane + i], orig[2 * plane + i]);
      CHECK(img[i] == want);
      CHECK(img[plane + i] == want);
      CHECK(img[2 * plane + i] == want);
    }
  }

  TEST_CASE("full pipeline matches a replayed oracle") {
    auto img = random_image(4, 4, 24);
    auto oracle = img;
    AugConfig cfg;
    cfg.p_jitter = 1.0;
    cfg.p_grayscale = 1.0;
    Rng rng(10);
    photometric_jitter(img.data(), 4, 4, cfg, rng);

    Rng replay(10);
    const std::size_t plane = 16;
    replay.uniform();  // jitter gate
    const float db = static_cast<float>(replay.uniform(-0.4, 0.4));
    const float dc = static_cast<float>(replay.uniform(-0.4, 0.4));
    const float ds = static_cast<float>(replay.uniform(-0.4, 0.4));
    auto clamp = [](float v) { return std::min(std::max(v, 0.f), 1.f); };
    for (auto& v : oracle) v = clamp(v + db);
    float mean_lum = 0.f;
    for (std::size_t i = 0; i < plane; ++i)
      mean_lum += lum(oracle[i], oracle[plane + i], oracle[2 * plane + i]);
    mean_lum /= static_cast<float>(plane);
    for (auto& v : oracle) v = clamp(mean_lum + (1.f + dc) * (v - mean_lum));
    for (std::size_t i = 0; i < plane; ++i) {
      const float l = lum(oracle[i], oracle[plane + i], oracle[2 * plane + i]);
      for (int c = 0; c < 3; ++c)
        oracle[c * plane + i] = clamp(l + (1.f + ds) * (oracle[c * plane + i] - l));
    }
    replay.uniform();  // grayscale gate
    for (std::size_t i = 0; i < plane; ++i) {
      const float l = lum(oracle[i], oracle[plane + i], oracle[2 * plane + i]);
      oracle[i] = oracle[plane + i] = oracle[2 * plane + i] = l;
    }
    for (std::size_t i = 0; i < img.size(); ++i)
      CHECK(img[i] == doctest::Approx(oracle[i]).epsilon(1e-6));
  }

  TEST_CASE("output stays inside the unit interval under extreme strengths") {
    auto img = random_image(6, 6, 25);
    AugConfig cfg;
    cfg.p_jitter = 1.0;
    cfg.jitter_brightness = 1.0;
    cfg.jitter_contrast = 3.0;
    cfg.jitter_saturation = 3.0;
    Rng rng(11);
    for (int t = 0; t < 20; ++t) {
      photometric_jitter(img.data(), 6, 6, cfg, rng);
      for (float v : img) {
        CHECK(v >= 0.f);
        CHECK(v <= 1.f);
      }
    }
  }
}

TEST_SUITE("blur and flip") {
  TEST_CASE("impulse response is the separable product of the kernel") {
    std::vector<float> img(3 * 5 * 5, 0.f);
    for (int c = 0; c < 3; ++c) img[static_cast<std::size_t>(c) * 25 + 12] = 1.f;
    const double sigma = 1.0;
    gaussian_blur3(img.data(), 5, 5, sigma);
    float k0 = static_cast<float>(std::exp(-1.0 / (2.0 * sigma * sigma)));
    float k1 = 1.f;
    const float norm = 2.f * k0 + k1;
    k0 /= norm;
    k1 /= norm;
    for (int c = 0; c < 3; ++c) {
      const float* p = img.data() + static_cast<std::size_t>(c) * 25;
      CHECK(p[12] == doctest::Approx(k1 * k1).epsilon(1e-6));
      CHECK(p[11] == doctest::Approx(k1 * k0).epsilon(1e-6));
      CHECK(p[13] == doctest::Approx(k1 * k0).epsilon(1e-6));
      CHECK(p[7] == doctest::Approx(k1 * k0).epsilon(1e-6));
      CHECK(p[17] == doctest::Approx(k1 * k0).epsilon(1e-6));
      CHECK(p[6] == doctest::Approx(k0 * k0).epsilon(1e-6));
      CHECK(p[18] == doctest::Approx(k0 * k0).epsilon(1e-6));
      float total = 0.f;
      for (int i = 0; i < 25; ++i) total += p[i];
      CHECK(total == doctest::Approx(1.0f).epsilon(1e-5));
    }
  }

  TEST_CASE("constant images are fixed points of the blur") {
    std::vector<float> img(3 * 4 * 4, 0.37f);
    gaussian_blur3(img.data(), 4, 4, 0.5);
    for (float v : img) CHECK(v == doctest::Approx(0.37f).epsilon(1e-6));
  }

  TEST_CASE("non-positive sigma is rejected") {
    std::vector<float> img(3 * 4 * 4, 0.f);
    CHECK_THROWS_AS(gaussian_blur3(img.data(), 4, 4, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(gaussian_blur3(img.data(), 4, 4, -1.0), std::invalid_argument);
  }

  TEST_CASE("horizontal flip reverses rows and is an involution") {
    auto img = random_image(3, 4, 31);
    auto orig = img;
    hflip(img.data(), 3, 4);
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < 3; ++y)
        for (int x = 0; x < 4; ++x)
          CHECK(img[(static_cast<std::size_t>(c) * 3 + y) * 4 + x] ==
                orig[(static_cast<std::size_t>(c) * 3 + y) * 4 + (3 - x)]);
    hflip(img.data(), 3, 4);
    CHECK(img == orig);
  }
}

TEST_SUITE("view generation") {
  TEST_CASE("rejects non-rgb sources and bad configs") {
    auto img = random_image(8, 8, 41);
    ImageView gray{img.data(), 1, 8, 8};
    AugConfig cfg;
    Rng rng(1);
    std::vector<float> out(3 * 64 * 64);
    CHECK_THROWS_AS(augment_view(gray, cfg, rng, out.data()), std::invalid_argument);

    ImageView src{img.data(), 3, 8, 8};
    AugConfig bad = cfg;
    bad.crop_min_frac = 0.0;
    CHECK_THROWS_AS(augment_view(src, bad, rng, out.data()), std::invalid_argument);
    bad = cfg;
    bad.crop_min_frac = 0.9;
    bad.crop_max_frac = 0.5;
    CHECK_THROWS_AS(augment_view(src, bad, rng, out.data()), std::invalid_argument);
    bad = cfg;
    bad.p_flip = 1.5;
    CHECK_THROWS_AS(augment_view(src, bad, rng, out.data()), std::invalid_argument);
    bad = cfg;
    bad.jitter_contrast = -0.1;
    CHECK_THROWS_AS(augment_view(src, bad, rng, out.data()), std::invalid_argument);
    bad = cfg;
    bad.out_h = 0;
    CHECK_THROWS_AS(augment_view(src, bad, rng, out.data()), std::invalid_argument);
    bad = cfg;
    bad.aspect_min = 2.0;
    bad.aspect_max = 1.0;
    CHECK_THROWS_AS(augment_view(src, bad, rng, out.data()), std::invalid_argument);
  }

  TEST_CASE("same seed reproduces the view, different seeds diverge") {
    auto img = random_image(32, 32, 42);
    ImageView src{img.data(), 3, 32, 32};
    AugConfig cfg;
    cfg.out_h = 16;
    cfg.out_w = 16;
    std::vector<float> a(3 * 16 * 16), b(3 * 16 * 16), c(3 * 16 * 16);
    Rng r1(77), r2(77), r3(78);
    augment_view(src, cfg, r1, a.data());
    augment_view(src, cfg, r2, b.data());
    augment_view(src, cfg, r3, c.data());
    CHECK(a == b);
    CHECK(a != c);
  }

  TEST_CASE("view pair equals two sequential single draws") {
    auto img = random_image(32, 32, 43);
    ImageView src{img.data(), 3, 32, 32};
    AugConfig cfg;
    cfg.out_h = 16;
    cfg.out_w = 16;
    cfg.p_blur = 0.3;  // exercise the sigma draw in the stream accounting
    std::vector<float> q(3 * 16 * 16), k(3 * 16 * 16), q2(3 * 16 * 16), k2(3 * 16 * 16);
    Rng pair_rng(99), seq_rng(99);
    make_views(src, cfg, pair_rng, q.data(), k.data());
    augment_view(src, cfg, seq_rng, q2.data());
    augment_view(src, cfg, seq_rng, k2.data());
    CHECK(q == q2);
    CHECK(k == k2);
  }
}
