#include <doctest.h>

#include "regioncl/gradcheck.hpp"
#include "regioncl/layers.hpp"
#include "regioncl/model.hpp"
#include "regioncl/ops.hpp"
#include "regioncl/optim.hpp"
#include "regioncl/rng.hpp"
#include "regioncl/threadpool.hpp"

#include <atomic>
#include <cmath>
#include <numeric>
#include <vector>

using namespace regioncl;

namespace {

Tensor<double> random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  auto t = Tensor<double>::zeros(shape);
  for (std::int64_t i = 0; i < t.numel(); ++i) t.data()[i] = rng.uniform(lo, hi);
  return t;
}

Tensor<double> random_unit_rows(int m, int d, Rng& rng) {
  auto t = random_tensor({m, d}, rng);
  for (int i = 0; i < m; ++i) {
    double n2 = 0;
    for (int j = 0; j < d; ++j) n2 += t.data()[i * d + j] * t.data()[i * d + j];
    const double inv = 1.0 / std::sqrt(n2);
    for (int j = 0; j < d; ++j) t.data()[i * d + j] *= inv;
  }
  return t;
}

// direct convolution loops, no im2col, used as the forward oracle
std::vector<double> conv_naive(const auto& x, int n, int ci, int h, int w,
                               const auto& wt, int co, int k, int stride, int pad) {
  const int oh = (h + 2 * pad - k) / stride + 1;
  const int ow = (w + 2 * pad - k) / stride + 1;
  std::vector<double> y(static_cast<std::size_t>(n) * co * oh * ow, 0.0);
  for (int i = 0; i < n; ++i)
    for (int o = 0; o < co; ++o)
      for (int yy = 0; yy < oh; ++yy)
        for (int xx = 0; xx < ow; ++xx) {
          double acc = 0;
          for (int c = 0; c < ci; ++c)
            for (int ky = 0; ky < k; ++ky)
              for (int kx = 0; kx < k; ++kx) {
                const int sy = yy * stride - pad + ky;
                const int sx = xx * stride - pad + kx;
                if (sy < 0 || sy >= h || sx < 0 || sx >= w) continue;
                acc += x[(static_cast<std::size_t>(i) * ci + c) * h * w + sy * w + sx] *
                       wt[(static_cast<std::size_t>(o) * ci + c) * k * k + ky * k + kx];
              }
          y[(static_cast<std::size_t>(i) * co + o) * oh * ow + yy * ow + xx] = acc;
        }
  return y;
}

}  // namespace

TEST_SUITE("rng") {
  TEST_CASE("mix_seed separates streams and is reproducible") {
    CHECK(mix_seed(1, 2) == mix_seed(1, 2));
    CHECK(mix_seed(1, 2) != mix_seed(1, 3));
    CHECK(mix_seed(1, 2) != mix_seed(2, 2));
  }

  TEST_CASE("uniform stays in [0,1) and is seed-deterministic") {
    Rng a(42), b(42);
    for (int i = 0; i < 1000; ++i) {
      const double u = a.uniform();
      CHECK(u >= 0.0);
      CHECK(u < 1.0);
      CHECK(u == b.uniform());
    }
  }

  TEST_CASE("uniform_int hits both inclusive endpoints") {
    Rng rng(7);
    bool lo = false, hi = false;
    for (int i = 0; i < 2000; ++i) {
      const int v = rng.uniform_int(3, 9);
      CHECK(v >= 3);
      CHECK(v <= 9);
      lo = lo || v == 3;
      hi = hi || v == 9;
    }
    CHECK(lo);
    CHECK(hi);
    CHECK_THROWS_AS(rng.uniform_int(5, 4), std::invalid_argument);
  }

  TEST_CASE("normal has roughly standard moments") {
    Rng rng(11);
    const int n = 100000;
    double s = 0, s2 = 0;
    for (int i = 0; i < n; ++i) {
      const double v = rng.normal();
      s += v;
      s2 += v * v;
    }
    CHECK(std::abs(s / n) < 0.02);
    CHECK(std::abs(s2 / n - 1.0) < 0.03);
  }
}

TEST_SUITE("threadpool") {
  TEST_CASE("parallel_chunks covers every index exactly once") {
    for (int n : {1, 2, 3, 7, 64, 1000}) {
      std::vector<std::atomic<int>> hits(static_cast<std::size_t>(n));
      for (auto& h : hits) h = 0;
      parallel_chunks(n, [&](int begin, int end) {
        for (int i = begin; i < end; ++i) ++hits[static_cast<std::size_t>(i)];
      });
      for (int i = 0; i < n; ++i) CHECK(hits[static_cast<std::size_t>(i)] == 1);
    }
  }

  TEST_CASE("worker_count is at least one") { CHECK(worker_count() >= 1); }
}

TEST_SUITE("tensor") {
  TEST_CASE("shape validation") {
    CHECK_THROWS_AS(Tensor<double>::zeros({2, 0}), std::invalid_argument);
    CHECK_THROWS_AS(Tensor<double>::from_data({2, 2}, {1.0, 2.0}), std::invalid_argument);
  }

  TEST_CASE("backward requires a scalar") {
    auto x = Tensor<double>::from_data({2}, {1.0, 2.0}, true);
    auto y = scale(x, 2.0);
    CHECK_THROWS_AS(backward(y), std::invalid_argument);
  }

  TEST_CASE("gradients accumulate across uses of the same tensor") {
    auto x = Tensor<double>::from_data({2}, {1.0, 2.0}, true);
    auto y = sum(add(x, x));
    backward(y);
    CHECK(x.grad_at(0) == doctest::Approx(2.0));
    CHECK(x.grad_at(1) == doctest::Approx(2.0));
  }

  TEST_CASE("NoGradGuard suppresses recording") {
    auto x = Tensor<double>::from_data({2}, {1.0, 2.0}, true);
    NoGradGuard guard;
    auto y = sum(x);
    CHECK_FALSE(y.requires_grad());
    CHECK(y.node()->parents.empty());
  }
}

TEST_SUITE("ops") {
  TEST_CASE("arithmetic values") {
    auto a = Tensor<double>::from_data({3}, {1.0, -2.0, 3.0});
    auto b = Tensor<double>::from_data({3}, {4.0, 5.0, -6.0});
    auto s = add(a, b);
    CHECK(s[0] == 5.0);
    CHECK(s[1] == 3.0);
    CHECK(s[2] == -3.0);
    auto d = sub(a, b);
    CHECK(d[1] == -7.0);
    auto m = mul(a, b);
    CHECK(m[2] == -18.0);
    auto sc = scale(a, -2.0);
    CHECK(sc[0] == -2.0);
    CHECK_THROWS_AS(add(a, Tensor<double>::zeros({4})), std::invalid_argument);
  }

  TEST_CASE("stop_gradient is an identity that blocks flow") {
    auto x = Tensor<double>::from_data({3}, {1.0, 2.0, 3.0}, true);
    auto y = stop_gradient(x);
    CHECK_FALSE(y.requires_grad());
    for (int i = 0; i < 3; ++i) CHECK(y[i] == x[i]);

    // d/dx sum(x * sg(x)) = sg(x) exactly, not 2x
    auto loss = sum(mul(x, stop_gradient(x)));
    backward(loss);
    for (int i = 0; i < 3; ++i) CHECK(x.grad_at(i) == x[i]);
  }

  TEST_CASE("logsumexp of two zeros is ln 2") {
    auto x = Tensor<double>::from_data({1, 2}, {0.0, 0.0});
    auto y = logsumexp_rows(x);
    CHECK(y[0] == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  }

  TEST_CASE("logsumexp survives large magnitudes") {
    auto x = Tensor<double>::from_data({1, 2}, {1000.0, 1000.0});
    auto y = logsumexp_rows(x);
    CHECK(y[0] == doctest::Approx(1000.0 + std::log(2.0)).epsilon(1e-12));
  }

  TEST_CASE("l2_normalize of a 3-4 vector") {
    auto x = Tensor<double>::from_data({2}, {3.0, 4.0});
    auto y = l2_normalize(x);
    CHECK(y[0] == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(y[1] == doctest::Approx(0.8).epsilon(1e-12));
  }

  TEST_CASE("l2_normalize keeps zero rows finite") {
    auto x = Tensor<double>::zeros({1, 3}, true);
    auto y = l2_normalize(x);
    for (int i = 0; i < 3; ++i) CHECK(y[i] == 0.0);
    backward(sum(y));
    for (int i = 0; i < 3; ++i) CHECK(std::isfinite(x.grad_at(i)));
  }

  TEST_CASE("gather_rows duplicates and scatters back") {
    auto a = Tensor<double>::from_data({2, 2}, {1.0, 2.0, 3.0, 4.0}, true);
    auto g = gather_rows(a, {1, 1, 0});
    CHECK(g.dim(0) == 3);
    CHECK(g[0] == 3.0);
    CHECK(g[5] == 2.0);
    backward(sum(g));
    CHECK(a.grad_at(0) == 1.0);
    CHECK(a.grad_at(2) == 2.0);  // row 1 used twice
    CHECK_THROWS_AS(gather_rows(a, {2}), std::invalid_argument);
  }

  TEST_CASE("gradient checks across the op set") {
    for (std::uint64_t seed = 1; seed <= 4; ++seed) {
      Rng rng(seed);
      auto x = random_tensor({3, 4}, rng);

      CHECK(grad_check([](const Tensor<double>& t) { return mean(t); }, x) < 1e-6);
      CHECK(grad_check([](const Tensor<double>& t) { return sum(mul(t, t)); }, x) < 1e-6);
      CHECK(grad_check([](const Tensor<double>& t) { return sum(logsumexp_rows(t)); }, x) < 1e-6);
      CHECK(grad_check([](const Tensor<double>& t) { return sum(l2_normalize(t)); }, x) < 1e-6);
      CHECK(grad_check([](const Tensor<double>& t) { return mean(reshape(t, {4, 3})); }, x) < 1e-6);
      CHECK(grad_check([](const Tensor<double>& t) { return sum(gather_rows(t, {0, 2, 2})); }, x) <
            1e-6);
      CHECK(grad_check([](const Tensor<double>& t) { return sum(select_cols(t, {1, 3, 0})); }, x) <
            1e-6);

      // keep relu inputs away from the kink
      auto xr = random_tensor({3, 4}, rng);
      for (std::int64_t i = 0; i < xr.numel(); ++i)
        if (std::abs(xr.data()[i]) < 0.05) xr.data()[i] = 0.1;
      CHECK(grad_check([](const Tensor<double>& t) { return sum(relu(t)); }, xr) < 1e-6);

      auto b = random_tensor({4, 5}, rng);
      CHECK(grad_check([&](const Tensor<double>& t) { return sum(matmul(t, b)); }, x) < 1e-6);
      CHECK(grad_check([&](const Tensor<double>& t) { return sum(matmul(x, t)); }, b) < 1e-6);

      auto bt = random_tensor({5, 4}, rng);
      CHECK(grad_check([&](const Tensor<double>& t) { return sum(matmul_nt(t, bt)); }, x) < 1e-6);
      CHECK(grad_check([&](const Tensor<double>& t) { return sum(matmul_nt(x, t)); }, bt) < 1e-6);

      auto y = random_tensor({3, 4}, rng);
      CHECK(grad_check([&](const Tensor<double>& t) { return sum(row_dot(t, y)); }, x) < 1e-6);
      CHECK(grad_check([&](const Tensor<double>& t) { return sum(row_dot(x, t)); }, y) < 1e-6);
      CHECK(grad_check([&](const Tensor<double>& t) { return sum(concat_cols(t, y)); }, x) < 1e-6);

      auto v = random_tensor({4}, rng);
      CHECK(grad_check([&](const Tensor<double>& t) { return sum(add_rowvec(t, v)); }, x) < 1e-6);
      CHECK(grad_check([&](const Tensor<double>& t) { return sum(add_rowvec(x, t)); }, v) < 1e-6);
    }
  }
}

TEST_SUITE("conv") {
  TEST_CASE("forward matches direct convolution loops") {
    Rng rng(3);
    struct Case {
      int n, ci, h, w, co, k, stride, pad;
    };
    for (const Case cs : {Case{2, 3, 6, 6, 4, 3, 2, 1}, Case{1, 2, 5, 7, 3, 3, 1, 0},
                          Case{2, 1, 4, 4, 2, 1, 1, 0}, Case{1, 2, 8, 8, 2, 3, 2, 1}}) {
      auto x = random_tensor({cs.n, cs.ci, cs.h, cs.w}, rng);
      auto w = random_tensor({cs.co, cs.ci, cs.k, cs.k}, rng);
      auto y = conv2d(x, w, cs.stride, cs.pad);
      const auto ref =
          conv_naive(x.vec(), cs.n, cs.ci, cs.h, cs.w, w.vec(), cs.co, cs.k, cs.stride, cs.pad);
      REQUIRE(static_cast<std::size_t>(y.numel()) == ref.size());
      for (std::size_t i = 0; i < ref.size(); ++i)
        CHECK(y.data()[i] == doctest::Approx(ref[i]).epsilon(1e-12));
    }
  }

  TEST_CASE("input and weight gradients") {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      Rng rng(seed);
      auto x = random_tensor({2, 2, 5, 5}, rng);
      auto w = random_tensor({3, 2, 3, 3}, rng);
      CHECK(grad_check([&](const Tensor<double>& t) { return sum(conv2d(t, w, 2, 1)); }, x) < 1e-6);
      CHECK(grad_check([&](const Tensor<double>& t) { return sum(conv2d(x, t, 2, 1)); }, w) < 1e-6);
    }
  }

  TEST_CASE("shape errors") {
    auto x = Tensor<double>::zeros({1, 3, 8, 8});
    auto w = Tensor<double>::zeros({4, 2, 3, 3});
    CHECK_THROWS_AS(conv2d(x, w, 1, 1), std::invalid_argument);          // channel mismatch
    CHECK_THROWS_AS(conv2d(x, Tensor<double>::zeros({4, 3, 9, 9}), 1, 0),
                    std::invalid_argument);                              // kernel larger than input
  }
}

TEST_SUITE("batchnorm") {
  TEST_CASE("train mode normalizes with biased batch statistics") {
    Rng rng(5);
    const int n = 4, ch = 3, h = 5, w = 5;
    auto x = random_tensor({n, ch, h, w}, rng, -2.0, 3.0);
    auto gamma = Tensor<double>::full({ch}, 1.0);
    auto beta = Tensor<double>::zeros({ch});
    std::vector<double> rm(ch, 0.0), rv(ch, 1.0);
    auto y = batchnorm2d(x, gamma, beta, rm, rv, Mode::train, 1e-5, 0.1);

    const std::int64_t per_ch = static_cast<std::int64_t>(n) * h * w;
    for (int c = 0; c < ch; ++c) {
      double s = 0, s2 = 0, xs = 0, xs2 = 0;
      for (int i = 0; i < n; ++i)
        for (std::int64_t p = 0; p < static_cast<std::int64_t>(h) * w; ++p) {
          const double v = y.data()[(static_cast<std::int64_t>(i) * ch + c) * h * w + p];
          const double xv = x.data()[(static_cast<std::int64_t>(i) * ch + c) * h * w + p];
          s += v;
          s2 += v * v;
          xs += xv;
          xs2 += xv * xv;
        }
      const double m = s / per_ch;
      const double var = s2 / per_ch - m * m;
      CHECK(m == doctest::Approx(0.0).epsilon(1e-10));
      CHECK(var == doctest::Approx(1.0).epsilon(1e-4));  // eps shifts it slightly below 1

      // running stats: (1-0.1)*old + 0.1*new, with the unbiased variance
      const double bm = xs / per_ch;
      const double bvar = xs2 / per_ch - bm * bm;
      CHECK(rm[static_cast<std::size_t>(c)] == doctest::Approx(0.1 * bm).epsilon(1e-10));
      CHECK(rv[static_cast<std::size_t>(c)] ==
            doctest::Approx(0.9 + 0.1 * bvar * per_ch / (per_ch - 1)).epsilon(1e-10));
    }
  }

  TEST_CASE("eval mode applies the stored statistics") {
    auto x = Tensor<double>::from_data({1, 1, 1, 2}, {1.0, 3.0});
    auto gamma = Tensor<double>::from_data({1}, {2.0});
    auto beta = Tensor<double>::from_data({1}, {-1.0});
    std::vector<double> rm{1.0}, rv{4.0};
    auto y = batchnorm2d(x, gamma, beta, rm, rv, Mode::eval, 1e-5, 0.1);
    const double is = 1.0 / std::sqrt(4.0 + 1e-5);
    CHECK(y[0] == doctest::Approx((1.0 - 1.0) * is * 2.0 - 1.0).epsilon(1e-12));
    CHECK(y[1] == doctest::Approx((3.0 - 1.0) * is * 2.0 - 1.0).epsilon(1e-12));
    CHECK(rm[0] == 1.0);  // eval mode leaves the stats alone
    CHECK(rv[0] == 4.0);
  }

  TEST_CASE("gradients in both modes") {
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
      Rng rng(seed);
      auto x = random_tensor({3, 2, 4, 4}, rng);
      auto gamma = random_tensor({2}, rng, 0.5, 1.5);
      auto beta = random_tensor({2}, rng);
      auto weights = random_tensor({3, 2, 4, 4}, rng);  // makes the objective sensitive to shifts
      for (Mode mode : {Mode::train, Mode::eval}) {
        auto f_x = [&, mode](const Tensor<double>& t) {
          std::vector<double> rm(2, 0.1), rv(2, 0.9);
          return sum(mul(batchnorm2d(t, gamma, beta, rm, rv, mode, 1e-5, 0.1), weights));
        };
        CHECK(grad_check(f_x, x) < 1e-5);
        auto f_g = [&, mode](const Tensor<double>& t) {
          std::vector<double> rm(2, 0.1), rv(2, 0.9);
          return sum(mul(batchnorm2d(x, t, beta, rm, rv, mode, 1e-5, 0.1), weights));
        };
        CHECK(grad_check(f_g, gamma) < 1e-6);
        auto f_b = [&, mode](const Tensor<double>& t) {
          std::vector<double> rm(2, 0.1), rv(2, 0.9);
          return sum(mul(batchnorm2d(x, gamma, t, rm, rv, mode, 1e-5, 0.1), weights));
        };
        CHECK(grad_check(f_b, beta) < 1e-6);
      }
    }
  }

  TEST_CASE("train mode rejects single-sample channels") {
    auto x = Tensor<double>::zeros({1, 2, 1, 1});
    auto gamma = Tensor<double>::full({2}, 1.0);
    auto beta = Tensor<double>::zeros({2});
    std::vector<double> rm(2, 0.0), rv(2, 1.0);
    CHECK_THROWS_AS(batchnorm2d(x, gamma, beta, rm, rv, Mode::train, 1e-5, 0.1),
                    std::invalid_argument);
  }
}

TEST_SUITE("linear and pooling") {
  TEST_CASE("linear forward equals x W^T + b") {
    auto x = Tensor<double>::from_data({2, 3}, {1, 2, 3, 4, 5, 6});
    auto w = Tensor<double>::from_data({2, 3}, {1, 0, -1, 2, 1, 0});
    auto b = Tensor<double>::from_data({2}, {0.5, -0.5});
    auto y = linear(x, w, b);
    CHECK(y[0] == doctest::Approx(1 - 3 + 0.5));
    CHECK(y[1] == doctest::Approx(2 + 2 - 0.5));
    CHECK(y[2] == doctest::Approx(4 - 6 + 0.5));
    CHECK(y[3] == doctest::Approx(8 + 5 - 0.5));
  }

  TEST_CASE("linear gradients") {
    Rng rng(9);
    auto x = random_tensor({3, 4}, rng);
    auto w = random_tensor({5, 4}, rng);
    auto b = random_tensor({5}, rng);
    CHECK(grad_check([&](const Tensor<double>& t) { return sum(linear(t, w, b)); }, x) < 1e-6);
    CHECK(grad_check([&](const Tensor<double>& t) { return sum(linear(x, t, b)); }, w) < 1e-6);
    CHECK(grad_check([&](const Tensor<double>& t) { return sum(linear(x, w, t)); }, b) < 1e-6);
  }

  TEST_CASE("global_avg_pool averages each plane") {
    auto x = Tensor<double>::from_data({1, 2, 2, 2}, {1, 2, 3, 4, 10, 20, 30, 40});
    auto y = global_avg_pool(x);
    CHECK(y[0] == doctest::Approx(2.5));
    CHECK(y[1] == doctest::Approx(25.0));
    Rng rng(4);
    auto xr = random_tensor({2, 3, 4, 4}, rng);
    CHECK(grad_check([](const Tensor<double>& t) { return sum(global_avg_pool(t)); }, xr) < 1e-6);
  }
}

TEST_SUITE("init") {
  TEST_CASE("conv weights respect the fan-in bound") {
    Rng rng(1);
    auto layer = make_layer<double>(LayerSpec::conv(3, 16, 3, 2, 1), rng);
    const double bound = std::sqrt(6.0 / (3 * 3 * 3));
    for (std::int64_t i = 0; i < layer.params[0].numel(); ++i) {
      CHECK(layer.params[0][i] >= -bound);
      CHECK(layer.params[0][i] <= bound);
    }
    CHECK(layer.params[0].requires_grad());
  }

  TEST_CASE("batchnorm starts at identity") {
    Rng rng(1);
    auto layer = make_layer<double>(LayerSpec::batchnorm(8), rng);
    for (int i = 0; i < 8; ++i) {
      CHECK(layer.params[0][i] == 1.0);
      CHECK(layer.params[1][i] == 0.0);
      CHECK(layer.running_mean[static_cast<std::size_t>(i)] == 0.0);
      CHECK(layer.running_var[static_cast<std::size_t>(i)] == 1.0);
    }
  }

  TEST_CASE("linear bias respects the fan-in bound") {
    Rng rng(1);
    auto layer = make_layer<double>(LayerSpec::lin(64, 32), rng);
    const double bound = 1.0 / std::sqrt(64.0);
    for (std::int64_t i = 0; i < layer.params[1].numel(); ++i) {
      CHECK(layer.params[1][i] >= -bound);
      CHECK(layer.params[1][i] <= bound);
    }
  }

  TEST_CASE("same seed gives identical parameters") {
    Rng a(77), b(77);
    auto la = make_layer<double>(LayerSpec::conv(2, 4, 3, 1, 1), a);
    auto lb = make_layer<double>(LayerSpec::conv(2, 4, 3, 1, 1), b);
    CHECK(la.params[0].vec() == lb.params[0].vec());
  }
}

TEST_SUITE("optim") {
  TEST_CASE("cosine schedule endpoints and midpoint") {
    CHECK(cosine_lr(0, 100, 0.06) == doctest::Approx(0.06).epsilon(1e-14));
    CHECK(cosine_lr(100, 100, 0.06) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(cosine_lr(50, 100, 0.06) == doctest::Approx(0.03).epsilon(1e-12));
    CHECK_THROWS_AS(cosine_lr(-1, 100, 0.06), std::invalid_argument);
    CHECK_THROWS_AS(cosine_lr(101, 100, 0.06), std::invalid_argument);
    CHECK_THROWS_AS(cosine_lr(0, 0, 0.06), std::invalid_argument);
  }

  TEST_CASE("sgd matches the hand-unrolled recurrence") {
    const double lr = 0.1, mom = 0.9, wd = 0.01;
    const double g_const = 0.5;
    auto w = Tensor<double>::from_data({1}, {2.0}, true);
    std::vector<Tensor<double>> params{w};
    OptimState<double> opt;
    opt.momentum = mom;
    opt.weight_decay = wd;
    opt.total_steps = 10;

    double w_ref = 2.0, v_ref = 0.0;
    for (int s = 0; s < 5; ++s) {
      w.zero_grad();
      auto g = Tensor<double>::from_data({1}, {g_const});
      backward(sum(mul(w, g)));  // grad = g_const
      sgd_step(params, opt, lr);

      v_ref = mom * v_ref + (g_const + wd * w_ref);
      w_ref -= lr * v_ref;
      CHECK(w[0] == doctest::Approx(w_ref).epsilon(1e-12));
    }
    CHECK(opt.step == 5);
  }

  TEST_CASE("weight decay applies even without a gradient") {
    auto w = Tensor<double>::from_data({1}, {1.0}, true);
    std::vector<Tensor<double>> params{w};
    OptimState<double> opt;
    opt.momentum = 0.0;
    opt.weight_decay = 0.1;
    opt.total_steps = 1;
    sgd_step(params, opt, 1.0);
    CHECK(w[0] == doctest::Approx(1.0 - 0.1).epsilon(1e-12));
  }

  TEST_CASE("stepping past the schedule end throws") {
    auto w = Tensor<double>::from_data({1}, {1.0}, true);
    std::vector<Tensor<double>> params{w};
    OptimState<double> opt;
    opt.total_steps = 1;
    sgd_step(params, opt, 0.1);
    CHECK_THROWS_AS(sgd_step(params, opt, 0.1), std::runtime_error);
  }
}

TEST_SUITE("gradcheck") {
  TEST_CASE("quadratic probe reports a tiny error") {
    auto x = Tensor<double>::from_data({3}, {1.0, -2.0, 0.5});
    const double err = grad_check([](const Tensor<double>& t) { return sum(mul(t, t)); }, x);
    CHECK(err < 1e-9);
  }

  TEST_CASE("non-scalar objective is rejected") {
    auto x = Tensor<double>::from_data({2}, {1.0, 2.0});
    CHECK_THROWS_AS(grad_check([](const Tensor<double>& t) { return scale(t, 2.0); }, x),
                    std::invalid_argument);
  }
}

TEST_SUITE("model") {
  TEST_CASE("encoder maps 64x64 input to an 8x8 map of kEncoderDim channels") {
    Rng rng(1);
    auto enc = build_encoder<double>(rng);
    auto x = Tensor<double>::zeros({2, 3, 64, 64});
    auto y = stack_apply(enc, x, Mode::train);
    CHECK(y.shape() == Shape{2, kEncoderDim, 8, 8});
  }

  TEST_CASE("momentum branch starts as an exact copy and tracks slowly") {
    Rng rng(2);
    auto model = build_model<double>(Method::regioncl_m, 0.999, rng);
    // identical at build time
    auto& w0 = model.encoder.layers[0].params[0];
    auto& m0 = model.m_encoder.layers[0].params[0];
    CHECK(w0.vec() == m0.vec());
    CHECK_FALSE(m0.requires_grad());

    const double before = m0[0];
    w0.data()[0] += 1.0;
    momentum_update(model);
    CHECK(m0[0] == doctest::Approx(0.999 * before + 0.001 * w0[0]).epsilon(1e-12));
  }

  TEST_CASE("parameter walk uses stable names in definition order") {
    Rng rng(3);
    auto model = build_model<double>(Method::regioncl_s, 0.999, rng);
    std::vector<std::string> names;
    visit_params<double>(model, [&](const std::string& n, Tensor<double>&) { names.push_back(n); });
    REQUIRE(!names.empty());
    CHECK(names.front() == "encoder.0.weight");
    CHECK(names[1] == "encoder.1.gamma");
    CHECK(names[2] == "encoder.1.beta");
    bool has_pred = false;
    for (const auto& n : names) has_pred = has_pred || n.rfind("predictor.", 0) == 0;
    CHECK(has_pred);

    // trainable excludes the shadows
    auto m2 = build_model<double>(Method::regioncl_m, 0.999, rng);
    auto tp = trainable_params(m2);
    std::size_t visited = 0;
    visit_params<double>(m2, [&](const std::string&, Tensor<double>&) { ++visited; });
    CHECK(tp.size() * 2 == visited);  // online params mirrored by momentum copies
  }

  TEST_CASE("momentum methods require a momentum branch") {
    Rng rng(4);
    auto model = build_model<double>(Method::regioncl_s, 0.999, rng);
    CHECK_THROWS_AS(momentum_update(model), std::logic_error);
  }
}
