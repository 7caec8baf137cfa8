#include "regioncl/eval.hpp"

#include "regioncl/pipeline.hpp"
#include "regioncl/threadpool.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>

namespace regioncl {

FeatureBank extract_features(ModelState<float>& model, const LabeledSet& set, int batch_size,
                             bool post_projector) {
  if (batch_size <= 0) throw std::invalid_argument("extract_features: bad batch size");
  NoGradGuard no_grad;
  FeatureBank bank;
  bank.n = set.n;
  bank.labels = set.labels;
  for (int start = 0; start < set.n; start += batch_size) {
    const int count = std::min(batch_size, set.n - start);
    std::vector<int> idx(static_cast<std::size_t>(count));
    std::iota(idx.begin(), idx.end(), start);
    auto x = to_tensor<float>(gather_images(set, idx));
    auto pooled = global_avg_pool(stack_apply(model.encoder, x, Mode::eval));
    auto feats =
        l2_normalize(post_projector ? stack_apply(model.projector, pooled, Mode::eval) : pooled);
    if (bank.d == 0) {
      bank.d = feats.dim(1);
      bank.features.resize(static_cast<std::size_t>(set.n) * bank.d);
    }
    std::copy_n(feats.data(), static_cast<std::int64_t>(count) * bank.d,
                bank.features.data() + static_cast<std::int64_t>(start) * bank.d);
  }
  return bank;
}

double knn_classify(const FeatureBank& bank, const FeatureBank& queries, int k, bool weighted) {
  if (bank.n == 0) throw std::invalid_argument("knn_classify: empty feature bank");
  if (k <= 0 || k > bank.n)
    throw std::invalid_argument("knn_classify: k " + std::to_string(k) +
                                " outside [1, " + std::to_string(bank.n) + "]");
  if (bank.d != queries.d) throw std::invalid_argument("knn_classify: feature dim mismatch");
  const int num_classes =
      1 + *std::max_element(bank.labels.begin(), bank.labels.end());
  std::vector<std::uint8_t> hit(static_cast<std::size_t>(queries.n), 0);
  parallel_chunks(queries.n, [&](int begin, int end) {
    std::vector<float> sims(static_cast<std::size_t>(bank.n));
    std::vector<int> order(static_cast<std::size_t>(bank.n));
    std::vector<double> votes(static_cast<std::size_t>(num_classes));
    for (int qi = begin; qi < end; ++qi) {
      const float* qf = queries.features.data() + static_cast<std::int64_t>(qi) * queries.d;
      for (int bi = 0; bi < bank.n; ++bi) {
        const float* bf = bank.features.data() + static_cast<std::int64_t>(bi) * bank.d;
        float dot = 0.f;
        for (int j = 0; j < bank.d; ++j) dot += qf[j] * bf[j];
        sims[static_cast<std::size_t>(bi)] = dot;
      }
      std::iota(order.begin(), order.end(), 0);
      std::partial_sort(order.begin(), order.begin() + k, order.end(), [&](int a, int b) {
        if (sims[static_cast<std::size_t>(a)] != sims[static_cast<std::size_t>(b)])
          return sims[static_cast<std::size_t>(a)] > sims[static_cast<std::size_t>(b)];
        return a < b;  // stable under similarity ties
      });
      std::fill(votes.begin(), votes.end(), 0.0);
      for (int j = 0; j < k; ++j) {
        const int bi = order[static_cast<std::size_t>(j)];
        const double wgt =
            weighted ? std::exp(static_cast<double>(sims[static_cast<std::size_t>(bi)]) / 0.07)
                     : 1.0;
        votes[static_cast<std::size_t>(bank.labels[static_cast<std::size_t>(bi)])] += wgt;
      }
      const int pred = static_cast<int>(
          std::max_element(votes.begin(), votes.end()) - votes.begin());
      hit[static_cast<std::size_t>(qi)] =
          pred == queries.labels[static_cast<std::size_t>(qi)] ? 1 : 0;
    }
  });
  int correct = 0;
  for (std::uint8_t h : hit) correct += h;
  return queries.n == 0 ? 0.0 : static_cast<double>(correct) / queries.n;
}

double linear_probe(ModelState<float>& model, const LabeledSet& train_set,
                    const LabeledSet& eval_set, int epochs, double lr, std::uint64_t seed) {
  auto train_bank = extract_features(model, train_set, 128);
  auto eval_bank = extract_features(model, eval_set, 128);
  for (float v : train_bank.features)
    if (!std::isfinite(v)) throw std::runtime_error("linear_probe: non-finite features");
  const int d = train_bank.d;
  const int num_classes = train_set.num_classes;
  std::vector<double> w(static_cast<std::size_t>(num_classes) * d, 0.0);
  std::vector<double> b(static_cast<std::size_t>(num_classes), 0.0);

  const int batch = std::min(128, train_bank.n);
  std::vector<double> logits(static_cast<std::size_t>(num_classes));
  for (int epoch = 0; epoch < epochs; ++epoch) {
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(epoch)));
    std::vector<int> order(static_cast<std::size_t>(train_bank.n));
    std::iota(order.begin(), order.end(), 0);
    for (int i = train_bank.n - 1; i > 0; --i)
      std::swap(order[static_cast<std::size_t>(i)],
                order[static_cast<std::size_t>(rng.uniform_int(0, i))]);
    for (int start = 0; start + batch <= train_bank.n; start += batch) {
      std::vector<double> gw(w.size(), 0.0), gb(b.size(), 0.0);
      for (int j = 0; j < batch; ++j) {
        const int i = order[static_cast<std::size_t>(start + j)];
        const float* f = train_bank.features.data() + static_cast<std::int64_t>(i) * d;
        double mx = -1e300;
        for (int c = 0; c < num_classes; ++c) {
          double z = b[static_cast<std::size_t>(c)];
          const double* wc = w.data() + static_cast<std::int64_t>(c) * d;
          for (int jj = 0; jj < d; ++jj) z += wc[jj] * f[jj];
          logits[static_cast<std::size_t>(c)] = z;
          mx = std::max(mx, z);
        }
        double denom = 0.0;
        for (int c = 0; c < num_classes; ++c)
          denom += std::exp(logits[static_cast<std::size_t>(c)] - mx);
        const int y = train_bank.labels[static_cast<std::size_t>(i)];
        for (int c = 0; c < num_classes; ++c) {
          const double prob = std::exp(logits[static_cast<std::size_t>(c)] - mx) / denom;
          const double g = prob - (c == y ? 1.0 : 0.0);
          gb[static_cast<std::size_t>(c)] += g;
          double* gwc = gw.data() + static_cast<std::int64_t>(c) * d;
          for (int jj = 0; jj < d; ++jj) gwc[jj] += g * f[jj];
        }
      }
      const double scale = lr / batch;
      for (std::size_t i = 0; i < w.size(); ++i) w[i] -= scale * gw[i];
      for (std::size_t i = 0; i < b.size(); ++i) b[i] -= scale * gb[i];
    }
  }

  int correct = 0;
  for (int i = 0; i < eval_bank.n; ++i) {
    const float* f = eval_bank.features.data() + static_cast<std::int64_t>(i) * d;
    int best = 0;
    double best_z = -1e300;
    for (int c = 0; c < num_classes; ++c) {
      double z = b[static_cast<std::size_t>(c)];
      const double* wc = w.data() + static_cast<std::int64_t>(c) * d;
      for (int jj = 0; jj < d; ++jj) z += wc[jj] * f[jj];
      if (z > best_z) {
        best_z = z;
        best = c;
      }
    }
    if (best == eval_bank.labels[static_cast<std::size_t>(i)]) ++correct;
  }
  return eval_bank.n == 0 ? 0.0 : static_cast<double>(correct) / eval_bank.n;
}

void export_embeddings(const FeatureBank& bank, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("export_embeddings: cannot open " + path);
  out << "label";
  for (int j = 0; j < bank.d; ++j) out << ",f_" << j;
  out << "\n";
  out << std::setprecision(9);
  for (int i = 0; i < bank.n; ++i) {
    out << bank.labels[static_cast<std::size_t>(i)];
    const float* f = bank.features.data() + static_cast<std::int64_t>(i) * bank.d;
    for (int j = 0; j < bank.d; ++j) out << "," << f[j];
    out << "\n";
  }
  if (!out) throw std::runtime_error("export_embeddings: write failure on " + path);
}

}  // namespace regioncl
