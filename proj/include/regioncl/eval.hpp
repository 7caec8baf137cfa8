#pragma once

#include "regioncl/data.hpp"
#include "regioncl/model.hpp"

#include <string>
#include <vector>

namespace regioncl {

struct FeatureBank {
  int n = 0, d = 0;
  std::vector<float> features;  // n x d, unit rows
  std::vector<int> labels;
};

// Frozen-network features: eval-mode batchnorm, no gradients, L2-normalized.
// Default taps the encoder output after average pooling; post_projector instead
// taps the contrastive head.
FeatureBank extract_features(ModelState<float>& model, const LabeledSet& set, int batch_size,
                             bool post_projector = false);

// Cosine-similarity k-nearest vote. With weighted=true each neighbor votes with
// exp(sim / 0.07); otherwise plain majority. Returns top-1 accuracy.
double knn_classify(const FeatureBank& bank, const FeatureBank& queries, int k,
                    bool weighted = true);

// Softmax cross-entropy on frozen features with a zero-initialized linear head.
double linear_probe(ModelState<float>& model, const LabeledSet& train_set,
                    const LabeledSet& eval_set, int epochs, double lr,
                    std::uint64_t seed = 0);

// Rows "label,f_0,...,f_{d-1}", one per sample.
void export_embeddings(const FeatureBank& bank, const std::string& path);

}  // namespace regioncl
