#include "regioncl/commands.hpp"

#include "regioncl/data.hpp"
#include "regioncl/eval.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>

namespace regioncl {

namespace {

using nlohmann::json;

// Stable sub-stream tags of the run seed. Changing these invalidates
// reproducibility of existing resolved configs.
enum SeedTag : std::uint64_t {
  kSeedModel = 1,
  kSeedQueue = 2,
  kSeedLoop = 3,
  kSeedDataOrder = 4,
  kSeedAugment = 5,
  kSeedTrainSet = 10,
  kSeedEvalSet = 11,
  kSeedProbe = 12,
};

LabeledSet load_train_set(const RunConfig& cfg) {
  if (cfg.dataset == "shapes")
    return gen_shapes(cfg.shapes_n_train, cfg.shapes_h, cfg.shapes_w, cfg.shapes_classes,
                      mix_seed(cfg.seed, kSeedTrainSet));
  return load_cifar10_binary(cfg.dataset.substr(std::string("cifar10:").size()));
}

void write_resolved_config(const RunConfig& cfg) {
  std::ofstream out(cfg.output_dir + "/config_resolved.json");
  if (!out)
    throw std::runtime_error("pretrain: cannot write resolved config in " + cfg.output_dir);
  out << cfg.to_json().dump(2) << "\n";
}

}  // namespace

void cmd_pretrain(const RunConfig& cfg) {
  cfg.validate();
  std::filesystem::create_directories(cfg.output_dir);
  write_resolved_config(cfg);

  const auto set = load_train_set(cfg);
  if (cfg.batch_size > set.n)
    throw std::invalid_argument("pretrain: batch_size exceeds dataset size");

  Rng model_rng(mix_seed(cfg.seed, kSeedModel));
  auto model = build_model<float>(cfg.method, cfg.model_momentum_m, model_rng);

  QueueState<float> queue;
  const bool momentum_method = model.has_momentum_branch();
  if (momentum_method) {
    if (cfg.queue_warm_start) {
      Rng queue_rng(mix_seed(cfg.seed, kSeedQueue));
      queue = QueueState<float>::make_warm(cfg.queue_capacity, kProjectorDim, queue_rng);
    } else {
      queue = QueueState<float>::make_empty(cfg.queue_capacity, kProjectorDim);
    }
  }

  OptimState<float> opt;
  opt.learning_rate_base = cfg.pipe.lr_base;
  opt.momentum = cfg.optim_momentum;
  opt.weight_decay = cfg.weight_decay;
  opt.total_steps = cfg.steps;

  std::ofstream metrics(cfg.output_dir + "/metrics.csv");
  if (!metrics) throw std::runtime_error("pretrain: cannot write metrics.csv");
  metrics << "step,lr,l_ins,l_reg,l_total\n" << std::setprecision(17);

  Rng loop_rng(mix_seed(cfg.seed, kSeedLoop));
  const std::uint64_t aug_seed = mix_seed(cfg.seed, kSeedAugment);
  const std::uint64_t order_seed = mix_seed(cfg.seed, kSeedDataOrder);

  long done = 0;
  for (long epoch = 0; done < cfg.steps; ++epoch) {
    const auto batches = epoch_batches(set.n, cfg.batch_size, order_seed, epoch);
    for (const auto& idx : batches) {
      if (done >= cfg.steps) break;
      const auto raw = gather_images(set, idx);
      const auto m = train_step(model, opt, momentum_method ? &queue : nullptr, raw, cfg.pipe,
                                done, cfg.steps, aug_seed, loop_rng);
      ++done;
      metrics << done << "," << m.lr << "," << m.l_ins << "," << m.l_reg << "," << m.l_total
              << "\n";
      if (cfg.checkpoint_every > 0 && done % cfg.checkpoint_every == 0)
        save_checkpoint(model, cfg.output_dir + "/checkpoint_step" + std::to_string(done));
      if (done % 100 == 0)
        std::cerr << "step " << done << "/" << cfg.steps << " l_total " << m.l_total << "\n";
    }
  }
  metrics.flush();
  if (!metrics) throw std::runtime_error("pretrain: metrics.csv write failure");
  save_checkpoint(model, cfg.output_dir + "/checkpoint_final");
}

void cmd_table6(const RunConfig& cfg) {
  struct Row {
    bool paste, canvas, intra;
  };
  const Row rows[5] = {{false, false, false},
                       {false, true, false},
                       {true, false, false},
                       {true, true, false},
                       {true, true, true}};
  for (int i = 0; i < 5; ++i) {
    RunConfig row_cfg = cfg;
    row_cfg.method = Method::regioncl_m;
    row_cfg.pipe.loss.use_paste = rows[i].paste;
    row_cfg.pipe.loss.use_canvas = rows[i].canvas;
    row_cfg.pipe.loss.use_intra_negative = rows[i].intra;
    row_cfg.output_dir = cfg.output_dir + "/row" + std::to_string(i + 1) + "_" +
                         std::to_string(rows[i].paste) + std::to_string(rows[i].canvas) +
                         std::to_string(rows[i].intra);
    std::cerr << "table6 row " << (i + 1) << " -> " << row_cfg.output_dir << "\n";
    cmd_pretrain(row_cfg);

    json line;
    line["row"] = i + 1;
    line["use_paste"] = rows[i].paste;
    line["use_canvas"] = rows[i].canvas;
    line["use_intra_negative"] = rows[i].intra;
    if (cfg.dataset == "shapes") {
      auto model = load_checkpoint(row_cfg.output_dir + "/checkpoint_final");
      const auto bank_set = gen_shapes(cfg.shapes_n_train, cfg.shapes_h, cfg.shapes_w,
                                       cfg.shapes_classes, mix_seed(cfg.seed, kSeedTrainSet));
      const auto query_set = gen_shapes(cfg.shapes_n_eval, cfg.shapes_h, cfg.shapes_w,
                                        cfg.shapes_classes, mix_seed(cfg.seed, kSeedEvalSet));
      const auto bank = extract_features(model, bank_set, 128);
      const auto queries = extract_features(model, query_set, 128);
      line["knn20"] = knn_classify(bank, queries, 20);
    }
    std::cout << line.dump() << std::endl;
  }
}

namespace {
LabeledSet load_eval_set(const std::string& name, const EvalArgs& args) {
  if (name == "shapes")
    return gen_shapes(args.shapes_n, args.shapes_h, args.shapes_w, args.shapes_classes,
                      mix_seed(args.seed, kSeedTrainSet));
  if (name == "shapes-eval")
    return gen_shapes(args.shapes_query_n, args.shapes_h, args.shapes_w, args.shapes_classes,
                      mix_seed(args.seed, kSeedEvalSet));
  if (name.rfind("cifar10:", 0) == 0)
    return load_cifar10_binary(name.substr(std::string("cifar10:").size()));
  throw std::invalid_argument("eval: unknown dataset \"" + name +
                              "\"; valid: shapes, shapes-eval, cifar10:<path>");
}
}  // namespace

void cmd_eval(const EvalArgs& args) {
  auto model = load_checkpoint(args.checkpoint_dir);
  const auto bank_set = load_eval_set(args.dataset, args);
  const auto query_set =
      args.query_dataset.empty() ? bank_set : load_eval_set(args.query_dataset, args);

  json result;
  if (args.mode == "knn") {
    const auto bank = extract_features(model, bank_set, 128, args.post_projector);
    const auto queries = extract_features(model, query_set, 128, args.post_projector);
    if (!args.export_csv.empty()) export_embeddings(bank, args.export_csv);
    result["metric"] = "knn" + std::to_string(args.k);
    result["value"] = knn_classify(bank, queries, args.k, !args.majority_vote);
  } else if (args.mode == "linear") {
    if (!args.export_csv.empty())
      export_embeddings(extract_features(model, bank_set, 128, args.post_projector),
                        args.export_csv);
    result["metric"] = "linear_top1";
    result["value"] = linear_probe(model, bank_set, query_set, args.probe_epochs, args.probe_lr,
                                   mix_seed(args.seed, kSeedProbe));
  } else {
    throw std::invalid_argument("eval: unknown mode \"" + args.mode + "\"; valid: knn, linear");
  }
  std::cout << result.dump() << std::endl;
}

void cmd_dump_composites(const RunConfig& cfg, int n_batches) {
  cfg.validate();
  if (n_batches < 0) throw std::invalid_argument("dump-composites: n_batches must be >= 0");
  std::filesystem::create_directories(cfg.output_dir);

  const auto set = load_train_set(cfg);
  const auto batches = epoch_batches(set.n, cfg.batch_size, mix_seed(cfg.seed, kSeedDataOrder), 0);
  if (n_batches > static_cast<int>(batches.size()))
    throw std::invalid_argument("dump-composites: only " + std::to_string(batches.size()) +
                                " batches available in one epoch");
  const std::uint64_t aug_seed = mix_seed(cfg.seed, kSeedAugment);
  Rng loop_rng(mix_seed(cfg.seed, kSeedLoop));

  json sidecar;
  sidecar["ratio"] = cfg.pipe.swap.ratio;
  sidecar["batches"] = json::array();
  for (int b = 0; b < n_batches; ++b) {
    const auto& idx = batches[static_cast<std::size_t>(b)];
    const auto raw = gather_images(set, idx);
    auto views = ImageBatch::zeros(raw.n, 3, cfg.pipe.aug.out_h, cfg.pipe.aug.out_w);
    auto discard = ImageBatch::zeros(1, 3, cfg.pipe.aug.out_h, cfg.pipe.aug.out_w);
    for (int j = 0; j < raw.n; ++j) {
      Rng view_rng(mix_seed(aug_seed, static_cast<std::uint64_t>(b) *
                                          static_cast<std::uint64_t>(raw.n) +
                                      static_cast<std::uint64_t>(j)));
      ImageView src{raw.image(j), raw.ch, raw.h, raw.w};
      make_views(src, cfg.pipe.aug, view_rng, views.image(j), discard.image(0));
    }
    const RegionSpec spec = sample_region(cfg.pipe.swap, loop_rng);
    const PairingPlan plan = make_pairing(raw.n, cfg.pipe.pairing);
    const auto composite = swap_regions(views, spec, plan);

    json entry;
    entry["batch"] = b;
    entry["spec"] = {{"r_x", spec.r_x}, {"r_y", spec.r_y}, {"r_w", spec.r_w}, {"r_h", spec.r_h}};
    entry["pairing"] = plan.permutation;
    json files = json::array();
    for (int j = 0; j < composite.images.n; ++j) {
      const std::string name =
          "composite_" + std::to_string(b) + "_" + std::to_string(j) + ".ppm";
      write_ppm(cfg.output_dir + "/" + name,
                {composite.images.image(j), 3, composite.images.h, composite.images.w});
      files.push_back(name);
    }
    entry["files"] = std::move(files);
    sidecar["batches"].push_back(std::move(entry));
  }
  std::ofstream out(cfg.output_dir + "/composites.json");
  if (!out) throw std::runtime_error("dump-composites: cannot write sidecar");
  out << sidecar.dump(2) << "\n";
}

}  // namespace regioncl
