#pragma once

#include "regioncl/config.hpp"

#include <string>

namespace regioncl {

// Full pretraining run: writes config_resolved.json, metrics.csv, and
// checkpoints under cfg.output_dir.
void cmd_pretrain(const RunConfig& cfg);

// The five-row ablation: toggle combinations (paste, canvas, intra-negative)
// = 000, 010, 100, 110, 111, trained sequentially as independent runs under
// cfg.output_dir/row<i>_<pcn>. For the procedural dataset each row also gets a
// 20-NN evaluation, printed as one JSON line.
void cmd_table6(const RunConfig& cfg);

struct EvalArgs {
  std::string checkpoint_dir;
  std::string dataset;        // bank (and default query) source
  std::string query_dataset;  // empty: same as dataset
  std::string mode = "knn";   // knn | linear
  int k = 20;
  bool majority_vote = false;
  bool post_projector = false;
  int probe_epochs = 50;
  double probe_lr = 1.0;
  std::uint64_t seed = 1;  // procedural dataset generation
  int shapes_n = 2000;
  int shapes_query_n = 400;
  int shapes_classes = 4;
  int shapes_h = 64, shapes_w = 64;
  std::string export_csv;  // optional embedding dump of the bank
};

// Prints one JSON result line ({"metric": ..., "value": ...}) on stdout.
void cmd_eval(const EvalArgs& args);

// Writes n_batches of swapped composites as composite_{batch}_{index}.ppm plus
// a composites.json sidecar with the region and pairing of every batch.
void cmd_dump_composites(const RunConfig& cfg, int n_batches);

}  // namespace regioncl
