#include "regioncl/commands.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
  CLI::App app{"RegionCL pretraining and evaluation"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  bool table6 = false;
  auto* pretrain = app.add_subcommand("pretrain", "run self-supervised pretraining");
  pretrain->add_option("--config", config_path, "JSON config file")->required();
  pretrain->add_option("--set", overrides, "dotted-path override, e.g. loss.temperature=0.1");
  pretrain->add_flag("--table6", table6, "run the five ablation rows sequentially");

  regioncl::EvalArgs eargs;
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
  eval->add_option("--checkpoint", eargs.checkpoint_dir, "checkpoint directory")->required();
  eval->add_option("--dataset", eargs.dataset, "feature bank source (shapes, shapes-eval, cifar10:<path>)")
      ->required();
  eval->add_option("--query-dataset", eargs.query_dataset,
                   "query source; defaults to the bank itself");
  eval->add_option("--mode", eargs.mode, "knn or linear")->check(CLI::IsMember({"knn", "linear"}));
  eval->add_option("--k", eargs.k, "neighbor count for knn");
  eval->add_flag("--majority", eargs.majority_vote, "majority vote instead of similarity weights");
  eval->add_flag("--post-projector", eargs.post_projector, "evaluate projector-space features");
  eval->add_option("--epochs", eargs.probe_epochs, "linear probe epochs");
  eval->add_option("--lr", eargs.probe_lr, "linear probe learning rate");
  eval->add_option("--seed", eargs.seed, "procedural dataset seed");
  eval->add_option("--shapes-n", eargs.shapes_n, "procedural bank size");
  eval->add_option("--shapes-query-n", eargs.shapes_query_n, "procedural query-set size");
  eval->add_option("--classes", eargs.shapes_classes, "procedural class count");
  eval->add_option("--height", eargs.shapes_h, "procedural image height");
  eval->add_option("--width", eargs.shapes_w, "procedural image width");
  eval->add_option("--export", eargs.export_csv, "write bank embeddings to this CSV");

  std::string dump_config;
  std::vector<std::string> dump_overrides;
  int n_batches = 1;
  auto* dump = app.add_subcommand("dump-composites", "write swapped composites as PPM images");
  dump->add_option("--config", dump_config, "JSON config file")->required();
  dump->add_option("--set", dump_overrides, "dotted-path override");
  dump->add_option("--batches", n_batches, "number of batches to dump");

  CLI11_PARSE(app, argc, argv);

  try {
    if (pretrain->parsed()) {
      const auto cfg = regioncl::load_config(config_path, overrides);
      if (table6)
        regioncl::cmd_table6(cfg);
      else
        regioncl::cmd_pretrain(cfg);
    } else if (eval->parsed()) {
      regioncl::cmd_eval(eargs);
    } else if (dump->parsed()) {
      const auto cfg = regioncl::load_config(dump_config, dump_overrides);
      regioncl::cmd_dump_composites(cfg, n_batches);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
