#pragma once

#include "regioncl/checkpoint.hpp"
#include "regioncl/pipeline.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace regioncl {

struct RunConfig {
  Method method = Method::regioncl_m;
  std::string dataset = "shapes";  // "shapes" or "cifar10:<path to .bin>"
  long steps = 1500;
  int batch_size = 32;
  std::uint64_t seed = 1;
  std::string output_dir = "run_out";
  long checkpoint_every = 0;  // 0: final checkpoint only

  int queue_capacity = 1024;
  bool queue_warm_start = true;

  PipelineConfig pipe;
  double optim_momentum = 0.9;
  double weight_decay = 1e-4;
  double model_momentum_m = 0.999;

  int shapes_n_train = 2000;
  int shapes_n_eval = 400;
  int shapes_classes = 4;
  int shapes_h = 64;
  int shapes_w = 64;

  void validate() const;
  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& doc);
};

// "a.b.c=value" into the JSON document; the value is parsed as a JSON literal
// when possible and kept as a string otherwise.
void apply_override(nlohmann::json& doc, const std::string& assignment);

RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides);

}  // namespace regioncl
