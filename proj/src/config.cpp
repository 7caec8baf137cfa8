#include "regioncl/config.hpp"

#include <fstream>
#include <set>

namespace regioncl {

namespace {

using nlohmann::json;

// Pulls known keys out of one JSON object and rejects everything it was never
// asked about, so config typos fail loudly.
class Section {
 public:
  Section(const json& j, std::string prefix) : j_(j), prefix_(std::move(prefix)) {
    if (!j_.is_object())
      throw std::invalid_argument("config: " + (prefix_.empty() ? "document" : prefix_) +
                                  " must be a JSON object");
  }

  template <typename T>
  void get(const char* key, T& into) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      into = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw std::invalid_argument("config: bad value type for key \"" + qualify(key) + "\"");
    }
  }

  bool has(const char* key) {
    seen_.insert(key);
    return j_.contains(key);
  }

  const json* sub(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  void finish() const {
    for (const auto& [key, value] : j_.items())
      if (!seen_.count(key))
        throw std::invalid_argument("config: unknown key \"" + qualify(key) + "\"");
  }

  std::string qualify(const std::string& key) const {
    return prefix_.empty() ? key : prefix_ + "." + key;
  }

 private:
  const json& j_;
  std::string prefix_;
  std::set<std::string> seen_;
};

std::string pairing_name(PairingForm f) {
  return f == PairingForm::adjacent ? "adjacent" : "half-shift";
}

PairingForm pairing_from_name(const std::string& name) {
  if (name == "adjacent") return PairingForm::adjacent;
  if (name == "half-shift") return PairingForm::half_shift;
  throw std::invalid_argument("config: unknown pairing \"" + name +
                              "\"; valid: adjacent, half-shift");
}

}  // namespace

void RunConfig::validate() const {
  if (steps < 0) throw std::invalid_argument("config: steps must be >= 0");
  if (batch_size <= 0 || batch_size % 2 != 0)
    throw std::invalid_argument("config: batch_size must be positive and even");
  if (checkpoint_every < 0) throw std::invalid_argument("config: checkpoint_every must be >= 0");
  if (output_dir.empty()) throw std::invalid_argument("config: output_dir must not be empty");
  if (dataset != "shapes" && dataset.rfind("cifar10:", 0) != 0)
    throw std::invalid_argument("config: dataset must be \"shapes\" or \"cifar10:<path>\"");
  const bool momentum_method =
      method == Method::regioncl_m || method == Method::moco_baseline;
  if (momentum_method && queue_capacity <= 0)
    throw std::invalid_argument("config: queue.capacity must be positive");
  if (!(model_momentum_m >= 0 && model_momentum_m <= 1))
    throw std::invalid_argument("config: model.momentum_m must be in [0,1]");
  if (!(optim_momentum >= 0 && optim_momentum <= 1))
    throw std::invalid_argument("config: optim.momentum must be in [0,1]");
  if (weight_decay < 0) throw std::invalid_argument("config: optim.weight_decay must be >= 0");
  if (!(pipe.lr_base > 0)) throw std::invalid_argument("config: optim.lr_base must be positive");
  if (shapes_n_train <= 0 || shapes_n_eval <= 0)
    throw std::invalid_argument("config: shapes set sizes must be positive");
  pipe.aug.validate();
  pipe.loss.validate();
  pipe.swap.validate();  // image size was synced to the augmented output size
}

json RunConfig::to_json() const {
  json j;
  j["method"] = method_name(method);
  j["dataset"] = dataset;
  j["steps"] = steps;
  j["batch_size"] = batch_size;
  j["seed"] = seed;
  j["output_dir"] = output_dir;
  j["checkpoint_every"] = checkpoint_every;
  j["queue"] = {{"capacity", queue_capacity}, {"warm_start", queue_warm_start}};
  j["loss"] = {{"temperature", pipe.loss.temperature},
               {"use_paste", pipe.loss.use_paste},
               {"use_canvas", pipe.loss.use_canvas},
               {"use_intra_negative", pipe.loss.use_intra_negative}};
  j["swap"] = {{"ratio", pipe.swap.ratio},
               {"c_lower", pipe.swap.c_lower},
               {"c_upper", pipe.swap.c_upper}};
  j["aug"] = {{"crop_min_frac", pipe.aug.crop_min_frac},
              {"crop_max_frac", pipe.aug.crop_max_frac},
              {"aspect_min", pipe.aug.aspect_min},
              {"aspect_max", pipe.aug.aspect_max},
              {"out_h", pipe.aug.out_h},
              {"out_w", pipe.aug.out_w},
              {"p_flip", pipe.aug.p_flip},
              {"p_jitter", pipe.aug.p_jitter},
              {"p_grayscale", pipe.aug.p_grayscale},
              {"p_blur", pipe.aug.p_blur},
              {"jitter_brightness", pipe.aug.jitter_brightness},
              {"jitter_contrast", pipe.aug.jitter_contrast},
              {"jitter_saturation", pipe.aug.jitter_saturation}};
  j["optim"] = {{"lr_base", pipe.lr_base},
                {"momentum", optim_momentum},
                {"weight_decay", weight_decay}};
  j["model"] = {{"momentum_m", model_momentum_m}};
  j["pairing"] = pairing_name(pipe.pairing);
  j["symmetrize_s"] = pipe.symmetrize_s;
  j["shapes"] = {{"n_train", shapes_n_train},
                 {"n_eval", shapes_n_eval},
                 {"num_classes", shapes_classes},
                 {"h", shapes_h},
                 {"w", shapes_w}};
  return j;
}

RunConfig RunConfig::from_json(const json& doc) {
  RunConfig cfg;
  Section root(doc, "");

  std::string method_str = method_name(cfg.method);
  root.get("method", method_str);
  cfg.method = method_from_name(method_str);
  root.get("dataset", cfg.dataset);
  root.get("steps", cfg.steps);
  root.get("batch_size", cfg.batch_size);
  root.get("seed", cfg.seed);
  root.get("output_dir", cfg.output_dir);
  root.get("checkpoint_every", cfg.checkpoint_every);

  const bool momentum_method =
      cfg.method == Method::regioncl_m || cfg.method == Method::moco_baseline;
  if (const json* q = root.sub("queue")) {
    if (!momentum_method)
      throw std::invalid_argument(
          "config: section \"queue\" only applies to queue-based methods (got " + method_str +
          ")");
    Section s(*q, "queue");
    s.get("capacity", cfg.queue_capacity);
    s.get("warm_start", cfg.queue_warm_start);
    s.finish();
  }
  if (const json* l = root.sub("loss")) {
    Section s(*l, "loss");
    s.get("temperature", cfg.pipe.loss.temperature);
    s.get("use_paste", cfg.pipe.loss.use_paste);
    s.get("use_canvas", cfg.pipe.loss.use_canvas);
    s.get("use_intra_negative", cfg.pipe.loss.use_intra_negative);
    s.finish();
  }
  if (const json* w = root.sub("swap")) {
    Section s(*w, "swap");
    s.get("ratio", cfg.pipe.swap.ratio);
    s.get("c_lower", cfg.pipe.swap.c_lower);
    s.get("c_upper", cfg.pipe.swap.c_upper);
    s.finish();
  }
  if (const json* a = root.sub("aug")) {
    Section s(*a, "aug");
    s.get("crop_min_frac", cfg.pipe.aug.crop_min_frac);
    s.get("crop_max_frac", cfg.pipe.aug.crop_max_frac);
    s.get("aspect_min", cfg.pipe.aug.aspect_min);
    s.get("aspect_max", cfg.pipe.aug.aspect_max);
    s.get("out_h", cfg.pipe.aug.out_h);
    s.get("out_w", cfg.pipe.aug.out_w);
    s.get("p_flip", cfg.pipe.aug.p_flip);
    s.get("p_jitter", cfg.pipe.aug.p_jitter);
    s.get("p_grayscale", cfg.pipe.aug.p_grayscale);
    s.get("p_blur", cfg.pipe.aug.p_blur);
    s.get("jitter_brightness", cfg.pipe.aug.jitter_brightness);
    s.get("jitter_contrast", cfg.pipe.aug.jitter_contrast);
    s.get("jitter_saturation", cfg.pipe.aug.jitter_saturation);
    s.finish();
  }
  if (const json* o = root.sub("optim")) {
    Section s(*o, "optim");
    s.get("lr_base", cfg.pipe.lr_base);
    s.get("momentum", cfg.optim_momentum);
    s.get("weight_decay", cfg.weight_decay);
    s.finish();
  }
  if (const json* m = root.sub("model")) {
    Section s(*m, "model");
    s.get("momentum_m", cfg.model_momentum_m);
    s.finish();
  }
  std::string pairing_str = pairing_name(cfg.pipe.pairing);
  root.get("pairing", pairing_str);
  cfg.pipe.pairing = pairing_from_name(pairing_str);
  root.get("symmetrize_s", cfg.pipe.symmetrize_s);
  if (const json* sh = root.sub("shapes")) {
    Section s(*sh, "shapes");
    s.get("n_train", cfg.shapes_n_train);
    s.get("n_eval", cfg.shapes_n_eval);
    s.get("num_classes", cfg.shapes_classes);
    s.get("h", cfg.shapes_h);
    s.get("w", cfg.shapes_w);
    s.finish();
  }
  root.finish();

  // the baselines are the region-toggles-off reductions
  if (cfg.method == Method::moco_baseline || cfg.method == Method::simsiam_baseline) {
    cfg.pipe.loss.use_paste = false;
    cfg.pipe.loss.use_canvas = false;
  }
  // regions are sampled on the augmented views, so the grids must agree
  cfg.pipe.swap.image_h = cfg.pipe.aug.out_h;
  cfg.pipe.swap.image_w = cfg.pipe.aug.out_w;
  cfg.validate();
  return cfg;
}

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw std::invalid_argument("override \"" + assignment + "\" is not of the form key=value");
  const std::string path = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);

  json value;
  try {
    value = json::parse(raw);
  } catch (const json::exception&) {
    value = raw;  // unquoted strings arrive as-is
  }

  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = path.find('.', start);
    const std::string key = path.substr(start, dot - start);
    if (key.empty())
      throw std::invalid_argument("override \"" + assignment + "\" has an empty path segment");
    if (dot == std::string::npos) {
      (*node)[key] = value;
      return;
    }
    node = &(*node)[key];
    start = dot + 1;
  }
}

RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw std::invalid_argument("config: " + path + " is not valid JSON: " + e.what());
  }
  for (const auto& o : overrides) apply_override(doc, o);
  return RunConfig::from_json(doc);
}

}  // namespace regioncl
