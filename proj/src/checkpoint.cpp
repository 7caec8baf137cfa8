#include "regioncl/checkpoint.hpp"

#include <json.hpp>

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>

namespace regioncl {

namespace {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little,
              "checkpoint blob I/O assumes a little-endian host");

struct Entry {
  std::string name;
  Shape shape;
  std::vector<float>* data_vec = nullptr;  // buffers
  float* data_ptr = nullptr;               // params
  std::int64_t count = 0;
};

std::vector<Entry> collect_entries(ModelState<float>& model) {
  std::vector<Entry> entries;
  visit_params<float>(model, [&](const std::string& name, Tensor<float>& t) {
    entries.push_back({name, t.shape(), nullptr, t.data(), t.numel()});
  });
  visit_buffers<float>(model, [&](const std::string& name, std::vector<float>& v) {
    entries.push_back({name, {static_cast<int>(v.size())}, &v, nullptr,
                       static_cast<std::int64_t>(v.size())});
  });
  return entries;
}

}  // namespace

std::string method_name(Method m) {
  switch (m) {
    case Method::regioncl_m:
      return "regioncl-m";
    case Method::regioncl_s:
      return "regioncl-s";
    case Method::moco_baseline:
      return "moco-baseline";
    case Method::simsiam_baseline:
      return "simsiam-baseline";
  }
  throw std::logic_error("method_name: unknown method");
}

Method method_from_name(const std::string& name) {
  if (name == "regioncl-m") return Method::regioncl_m;
  if (name == "regioncl-s") return Method::regioncl_s;
  if (name == "moco-baseline") return Method::moco_baseline;
  if (name == "simsiam-baseline") return Method::simsiam_baseline;
  throw std::invalid_argument(
      "unknown method \"" + name +
      "\"; valid: regioncl-m, regioncl-s, moco-baseline, simsiam-baseline");
}

void save_checkpoint(ModelState<float>& model, const std::string& dir) {
  std::filesystem::create_directories(dir);
  auto entries = collect_entries(model);

  json manifest;
  manifest["format"] = "regioncl-checkpoint-v1";
  manifest["method"] = method_name(model.method);
  manifest["momentum_m"] = model.momentum_m;
  manifest["blob"] = "params.bin";
  json list = json::array();
  std::int64_t offset = 0;
  for (const auto& e : entries) {
    json item;
    item["name"] = e.name;
    item["shape"] = e.shape;
    item["offset"] = offset;
    list.push_back(std::move(item));
    offset += e.count * static_cast<std::int64_t>(sizeof(float));
  }
  manifest["entries"] = std::move(list);

  std::ofstream mf(dir + "/manifest.json");
  if (!mf) throw std::runtime_error("save_checkpoint: cannot write manifest in " + dir);
  mf << manifest.dump(2) << "\n";

  std::ofstream blob(dir + "/params.bin", std::ios::binary);
  if (!blob) throw std::runtime_error("save_checkpoint: cannot write blob in " + dir);
  for (const auto& e : entries) {
    const float* src = e.data_ptr ? e.data_ptr : e.data_vec->data();
    blob.write(reinterpret_cast<const char*>(src),
               e.count * static_cast<std::int64_t>(sizeof(float)));
  }
  if (!blob) throw std::runtime_error("save_checkpoint: short write in " + dir);
}

ModelState<float> load_checkpoint(const std::string& dir) {
  std::ifstream mf(dir + "/manifest.json");
  if (!mf) throw std::runtime_error("load_checkpoint: cannot open " + dir + "/manifest.json");
  json manifest = json::parse(mf);
  if (manifest.value("format", "") != "regioncl-checkpoint-v1")
    throw std::runtime_error("load_checkpoint: unrecognized manifest format");

  // architecture is implied by the method; weights overwrite the fresh init
  Rng rng(0);
  auto model = build_model<float>(method_from_name(manifest.at("method").get<std::string>()),
                                  manifest.value("momentum_m", 0.999), rng);
  auto entries = collect_entries(model);
  const auto& listed = manifest.at("entries");
  if (listed.size() != entries.size())
    throw std::runtime_error("load_checkpoint: manifest lists " + std::to_string(listed.size()) +
                             " entries, model expects " + std::to_string(entries.size()));

  std::ifstream blob(dir + "/" + manifest.value("blob", "params.bin"), std::ios::binary);
  if (!blob) throw std::runtime_error("load_checkpoint: cannot open blob in " + dir);
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& item = listed.at(i);
    const auto name = item.at("name").get<std::string>();
    const auto shape = item.at("shape").get<Shape>();
    if (name != entries[i].name)
      throw std::runtime_error("load_checkpoint: entry " + std::to_string(i) + " is \"" + name +
                               "\", model expects \"" + entries[i].name + "\"");
    if (shape != entries[i].shape)
      throw std::runtime_error("load_checkpoint: shape mismatch for \"" + name + "\": manifest " +
                               shape_str(shape) + ", model " + shape_str(entries[i].shape));
    blob.seekg(item.at("offset").get<std::int64_t>());
    float* dst = entries[i].data_ptr ? entries[i].data_ptr : entries[i].data_vec->data();
    blob.read(reinterpret_cast<char*>(dst),
              entries[i].count * static_cast<std::int64_t>(sizeof(float)));
    if (!blob)
      throw std::runtime_error("load_checkpoint: blob truncated while reading \"" + name + "\"");
  }
  return model;
}

}  // namespace regioncl
