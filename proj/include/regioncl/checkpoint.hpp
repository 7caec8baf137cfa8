#pragma once

#include "regioncl/model.hpp"

#include <string>

namespace regioncl {

std::string method_name(Method m);
Method method_from_name(const std::string& name);

// A checkpoint is a directory holding manifest.json plus params.bin, a single
// little-endian float32 blob. Entries appear in definition order and include
// the batchnorm running statistics and the momentum shadow parameters.
void save_checkpoint(ModelState<float>& model, const std::string& dir);

// Rebuilds the model described by the manifest (shapes must match the current
// architecture) and fills in every tensor and buffer.
ModelState<float> load_checkpoint(const std::string& dir);

}  // namespace regioncl
