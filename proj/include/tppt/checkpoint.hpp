#pragma once

#include <string>
#include <vector>

#include "tppt/tensor.hpp"

namespace tppt {

// Model checkpoint file: magic "TPPT1", then per parameter the name length,
// name bytes, rank and dims as little-endian int64, followed by the row-major
// float64 values.
void save_checkpoint(const std::vector<const Parameter*>& params, const std::string& path);

// Loads into the given parameters, validating that names and shapes match the
// model configuration exactly. With `prefix` non-empty, only file entries
// whose name starts with the prefix are applied and all of those must match a
// model parameter; parameters outside the prefix keep their current values.
void load_checkpoint(std::vector<Parameter*>& params, const std::string& path,
                     const std::string& prefix = "");

} // namespace tppt
