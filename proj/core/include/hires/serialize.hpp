#pragma once

#include <map>
#include <string>

#include "hires/tensor.hpp"
#include "hires/vit.hpp"

namespace hires {

// Writes bytes to path via a temp file + rename so readers never observe a
// partially written file.
void atomic_write_file(const std::string& path, const std::string& bytes);

// Weight directory layout: one TNSR1 file per tensor plus manifest.json
// mapping tensor names to file names.
template <typename T>
void save_tensor_dir(const std::string& dir, const std::map<std::string, Tensor<T>>& tensors);

template <typename T>
std::map<std::string, Tensor<T>> load_tensor_dir(const std::string& dir);

std::string vit_config_to_json(const VitConfig& cfg);
VitConfig vit_config_from_json(const std::string& json_text);

}  // namespace hires
