#include "hires/serialize.hpp"

#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "hires/tensor_io.hpp"

namespace fs = std::filesystem;

namespace hires {

void atomic_write_file(const std::string& path, const std::string& bytes) {
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw std::runtime_error("write failed: " + tmp.string());
  }
  fs::rename(tmp, target);
}

namespace {

std::string sanitize_name(const std::string& name) {
  std::string out = name;
  for (char& c : out)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '-') c = '_';
  return out;
}

std::string read_text_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path);
  return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

}  // namespace

template <typename T>
void save_tensor_dir(const std::string& dir, const std::map<std::string, Tensor<T>>& tensors) {
  fs::create_directories(dir);
  nlohmann::json manifest;
  nlohmann::json entries;
  for (const auto& [name, t] : tensors) {
    const std::string file = sanitize_name(name) + ".tnsr";
    atomic_write_file((fs::path(dir) / file).string(), tensor_to_tnsr(t));
    entries[name] = file;
  }
  manifest["tensors"] = std::move(entries);
  atomic_write_file((fs::path(dir) / "manifest.json").string(), manifest.dump(2) + "\n");
}

template <typename T>
std::map<std::string, Tensor<T>> load_tensor_dir(const std::string& dir) {
  const nlohmann::json manifest =
      nlohmann::json::parse(read_text_file((fs::path(dir) / "manifest.json").string()));
  std::map<std::string, Tensor<T>> out;
  for (const auto& [name, file] : manifest.at("tensors").items())
    out[name] = read_tnsr_file<T>((fs::path(dir) / file.get<std::string>()).string());
  return out;
}

template void save_tensor_dir<float>(const std::string&, const std::map<std::string, Tensor<float>>&);
template void save_tensor_dir<double>(const std::string&, const std::map<std::string, Tensor<double>>&);
template std::map<std::string, Tensor<float>> load_tensor_dir<float>(const std::string&);
template std::map<std::string, Tensor<double>> load_tensor_dir<double>(const std::string&);

std::string vit_config_to_json(const VitConfig& cfg) {
  nlohmann::json j;
  j["input_size"] = cfg.input_size;
  j["patch_size"] = cfg.patch_size;
  j["channels"] = cfg.channels;
  j["dim"] = cfg.dim;
  j["depth"] = cfg.depth;
  j["heads"] = cfg.heads;
  j["adapter_layers"] = cfg.adapter_layers;
  j["mlp_ratio"] = cfg.mlp_ratio;
  return j.dump();
}

VitConfig vit_config_from_json(const std::string& json_text) {
  const nlohmann::json j = nlohmann::json::parse(json_text);
  VitConfig cfg;
  cfg.input_size = j.at("input_size").get<int64_t>();
  cfg.patch_size = j.at("patch_size").get<int64_t>();
  cfg.channels = j.value("channels", int64_t(3));
  cfg.dim = j.at("dim").get<int64_t>();
  cfg.depth = j.at("depth").get<int64_t>();
  cfg.heads = j.at("heads").get<int64_t>();
  cfg.adapter_layers.clear();
  for (const auto& l : j.at("adapter_layers")) cfg.adapter_layers.insert(l.get<int>());
  cfg.mlp_ratio = j.value("mlp_ratio", 4.0);
  cfg.validate();
  return cfg;
}

}  // namespace hires
