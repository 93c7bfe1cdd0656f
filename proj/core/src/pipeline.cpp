#include "hires/pipeline.hpp"

#include <json.hpp>

#include "hires/serialize.hpp"

namespace hires {

std::string pipeline_config_to_json(const PipelineConfig& cfg) {
  nlohmann::json j;
  j["vit"] = nlohmann::json::parse(vit_config_to_json(cfg.vit));
  j["sms_pool"] = cfg.sms_pool;
  j["sms_heads"] = cfg.sms_heads;
  j["sra_down_factor"] = cfg.sra_down_factor;
  j["max_slices"] = cfg.max_slices;
  j["use_separators"] = cfg.use_separators;
  return j.dump();
}

PipelineConfig pipeline_config_from_json(const std::string& json_text) {
  const nlohmann::json j = nlohmann::json::parse(json_text);
  PipelineConfig cfg;
  cfg.vit = vit_config_from_json(j.at("vit").dump());
  cfg.sms_pool = j.at("sms_pool").get<int64_t>();
  cfg.sms_heads = j.value("sms_heads", cfg.vit.heads);
  cfg.sra_down_factor = j.value("sra_down_factor", int64_t(2));
  cfg.max_slices = j.at("max_slices").get<int64_t>();
  cfg.use_separators = j.value("use_separators", true);
  cfg.validate();
  return cfg;
}

std::string toy_run_result_to_json(const ToyRunResult& r) {
  nlohmann::json j;
  j["with_sra"] = nlohmann::json::parse(entitygrid::report_to_json(r.with_sra));
  j["zero_sra"] = nlohmann::json::parse(entitygrid::report_to_json(r.zero_sra));
  j["loss_with"] = r.loss_with;
  j["loss_zero"] = r.loss_zero;
  j["classes"] = r.classes;
  j["direction_holds"] = r.direction_holds;
  return j.dump();
}

}  // namespace hires
