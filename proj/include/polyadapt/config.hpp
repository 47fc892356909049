#pragma once

#include <json.hpp>

#include "polyadapt/em.hpp"
#include "polyadapt/encoder.hpp"
#include "polyadapt/mlm.hpp"
#include "polyadapt/model.hpp"
#include "polyadapt/training.hpp"

namespace polyadapt {

using Json = nlohmann::json;

// Missing keys keep their defaults; unknown keys are rejected.
Json to_json(const EncoderConfig& c);
EncoderConfig encoder_config_from_json(const Json& j, EncoderConfig base = {});
Json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const Json& j, ModelConfig base = {});
Json to_json(const MlmConfig& c);
MlmConfig mlm_config_from_json(const Json& j, MlmConfig base = {});
Json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const Json& j, TrainConfig base = {});
Json to_json(const EmConfig& c);
EmConfig em_config_from_json(const Json& j, EmConfig base = {});
Json to_json(const FewShotConfig& c);
FewShotConfig few_shot_config_from_json(const Json& j, FewShotConfig base = {});

Json to_json(const LabelMap& m);
LabelMap label_map_from_json(const Json& j);

// Throws DataError naming the key if `j` holds keys outside `allowed`.
void reject_unknown_keys(const Json& j, std::initializer_list<const char*> allowed, const std::string& where);

}  // namespace polyadapt
