#include "polyadapt/config.hpp"

#include <algorithm>

#include "polyadapt/error.hpp"

namespace polyadapt {

namespace {

template <class T>
void read_key(const Json& j, const char* key, T& out, const std::string& where) {
  const auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->get<T>();
  } catch (const Json::exception&) {
    throw DataError(where + ": bad value for '" + key + "'");
  }
}

void require_object(const Json& j, const std::string& where) {
  if (!j.is_object()) throw DataError(where + ": expected a JSON object");
}

}  // namespace

void reject_unknown_keys(const Json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    const bool known = std::any_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; });
    if (!known) throw DataError(where + ": unknown key '" + key + "'");
  }
}

Json to_json(const EncoderConfig& c) {
  return {{"n_layers", c.n_layers}, {"hidden", c.hidden},         {"heads", c.heads},
          {"ff", c.ff},             {"vocab_size", c.vocab_size}, {"max_len", c.max_len}};
}

EncoderConfig encoder_config_from_json(const Json& j, EncoderConfig c) {
  const std::string where = "encoder config";
  require_object(j, where);
  reject_unknown_keys(j, {"n_layers", "hidden", "heads", "ff", "vocab_size", "max_len"}, where);
  read_key(j, "n_layers", c.n_layers, where);
  read_key(j, "hidden", c.hidden, where);
  read_key(j, "heads", c.heads, where);
  read_key(j, "ff", c.ff, where);
  read_key(j, "vocab_size", c.vocab_size, where);
  read_key(j, "max_len", c.max_len, where);
  c.validate();
  return c;
}

Json to_json(const ModelConfig& c) {
  return {{"encoder", to_json(c.encoder)},
          {"mode", to_string(c.mode)},
          {"reduction_factor", c.reduction_factor},
          {"lang_dim", c.lang_dim},
          {"feature_dim", c.feature_dim},
          {"freeze_encoder", c.freeze_encoder},
          {"uniform_langvec_fallback", c.uniform_langvec_fallback},
          {"seed", c.seed}};
}

ModelConfig model_config_from_json(const Json& j, ModelConfig c) {
  const std::string where = "model config";
  require_object(j, where);
  reject_unknown_keys(j,
                      {"encoder", "mode", "reduction_factor", "lang_dim", "feature_dim", "freeze_encoder",
                       "uniform_langvec_fallback", "seed"},
                      where);
  if (j.contains("encoder")) c.encoder = encoder_config_from_json(j.at("encoder"), c.encoder);
  std::string mode = to_string(c.mode);
  read_key(j, "mode", mode, where);
  c.mode = parse_model_mode(mode);
  read_key(j, "reduction_factor", c.reduction_factor, where);
  read_key(j, "lang_dim", c.lang_dim, where);
  read_key(j, "feature_dim", c.feature_dim, where);
  read_key(j, "freeze_encoder", c.freeze_encoder, where);
  read_key(j, "uniform_langvec_fallback", c.uniform_langvec_fallback, where);
  read_key(j, "seed", c.seed, where);
  return c;
}

Json to_json(const MlmConfig& c) {
  return {{"mask_rate", c.mask_rate}, {"steps", c.steps}, {"lr", c.lr}, {"batch_size", c.batch_size}, {"seed", c.seed}};
}

MlmConfig mlm_config_from_json(const Json& j, MlmConfig c) {
  const std::string where = "mlm config";
  require_object(j, where);
  reject_unknown_keys(j, {"mask_rate", "steps", "lr", "batch_size", "seed"}, where);
  read_key(j, "mask_rate", c.mask_rate, where);
  read_key(j, "steps", c.steps, where);
  read_key(j, "lr", c.lr, where);
  read_key(j, "batch_size", c.batch_size, where);
  read_key(j, "seed", c.seed, where);
  return c;
}

Json to_json(const TrainConfig& c) {
  return {{"mode", to_string(c.mode)}, {"lr", c.lr},     {"epochs", c.epochs},
          {"batch_size", c.batch_size}, {"seed", c.seed}, {"reduction_factor", c.reduction_factor},
          {"sources", c.sources}};
}

TrainConfig train_config_from_json(const Json& j, TrainConfig c) {
  const std::string where = "train config";
  require_object(j, where);
  reject_unknown_keys(j, {"mode", "lr", "epochs", "batch_size", "seed", "reduction_factor", "sources"}, where);
  std::string mode = to_string(c.mode);
  read_key(j, "mode", mode, where);
  c.mode = parse_model_mode(mode);
  read_key(j, "lr", c.lr, where);
  read_key(j, "epochs", c.epochs, where);
  read_key(j, "batch_size", c.batch_size, where);
  read_key(j, "seed", c.seed, where);
  read_key(j, "reduction_factor", c.reduction_factor, where);
  read_key(j, "sources", c.sources, where);
  return c;
}

Json to_json(const EmConfig& c) {
  return {{"steps", c.steps},
          {"lr", c.lr},
          {"init", to_string(c.init)},
          {"tie", to_string(c.tie)},
          {"path", c.path == EmPath::zgul ? "zgul" : "ensemble"}};
}

EmConfig em_config_from_json(const Json& j, EmConfig c) {
  const std::string where = "em config";
  require_object(j, where);
  reject_unknown_keys(j, {"steps", "lr", "init", "tie", "path"}, where);
  read_key(j, "steps", c.steps, where);
  read_key(j, "lr", c.lr, where);
  std::string init = to_string(c.init), tie = to_string(c.tie), path = c.path == EmPath::zgul ? "zgul" : "ensemble";
  read_key(j, "init", init, where);
  read_key(j, "tie", tie, where);
  read_key(j, "path", path, where);
  c.init = parse_em_init(init);
  c.tie = parse_em_tie(tie);
  if (path != "zgul" && path != "ensemble") throw DataError(where + ": unknown path '" + path + "'");
  c.path = path == "zgul" ? EmPath::zgul : EmPath::ensemble;
  return c;
}

Json to_json(const FewShotConfig& c) {
  return {{"n_examples", c.n_examples}, {"lr", c.lr}, {"epochs", c.epochs}, {"batch_size", c.batch_size},
          {"seed", c.seed}};
}

FewShotConfig few_shot_config_from_json(const Json& j, FewShotConfig c) {
  const std::string where = "few-shot config";
  require_object(j, where);
  reject_unknown_keys(j, {"n_examples", "lr", "epochs", "batch_size", "seed"}, where);
  read_key(j, "n_examples", c.n_examples, where);
  read_key(j, "lr", c.lr, where);
  read_key(j, "epochs", c.epochs, where);
  read_key(j, "batch_size", c.batch_size, where);
  read_key(j, "seed", c.seed, where);
  return c;
}

Json to_json(const LabelMap& m) { return {{"scheme", std::string(to_string(m.scheme()))}, {"tags", m.tags()}}; }

LabelMap label_map_from_json(const Json& j) {
  require_object(j, "label map");
  try {
    return LabelMap(j.at("tags").get<std::vector<std::string>>(), parse_scheme(j.at("scheme").get<std::string>()));
  } catch (const Json::exception& e) {
    throw DataError(std::string("label map: ") + e.what());
  }
}

}  // namespace polyadapt
