#include "smorm/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "smorm/error.hpp"

namespace smorm {

using nlohmann::json;

std::string checkpoint_to_string(const SmormModel& model) {
  json j;
  j["schema"] = kCheckpointSchema;
  const auto& b = model.backbone();
  j["backbone"] = {{"input_dim", b.input_dim},
                   {"hidden", b.hidden},
                   {"output_dim", b.output_dim},
                   {"activation", to_string(b.activation)}};
  j["K"] = model.K();
  j["step"] = model.step;
  j["rng_state"] = model.rng_state;
  j["loss"] = {{"mode", to_string(model.loss.mode)},
               {"lambda_multi", model.loss.lambda_multi},
               {"margin", model.loss.margin},
               {"label_smooth_eps", model.loss.label_smooth_eps}};
  if (model.m_standardization) {
    const auto& s = *model.m_standardization;
    j["m_standardization"] = {{"mean_f", s.mean_f}, {"sd_f", s.sd_f}, {"mean_l", s.mean_l}, {"sd_l", s.sd_l}};
  } else {
    j["m_standardization"] = nullptr;
  }
  json tensors = json::array();
  for (const auto& [name, m] : model.params()) {
    if (!all_finite(m.data())) throw NonFiniteLoss("checkpoint: tensor '" + name + "' is not finite");
    tensors.push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}, {"data", m.storage()}});
  }
  j["tensors"] = std::move(tensors);
  return j.dump(1) + "\n";
}

SmormModel checkpoint_from_string(const std::string& text) {
  try {
    const json j = json::parse(text);
    if (!j.is_object() || !j.contains("schema") || j.at("schema") != kCheckpointSchema)
      throw SchemaMismatch("checkpoint schema is not " + std::string(kCheckpointSchema));
    MlpConfig cfg;
    const auto& b = j.at("backbone");
    cfg.input_dim = b.at("input_dim").get<std::size_t>();
    cfg.hidden = b.at("hidden").get<std::vector<std::size_t>>();
    cfg.output_dim = b.at("output_dim").get<std::size_t>();
    cfg.activation = parse_activation(b.at("activation").get<std::string>());
    const auto K = j.at("K").get<std::size_t>();

    Rng dummy(0);
    SmormModel model(cfg, K, dummy, false);
    model.step = j.at("step").get<std::size_t>();
    model.rng_state = j.at("rng_state").get<std::string>();
    const auto& l = j.at("loss");
    model.loss.mode = parse_training_mode(l.at("mode").get<std::string>());
    model.loss.lambda_multi = l.at("lambda_multi").get<double>();
    model.loss.margin = l.at("margin").get<double>();
    model.loss.label_smooth_eps = l.at("label_smooth_eps").get<double>();
    if (!j.at("m_standardization").is_null()) {
      const auto& s = j.at("m_standardization");
      model.m_standardization = HeadStandardization{s.at("mean_f").get<double>(), s.at("sd_f").get<double>(),
                                                     s.at("mean_l").get<double>(), s.at("sd_l").get<double>()};
    }

    ad::ParamStore params;
    for (const auto& t : j.at("tensors")) {
      const auto rows = t.at("rows").get<std::size_t>();
      const auto cols = t.at("cols").get<std::size_t>();
      auto data = t.at("data").get<Vec>();
      if (data.size() != rows * cols) throw SchemaMismatch("checkpoint tensor size does not match its shape");
      params.add(t.at("name").get<std::string>(), Mat(rows, cols, std::move(data)));
    }
    // Shapes must agree with a freshly built model of the recorded config;
    // gating tensors are optional.
    ad::ParamStore expected = model.params();
    if (params.contains("gate.W0")) {
      Rng g(0);
      model.add_gating(g);
      expected = model.params();
    }
    if (!params.congruent(expected)) throw SchemaMismatch("checkpoint tensors do not match the recorded architecture");
    model.params() = std::move(params);
    return model;
  } catch (const SchemaMismatch&) {
    throw;
  } catch (const std::exception& e) {
    throw SchemaMismatch(std::string("unreadable checkpoint: ") + e.what());
  }
}

void save_checkpoint(const std::string& path, const SmormModel& model) {
  write_file_atomic(path, checkpoint_to_string(model));
}

SmormModel load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return checkpoint_from_string(ss.str());
}

}  // namespace smorm
