#include "denc/model.hpp"

#include <fstream>
#include <stdexcept>
#include <utility>

#include "json.hpp"

namespace denc {

namespace {

constexpr uint32_t kModelFormatVersion = 1;

bool starts_with(const std::string& s, const std::string& prefix) {
  return s.size() >= prefix.size() && s.compare(0, prefix.size(), prefix) == 0;
}

void fill_normal(TensorF& t, uint64_t seed, const std::string& name, float stddev) {
  Fnv1a h;
  h.update(name);
  Rng rng(mix_seed(seed, h.value()));
  for (float& v : t.data) v = stddev * static_cast<float>(rng.next_normal());
}

nlohmann::json model_meta(const DualEncoderModel& m) {
  return nlohmann::json{{"format", "dual-encoder"},
                        {"format_version", kModelFormatVersion},
                        {"num_layers", m.config.num_layers},
                        {"model_dim", m.config.model_dim},
                        {"num_heads", m.config.num_heads},
                        {"ffn_dim", m.config.ffn_dim},
                        {"output_dim", m.config.output_dim},
                        {"max_len_query", m.config.max_len_query},
                        {"max_len_doc", m.config.max_len_doc},
                        {"vocab_size", m.config.vocab_size},
                        {"shared_weights", m.config.shared_weights},
                        {"doc_num_layers", m.doc_num_layers},
                        {"attn_hidden", m.attn_hidden},
                        {"vocab_path", m.vocab_path}};
}

}  // namespace

bool DualEncoderModel::has_attention() const {
  for (const auto& [name, t] : params) {
    if (starts_with(name, kAttnPrefix)) return true;
  }
  return false;
}

ParamMap DualEncoderModel::subset(const std::string& prefix) const {
  ParamMap out;
  for (const auto& [name, t] : params) {
    if (starts_with(name, prefix) && name.size() > prefix.size()) {
      out.emplace(name.substr(prefix.size()), t);
    }
  }
  return out;
}

ParamMap init_attention_params(int64_t output_dim, int64_t hidden, uint64_t seed) {
  if (output_dim < 1 || hidden < 1) {
    throw std::runtime_error("attention net: dimensions must be >= 1");
  }
  ParamMap p;
  TensorF w1({2 * output_dim, hidden});
  fill_normal(w1, seed, "w1", 0.02f);
  TensorF w2({hidden, 1});
  fill_normal(w2, seed, "w2", 0.02f);
  p.emplace("w1", std::move(w1));
  p.emplace("b1", TensorF({int64_t{1}, hidden}, 0.0f));
  p.emplace("w2", std::move(w2));
  return p;
}

DualEncoderModel init_model(const EncoderConfig& cfg, uint64_t seed, bool with_attention,
                            int64_t attn_hidden) {
  cfg.validate();
  DualEncoderModel m;
  m.config = cfg;
  m.attn_hidden = attn_hidden;
  for (const auto& [name, t] : init_encoder_params(cfg, seed)) {
    m.params.emplace(DualEncoderModel::kQueryPrefix + name, t);
  }
  if (!cfg.shared_weights) {
    for (const auto& [name, t] : init_encoder_params(cfg, mix_seed(seed, 1))) {
      m.params.emplace(DualEncoderModel::kDocPrefix + name, t);
    }
  }
  if (with_attention) {
    for (const auto& [name, t] :
         init_attention_params(cfg.output_dim, attn_hidden, mix_seed(seed, 2))) {
      m.params.emplace(DualEncoderModel::kAttnPrefix + name, t);
    }
  }
  return m;
}

void save_model(const std::string& path, const DualEncoderModel& model) {
  const nlohmann::json meta = model_meta(model);
  save_params(path, model.params, meta.dump());
  const std::string sidecar_path = path + ".json";
  std::ofstream os(sidecar_path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open sidecar for writing: " + sidecar_path);
  os << meta.dump(2) << "\n";
  if (!os) throw std::runtime_error("failed writing sidecar: " + sidecar_path);
}

DualEncoderModel load_model(const std::string& path) {
  LoadedParams loaded = load_params(path);
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(loaded.meta_json);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("model " + path + ": bad metadata JSON: " + e.what());
  }
  DualEncoderModel m;
  try {
    if (meta.at("format").get<std::string>() != "dual-encoder") {
      throw std::runtime_error("not a dual-encoder checkpoint");
    }
    const auto version = meta.at("format_version").get<uint32_t>();
    if (version != kModelFormatVersion) {
      throw std::runtime_error("unsupported format_version " + std::to_string(version));
    }
    meta.at("num_layers").get_to(m.config.num_layers);
    meta.at("model_dim").get_to(m.config.model_dim);
    meta.at("num_heads").get_to(m.config.num_heads);
    meta.at("ffn_dim").get_to(m.config.ffn_dim);
    meta.at("output_dim").get_to(m.config.output_dim);
    meta.at("max_len_query").get_to(m.config.max_len_query);
    meta.at("max_len_doc").get_to(m.config.max_len_doc);
    meta.at("vocab_size").get_to(m.config.vocab_size);
    meta.at("shared_weights").get_to(m.config.shared_weights);
    meta.at("doc_num_layers").get_to(m.doc_num_layers);
    meta.at("attn_hidden").get_to(m.attn_hidden);
    meta.at("vocab_path").get_to(m.vocab_path);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("model " + path + ": metadata missing field: " + e.what());
  }
  m.config.validate();
  if (m.doc_num_layers < 0) {
    throw std::runtime_error("model " + path + ": doc_num_layers must be >= 0");
  }
  if (m.doc_num_layers > 0 && m.config.shared_weights) {
    throw std::runtime_error("model " + path +
                             ": shared weights cannot use a distinct document tower depth");
  }
  m.params = std::move(loaded.params);

  bool saw_query = false, saw_doc = false;
  for (const auto& [name, t] : m.params) {
    if (starts_with(name, DualEncoderModel::kQueryPrefix)) {
      saw_query = true;
    } else if (starts_with(name, DualEncoderModel::kDocPrefix)) {
      saw_doc = true;
    } else if (!starts_with(name, DualEncoderModel::kAttnPrefix)) {
      throw std::runtime_error("model " + path + ": unexpected parameter name: " + name);
    }
  }
  if (!saw_query) throw std::runtime_error("model " + path + ": no query tower parameters");
  if (!m.config.shared_weights && !saw_doc) {
    throw std::runtime_error("model " + path +
                             ": separate weights declared but no document tower parameters");
  }
  if (m.config.shared_weights && saw_doc) {
    throw std::runtime_error("model " + path +
                             ": shared weights declared but document tower parameters present");
  }
  return m;
}

uint64_t doc_params_hash(const DualEncoderModel& model) {
  return params_hash(model.doc_tower());
}

}  // namespace denc
