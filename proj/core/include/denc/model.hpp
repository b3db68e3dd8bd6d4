#pragma once

#include <cstdint>
#include <string>

#include "denc/checkpoint.hpp"
#include "denc/encoder.hpp"

namespace denc {

// A trainable bundle: query tower, document tower, and the optional
// attention scoring net, all in one flat ParamMap so a single optimizer
// can step everything. Names carry a tower prefix:
//   q.*     query tower (and document tower when weights are shared)
//   d.*     document tower (present only when shared_weights is false)
//   attn.*  attention pooling net (present only when initialized)
struct DualEncoderModel {
  static constexpr const char* kQueryPrefix = "q.";
  static constexpr const char* kDocPrefix = "d.";
  static constexpr const char* kAttnPrefix = "attn.";

  EncoderConfig config;
  // Document tower depth when it differs from the query tower (0 = same).
  // A distilled model pairs a shallow student query tower with the
  // teacher's deeper document tower.
  int64_t doc_num_layers = 0;
  int64_t attn_hidden = 32;
  std::string vocab_path;  // recorded for provenance, not opened by the loader
  ParamMap params;

  std::string doc_prefix() const { return config.shared_weights ? kQueryPrefix : kDocPrefix; }

  EncoderConfig doc_config() const {
    EncoderConfig c = config;
    if (doc_num_layers > 0) c.num_layers = doc_num_layers;
    return c;
  }

  bool has_attention() const;

  // Stripped-name copy of one tower's parameters, ready for encode_text
  // and encode_batch.
  ParamMap query_tower() const { return subset(kQueryPrefix); }
  ParamMap doc_tower() const { return subset(doc_prefix()); }
  ParamMap attention_net() const { return subset(kAttnPrefix); }

  ParamMap subset(const std::string& prefix) const;
};

// Scoring net a(q,d) = w2 . tanh(W1 [q;d] + b1): w1 [2M,H], b1 [1,H],
// w2 [H,1]. Same per-name draw streams as the encoder init.
ParamMap init_attention_params(int64_t output_dim, int64_t hidden, uint64_t seed);

// Fresh model. Query and document towers (when separate) draw from
// distinct streams of the same seed, so neither starts as a copy of the
// other.
DualEncoderModel init_model(const EncoderConfig& cfg, uint64_t seed, bool with_attention,
                            int64_t attn_hidden = 32);

// Writes the checkpoint at path with the configuration embedded as JSON
// metadata, plus a human-readable sidecar at path + ".json" with the same
// fields. The loader trusts only the embedded copy.
void save_model(const std::string& path, const DualEncoderModel& model);
DualEncoderModel load_model(const std::string& path);

// Hash of the document tower under stripped names. An index built from a
// model stays valid for any model whose document tower matches, which is
// what lets a distilled query encoder search a teacher-built index.
uint64_t doc_params_hash(const DualEncoderModel& model);

// Binds only entries under prefix, with the prefix stripped from the
// lookup names, so encoder_forward sees plain tower names.
template <typename S>
BoundParams<S> bind_tower(Tape<S>& tape, const std::map<std::string, Tensor<S>>& params,
                          const std::string& prefix, bool requires_grad) {
  BoundParams<S> bound;
  for (const auto& [name, t] : params) {
    if (name.size() > prefix.size() && name.compare(0, prefix.size(), prefix) == 0) {
      bound.leaves.emplace(name.substr(prefix.size()), tape.leaf(t, requires_grad, name));
    }
  }
  return bound;
}

// Harvests gradients from a bound tower back into prefixed names after
// backward.
template <typename S>
void collect_grads(const Tape<S>& tape, const BoundParams<S>& bound, const std::string& prefix,
                   std::map<std::string, Tensor<S>>& grads) {
  for (const auto& [name, v] : bound.leaves) {
    grads[prefix + name] = tape.grad(v);
  }
}

}  // namespace denc
