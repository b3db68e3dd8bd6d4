#include "denc/encoder.hpp"

#include <cmath>

#include "denc/parallel.hpp"

namespace denc {

namespace {

void fill_normal(TensorF& t, uint64_t seed, const std::string& name, float stddev) {
  Fnv1a h;
  h.update(name);
  Rng rng(mix_seed(seed, h.value()));
  for (float& v : t.data) v = stddev * static_cast<float>(rng.next_normal());
}

}  // namespace

ParamMap init_encoder_params(const EncoderConfig& cfg, uint64_t seed) {
  cfg.validate();
  const int64_t d = cfg.model_dim;
  ParamMap p;
  auto normal = [&](const std::string& name, std::vector<int64_t> shape) {
    TensorF t(std::move(shape));
    fill_normal(t, seed, name, 0.02f);
    p.emplace(name, std::move(t));
  };
  auto constant = [&](const std::string& name, std::vector<int64_t> shape, float value) {
    p.emplace(name, TensorF(std::move(shape), value));
  };

  normal("tok_emb", {cfg.vocab_size, d});
  normal("pos_emb", {cfg.max_len(), d});
  for (int64_t l = 0; l < cfg.num_layers; ++l) {
    const std::string lp = "layer" + std::to_string(l) + ".";
    for (const char* w : {"wq", "wk", "wv", "wo"}) normal(lp + w, {d, d});
    for (const char* b : {"bq", "bk", "bv", "bo"}) constant(lp + b, {d}, 0.0f);
    constant(lp + "ln1.g", {d}, 1.0f);
    constant(lp + "ln1.b", {d}, 0.0f);
    constant(lp + "ln2.g", {d}, 1.0f);
    constant(lp + "ln2.b", {d}, 0.0f);
    normal(lp + "ffn.w1", {d, cfg.ffn_dim});
    constant(lp + "ffn.b1", {cfg.ffn_dim}, 0.0f);
    normal(lp + "ffn.w2", {cfg.ffn_dim, d});
    constant(lp + "ffn.b2", {d}, 0.0f);
  }
  normal("proj.w", {d, cfg.output_dim});
  constant("proj.b", {cfg.output_dim}, 0.0f);
  return p;
}

TensorF encode_text(const ParamMap& params, const EncoderConfig& cfg, const TokenSequence& seq) {
  TapeF tape;
  BoundParams<float> bound = bind_params(tape, params, /*requires_grad=*/false);
  Val emb = encoder_forward(tape, bound, cfg, seq);
  const TensorF& row = tape.value(emb);
  TensorF out({cfg.output_dim});
  out.data = row.data;
  return out;
}

std::vector<TensorF> encode_batch(const ParamMap& params, const EncoderConfig& cfg,
                                  const std::vector<TokenSequence>& batch) {
  // One tape per chunk bounds memory; chunks are independent and each
  // writes only its own output slots.
  constexpr size_t kChunk = 64;
  std::vector<TensorF> out(batch.size());
  const size_t chunks = (batch.size() + kChunk - 1) / kChunk;
  parallel_for(chunks, [&](size_t c) {
    const size_t begin = c * kChunk;
    const size_t end = std::min(begin + kChunk, batch.size());
    TapeF tape;
    BoundParams<float> bound = bind_params(tape, params, /*requires_grad=*/false);
    for (size_t i = begin; i < end; ++i) {
      Val emb = encoder_forward(tape, bound, cfg, batch[i]);
      const TensorF& row = tape.value(emb);
      TensorF v({cfg.output_dim});
      v.data = row.data;
      out[i] = std::move(v);
    }
  });
  return out;
}

float similarity(const TensorF& q, const TensorF& d) {
  if (!q.same_shape(d)) {
    throw std::runtime_error("similarity: dimension mismatch " + shape_str(q.shape) + " vs " +
                             shape_str(d.shape));
  }
  float dot = 0.0f;
  for (size_t i = 0; i < q.data.size(); ++i) dot += q.data[i] * d.data[i];
  return dot;
}

}  // namespace denc
