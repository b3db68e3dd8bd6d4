#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "denc/autodiff.hpp"
#include "denc/checkpoint.hpp"
#include "denc/rng.hpp"
#include "denc/serial.hpp"
#include "denc/tensor.hpp"
#include "denc/tokenizer.hpp"

namespace denc {

struct EncoderConfig {
  int64_t num_layers = 2;
  int64_t model_dim = 64;
  int64_t num_heads = 4;
  int64_t ffn_dim = 128;
  int64_t output_dim = 32;
  int64_t max_len_query = 16;
  int64_t max_len_doc = 75;
  int64_t vocab_size = 1000;
  bool shared_weights = true;

  int64_t max_len() const { return std::max(max_len_query, max_len_doc); }
  int64_t head_dim() const { return model_dim / num_heads; }

  void validate() const {
    if (num_layers < 1 || model_dim < 1 || num_heads < 1 || ffn_dim < 1 || output_dim < 1 ||
        max_len_query < 1 || max_len_doc < 1 || vocab_size < 1) {
      throw std::runtime_error("encoder config: all dimensions must be >= 1");
    }
    if (model_dim % num_heads != 0) {
      throw std::runtime_error("encoder config: model_dim " + std::to_string(model_dim) +
                               " not divisible by num_heads " + std::to_string(num_heads));
    }
    if (output_dim > model_dim) {
      throw std::runtime_error("encoder config: output_dim " + std::to_string(output_dim) +
                               " exceeds model_dim " + std::to_string(model_dim));
    }
  }
};

// One encoder tower's parameters, normal(0, 0.02) init for embeddings and
// weight matrices, zero biases, identity layernorm affine. Each tensor gets
// its own draw stream keyed by (seed, name), so adding parameters never
// shifts the others.
ParamMap init_encoder_params(const EncoderConfig& cfg, uint64_t seed);

// Parameters placed as leaves on a tape, looked up by name.
template <typename S>
struct BoundParams {
  std::map<std::string, Val> leaves;

  Val at(const std::string& name) const {
    auto it = leaves.find(name);
    if (it == leaves.end()) throw std::runtime_error("missing parameter: " + name);
    return it->second;
  }
};

template <typename S>
BoundParams<S> bind_params(Tape<S>& tape, const std::map<std::string, Tensor<S>>& params,
                           bool requires_grad) {
  BoundParams<S> bound;
  for (const auto& [name, t] : params) {
    bound.leaves.emplace(name, tape.leaf(t, requires_grad, name));
  }
  return bound;
}

// Post-layernorm transformer over the true-length prefix of the sequence.
// Pad positions are never looked up, so padding cannot influence the
// output. Returns the [1, M] unit-norm embedding node.
template <typename S>
Val encoder_forward(Tape<S>& tape, const BoundParams<S>& p, const EncoderConfig& cfg,
                    const TokenSequence& seq) {
  const int64_t T = seq.true_length;
  if (T < 1) throw std::runtime_error("encoder: empty token sequence");
  if (T > cfg.max_len()) {
    throw std::runtime_error("encoder: sequence length " + std::to_string(T) +
                             " exceeds configured max " + std::to_string(cfg.max_len()));
  }
  std::vector<int> tok_ids(seq.ids.begin(), seq.ids.begin() + T);
  std::vector<int> pos_ids(static_cast<size_t>(T));
  for (int64_t i = 0; i < T; ++i) pos_ids[static_cast<size_t>(i)] = static_cast<int>(i);

  Val x = tape.add(tape.embed_lookup(p.at("tok_emb"), tok_ids),
                   tape.embed_lookup(p.at("pos_emb"), pos_ids));

  const int64_t dh = cfg.head_dim();
  const S inv_sqrt_dh = S(1) / std::sqrt(static_cast<S>(dh));
  for (int64_t l = 0; l < cfg.num_layers; ++l) {
    const std::string lp = "layer" + std::to_string(l) + ".";
    Val q = tape.add(tape.matmul(x, p.at(lp + "wq")), p.at(lp + "bq"));
    Val k = tape.add(tape.matmul(x, p.at(lp + "wk")), p.at(lp + "bk"));
    Val v = tape.add(tape.matmul(x, p.at(lp + "wv")), p.at(lp + "bv"));
    std::vector<Val> heads;
    heads.reserve(static_cast<size_t>(cfg.num_heads));
    for (int64_t h = 0; h < cfg.num_heads; ++h) {
      Val qh = tape.slice_cols(q, h * dh, (h + 1) * dh);
      Val kh = tape.slice_cols(k, h * dh, (h + 1) * dh);
      Val vh = tape.slice_cols(v, h * dh, (h + 1) * dh);
      Val scores = tape.scale(tape.matmul(qh, tape.transpose(kh)), inv_sqrt_dh);
      heads.push_back(tape.matmul(tape.softmax_rows(scores), vh));
    }
    Val attn = tape.add(tape.matmul(tape.concat_cols(heads), p.at(lp + "wo")), p.at(lp + "bo"));
    x = tape.add(tape.mul(tape.layernorm_rows(tape.add(x, attn)), p.at(lp + "ln1.g")),
                 p.at(lp + "ln1.b"));
    Val f = tape.add(
        tape.matmul(tape.relu(tape.add(tape.matmul(x, p.at(lp + "ffn.w1")), p.at(lp + "ffn.b1"))),
                    p.at(lp + "ffn.w2")),
        p.at(lp + "ffn.b2"));
    x = tape.add(tape.mul(tape.layernorm_rows(tape.add(x, f)), p.at(lp + "ln2.g")),
                 p.at(lp + "ln2.b"));
  }

  Tensor<S> pool_row({1, T}, std::vector<S>(static_cast<size_t>(T), S(1) / static_cast<S>(T)));
  Val pooled = tape.matmul(tape.leaf(std::move(pool_row)), x);
  Val projected = tape.add(tape.matmul(pooled, p.at("proj.w")), p.at("proj.b"));
  return tape.l2norm_rows(projected);
}

// Single-text encode at inference precision. Returns an M-vector.
TensorF encode_text(const ParamMap& params, const EncoderConfig& cfg, const TokenSequence& seq);

// Chunked batch encode; element i equals encode_text of input i exactly.
// Chunks run in parallel when DENC_THREADS allows (each writes its own
// output slots).
std::vector<TensorF> encode_batch(const ParamMap& params, const EncoderConfig& cfg,
                                  const std::vector<TokenSequence>& batch);

// Dot product; by construction of the encoder both sides are unit-norm, so
// the value lies in [-1, 1].
float similarity(const TensorF& q, const TensorF& d);

}  // namespace denc
