#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "denc/autodiff.hpp"
#include "denc/encoder.hpp"
#include "denc/tensor.hpp"
#include "denc/tokenizer.hpp"

namespace denc {

enum class EntityKind { title, description, url, caption, other };

EntityKind parse_entity_kind(const std::string& s);
std::string to_string(EntityKind k);

struct DocEntity {
  EntityKind kind = EntityKind::other;
  std::string text;
};

// A document as an ordered list of text entities plus a language tag.
struct DocumentRecord {
  std::string id;
  std::vector<DocEntity> entities;
  std::string language = "en";
};

constexpr int kMaxEntities = 4;

void validate_document(const DocumentRecord& doc, int max_entities = kMaxEntities);

enum class DocPooling { concat, attention };

DocPooling parse_pooling(const std::string& s);
std::string to_string(DocPooling p);

// Entities are joined with this byte for concat pooling. It is a control
// byte, so the tokenizer keeps it as a single-byte token and no merge can
// ever absorb it into a word.
constexpr char kEntitySeparator = '\x1e';

int separator_token();

std::string concat_entities(const DocumentRecord& doc);

// Joined entity text encoded as one sequence, truncated to max_len.
TokenSequence doc_tokens_concat(const Vocab& vocab, const DocumentRecord& doc, int64_t max_len);

// Query-independent document embedding: encode the joined entities once.
TensorF embed_document_concat(const ParamMap& doc_params, const EncoderConfig& cfg,
                              const Vocab& vocab, const DocumentRecord& doc);

// Softmax over per-entity scores a(q, e_k) = w2 . tanh(w1 [q; e_k] + b1).
// attn holds w1 [2M, H], b1 [1, H], w2 [H, 1]. Scores and the softmax are
// accumulated at double precision.
std::vector<float> attention_weights(const TensorF& q_emb, const std::vector<TensorF>& entity_embs,
                                     const ParamMap& attn);

// Query-conditioned document embedding: each entity encoded on its own,
// combined by attention weights, re-normalized to unit length.
TensorF embed_document_attention(const ParamMap& doc_params, const EncoderConfig& cfg,
                                 const Vocab& vocab, const ParamMap& attn, const TensorF& q_emb,
                                 const DocumentRecord& doc);

struct AttentionPoolNodes {
  Val pooled;   // [1, M] unit-norm
  Val weights;  // [1, m]
};

// Tape version for training; gradients reach the attention net, the query
// embedding, and every entity embedding. attn is bound with stripped names
// (w1, b1, w2); q_emb and entity_embs are [1, M] nodes.
template <typename S>
AttentionPoolNodes attention_pool_node(Tape<S>& t, const BoundParams<S>& attn, Val q_emb,
                                       std::span<const Val> entity_embs) {
  if (entity_embs.empty()) throw std::runtime_error("attention pooling: no entities");
  std::vector<Val> scores;
  scores.reserve(entity_embs.size());
  for (Val e : entity_embs) {
    std::vector<Val> qe{q_emb, e};
    Val x = t.concat_cols(qe);
    Val h = t.tanh(t.add(t.matmul(x, attn.at("w1")), attn.at("b1")));
    scores.push_back(t.matmul(h, attn.at("w2")));
  }
  Val score_row = scores.size() == 1 ? scores[0] : t.concat_cols(scores);
  Val alpha = t.softmax_rows(score_row);
  Val stacked = t.concat_rows(entity_embs);
  Val pooled = t.l2norm_rows(t.matmul(alpha, stacked));
  return {pooled, alpha};
}

}  // namespace denc
