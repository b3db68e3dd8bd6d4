#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "denc/model.hpp"
#include "denc/pooling.hpp"
#include "denc/tensor.hpp"
#include "denc/tokenizer.hpp"

namespace denc {

// Precomputed document embeddings with exact dot-product retrieval.
// Immutable after build; concurrent top_k calls are safe.
struct EmbeddingIndex {
  int64_t dim = 0;
  uint64_t params_hash = 0;  // document tower that produced the rows
  std::vector<std::string> ids;
  TensorF matrix;  // [count, dim]

  int64_t count() const { return static_cast<int64_t>(ids.size()); }
};

struct ScoredDoc {
  std::string id;
  float score = 0.0f;
};

// One concat-pooled row per document. Attention pooling is query-dependent
// and cannot be precomputed, so the index always stores concat embeddings.
EmbeddingIndex build_index(const DualEncoderModel& model, const Vocab& vocab,
                           const std::vector<DocumentRecord>& docs);

// The k best documents by dot product, descending; equal scores order by
// id ascending. k past the end returns everything.
std::vector<ScoredDoc> top_k(const EmbeddingIndex& index, const TensorF& q_emb, int64_t k);

// Binary format: magic DIDX, u32 version, i64 dim, i64 count, u64 params
// hash, ids block, row-major little-endian f32 matrix.
void save_index(const std::string& path, const EmbeddingIndex& index);
EmbeddingIndex load_index(const std::string& path);

// False when the model's document tower is not the one the index was
// built from; callers surface this as a warning before searching.
bool index_matches_model(const EmbeddingIndex& index, const DualEncoderModel& model);

}  // namespace denc
