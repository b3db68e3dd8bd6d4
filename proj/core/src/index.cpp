#include "denc/index.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>
#include <stdexcept>

#include "denc/encoder.hpp"
#include "denc/serial.hpp"

namespace denc {

namespace {

constexpr char kIndexMagic[4] = {'D', 'I', 'D', 'X'};
constexpr uint32_t kIndexVersion = 1;

}  // namespace

EmbeddingIndex build_index(const DualEncoderModel& model, const Vocab& vocab,
                           const std::vector<DocumentRecord>& docs) {
  EmbeddingIndex index;
  index.dim = model.config.output_dim;
  index.params_hash = doc_params_hash(model);
  index.matrix = TensorF({static_cast<int64_t>(docs.size()), index.dim});

  std::set<std::string> seen;
  std::vector<TokenSequence> seqs;
  seqs.reserve(docs.size());
  for (const DocumentRecord& doc : docs) {
    if (!seen.insert(doc.id).second) {
      throw std::runtime_error("build_index: duplicate document id " + doc.id);
    }
    index.ids.push_back(doc.id);
    seqs.push_back(doc_tokens_concat(vocab, doc, model.config.max_len_doc));
  }

  const ParamMap doc_params = model.doc_tower();
  const std::vector<TensorF> rows = encode_batch(doc_params, model.doc_config(), seqs);
  for (size_t i = 0; i < rows.size(); ++i) {
    std::copy(rows[i].data.begin(), rows[i].data.end(),
              index.matrix.data.begin() + static_cast<int64_t>(i) * index.dim);
  }
  return index;
}

std::vector<ScoredDoc> top_k(const EmbeddingIndex& index, const TensorF& q_emb, int64_t k) {
  if (k < 1) throw std::runtime_error("top_k: k must be >= 1");
  if (q_emb.numel() != index.dim) {
    throw std::runtime_error("top_k: query dim " + std::to_string(q_emb.numel()) +
                             " vs index dim " + std::to_string(index.dim));
  }
  const int64_t n = index.count();
  std::vector<float> scores(static_cast<size_t>(n), 0.0f);
  for (int64_t i = 0; i < n; ++i) {
    float dot = 0.0f;
    for (int64_t j = 0; j < index.dim; ++j) dot += q_emb.at(j) * index.matrix.at(i, j);
    scores[static_cast<size_t>(i)] = dot;
  }

  std::vector<int64_t> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  const int64_t take = std::min(k, n);
  auto better = [&](int64_t a, int64_t b) {
    const float sa = scores[static_cast<size_t>(a)], sb = scores[static_cast<size_t>(b)];
    if (sa != sb) return sa > sb;
    return index.ids[static_cast<size_t>(a)] < index.ids[static_cast<size_t>(b)];
  };
  std::partial_sort(order.begin(), order.begin() + take, order.end(), better);

  std::vector<ScoredDoc> out;
  out.reserve(static_cast<size_t>(take));
  for (int64_t r = 0; r < take; ++r) {
    const int64_t i = order[static_cast<size_t>(r)];
    out.push_back({index.ids[static_cast<size_t>(i)], scores[static_cast<size_t>(i)]});
  }
  return out;
}

void save_index(const std::string& path, const EmbeddingIndex& index) {
  if (static_cast<int64_t>(index.ids.size()) * index.dim != index.matrix.numel()) {
    throw std::runtime_error("save_index: matrix size does not match id count");
  }
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open index file for writing: " + path);
  os.write(kIndexMagic, sizeof(kIndexMagic));
  write_u32(os, kIndexVersion);
  write_i64(os, index.dim);
  write_i64(os, index.count());
  write_u64(os, index.params_hash);
  for (const std::string& id : index.ids) {
    write_u32(os, static_cast<uint32_t>(id.size()));
    os.write(id.data(), static_cast<std::streamsize>(id.size()));
  }
  for (float v : index.matrix.data) write_f32(os, v);
  if (!os) throw std::runtime_error("failed writing index file: " + path);
}

EmbeddingIndex load_index(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open index file: " + path);
  char magic[4];
  is.read(magic, sizeof(magic));
  if (!is || !std::equal(magic, magic + 4, kIndexMagic)) {
    throw std::runtime_error("index " + path + ": bad magic, not an index file");
  }
  const uint32_t version = read_u32(is, "index version");
  if (version != kIndexVersion) {
    throw std::runtime_error("index " + path + ": unsupported version " +
                             std::to_string(version));
  }
  EmbeddingIndex index;
  index.dim = read_i64(is, "index dim");
  const int64_t count = read_i64(is, "index count");
  if (index.dim < 1 || count < 0) {
    throw std::runtime_error("index " + path + ": nonsensical dimensions");
  }
  index.params_hash = read_u64(is, "index params hash");
  std::set<std::string> seen;
  index.ids.reserve(static_cast<size_t>(count));
  for (int64_t i = 0; i < count; ++i) {
    const uint32_t len = read_u32(is, "doc id length");
    std::string id(len, '\0');
    is.read(id.data(), len);
    if (!is) throw std::runtime_error("truncated file while reading doc id");
    if (!seen.insert(id).second) {
      throw std::runtime_error("index " + path + ": duplicate document id " + id);
    }
    index.ids.push_back(std::move(id));
  }
  index.matrix = TensorF({count, index.dim});
  for (float& v : index.matrix.data) v = read_f32(is, "embedding matrix");
  return index;
}

bool index_matches_model(const EmbeddingIndex& index, const DualEncoderModel& model) {
  return index.params_hash == doc_params_hash(model);
}

}  // namespace denc
