#include "denc/pooling.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace denc {

namespace {

const TensorF& attn_at(const ParamMap& attn, const std::string& name) {
  auto it = attn.find(name);
  if (it == attn.end()) throw std::runtime_error("attention net: missing parameter " + name);
  return it->second;
}

}  // namespace

EntityKind parse_entity_kind(const std::string& s) {
  if (s == "title") return EntityKind::title;
  if (s == "description") return EntityKind::description;
  if (s == "url") return EntityKind::url;
  if (s == "caption") return EntityKind::caption;
  if (s == "other") return EntityKind::other;
  throw std::runtime_error("unknown entity kind '" + s +
                           "' (expected title, description, url, caption or other)");
}

std::string to_string(EntityKind k) {
  switch (k) {
    case EntityKind::title: return "title";
    case EntityKind::description: return "description";
    case EntityKind::url: return "url";
    case EntityKind::caption: return "caption";
    case EntityKind::other: return "other";
  }
  throw std::runtime_error("unknown entity kind value");
}

void validate_document(const DocumentRecord& doc, int max_entities) {
  if (doc.entities.empty()) {
    throw std::runtime_error("document " + doc.id + ": no entities");
  }
  if (static_cast<int>(doc.entities.size()) > max_entities) {
    throw std::runtime_error("document " + doc.id + ": " + std::to_string(doc.entities.size()) +
                             " entities exceeds the limit of " + std::to_string(max_entities));
  }
}

DocPooling parse_pooling(const std::string& s) {
  if (s == "concat") return DocPooling::concat;
  if (s == "attention") return DocPooling::attention;
  throw std::runtime_error("unknown pooling '" + s + "' (expected concat or attention)");
}

std::string to_string(DocPooling p) {
  return p == DocPooling::concat ? "concat" : "attention";
}

int separator_token() { return Vocab::byte_token(static_cast<unsigned char>(kEntitySeparator)); }

std::string concat_entities(const DocumentRecord& doc) {
  std::string joined;
  for (size_t i = 0; i < doc.entities.size(); ++i) {
    if (i) joined += kEntitySeparator;
    joined += doc.entities[i].text;
  }
  return joined;
}

TokenSequence doc_tokens_concat(const Vocab& vocab, const DocumentRecord& doc, int64_t max_len) {
  validate_document(doc);
  return encode(concat_entities(doc), vocab, max_len, /*truncate=*/true);
}

TensorF embed_document_concat(const ParamMap& doc_params, const EncoderConfig& cfg,
                              const Vocab& vocab, const DocumentRecord& doc) {
  return encode_text(doc_params, cfg, doc_tokens_concat(vocab, doc, cfg.max_len_doc));
}

std::vector<float> attention_weights(const TensorF& q_emb, const std::vector<TensorF>& entity_embs,
                                     const ParamMap& attn) {
  if (entity_embs.empty()) throw std::runtime_error("attention: no entity embeddings");
  const TensorF& w1 = attn_at(attn, "w1");
  const TensorF& b1 = attn_at(attn, "b1");
  const TensorF& w2 = attn_at(attn, "w2");
  const int64_t m_dim = q_emb.numel();
  const int64_t hidden = w1.cols();
  if (w1.rows() != 2 * m_dim) {
    throw std::runtime_error("attention: w1 expects input dim " + std::to_string(w1.rows()) +
                             ", embeddings give " + std::to_string(2 * m_dim));
  }
  if (b1.numel() != hidden || w2.rows() != hidden || w2.cols() != 1) {
    throw std::runtime_error("attention: b1/w2 shapes do not match hidden dim " +
                             std::to_string(hidden));
  }

  std::vector<double> scores;
  scores.reserve(entity_embs.size());
  std::vector<double> x(static_cast<size_t>(2 * m_dim));
  for (const TensorF& e : entity_embs) {
    if (e.numel() != m_dim) {
      throw std::runtime_error("attention: entity embedding dim " + std::to_string(e.numel()) +
                               " vs query dim " + std::to_string(m_dim));
    }
    for (int64_t i = 0; i < m_dim; ++i) x[static_cast<size_t>(i)] = q_emb.at(i);
    for (int64_t i = 0; i < m_dim; ++i) x[static_cast<size_t>(m_dim + i)] = e.at(i);
    double s = 0.0;
    for (int64_t j = 0; j < hidden; ++j) {
      double z = b1.at(j);
      for (int64_t i = 0; i < 2 * m_dim; ++i) z += x[static_cast<size_t>(i)] * w1.at(i, j);
      s += std::tanh(z) * w2.at(j, 0);
    }
    scores.push_back(s);
  }

  const double mx = *std::max_element(scores.begin(), scores.end());
  double denom = 0.0;
  for (double& s : scores) {
    s = std::exp(s - mx);
    denom += s;
  }
  std::vector<float> alpha(scores.size());
  for (size_t k = 0; k < scores.size(); ++k) {
    alpha[k] = static_cast<float>(scores[k] / denom);
  }
  return alpha;
}

TensorF embed_document_attention(const ParamMap& doc_params, const EncoderConfig& cfg,
                                 const Vocab& vocab, const ParamMap& attn, const TensorF& q_emb,
                                 const DocumentRecord& doc) {
  validate_document(doc);
  std::vector<TokenSequence> seqs;
  seqs.reserve(doc.entities.size());
  for (const DocEntity& e : doc.entities) {
    seqs.push_back(encode(e.text, vocab, cfg.max_len_doc, /*truncate=*/true));
  }
  const std::vector<TensorF> embs = encode_batch(doc_params, cfg, seqs);
  const std::vector<float> alpha = attention_weights(q_emb, embs, attn);

  const int64_t m_dim = cfg.output_dim;
  std::vector<double> pooled(static_cast<size_t>(m_dim), 0.0);
  for (size_t k = 0; k < embs.size(); ++k) {
    for (int64_t i = 0; i < m_dim; ++i) {
      pooled[static_cast<size_t>(i)] += static_cast<double>(alpha[k]) * embs[k].at(i);
    }
  }
  double norm = 0.0;
  for (double v : pooled) norm += v * v;
  norm = std::max(std::sqrt(norm), 1e-12);
  TensorF out({m_dim});
  for (int64_t i = 0; i < m_dim; ++i) {
    out.at(i) = static_cast<float>(pooled[static_cast<size_t>(i)] / norm);
  }
  return out;
}

}  // namespace denc
