#include "denc/eval.hpp"

#include <algorithm>
#include <memory>
#include <sstream>
#include <stdexcept>

#include "denc/encoder.hpp"
#include "denc/metrics.hpp"
#include "json.hpp"

namespace denc {

std::string EvalReport::to_json() const {
  nlohmann::json j;
  j["depths"] = depths;
  for (const auto& [k, v] : mean_dcg) j["dcg"][std::to_string(k)] = v;
  for (const auto& [k, v] : mean_ndcg) j["ndcg"][std::to_string(k)] = v;
  j["map"] = map;
  j["queries_evaluated"] = queries_evaluated;
  j["queries_skipped"] = queries_skipped;
  j["map_excluded"] = map_excluded;
  j["missing_doc_ids"] = missing_doc_ids;
  return j.dump(2);
}

std::string EvalReport::to_csv() const {
  std::ostringstream os;
  os << "metric,depth,value\n";
  for (const auto& [k, v] : mean_dcg) os << "dcg," << k << "," << v << "\n";
  for (const auto& [k, v] : mean_ndcg) os << "ndcg," << k << "," << v << "\n";
  os << "map,," << map << "\n";
  os << "queries_evaluated,," << queries_evaluated << "\n";
  os << "queries_skipped,," << queries_skipped << "\n";
  os << "map_excluded,," << map_excluded << "\n";
  return os.str();
}

EvalReport evaluate(const Scorer& scorer, const JudgedSet& judged,
                    const std::map<std::string, DocumentRecord>& corpus,
                    const EvalOptions& opts) {
  if (opts.depths.empty()) throw std::runtime_error("evaluate: no depths requested");
  EvalReport report;
  report.depths = opts.depths;
  for (int64_t d : opts.depths) {
    if (d < 1) throw std::runtime_error("evaluate: depth must be >= 1");
    report.mean_dcg[d] = 0.0;
    report.mean_ndcg[d] = 0.0;
  }

  std::vector<std::vector<int>> relevance_lists;
  for (const JudgedQuery& q : judged.queries) {
    struct Scored {
      std::string doc_id;
      double score;
      double gain;
    };
    std::vector<Scored> scored;
    for (const auto& [doc_id, gain] : q.judgments) {
      auto it = corpus.find(doc_id);
      if (it == corpus.end()) {
        report.missing_doc_ids.push_back(doc_id);
        continue;
      }
      scored.push_back({doc_id, scorer(q.text, it->second), gain});
    }
    if (scored.empty()) {
      ++report.queries_skipped;
      continue;
    }
    std::sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) {
      if (a.score != b.score) return a.score > b.score;
      return a.doc_id < b.doc_id;
    });
    std::vector<double> gains;
    std::vector<int> rel;
    for (const Scored& s : scored) {
      gains.push_back(s.gain);
      rel.push_back(s.gain > 0.0 ? 1 : 0);
    }
    for (int64_t d : opts.depths) {
      report.mean_dcg[d] += dcg_at_k(gains, d);
      report.mean_ndcg[d] += ndcg_at_k(gains, d);
    }
    relevance_lists.push_back(std::move(rel));
    ++report.queries_evaluated;
  }

  if (report.queries_evaluated > 0) {
    for (int64_t d : opts.depths) {
      report.mean_dcg[d] /= static_cast<double>(report.queries_evaluated);
      report.mean_ndcg[d] /= static_cast<double>(report.queries_evaluated);
    }
  }
  report.map = mean_average_precision(relevance_lists, &report.map_excluded);
  return report;
}

double evaluate_pairs_auc(const Scorer& scorer,
                          const std::vector<std::pair<std::string, DocumentRecord>>& pairs,
                          const std::vector<int>& labels) {
  if (pairs.size() != labels.size()) {
    throw std::runtime_error("evaluate_pairs_auc: pair and label counts differ");
  }
  std::vector<double> scores;
  scores.reserve(pairs.size());
  for (const auto& [query, doc] : pairs) scores.push_back(scorer(query, doc));
  return roc_auc(scores, labels);
}

std::string baseline_text(const DocumentRecord& doc) {
  std::string joined;
  for (size_t i = 0; i < doc.entities.size(); ++i) {
    if (i) joined += ' ';
    joined += doc.entities[i].text;
  }
  return joined;
}

Scorer make_encoder_scorer(const DualEncoderModel& model, const Vocab& vocab, DocPooling pooling) {
  struct State {
    EncoderConfig cfg;
    EncoderConfig doc_cfg;
    ParamMap q_params;
    ParamMap d_params;
    ParamMap attn;
    Vocab vocab;
    std::map<std::string, TensorF> query_cache;
  };
  auto state = std::make_shared<State>();
  state->cfg = model.config;
  state->doc_cfg = model.doc_config();
  state->q_params = model.query_tower();
  state->d_params = model.doc_tower();
  state->vocab = vocab;
  if (pooling == DocPooling::attention) {
    if (!model.has_attention()) {
      throw std::runtime_error("attention scorer: model has no attention net");
    }
    state->attn = model.attention_net();
  }

  return [state, pooling](const std::string& query_text, const DocumentRecord& doc) {
    auto it = state->query_cache.find(query_text);
    if (it == state->query_cache.end()) {
      TokenSequence seq = encode(query_text, state->vocab, state->cfg.max_len_query, true);
      it = state->query_cache.emplace(query_text, encode_text(state->q_params, state->cfg, seq))
               .first;
    }
    const TensorF& q_emb = it->second;
    TensorF d_emb = pooling == DocPooling::concat
                        ? embed_document_concat(state->d_params, state->doc_cfg, state->vocab, doc)
                        : embed_document_attention(state->d_params, state->doc_cfg, state->vocab,
                                                   state->attn, q_emb, doc);
    return static_cast<double>(similarity(q_emb, d_emb));
  };
}

Scorer make_bm25_scorer(const std::map<std::string, DocumentRecord>& corpus, const Vocab& vocab,
                        Bm25Params params) {
  std::vector<std::vector<int>> docs;
  docs.reserve(corpus.size());
  for (const auto& [id, doc] : corpus) docs.push_back(tokenize(baseline_text(doc), vocab));
  auto stats = std::make_shared<CorpusStats>(CorpusStats::build(docs, params));
  auto vocab_copy = std::make_shared<Vocab>(vocab);
  return [stats, vocab_copy](const std::string& query_text, const DocumentRecord& doc) {
    return bm25_score(tokenize(query_text, *vocab_copy),
                      tokenize(baseline_text(doc), *vocab_copy), *stats);
  };
}

Scorer make_levenshtein_scorer() {
  return [](const std::string& query_text, const DocumentRecord& doc) {
    return levenshtein_similarity(query_text, baseline_text(doc));
  };
}

}  // namespace denc
