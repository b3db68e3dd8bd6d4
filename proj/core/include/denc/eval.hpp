#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "denc/baselines.hpp"
#include "denc/index.hpp"
#include "denc/model.hpp"
#include "denc/pooling.hpp"
#include "denc/tokenizer.hpp"

namespace denc {

// Relevance score for a (query, document) pair; higher ranks earlier.
using Scorer = std::function<double(const std::string& query_text, const DocumentRecord& doc)>;

struct JudgedQuery {
  std::string query_id;
  std::string text;
  std::vector<std::pair<std::string, double>> judgments;  // doc id, gain >= 0
};

struct JudgedSet {
  std::vector<JudgedQuery> queries;
};

struct EvalOptions {
  std::vector<int64_t> depths{1, 5, 10};
};

struct EvalReport {
  std::vector<int64_t> depths;
  std::map<int64_t, double> mean_dcg;
  std::map<int64_t, double> mean_ndcg;
  double map = 0.0;
  int64_t queries_evaluated = 0;
  int64_t queries_skipped = 0;  // nothing judged was present in the corpus
  int64_t map_excluded = 0;     // evaluated, but no relevant document
  std::vector<std::string> missing_doc_ids;

  std::string to_json() const;
  std::string to_csv() const;
};

// Scores every judged document that exists in the corpus, ranks by
// (score desc, id asc), and averages the metrics over queries. Judged ids
// absent from the corpus are reported and left out.
EvalReport evaluate(const Scorer& scorer, const JudgedSet& judged,
                    const std::map<std::string, DocumentRecord>& corpus,
                    const EvalOptions& opts = {});

// ROC-AUC of the scorer over labeled (query, doc) pairs.
double evaluate_pairs_auc(const Scorer& scorer,
                          const std::vector<std::pair<std::string, DocumentRecord>>& pairs,
                          const std::vector<int>& labels);

// Entity texts joined with spaces: the classical baselines see plain text,
// not the tokenizer's separator byte.
std::string baseline_text(const DocumentRecord& doc);

// Dual-encoder scorer. concat scores against the precomputable document
// embedding; attention re-pools the document for every query. Query
// embeddings are cached across calls.
Scorer make_encoder_scorer(const DualEncoderModel& model, const Vocab& vocab, DocPooling pooling);

// Okapi BM25 over the tokenizer's subword ids, stats built from the corpus.
Scorer make_bm25_scorer(const std::map<std::string, DocumentRecord>& corpus, const Vocab& vocab,
                        Bm25Params params = {});

// Edit-distance similarity between the query and the joined entity text.
Scorer make_levenshtein_scorer();

}  // namespace denc
