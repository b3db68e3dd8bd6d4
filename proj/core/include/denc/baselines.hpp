#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace denc {

struct Bm25Params {
  double k1 = 1.2;
  double b = 0.75;
};

// Corpus-level statistics for Okapi BM25 over token ids. Build once over
// the candidate corpus, tokenized the same way the queries will be.
class CorpusStats {
 public:
  static CorpusStats build(const std::vector<std::vector<int>>& docs, Bm25Params params = {});

  int64_t doc_count() const { return n_docs_; }
  double avg_doc_len() const { return avgdl_; }
  const Bm25Params& params() const { return params_; }

  // ln((N - df + 0.5) / (df + 0.5)), floored at 0 so common tokens never
  // subtract. Unseen tokens have df 0.
  double idf(int token) const;

 private:
  std::unordered_map<int, int64_t> df_;
  int64_t n_docs_ = 0;
  double avgdl_ = 0.0;
  Bm25Params params_;
};

// Okapi BM25 over the distinct query tokens; repeated query tokens count
// once.
double bm25_score(const std::vector<int>& query_tokens, const std::vector<int>& doc_tokens,
                  const CorpusStats& stats);

// Edit distance (insert, delete, substitute) over Unicode code points.
int64_t levenshtein(const std::string& a, const std::string& b);

// 1 - distance / max(code point lengths), so higher means more alike.
// Two empty strings count as identical.
double levenshtein_similarity(const std::string& a, const std::string& b);

}  // namespace denc
