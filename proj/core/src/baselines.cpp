#include "denc/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include "denc/utf8.hpp"

namespace denc {

CorpusStats CorpusStats::build(const std::vector<std::vector<int>>& docs, Bm25Params params) {
  if (docs.empty()) throw std::runtime_error("bm25: empty corpus");
  CorpusStats stats;
  stats.params_ = params;
  stats.n_docs_ = static_cast<int64_t>(docs.size());
  int64_t total_len = 0;
  for (const auto& doc : docs) {
    total_len += static_cast<int64_t>(doc.size());
    std::set<int> distinct(doc.begin(), doc.end());
    for (int t : distinct) ++stats.df_[t];
  }
  if (total_len == 0) throw std::runtime_error("bm25: corpus has only empty documents");
  stats.avgdl_ = static_cast<double>(total_len) / static_cast<double>(stats.n_docs_);
  return stats;
}

double CorpusStats::idf(int token) const {
  auto it = df_.find(token);
  const double df = it == df_.end() ? 0.0 : static_cast<double>(it->second);
  const double n = static_cast<double>(n_docs_);
  return std::max(0.0, std::log((n - df + 0.5) / (df + 0.5)));
}

double bm25_score(const std::vector<int>& query_tokens, const std::vector<int>& doc_tokens,
                  const CorpusStats& stats) {
  if (stats.doc_count() == 0) throw std::runtime_error("bm25: empty corpus");
  const double k1 = stats.params().k1;
  const double b = stats.params().b;
  const double dl = static_cast<double>(doc_tokens.size());
  const double len_norm = 1.0 - b + b * dl / stats.avg_doc_len();

  std::set<int> distinct(query_tokens.begin(), query_tokens.end());
  double score = 0.0;
  for (int t : distinct) {
    const double tf =
        static_cast<double>(std::count(doc_tokens.begin(), doc_tokens.end(), t));
    if (tf == 0.0) continue;
    score += stats.idf(t) * tf * (k1 + 1.0) / (tf + k1 * len_norm);
  }
  return score;
}

int64_t levenshtein(const std::string& a, const std::string& b) {
  const std::vector<uint32_t> ca = utf8_codepoints(a);
  const std::vector<uint32_t> cb = utf8_codepoints(b);
  const size_t n = ca.size(), m = cb.size();
  if (n == 0) return static_cast<int64_t>(m);
  if (m == 0) return static_cast<int64_t>(n);

  std::vector<int64_t> prev(m + 1), cur(m + 1);
  for (size_t j = 0; j <= m; ++j) prev[j] = static_cast<int64_t>(j);
  for (size_t i = 1; i <= n; ++i) {
    cur[0] = static_cast<int64_t>(i);
    for (size_t j = 1; j <= m; ++j) {
      const int64_t sub = prev[j - 1] + (ca[i - 1] == cb[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[m];
}

double levenshtein_similarity(const std::string& a, const std::string& b) {
  const size_t la = utf8_codepoints(a).size();
  const size_t lb = utf8_codepoints(b).size();
  const size_t longest = std::max(la, lb);
  if (longest == 0) return 1.0;
  return 1.0 - static_cast<double>(levenshtein(a, b)) / static_cast<double>(longest);
}

}  // namespace denc
