#pragma once

#include <cstdint>
#include <vector>

namespace denc {

// gains are relevance grades in ranked order (position 1 first).
// DCG@k = sum_{i<=k} (2^gain_i - 1) / log2(i + 1).
double dcg_at_k(const std::vector<double>& gains, int64_t k);

// DCG normalized by the ideal ordering of the same gains, in [0, 1].
// A list with no positive gain has ideal DCG 0 and scores 0.
double ndcg_at_k(const std::vector<double>& gains, int64_t k);

// Average precision for one query; relevance is binary, ranked order.
// Returns 0 when nothing is relevant (callers decide whether that query
// counts; mean_average_precision excludes it).
double average_precision(const std::vector<int>& relevant);

// Mean AP over queries that have at least one relevant document. Queries
// without one are excluded; their count lands in *excluded when given.
// All-excluded input yields 0.
double mean_average_precision(const std::vector<std::vector<int>>& ranked_relevance,
                              int64_t* excluded = nullptr);

// Mann-Whitney formulation via average ranks, so tied scores count one
// half. labels are 0/1 and both classes must appear.
double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels);

}  // namespace denc
