#include "denc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace denc {

double dcg_at_k(const std::vector<double>& gains, int64_t k) {
  if (k < 1) throw std::runtime_error("dcg_at_k: k must be >= 1");
  double dcg = 0.0;
  const int64_t depth = std::min<int64_t>(k, static_cast<int64_t>(gains.size()));
  for (int64_t i = 0; i < depth; ++i) {
    const double gain = gains[static_cast<size_t>(i)];
    if (!std::isfinite(gain)) throw std::runtime_error("dcg_at_k: non-finite gain");
    dcg += (std::exp2(gain) - 1.0) / std::log2(static_cast<double>(i) + 2.0);
  }
  return dcg;
}

double ndcg_at_k(const std::vector<double>& gains, int64_t k) {
  const double dcg = dcg_at_k(gains, k);
  std::vector<double> ideal = gains;
  std::sort(ideal.begin(), ideal.end(), std::greater<>());
  const double best = dcg_at_k(ideal, k);
  if (best <= 0.0) return 0.0;
  return dcg / best;
}

double average_precision(const std::vector<int>& relevant) {
  int64_t hits = 0;
  double sum = 0.0;
  for (size_t i = 0; i < relevant.size(); ++i) {
    const int r = relevant[i];
    if (r != 0 && r != 1) throw std::runtime_error("average_precision: relevance must be 0 or 1");
    if (r == 1) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(i + 1);
    }
  }
  if (hits == 0) return 0.0;
  return sum / static_cast<double>(hits);
}

double mean_average_precision(const std::vector<std::vector<int>>& ranked_relevance,
                              int64_t* excluded) {
  int64_t used = 0, skipped = 0;
  double sum = 0.0;
  for (const auto& rel : ranked_relevance) {
    const bool has_positive = std::find(rel.begin(), rel.end(), 1) != rel.end();
    if (!has_positive) {
      ++skipped;
      continue;
    }
    sum += average_precision(rel);
    ++used;
  }
  if (excluded) *excluded = skipped;
  if (used == 0) return 0.0;
  return sum / static_cast<double>(used);
}

double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) {
    throw std::runtime_error("roc_auc: " + std::to_string(scores.size()) + " scores vs " +
                             std::to_string(labels.size()) + " labels");
  }
  int64_t n_pos = 0, n_neg = 0;
  for (int y : labels) {
    if (y == 1) ++n_pos;
    else if (y == 0) ++n_neg;
    else throw std::runtime_error("roc_auc: labels must be 0 or 1");
  }
  if (n_pos == 0 || n_neg == 0) {
    throw std::runtime_error("roc_auc: needs both a positive and a negative example");
  }

  std::vector<size_t> order(scores.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return scores[a] < scores[b]; });

  // rank sum of positives, tied scores share the average rank
  double pos_rank_sum = 0.0;
  size_t i = 0;
  while (i < order.size()) {
    size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (size_t t = i; t < j; ++t) {
      if (labels[order[t]] == 1) pos_rank_sum += avg_rank;
    }
    i = j;
  }
  const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
  return (pos_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

}  // namespace denc
