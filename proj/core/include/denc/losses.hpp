#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "denc/autodiff.hpp"
#include "denc/rng.hpp"
#include "denc/tensor.hpp"

namespace denc {

enum class Distance { l1, l2, cosine };
enum class MiningStrategy { batch_all, hard, semi_hard, random };

Distance parse_distance(const std::string& name);           // l1|l2|cosine
MiningStrategy parse_strategy(const std::string& name);     // batch_all|hard|semi_hard|random
std::string to_string(Distance metric);
std::string to_string(MiningStrategy strategy);

struct TripletConfig {
  double margin = 0.2;
  Distance metric = Distance::l1;
  MiningStrategy strategy = MiningStrategy::semi_hard;

  void validate() const {
    if (!(margin > 0)) throw std::runtime_error("triplet margin must be positive");
  }
};

inline constexpr double kYhatEps = 1e-7;  // keeps both logs of the loss finite

// ---- scalar/tensor reference path ----
// These are the definitions the trainer's graph builders mirror; tests and
// eval call them directly.

template <typename S>
S pair_distance(const S* a, const S* b, int64_t m, Distance metric) {
  switch (metric) {
    case Distance::l1: {
      S s = S(0);
      for (int64_t i = 0; i < m; ++i) s += std::abs(a[i] - b[i]);
      return s;
    }
    case Distance::l2: {
      S s = S(0);
      for (int64_t i = 0; i < m; ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
      return std::sqrt(s);
    }
    case Distance::cosine: {
      S dot = S(0);
      for (int64_t i = 0; i < m; ++i) dot += a[i] * b[i];
      return S(1) - dot;
    }
  }
  throw std::runtime_error("unknown distance metric");
}

template <typename S>
S pair_distance(const Tensor<S>& a, const Tensor<S>& b, Distance metric) {
  if (a.numel() != b.numel()) throw std::runtime_error("pair_distance: dimension mismatch");
  return pair_distance(a.data.data(), b.data.data(), a.numel(), metric);
}

// Entry (j, k) = dist(Q_j, D_k).
template <typename S>
Tensor<S> pairwise_distances(const Tensor<S>& Q, const Tensor<S>& D, Distance metric) {
  if (Q.rank() != 2 || D.rank() != 2 || Q.shape[1] != D.shape[1]) {
    throw std::runtime_error("pairwise_distances: need [B,M] inputs with equal M");
  }
  const int64_t bq = Q.shape[0], bd = D.shape[0], m = Q.shape[1];
  Tensor<S> out({bq, bd});
  for (int64_t j = 0; j < bq; ++j) {
    for (int64_t k = 0; k < bd; ++k) {
      out.at(j, k) =
          pair_distance(&Q.data[static_cast<size_t>(j * m)], &D.data[static_cast<size_t>(k * m)],
                        m, metric);
    }
  }
  return out;
}

template <typename S>
S clamped_cosine(const Tensor<S>& q, const Tensor<S>& d) {
  if (q.numel() != d.numel()) throw std::runtime_error("clamped_cosine: dimension mismatch");
  S dot = S(0);
  for (int64_t i = 0; i < q.numel(); ++i) {
    dot += q.data[static_cast<size_t>(i)] * d.data[static_cast<size_t>(i)];
  }
  return std::clamp(dot, S(0), S(1));
}

// Mean over the batch of y log(1/yhat) + (1-y) log(1/(1-yhat)) with
// yhat = clamped cosine, further clamped to [eps, 1-eps] before the logs.
template <typename S>
S cross_entropy_loss(const Tensor<S>& Q, const Tensor<S>& D, const std::vector<int>& labels) {
  if (Q.rank() != 2 || !Q.same_shape(D)) {
    throw std::runtime_error("cross_entropy_loss: need matching [B,M] embeddings");
  }
  const int64_t B = Q.shape[0], m = Q.shape[1];
  if (static_cast<int64_t>(labels.size()) != B) {
    throw std::runtime_error("cross_entropy_loss: labels size != batch size");
  }
  S total = S(0);
  for (int64_t j = 0; j < B; ++j) {
    const int y = labels[static_cast<size_t>(j)];
    if (y != 0 && y != 1) throw std::runtime_error("cross_entropy_loss: labels must be 0 or 1");
    S dot = S(0);
    for (int64_t i = 0; i < m; ++i) {
      dot += Q.data[static_cast<size_t>(j * m + i)] * D.data[static_cast<size_t>(j * m + i)];
    }
    const S yhat = std::clamp(dot, static_cast<S>(kYhatEps), S(1) - static_cast<S>(kYhatEps));
    total += y == 1 ? -std::log(yhat) : -std::log(S(1) - yhat);
  }
  return total / static_cast<S>(B);
}

// What the miner picked for one anchor: a concrete document index, the
// index set whose mean embedding acts as the negative, or a skip.
struct MiningResult {
  enum class Kind { index, mean_set, skip };
  Kind kind = Kind::skip;
  int index = -1;
  std::vector<int> set;
};

// The random strategy draws its negative from a stream keyed by (seed,
// anchor), so a run is reproducible and each anchor independent.
inline int random_negative_index(int j, int64_t batch, uint64_t seed) {
  Rng rng(mix_seed(seed, 0x9a7fULL, static_cast<uint64_t>(j)));
  int k = static_cast<int>(rng.next_below(static_cast<uint64_t>(batch - 1)));
  if (k >= j) ++k;
  return k;
}

// dist_row = row j of pairwise_distances(Q, D, metric).
template <typename S>
MiningResult mine_negative_row(MiningStrategy strategy, int j, const S* dist_row, int64_t batch,
                               S alpha, uint64_t seed) {
  if (batch < 2) throw std::runtime_error("mining needs a batch of at least 2");
  MiningResult r;
  const S pos = dist_row[j];
  switch (strategy) {
    case MiningStrategy::batch_all: {
      for (int k = 0; k < batch; ++k) {
        if (k != j && dist_row[k] <= pos + alpha) r.set.push_back(k);
      }
      r.kind = r.set.empty() ? MiningResult::Kind::skip : MiningResult::Kind::mean_set;
      return r;
    }
    case MiningStrategy::hard: {
      int best = -1;
      for (int k = 0; k < batch; ++k) {
        if (k == j) continue;
        if (best < 0 || dist_row[k] < dist_row[best]) best = k;
      }
      r.kind = MiningResult::Kind::index;
      r.index = best;
      return r;
    }
    case MiningStrategy::semi_hard: {
      int best = -1;
      for (int k = 0; k < batch; ++k) {
        if (k == j || !(dist_row[k] > pos)) continue;
        if (best < 0 || dist_row[k] < dist_row[best]) best = k;
      }
      if (best < 0) {
        // no candidate beyond the positive: fall back to the hard negative
        return mine_negative_row(MiningStrategy::hard, j, dist_row, batch, alpha, seed);
      }
      r.kind = MiningResult::Kind::index;
      r.index = best;
      return r;
    }
    case MiningStrategy::random: {
      r.kind = MiningResult::Kind::index;
      r.index = random_negative_index(j, batch, seed);
      return r;
    }
  }
  throw std::runtime_error("unknown mining strategy");
}

template <typename S>
MiningResult mine_negative(MiningStrategy strategy, int j, const Tensor<S>& Q, const Tensor<S>& D,
                           S alpha, Distance metric, uint64_t seed = 0) {
  if (Q.rank() != 2 || !Q.same_shape(D)) {
    throw std::runtime_error("mine_negative: need matching [B,M] embeddings");
  }
  const int64_t B = Q.shape[0];
  if (j < 0 || j >= B) throw std::runtime_error("mine_negative: anchor outside batch");
  std::vector<S> row(static_cast<size_t>(B));
  const int64_t m = Q.shape[1];
  for (int64_t k = 0; k < B; ++k) {
    row[static_cast<size_t>(k)] = pair_distance(&Q.data[static_cast<size_t>(j * m)],
                                                &D.data[static_cast<size_t>(k * m)], m, metric);
  }
  return mine_negative_row(strategy, j, row.data(), B, alpha, seed);
}

template <typename S>
struct TripletLossValue {
  S value = S(0);
  int used_anchors = 0;
  bool all_skipped = false;
  std::vector<MiningResult> picks;  // one per anchor, in order
};

// Mean over non-skipped anchors of [dist(q,d+) - dist(q,dN) + margin]_+.
// For batch_all the negative is the plain mean of the selected embeddings
// (not re-normalized).
template <typename S>
TripletLossValue<S> triplet_loss(const Tensor<S>& Q, const Tensor<S>& D, const TripletConfig& cfg,
                                 uint64_t seed = 0) {
  cfg.validate();
  if (Q.rank() != 2 || !Q.same_shape(D)) {
    throw std::runtime_error("triplet_loss: need matching [B,M] embeddings");
  }
  const int64_t B = Q.shape[0], m = Q.shape[1];
  if (B < 2) throw std::runtime_error("triplet_loss: batch must be >= 2");
  Tensor<S> dists = pairwise_distances(Q, D, cfg.metric);
  TripletLossValue<S> out;
  S total = S(0);
  for (int j = 0; j < B; ++j) {
    MiningResult pick = mine_negative_row(cfg.strategy, j, &dists.data[static_cast<size_t>(j) * B],
                                          B, static_cast<S>(cfg.margin), seed);
    out.picks.push_back(pick);
    if (pick.kind == MiningResult::Kind::skip) continue;
    S neg_dist;
    if (pick.kind == MiningResult::Kind::index) {
      neg_dist = dists.at(j, pick.index);
    } else {
      Tensor<S> mean({m});
      for (int k : pick.set) {
        for (int64_t i = 0; i < m; ++i) {
          mean.data[static_cast<size_t>(i)] += D.data[static_cast<size_t>(k * m + i)];
        }
      }
      for (S& v : mean.data) v /= static_cast<S>(pick.set.size());
      neg_dist = pair_distance(&Q.data[static_cast<size_t>(j) * m], mean.data.data(), m,
                               cfg.metric);
    }
    total += std::max(S(0), dists.at(j, j) - neg_dist + static_cast<S>(cfg.margin));
    ++out.used_anchors;
  }
  if (out.used_anchors == 0) {
    out.all_skipped = true;
    out.value = S(0);
  } else {
    out.value = total / static_cast<S>(out.used_anchors);
  }
  return out;
}

inline double multi_task_loss(const std::vector<std::pair<double, double>>& loss_weights) {
  double total = 0.0;
  for (const auto& [loss, weight] : loss_weights) {
    if (!(weight > 0)) throw std::runtime_error("task weights must be positive");
    total += weight * loss;
  }
  return total;
}

// ---- graph builders ----
// Same math recorded on a tape. Mining runs on the already-computed row
// values and the selections stay fixed inside the graph, so a gradient
// check differentiates a fixed selection, not the argmin.

inline constexpr double kTapeSqrtEps = 1e-12;  // keeps the l2 gradient finite at 0

template <typename S>
Val distance_node(Tape<S>& t, Val q, Val d, Distance metric) {
  switch (metric) {
    case Distance::l1:
      return t.sum(t.abs(t.sub(q, d)));
    case Distance::l2: {
      Val diff = t.sub(q, d);
      return t.sqrt(t.sum(t.mul(diff, diff)), static_cast<S>(kTapeSqrtEps));
    }
    case Distance::cosine:
      return t.shift(t.scale(t.sum(t.mul(q, d)), S(-1)), S(1));
  }
  throw std::runtime_error("unknown distance metric");
}

template <typename S>
Val cross_entropy_loss_node(Tape<S>& t, const std::vector<Val>& q_rows,
                            const std::vector<Val>& d_rows, const std::vector<int>& labels) {
  if (q_rows.empty() || q_rows.size() != d_rows.size() || q_rows.size() != labels.size()) {
    throw std::runtime_error("cross_entropy_loss_node: size mismatch");
  }
  Val total;
  for (size_t j = 0; j < q_rows.size(); ++j) {
    Val yhat = t.clamp(t.sum(t.mul(q_rows[j], d_rows[j])), static_cast<S>(kYhatEps),
                       S(1) - static_cast<S>(kYhatEps));
    Val term;
    if (labels[j] == 1) {
      term = t.scale(t.log(yhat), S(-1));
    } else if (labels[j] == 0) {
      term = t.scale(t.log(t.shift(t.scale(yhat, S(-1)), S(1))), S(-1));
    } else {
      throw std::runtime_error("cross_entropy_loss_node: labels must be 0 or 1");
    }
    total = j == 0 ? term : t.add(total, term);
  }
  return t.scale(total, S(1) / static_cast<S>(q_rows.size()));
}

template <typename S>
struct TripletLossNode {
  Val loss;              // scalar node; a zero leaf when every anchor skipped
  int used_anchors = 0;
  bool all_skipped = false;
  std::vector<MiningResult> picks;
};

template <typename S>
TripletLossNode<S> triplet_loss_node(Tape<S>& t, const std::vector<Val>& q_rows,
                                     const std::vector<Val>& d_rows, const TripletConfig& cfg,
                                     uint64_t seed = 0) {
  cfg.validate();
  if (q_rows.size() != d_rows.size() || q_rows.size() < 2) {
    throw std::runtime_error("triplet_loss_node: need >= 2 matching rows");
  }
  const int B = static_cast<int>(q_rows.size());
  const int64_t m = t.value(q_rows[0]).numel();

  // mining on current values
  Tensor<S> Q({B, m}), D({B, m});
  for (int j = 0; j < B; ++j) {
    const Tensor<S>& qv = t.value(q_rows[static_cast<size_t>(j)]);
    const Tensor<S>& dv = t.value(d_rows[static_cast<size_t>(j)]);
    std::copy(qv.data.begin(), qv.data.end(), Q.data.begin() + static_cast<size_t>(j) * m);
    std::copy(dv.data.begin(), dv.data.end(), D.data.begin() + static_cast<size_t>(j) * m);
  }
  Tensor<S> dists = pairwise_distances(Q, D, cfg.metric);

  TripletLossNode<S> out;
  Val total;
  for (int j = 0; j < B; ++j) {
    MiningResult pick = mine_negative_row(cfg.strategy, j, &dists.data[static_cast<size_t>(j) * B],
                                          static_cast<int64_t>(B), static_cast<S>(cfg.margin),
                                          seed);
    out.picks.push_back(pick);
    if (pick.kind == MiningResult::Kind::skip) continue;
    Val neg;
    if (pick.kind == MiningResult::Kind::index) {
      neg = d_rows[static_cast<size_t>(pick.index)];
    } else {
      Val acc = d_rows[static_cast<size_t>(pick.set[0])];
      for (size_t i = 1; i < pick.set.size(); ++i) {
        acc = t.add(acc, d_rows[static_cast<size_t>(pick.set[i])]);
      }
      neg = t.scale(acc, S(1) / static_cast<S>(pick.set.size()));
    }
    Val pos_dist = distance_node(t, q_rows[static_cast<size_t>(j)],
                                 d_rows[static_cast<size_t>(j)], cfg.metric);
    Val neg_dist = distance_node(t, q_rows[static_cast<size_t>(j)], neg, cfg.metric);
    Val term = t.relu(t.shift(t.sub(pos_dist, neg_dist), static_cast<S>(cfg.margin)));
    total = out.used_anchors == 0 ? term : t.add(total, term);
    ++out.used_anchors;
  }
  if (out.used_anchors == 0) {
    out.all_skipped = true;
    out.loss = t.leaf(Tensor<S>({1}, std::vector<S>{S(0)}));
  } else {
    out.loss = t.scale(total, S(1) / static_cast<S>(out.used_anchors));
  }
  return out;
}

}  // namespace denc
