#include <doctest.h>

#include <cmath>
#include <vector>

#include "denc/losses.hpp"
#include "denc/rng.hpp"
#include "gradcheck.hpp"

using denc::Distance;
using denc::MiningResult;
using denc::MiningStrategy;
using denc::Tensor;
using denc::TensorD;
using denc::TripletConfig;
using denc::Val;

namespace {

// ---- brute-force oracle, written from the loss definitions ----

double odist(const std::vector<double>& a, const std::vector<double>& b, Distance m) {
  double s = 0;
  if (m == Distance::l1) {
    for (size_t i = 0; i < a.size(); ++i) s += std::fabs(a[i] - b[i]);
    return s;
  }
  if (m == Distance::l2) {
    for (size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return std::sqrt(s);
  }
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return 1.0 - s;
}

std::vector<double> row_of(const TensorD& t, int j) {
  const int64_t m = t.shape[1];
  return {t.data.begin() + static_cast<long>(j) * m,
          t.data.begin() + static_cast<long>(j + 1) * m};
}

struct OraclePick {
  MiningResult::Kind kind;
  int index = -1;
  std::vector<int> set;
};

OraclePick oracle_mine(MiningStrategy st, int j, const TensorD& Q, const TensorD& D, double alpha,
                       Distance metric, uint64_t seed) {
  const int B = static_cast<int>(Q.shape[0]);
  const std::vector<double> qj = row_of(Q, j);
  const double pos = odist(qj, row_of(D, j), metric);
  OraclePick p;
  if (st == MiningStrategy::batch_all) {
    for (int k = 0; k < B; ++k) {
      if (k != j && odist(qj, row_of(D, k), metric) <= pos + alpha) p.set.push_back(k);
    }
    p.kind = p.set.empty() ? MiningResult::Kind::skip : MiningResult::Kind::mean_set;
    return p;
  }
  if (st == MiningStrategy::random) {
    p.kind = MiningResult::Kind::index;
    p.index = denc::random_negative_index(j, B, seed);
    return p;
  }
  // hard / semi-hard: first-scan argmin, strict improvement
  int best = -1;
  for (int k = 0; k < B; ++k) {
    if (k == j) continue;
    if (st == MiningStrategy::semi_hard && !(odist(qj, row_of(D, k), metric) > pos)) continue;
    if (best < 0 || odist(qj, row_of(D, k), metric) < odist(qj, row_of(D, best), metric)) best = k;
  }
  if (best < 0) return oracle_mine(MiningStrategy::hard, j, Q, D, alpha, metric, seed);
  p.kind = MiningResult::Kind::index;
  p.index = best;
  return p;
}

double oracle_triplet(const TensorD& Q, const TensorD& D, const TripletConfig& cfg,
                      uint64_t seed) {
  const int B = static_cast<int>(Q.shape[0]);
  double total = 0;
  int used = 0;
  for (int j = 0; j < B; ++j) {
    OraclePick p = oracle_mine(cfg.strategy, j, Q, D, cfg.margin, cfg.metric, seed);
    if (p.kind == MiningResult::Kind::skip) continue;
    const std::vector<double> qj = row_of(Q, j);
    double neg;
    if (p.kind == MiningResult::Kind::index) {
      neg = odist(qj, row_of(D, p.index), cfg.metric);
    } else {
      std::vector<double> mean(static_cast<size_t>(Q.shape[1]), 0.0);
      for (int k : p.set) {
        const std::vector<double> dk = row_of(D, k);
        for (size_t i = 0; i < mean.size(); ++i) mean[i] += dk[i];
      }
      for (double& v : mean) v /= static_cast<double>(p.set.size());
      neg = odist(qj, mean, cfg.metric);
    }
    total += std::max(0.0, odist(qj, row_of(D, j), cfg.metric) - neg + cfg.margin);
    ++used;
  }
  return used == 0 ? 0.0 : total / used;
}

double oracle_cross_entropy(const TensorD& Q, const TensorD& D, const std::vector<int>& y) {
  double total = 0;
  for (int j = 0; j < static_cast<int>(Q.shape[0]); ++j) {
    double dot = 0;
    const auto qj = row_of(Q, j), dj = row_of(D, j);
    for (size_t i = 0; i < qj.size(); ++i) dot += qj[i] * dj[i];
    double yhat = std::max(0.0, dot);
    yhat = std::min(std::max(yhat, 1e-7), 1.0 - 1e-7);
    total += y[static_cast<size_t>(j)] * std::log(1.0 / yhat) +
             (1 - y[static_cast<size_t>(j)]) * std::log(1.0 / (1.0 - yhat));
  }
  return total / static_cast<double>(Q.shape[0]);
}

TensorD random_unit_rows(denc::Rng& rng, int64_t b, int64_t m) {
  TensorD t({b, m});
  for (int64_t j = 0; j < b; ++j) {
    double ss = 0;
    for (int64_t i = 0; i < m; ++i) {
      const double v = rng.next_normal();
      t.at(j, i) = v;
      ss += v * v;
    }
    const double norm = std::sqrt(ss);
    for (int64_t i = 0; i < m; ++i) t.at(j, i) /= norm;
  }
  return t;
}

bool same_pick(const MiningResult& a, const OraclePick& b) {
  if (a.kind != b.kind) return false;
  if (a.kind == MiningResult::Kind::index) return a.index == b.index;
  if (a.kind == MiningResult::Kind::mean_set) return a.set == b.set;
  return true;
}

const std::vector<MiningStrategy> kAllStrategies = {
    MiningStrategy::batch_all, MiningStrategy::hard, MiningStrategy::semi_hard,
    MiningStrategy::random};
const std::vector<Distance> kAllMetrics = {Distance::l1, Distance::l2, Distance::cosine};

}  // namespace

TEST_SUITE("losses_mining") {

TEST_CASE("clamped cosine clamps and passes through") {
  TensorD v({2}, {1.0, 0.0});
  TensorD anti({2}, {-1.0, 0.0});
  CHECK(denc::clamped_cosine(v, anti) == 0.0);
  CHECK(denc::clamped_cosine(v, v) == 1.0);
  TensorD w({2}, {0.37, std::sqrt(1.0 - 0.37 * 0.37)});
  CHECK(denc::clamped_cosine(v, w) == doctest::Approx(0.37).epsilon(1e-12));
}

TEST_CASE("cross entropy at the anchors of its definition") {
  // perfect positive: yhat clamps to 1-eps, loss ~ 1e-7
  TensorD q({1, 2}, {1.0, 0.0});
  CHECK(denc::cross_entropy_loss(q, q, {1}) == doctest::Approx(0.0).epsilon(1e-6));
  // yhat = 0.5 for one positive and one negative: mean is ln 2
  TensorD q2({2, 2}, {1.0, 0.0, 1.0, 0.0});
  const double s = std::sqrt(1.0 - 0.25);
  TensorD d2({2, 2}, {0.5, s, 0.5, s});
  CHECK(denc::cross_entropy_loss(q2, d2, {1, 0}) == doctest::Approx(std::log(2.0)).epsilon(1e-9));
}

TEST_CASE("cross entropy matches the scalar-loop oracle") {
  denc::Rng rng(21);
  for (int it = 0; it < 50; ++it) {
    const int64_t b = 2 + static_cast<int64_t>(rng.next_below(14));
    const int64_t m = 2 + static_cast<int64_t>(rng.next_below(7));
    TensorD Q = random_unit_rows(rng, b, m);
    TensorD D = random_unit_rows(rng, b, m);
    std::vector<int> y;
    for (int64_t j = 0; j < b; ++j) y.push_back(static_cast<int>(rng.next_below(2)));
    CHECK(denc::cross_entropy_loss(Q, D, y) ==
          doctest::Approx(oracle_cross_entropy(Q, D, y)).epsilon(1e-9));
  }
}

TEST_CASE("cross entropy is minimized by matching predictions") {
  // yhat == y on every pair drives the loss to the clamp floor
  TensorD q({2, 2}, {1.0, 0.0, 0.0, 1.0});
  TensorD d({2, 2}, {1.0, 0.0, 0.0, -1.0});  // dots: 1 and -1 -> yhat 1, 0
  const double at_match = denc::cross_entropy_loss(q, d, {1, 0});
  CHECK(at_match < 1e-6);
  const double off_match = denc::cross_entropy_loss(q, d, {0, 1});
  CHECK(off_match > 1.0);
}

TEST_CASE("pairwise distances agree with the double loop") {
  TensorD same({2, 2}, {1.0, 0.0, 1.0, 0.0});
  TensorD l2d = denc::pairwise_distances(same, same, Distance::l2);
  CHECK(l2d.at(0, 0) == 0.0);
  CHECK(l2d.at(1, 1) == 0.0);

  TensorD a({1, 2}, {1.0, 0.0});
  TensorD b({1, 2}, {0.0, 1.0});
  CHECK(denc::pairwise_distances(a, b, Distance::l1).at(0, 0) == doctest::Approx(2.0));

  denc::Rng rng(31);
  for (Distance metric : kAllMetrics) {
    TensorD Q = random_unit_rows(rng, 6, 4);
    TensorD D = random_unit_rows(rng, 6, 4);
    TensorD got = denc::pairwise_distances(Q, D, metric);
    for (int j = 0; j < 6; ++j) {
      for (int k = 0; k < 6; ++k) {
        CHECK(got.at(j, k) == doctest::Approx(odist(row_of(Q, j), row_of(D, k), metric))
                                  .epsilon(1e-12));
        CHECK(got.at(j, k) >= 0.0);
      }
    }
  }
}

TEST_CASE("two-element batch has exactly one hard candidate") {
  denc::Rng rng(41);
  TensorD Q = random_unit_rows(rng, 2, 4);
  TensorD D = random_unit_rows(rng, 2, 4);
  MiningResult r = denc::mine_negative(MiningStrategy::hard, 0, Q, D, 0.2, Distance::l1);
  CHECK(r.kind == MiningResult::Kind::index);
  CHECK(r.index == 1);
}

TEST_CASE("batch-all skips the anchor when every negative is easy") {
  // positive at distance 0, both negatives far beyond the margin
  TensorD Q({3, 2}, {1.0, 0.0, 0.0, 1.0, -1.0, 0.0});
  TensorD D({3, 2}, {1.0, 0.0, 0.0, 1.0, -1.0, 0.0});
  MiningResult r = denc::mine_negative(MiningStrategy::batch_all, 0, Q, D, 0.2, Distance::l1);
  CHECK(r.kind == MiningResult::Kind::skip);
}

TEST_CASE("mining matches the exhaustive oracle on 200 random batches") {
  denc::Rng rng(51);
  for (int it = 0; it < 200; ++it) {
    const int64_t b = 2 + static_cast<int64_t>(rng.next_below(15));  // B <= 16
    const int64_t m = 2 + static_cast<int64_t>(rng.next_below(7));   // M <= 8
    TensorD Q = random_unit_rows(rng, b, m);
    TensorD D = random_unit_rows(rng, b, m);
    const Distance metric = kAllMetrics[it % kAllMetrics.size()];
    const uint64_t seed = 1000 + static_cast<uint64_t>(it);
    for (MiningStrategy st : kAllStrategies) {
      for (int j = 0; j < b; ++j) {
        MiningResult lib = denc::mine_negative(st, j, Q, D, 0.2, metric, seed);
        OraclePick ora = oracle_mine(st, j, Q, D, 0.2, metric, seed);
        CHECK(same_pick(lib, ora));
      }
      TripletConfig cfg;
      cfg.metric = metric;
      cfg.strategy = st;
      auto lib_loss = denc::triplet_loss(Q, D, cfg, seed);
      CHECK(lib_loss.value == doctest::Approx(oracle_triplet(Q, D, cfg, seed)).epsilon(1e-9));
      CHECK(lib_loss.value >= 0.0);
    }
  }
}

TEST_CASE("equal positive and negative distances cost exactly the margin") {
  // every query-document distance is 2, so pos == neg for both anchors
  TensorD Q({2, 2}, {1.0, 0.0, -1.0, 0.0});
  TensorD D({2, 2}, {0.0, 1.0, 0.0, -1.0});
  TripletConfig cfg;
  cfg.strategy = MiningStrategy::hard;
  auto out = denc::triplet_loss(Q, D, cfg);
  CHECK(out.value == doctest::Approx(cfg.margin).epsilon(1e-12));
}

TEST_CASE("hard strategy reports zero loss when negatives clear the margin") {
  // positives coincide with anchors; negatives are antipodal
  TensorD Q({2, 2}, {1.0, 0.0, -1.0, 0.0});
  TensorD D({2, 2}, {1.0, 0.0, -1.0, 0.0});
  TripletConfig cfg;
  cfg.strategy = MiningStrategy::hard;
  auto out = denc::triplet_loss(Q, D, cfg);
  CHECK(out.value == 0.0);
  CHECK_FALSE(out.all_skipped);
}

TEST_CASE("all-skipped batch reports zero with a flag") {
  TensorD Q({2, 2}, {1.0, 0.0, -1.0, 0.0});
  TensorD D({2, 2}, {1.0, 0.0, -1.0, 0.0});
  TripletConfig cfg;
  cfg.strategy = MiningStrategy::batch_all;
  auto out = denc::triplet_loss(Q, D, cfg);
  CHECK(out.value == 0.0);
  CHECK(out.all_skipped);
  CHECK(out.used_anchors == 0);
}

TEST_CASE("semi-hard candidates sit beyond the positive and above the hard negative") {
  denc::Rng rng(61);
  for (int it = 0; it < 40; ++it) {
    TensorD Q = random_unit_rows(rng, 8, 4);
    TensorD D = random_unit_rows(rng, 8, 4);
    for (Distance metric : kAllMetrics) {
      TensorD dist = denc::pairwise_distances(Q, D, metric);
      for (int j = 0; j < 8; ++j) {
        MiningResult hard = denc::mine_negative(MiningStrategy::hard, j, Q, D, 0.2, metric);
        MiningResult semi = denc::mine_negative(MiningStrategy::semi_hard, j, Q, D, 0.2, metric);
        REQUIRE(hard.kind == MiningResult::Kind::index);
        REQUIRE(semi.kind == MiningResult::Kind::index);
        const bool fell_back = !(dist.at(j, semi.index) > dist.at(j, j));
        if (!fell_back) {
          CHECK(dist.at(j, semi.index) > dist.at(j, j));
          CHECK(dist.at(j, hard.index) <= dist.at(j, semi.index));
        } else {
          CHECK(semi.index == hard.index);
        }
      }
    }
  }
}

TEST_CASE("deterministic strategies commute with batch permutation") {
  denc::Rng rng(71);
  TensorD Q = random_unit_rows(rng, 6, 4);
  TensorD D = random_unit_rows(rng, 6, 4);
  const std::vector<int> perm = {3, 0, 5, 1, 4, 2};
  TensorD Qp({6, 4}), Dp({6, 4});
  for (int j = 0; j < 6; ++j) {
    for (int i = 0; i < 4; ++i) {
      Qp.at(j, i) = Q.at(perm[static_cast<size_t>(j)], i);
      Dp.at(j, i) = D.at(perm[static_cast<size_t>(j)], i);
    }
  }
  std::vector<int> inv(6);
  for (int j = 0; j < 6; ++j) inv[static_cast<size_t>(perm[static_cast<size_t>(j)])] = j;
  for (MiningStrategy st :
       {MiningStrategy::batch_all, MiningStrategy::hard, MiningStrategy::semi_hard}) {
    for (Distance metric : kAllMetrics) {
      for (int j = 0; j < 6; ++j) {
        MiningResult orig = denc::mine_negative(st, perm[static_cast<size_t>(j)], Q, D, 0.2,
                                                metric);
        MiningResult perd = denc::mine_negative(st, j, Qp, Dp, 0.2, metric);
        REQUIRE(orig.kind == perd.kind);
        if (orig.kind == MiningResult::Kind::index) {
          CHECK(perd.index == inv[static_cast<size_t>(orig.index)]);
        } else if (orig.kind == MiningResult::Kind::mean_set) {
          std::vector<int> mapped;
          for (int k : orig.set) mapped.push_back(inv[static_cast<size_t>(k)]);
          std::sort(mapped.begin(), mapped.end());
          CHECK(perd.set == mapped);
        }
      }
    }
  }
}

TEST_CASE("multi task loss is the weighted sum") {
  CHECK(denc::multi_task_loss({{2.5, 1.0}}) == doctest::Approx(2.5));
  CHECK(denc::multi_task_loss({{1.0, 1.0}, {2.0, 1.0}}) == doctest::Approx(3.0));
  CHECK(denc::multi_task_loss({{4.0, 0.5}, {1.0, 2.0}}) == doctest::Approx(4.0));
  CHECK_THROWS_AS(denc::multi_task_loss({{1.0, 0.0}}), std::runtime_error);
}

TEST_CASE("graph builders reproduce the reference values") {
  denc::Rng rng(81);
  for (int it = 0; it < 10; ++it) {
    const int64_t b = 3 + static_cast<int64_t>(rng.next_below(6));
    TensorD Q = random_unit_rows(rng, b, 6);
    TensorD D = random_unit_rows(rng, b, 6);
    denc::TapeD t;
    std::vector<Val> q_rows, d_rows;
    for (int64_t j = 0; j < b; ++j) {
      q_rows.push_back(t.leaf(TensorD({1, 6}, row_of(Q, static_cast<int>(j)))));
      d_rows.push_back(t.leaf(TensorD({1, 6}, row_of(D, static_cast<int>(j)))));
    }
    std::vector<int> y;
    for (int64_t j = 0; j < b; ++j) y.push_back(static_cast<int>(rng.next_below(2)));
    Val ce = denc::cross_entropy_loss_node(t, q_rows, d_rows, y);
    CHECK(t.value(ce).data[0] ==
          doctest::Approx(denc::cross_entropy_loss(Q, D, y)).epsilon(1e-12));
    for (MiningStrategy st : kAllStrategies) {
      TripletConfig cfg;
      cfg.strategy = st;
      cfg.metric = kAllMetrics[it % kAllMetrics.size()];
      auto node = denc::triplet_loss_node(t, q_rows, d_rows, cfg, 7);
      auto ref = denc::triplet_loss(Q, D, cfg, 7);
      CHECK(node.used_anchors == ref.used_anchors);
      // the tape's l2 carries a 1e-12 softening inside sqrt
      CHECK(t.value(node.loss).data[0] == doctest::Approx(ref.value).epsilon(1e-6));
    }
  }
}

TEST_CASE("loss gradients match finite differences") {
  // The losses have kinks (clamp edges, hinge zero, l1 absolute values,
  // argmin flips). Draw batches until every such boundary sits more than
  // the FD step away, then check.
  const int64_t b = 5, m = 6;
  const std::vector<int> y = {1, 0, 1, 1, 0};
  const std::vector<std::pair<MiningStrategy, Distance>> trip_cases = {
      {MiningStrategy::hard, Distance::l1},
      {MiningStrategy::semi_hard, Distance::l1},
      {MiningStrategy::batch_all, Distance::l2},
      {MiningStrategy::random, Distance::l1},
  };

  auto smooth_here = [&](const TensorD& Q, const TensorD& D) {
    for (int j = 0; j < b; ++j) {
      double dot = 0;
      for (int64_t i = 0; i < m; ++i) dot += Q.at(j, i) * D.at(j, i);
      if (std::fabs(dot) < 1e-3 || dot > 1.0 - 1e-3) return false;  // clamp kinks
    }
    for (const auto& [st, metric] : trip_cases) {
      TripletConfig cfg;
      cfg.strategy = st;
      cfg.metric = metric;
      TensorD dist = denc::pairwise_distances(Q, D, metric);
      auto ref = denc::triplet_loss(Q, D, cfg, 3);
      for (int j = 0; j < b; ++j) {
        const MiningResult& pick = ref.picks[static_cast<size_t>(j)];
        if (pick.kind == MiningResult::Kind::skip) continue;
        // selection boundaries: distances separated enough that the argmin
        // and the batch-all membership cannot flip under the FD step
        for (int k = 0; k < b; ++k) {
          if (k == j) continue;
          if (st == MiningStrategy::batch_all &&
              std::fabs(dist.at(j, k) - (dist.at(j, j) + cfg.margin)) < 1e-3) {
            return false;
          }
          for (int k2 = k + 1; k2 < b; ++k2) {
            if (k2 != j && std::fabs(dist.at(j, k) - dist.at(j, k2)) < 1e-3) return false;
          }
          if (std::fabs(dist.at(j, k) - dist.at(j, j)) < 1e-3) return false;
        }
        std::vector<double> neg;
        if (pick.kind == MiningResult::Kind::index) {
          neg = row_of(D, pick.index);
        } else {
          neg.assign(static_cast<size_t>(m), 0.0);
          for (int k : pick.set)
            for (int64_t i = 0; i < m; ++i) neg[static_cast<size_t>(i)] += D.at(k, i);
          for (double& v : neg) v /= static_cast<double>(pick.set.size());
        }
        const std::vector<double> qj = row_of(Q, j);
        const double hinge =
            dist.at(j, j) - odist(qj, neg, metric) + cfg.margin;
        if (std::fabs(hinge) < 1e-3) return false;
        if (metric == Distance::l1) {  // absolute-value kinks per coordinate
          const std::vector<double> dj = row_of(D, j);
          for (int64_t i = 0; i < m; ++i) {
            if (std::fabs(qj[static_cast<size_t>(i)] - dj[static_cast<size_t>(i)]) < 1e-4 ||
                std::fabs(qj[static_cast<size_t>(i)] - neg[static_cast<size_t>(i)]) < 1e-4) {
              return false;
            }
          }
        }
      }
    }
    return true;
  };

  TensorD Q, D;
  bool found = false;
  for (uint64_t seed = 91; seed < 191; ++seed) {
    denc::Rng rng(seed);
    Q = random_unit_rows(rng, b, m);
    D = random_unit_rows(rng, b, m);
    if (smooth_here(Q, D)) {
      found = true;
      break;
    }
  }
  REQUIRE(found);

  enum class Which { ce, trip0, trip1, trip2, trip3 };
  auto build = [&](Which which, const std::vector<double>& x, denc::TapeD& t,
                   std::vector<Val>& leaves) {
    std::vector<Val> q_rows, d_rows;
    for (int64_t j = 0; j < b; ++j) {
      std::vector<double> qr(x.begin() + j * m, x.begin() + (j + 1) * m);
      std::vector<double> dr(x.begin() + (b + j) * m, x.begin() + (b + j + 1) * m);
      q_rows.push_back(t.leaf(TensorD({1, m}, qr), true));
      d_rows.push_back(t.leaf(TensorD({1, m}, dr), true));
    }
    leaves = q_rows;
    leaves.insert(leaves.end(), d_rows.begin(), d_rows.end());
    if (which == Which::ce) return denc::cross_entropy_loss_node(t, q_rows, d_rows, y);
    const auto& [st, metric] = trip_cases[static_cast<size_t>(which) - 1];
    TripletConfig cfg;
    cfg.strategy = st;
    cfg.metric = metric;
    return denc::triplet_loss_node(t, q_rows, d_rows, cfg, 3).loss;
  };

  std::vector<double> x0;
  x0.insert(x0.end(), Q.data.begin(), Q.data.end());
  x0.insert(x0.end(), D.data.begin(), D.data.end());

  for (Which which : {Which::ce, Which::trip0, Which::trip1, Which::trip2, Which::trip3}) {
    auto f = [&](const std::vector<double>& x) {
      denc::TapeD t;
      std::vector<Val> leaves;
      Val loss = build(which, x, t, leaves);
      return t.value(loss).data[0];
    };
    std::vector<double> analytic;
    {
      denc::TapeD t;
      std::vector<Val> leaves;
      Val loss = build(which, x0, t, leaves);
      t.backward(loss);
      for (Val v : leaves) {
        const TensorD& g = t.grad(v);
        analytic.insert(analytic.end(), g.data.begin(), g.data.end());
      }
    }
    auto rep = gradcheck::check(f, x0, analytic);
    CAPTURE(static_cast<int>(which));
    CAPTURE(rep.worst_index);
    CHECK(rep.max_rel_err < 1e-4);
  }
}

TEST_CASE("strategy and metric names parse both ways") {
  for (const char* s : {"batch_all", "hard", "semi_hard", "random"}) {
    CHECK(denc::to_string(denc::parse_strategy(s)) == s);
  }
  for (const char* s : {"l1", "l2", "cosine"}) {
    CHECK(denc::to_string(denc::parse_distance(s)) == s);
  }
  CHECK_THROWS_AS(denc::parse_strategy("batchall"), std::runtime_error);
  CHECK_THROWS_AS(denc::parse_distance("L1"), std::runtime_error);
}

}  // TEST_SUITE
