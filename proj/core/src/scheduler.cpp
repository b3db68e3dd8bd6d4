#include "denc/scheduler.hpp"

#include <numeric>
#include <set>
#include <stdexcept>

#include "denc/rng.hpp"

namespace denc {

LossKind parse_loss_kind(const std::string& s) {
  if (s == "cross_entropy") return LossKind::cross_entropy;
  if (s == "triplet") return LossKind::triplet;
  throw std::runtime_error("unknown loss kind: " + s);
}

std::string to_string(LossKind k) {
  return k == LossKind::cross_entropy ? "cross_entropy" : "triplet";
}

int64_t TaskSpec::size_in_batches() const {
  const int64_t n = static_cast<int64_t>(dataset.size());
  return (n + batch_size - 1) / batch_size;
}

void TaskSpec::validate() const {
  if (name.empty()) throw std::runtime_error("task has no name");
  if (name.find_first_of(",\r\n") != std::string::npos) {
    throw std::runtime_error("task name '" + name + "' would break the loss curve CSV");
  }
  if (dataset.empty()) throw std::runtime_error("task " + name + ": empty dataset");
  if (batch_size < 1) throw std::runtime_error("task " + name + ": batch_size must be >= 1");
  if (!(weight > 0.0)) throw std::runtime_error("task " + name + ": weight must be > 0");
  if (loss == LossKind::triplet) {
    triplet.validate();
    // Mining treats every in-batch document as a negative candidate, so the
    // dataset itself must hold matching pairs only.
    for (const PairExample& ex : dataset) {
      if (ex.label != PairLabel::positive) {
        throw std::runtime_error("task " + name + ": triplet loss needs positive pairs only");
      }
    }
  }
}

ScheduleStrategy parse_schedule_strategy(const std::string& s) {
  if (s == "sequential") return ScheduleStrategy::sequential;
  if (s == "random") return ScheduleStrategy::random;
  if (s == "proportional") return ScheduleStrategy::proportional;
  throw std::runtime_error("unknown schedule strategy: " + s);
}

std::string to_string(ScheduleStrategy s) {
  switch (s) {
    case ScheduleStrategy::sequential:
      return "sequential";
    case ScheduleStrategy::random:
      return "random";
    case ScheduleStrategy::proportional:
      return "proportional";
  }
  throw std::runtime_error("unknown schedule strategy");
}

namespace {

constexpr uint64_t kPlanStream = 0x70a1;

// Largest-remainder interleave. At each position the task whose quota is
// furthest ahead of its draw count goes next; deficits are compared as
// exact integers (scaled by the total) so ties break by task index, not by
// float rounding.
std::vector<int64_t> proportional_order(const std::vector<int64_t>& sizes, int64_t total) {
  const int64_t n = static_cast<int64_t>(sizes.size());
  std::vector<int64_t> drawn(static_cast<size_t>(n), 0);
  std::vector<int64_t> order;
  order.reserve(static_cast<size_t>(total));
  for (int64_t p = 1; p <= total; ++p) {
    int64_t best = -1;
    int64_t best_deficit = 0;
    for (int64_t i = 0; i < n; ++i) {
      if (drawn[static_cast<size_t>(i)] == sizes[static_cast<size_t>(i)]) continue;
      const int64_t deficit = p * sizes[static_cast<size_t>(i)] -
                              drawn[static_cast<size_t>(i)] * total;
      if (best < 0 || deficit > best_deficit) {
        best = i;
        best_deficit = deficit;
      }
    }
    order.push_back(best);
    ++drawn[static_cast<size_t>(best)];
  }
  return order;
}

std::vector<int64_t> stochastic_order(const std::vector<int64_t>& sizes, int64_t total,
                                      Rng& rng) {
  std::vector<int64_t> remaining = sizes;
  std::vector<int64_t> order;
  order.reserve(static_cast<size_t>(total));
  for (int64_t left = total; left > 0; --left) {
    uint64_t r = rng.next_below(static_cast<uint64_t>(left));
    for (size_t i = 0; i < remaining.size(); ++i) {
      if (r < static_cast<uint64_t>(remaining[i])) {
        order.push_back(static_cast<int64_t>(i));
        --remaining[i];
        break;
      }
      r -= static_cast<uint64_t>(remaining[i]);
    }
  }
  return order;
}

}  // namespace

EpochPlan build_epoch_plan(const std::vector<int64_t>& sizes, ScheduleStrategy strategy,
                           uint64_t seed, bool proportional_stochastic) {
  if (sizes.empty()) throw std::runtime_error("build_epoch_plan: no tasks");
  for (size_t i = 0; i < sizes.size(); ++i) {
    if (sizes[i] < 1) {
      throw std::runtime_error("build_epoch_plan: task " + std::to_string(i) +
                               " has no batches");
    }
  }
  const int64_t total = std::accumulate(sizes.begin(), sizes.end(), int64_t{0});

  EpochPlan plan;
  plan.strategy = strategy;
  plan.seed = seed;
  switch (strategy) {
    case ScheduleStrategy::sequential: {
      for (size_t i = 0; i < sizes.size(); ++i) {
        plan.order.insert(plan.order.end(), static_cast<size_t>(sizes[i]),
                          static_cast<int64_t>(i));
      }
      break;
    }
    case ScheduleStrategy::random: {
      for (size_t i = 0; i < sizes.size(); ++i) {
        plan.order.insert(plan.order.end(), static_cast<size_t>(sizes[i]),
                          static_cast<int64_t>(i));
      }
      Rng rng(mix_seed(seed, kPlanStream));
      rng.shuffle(plan.order);
      break;
    }
    case ScheduleStrategy::proportional: {
      if (proportional_stochastic) {
        Rng rng(mix_seed(seed, kPlanStream));
        plan.order = stochastic_order(sizes, total, rng);
      } else {
        plan.order = proportional_order(sizes, total);
      }
      break;
    }
  }
  return plan;
}

EpochIterator::EpochIterator(const std::vector<TaskSpec>& tasks, const EpochPlan& plan,
                             uint64_t seed, int64_t epoch)
    : plan_(plan.order) {
  if (tasks.empty()) throw std::runtime_error("EpochIterator: no tasks");
  std::set<std::string> names;
  for (const TaskSpec& task : tasks) {
    task.validate();
    if (!names.insert(task.name).second) {
      throw std::runtime_error("EpochIterator: duplicate task name " + task.name);
    }
  }
  for (int64_t idx : plan_) {
    if (idx < 0 || idx >= static_cast<int64_t>(tasks.size())) {
      throw std::runtime_error("EpochIterator: plan names task " + std::to_string(idx) +
                               " but only " + std::to_string(tasks.size()) + " exist");
    }
  }
  for (size_t i = 0; i < tasks.size(); ++i) {
    batch_sizes_.push_back(tasks[i].batch_size);
    std::vector<int64_t> order(tasks[i].dataset.size());
    std::iota(order.begin(), order.end(), int64_t{0});
    Rng rng(mix_seed(seed, static_cast<uint64_t>(epoch), static_cast<uint64_t>(i)));
    rng.shuffle(order);
    orders_.push_back(std::move(order));
    consumed_.push_back(0);
  }
}

bool EpochIterator::next(ScheduleStep& step) {
  if (cursor_ == plan_.size()) return false;
  const int64_t task = plan_[cursor_++];
  const std::vector<int64_t>& order = orders_[static_cast<size_t>(task)];
  size_t& done = consumed_[static_cast<size_t>(task)];
  if (done >= order.size()) {
    throw std::runtime_error("EpochIterator: plan draws task " + std::to_string(task) +
                             " past its dataset");
  }
  const size_t take =
      std::min(static_cast<size_t>(batch_sizes_[static_cast<size_t>(task)]), order.size() - done);
  step.task = task;
  step.example_indices.assign(order.begin() + static_cast<int64_t>(done),
                              order.begin() + static_cast<int64_t>(done + take));
  done += take;
  return true;
}

}  // namespace denc
