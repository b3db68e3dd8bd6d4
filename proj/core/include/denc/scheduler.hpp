#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "denc/data.hpp"
#include "denc/losses.hpp"

namespace denc {

enum class LossKind { cross_entropy, triplet };

LossKind parse_loss_kind(const std::string& s);
std::string to_string(LossKind k);

// One training task: a dataset plus the loss that consumes it. Batches are
// counted with a partial final batch, so every example is seen each epoch.
struct TaskSpec {
  std::string name;
  std::vector<PairExample> dataset;
  LossKind loss = LossKind::cross_entropy;
  TripletConfig triplet;  // read only when loss == triplet
  double weight = 1.0;
  int64_t batch_size = 16;

  int64_t size_in_batches() const;
  void validate() const;
};

enum class ScheduleStrategy { sequential, random, proportional };

ScheduleStrategy parse_schedule_strategy(const std::string& s);
std::string to_string(ScheduleStrategy s);

// One epoch's batch order: entry p names the task (0-based) that supplies
// draw p. Every task index i appears exactly sizes[i] times.
struct EpochPlan {
  std::vector<int64_t> order;
  ScheduleStrategy strategy = ScheduleStrategy::sequential;
  uint64_t seed = 0;
};

// sizes are per-task batch counts. proportional is a deterministic
// largest-remainder interleave; set proportional_stochastic to sample the
// next task weighted by remaining batches instead.
EpochPlan build_epoch_plan(const std::vector<int64_t>& sizes, ScheduleStrategy strategy,
                           uint64_t seed, bool proportional_stochastic = false);

struct ScheduleStep {
  int64_t task = 0;
  std::vector<int64_t> example_indices;  // into tasks[task].dataset
};

// Walks one epoch of a plan. Each task's examples are shuffled once per
// (seed, epoch, task) stream and consumed exactly once.
class EpochIterator {
 public:
  EpochIterator(const std::vector<TaskSpec>& tasks, const EpochPlan& plan, uint64_t seed,
                int64_t epoch);

  // Fills step and advances; false once the plan is exhausted.
  bool next(ScheduleStep& step);

 private:
  std::vector<int64_t> plan_;
  std::vector<int64_t> batch_sizes_;
  std::vector<std::vector<int64_t>> orders_;  // per-task shuffled example indices
  std::vector<size_t> consumed_;
  size_t cursor_ = 0;
};

}  // namespace denc
