#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "denc/model.hpp"
#include "denc/pooling.hpp"
#include "denc/scheduler.hpp"
#include "denc/tokenizer.hpp"

namespace denc {

struct TrainConfig {
  int64_t epochs = 1;
  double learning_rate = 1e-3;
  ScheduleStrategy strategy = ScheduleStrategy::proportional;
  bool proportional_stochastic = false;
  DocPooling pooling = DocPooling::concat;
  uint64_t seed = 0;
  int64_t loss_curve_window = 100;

  void validate() const;
};

struct LossCurvePoint {
  int64_t iteration = 0;  // 1-based, counted across epochs
  std::string task;
  double loss = 0.0;         // weighted task loss at this step
  double running_avg = 0.0;  // mean of the last `loss_curve_window` losses
};

// Trains the model in place, one optimizer step per scheduled batch, and
// returns one curve point per step. Deterministic for a fixed seed; aborts
// with a diagnostic if any step produces a non-finite loss.
std::vector<LossCurvePoint> train_model(DualEncoderModel& model, const std::vector<TaskSpec>& tasks,
                                        const Vocab& vocab, const TrainConfig& cfg);

// CSV with header iteration,task,loss,running_avg_loss.
void save_loss_curve(const std::string& path, const std::vector<LossCurvePoint>& curve);

}  // namespace denc
