#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "denc/model.hpp"
#include "denc/tokenizer.hpp"

namespace denc {

struct DistillConfig {
  int64_t student_layers = 1;
  int64_t epochs = 10;
  double learning_rate = 1e-3;
  int64_t batch_size = 16;
  uint64_t seed = 0;
  int64_t holdout_every = 10;  // text i is held out when i % holdout_every == 0

  void validate() const;
};

// Squared L2 distance between two embeddings; equals 2(1 - s.t) when both
// are unit length.
double distill_loss(const TensorF& s, const TensorF& t);

struct DistillResult {
  // Student query tower paired with the teacher's document tower, so the
  // index built by the teacher keeps working under the cheaper encoder.
  DualEncoderModel model;
  std::vector<double> step_losses;    // mean ||s-t||^2 per batch
  std::vector<double> holdout_curve;  // mean holdout L2 distance; [0] is pre-training
  double holdout_mean_l2 = 0.0;       // final entry of holdout_curve
};

// Trains a shallow student to reproduce the teacher's query embeddings on
// the corpus texts. The teacher is read only. student_init, when given,
// supplies the starting student tower (stripped names) instead of a fresh
// initialization; its layer count must match cfg.student_layers.
DistillResult distill_student(const DualEncoderModel& teacher,
                              const std::vector<std::string>& corpus, const Vocab& vocab,
                              const DistillConfig& cfg, const ParamMap* student_init = nullptr);

}  // namespace denc
