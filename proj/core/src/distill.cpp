#include "denc/distill.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "denc/adam.hpp"
#include "denc/rng.hpp"

namespace denc {

void DistillConfig::validate() const {
  if (student_layers < 1) throw std::runtime_error("distill: student_layers must be >= 1");
  if (epochs < 0) throw std::runtime_error("distill: epochs must be >= 0");
  if (!(learning_rate > 0.0)) throw std::runtime_error("distill: learning_rate must be > 0");
  if (batch_size < 1) throw std::runtime_error("distill: batch_size must be >= 1");
  if (holdout_every < 2) {
    throw std::runtime_error("distill: holdout_every must be >= 2 or no text is left to train on");
  }
}

double distill_loss(const TensorF& s, const TensorF& t) {
  if (s.numel() != t.numel()) {
    throw std::runtime_error("distill_loss: embedding sizes differ");
  }
  double total = 0.0;
  for (int64_t i = 0; i < s.numel(); ++i) {
    const double d = static_cast<double>(s.data[static_cast<size_t>(i)]) -
                     static_cast<double>(t.data[static_cast<size_t>(i)]);
    total += d * d;
  }
  return total;
}

namespace {

constexpr uint64_t kStudentInitTag = 3;
constexpr uint64_t kShuffleTag = 0xd157;

}  // namespace

DistillResult distill_student(const DualEncoderModel& teacher,
                              const std::vector<std::string>& corpus, const Vocab& vocab,
                              const DistillConfig& cfg, const ParamMap* student_init) {
  cfg.validate();
  teacher.config.validate();
  if (corpus.size() < 2) {
    throw std::runtime_error("distill: corpus needs at least one train and one holdout text");
  }

  EncoderConfig student_cfg = teacher.config;
  student_cfg.num_layers = cfg.student_layers;
  student_cfg.shared_weights = true;

  ParamMap student = student_init
                         ? *student_init
                         : init_encoder_params(student_cfg, mix_seed(cfg.seed, kStudentInitTag));
  if (student_init) {
    // Catch a student_init built for a different architecture before training.
    const ParamMap expected = init_encoder_params(student_cfg, 0);
    if (student.size() != expected.size()) {
      throw std::runtime_error("distill: student_init does not match the student architecture");
    }
    for (const auto& [name, t] : expected) {
      auto it = student.find(name);
      if (it == student.end() || it->second.shape != t.shape) {
        throw std::runtime_error("distill: student_init parameter mismatch at " + name);
      }
    }
  }

  // Teacher targets, computed once; the teacher is never bound with
  // gradients so its parameters cannot move.
  const ParamMap teacher_tower = teacher.query_tower();
  const int64_t m_dim = teacher.config.output_dim;
  std::vector<TokenSequence> seqs;
  std::vector<TensorF> targets;
  seqs.reserve(corpus.size());
  targets.reserve(corpus.size());
  for (const std::string& text : corpus) {
    seqs.push_back(encode(text, vocab, teacher.config.max_len_query, true));
    targets.push_back(encode_text(teacher_tower, teacher.config, seqs.back()));
  }

  std::vector<int64_t> train_idx, holdout_idx;
  for (size_t i = 0; i < corpus.size(); ++i) {
    (i % static_cast<size_t>(cfg.holdout_every) == 0 ? holdout_idx : train_idx)
        .push_back(static_cast<int64_t>(i));
  }

  DistillResult result;
  auto holdout_mean = [&]() {
    double total = 0.0;
    for (int64_t i : holdout_idx) {
      const TensorF s = encode_text(student, student_cfg, seqs[static_cast<size_t>(i)]);
      total += std::sqrt(distill_loss(s, targets[static_cast<size_t>(i)]));
    }
    return total / static_cast<double>(holdout_idx.size());
  };
  result.holdout_curve.push_back(holdout_mean());

  Adam<float> adam(AdamConfig{.lr = cfg.learning_rate});
  for (int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<int64_t> order = train_idx;
    Rng rng(mix_seed(cfg.seed, kShuffleTag, static_cast<uint64_t>(epoch)));
    rng.shuffle(order);

    for (size_t begin = 0; begin < order.size(); begin += static_cast<size_t>(cfg.batch_size)) {
      const size_t end = std::min(order.size(), begin + static_cast<size_t>(cfg.batch_size));
      TapeF tape;
      BoundParams<float> bound = bind_tower(tape, student, "", /*requires_grad=*/true);
      Val total;
      for (size_t k = begin; k < end; ++k) {
        const size_t i = static_cast<size_t>(order[k]);
        Val s_row = encoder_forward(tape, bound, student_cfg, seqs[i]);
        TensorF target({1, m_dim});
        target.data = targets[i].data;
        Val diff = tape.sub(s_row, tape.leaf(target));
        Val sq = tape.sum(tape.mul(diff, diff));
        total = k == begin ? sq : tape.add(total, sq);
      }
      Val loss = tape.scale(total, 1.0f / static_cast<float>(end - begin));
      const double loss_value = static_cast<double>(tape.value(loss).data[0]);
      if (!std::isfinite(loss_value)) {
        throw std::runtime_error("distill diverged: non-finite loss in epoch " +
                                 std::to_string(epoch));
      }
      result.step_losses.push_back(loss_value);
      tape.backward(loss);
      ParamMap grads;
      collect_grads(tape, bound, "", grads);
      adam.step(student, grads);
    }
    result.holdout_curve.push_back(holdout_mean());
  }
  result.holdout_mean_l2 = result.holdout_curve.back();

  DualEncoderModel& out = result.model;
  out.config = student_cfg;
  out.config.shared_weights = false;
  out.doc_num_layers = teacher.doc_config().num_layers;
  out.attn_hidden = teacher.attn_hidden;
  out.vocab_path = teacher.vocab_path;
  for (const auto& [name, t] : student) {
    out.params.emplace(DualEncoderModel::kQueryPrefix + name, t);
  }
  for (const auto& [name, t] : teacher.doc_tower()) {
    out.params.emplace(DualEncoderModel::kDocPrefix + name, t);
  }
  if (teacher.has_attention()) {
    for (const auto& [name, t] : teacher.attention_net()) {
      out.params.emplace(DualEncoderModel::kAttnPrefix + name, t);
    }
  }
  return result;
}

}  // namespace denc
