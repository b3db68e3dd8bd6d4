#include "denc/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <deque>
#include <fstream>
#include <set>
#include <stdexcept>

#include "denc/adam.hpp"
#include "denc/rng.hpp"

namespace denc {

namespace {

constexpr uint64_t kMineTag = 0x6d1e;

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 0) throw std::runtime_error("train: epochs must be >= 0");
  if (!(learning_rate > 0.0)) throw std::runtime_error("train: learning_rate must be > 0");
  if (loss_curve_window < 1) throw std::runtime_error("train: loss_curve_window must be >= 1");
}

std::vector<LossCurvePoint> train_model(DualEncoderModel& model, const std::vector<TaskSpec>& tasks,
                                        const Vocab& vocab, const TrainConfig& cfg) {
  cfg.validate();
  model.config.validate();
  if (tasks.empty()) throw std::runtime_error("train: no tasks");
  std::set<std::string> names;
  for (const TaskSpec& t : tasks) {
    t.validate();
    if (!names.insert(t.name).second) {
      throw std::runtime_error("train: duplicate task name " + t.name);
    }
  }
  if (cfg.pooling == DocPooling::attention && !model.has_attention()) {
    throw std::runtime_error("train: attention pooling needs a model with an attention net");
  }

  const EncoderConfig q_cfg = model.config;
  const EncoderConfig d_cfg = model.doc_config();
  const bool shared = model.config.shared_weights;

  std::vector<int64_t> sizes;
  sizes.reserve(tasks.size());
  for (const TaskSpec& t : tasks) sizes.push_back(t.size_in_batches());

  Adam<float> adam(AdamConfig{.lr = cfg.learning_rate});
  std::vector<LossCurvePoint> curve;
  std::deque<double> window;
  int64_t iteration = 0;

  for (int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const EpochPlan plan =
        build_epoch_plan(sizes, cfg.strategy, mix_seed(cfg.seed, static_cast<uint64_t>(epoch)),
                         cfg.proportional_stochastic);
    EpochIterator it(tasks, plan, cfg.seed, epoch);
    ScheduleStep step;
    while (it.next(step)) {
      ++iteration;
      const TaskSpec& task = tasks[static_cast<size_t>(step.task)];
      double loss_value = 0.0;

      // A lone example cannot be mined against anything; it still counts as
      // a scheduled draw, logged with zero loss.
      const bool runnable =
          !(task.loss == LossKind::triplet && step.example_indices.size() < 2);
      if (runnable) {
        Tape<float> tape;
        BoundParams<float> q_bound =
            bind_tower(tape, model.params, DualEncoderModel::kQueryPrefix, true);
        BoundParams<float> d_bound =
            shared ? q_bound : bind_tower(tape, model.params, DualEncoderModel::kDocPrefix, true);
        BoundParams<float> attn_bound;
        if (cfg.pooling == DocPooling::attention) {
          attn_bound = bind_tower(tape, model.params, DualEncoderModel::kAttnPrefix, true);
        }

        std::vector<Val> q_rows, d_rows;
        std::vector<int> labels;
        for (int64_t idx : step.example_indices) {
          const PairExample& ex = task.dataset[static_cast<size_t>(idx)];
          Val q_row = encoder_forward(tape, q_bound, q_cfg,
                                      encode(ex.query, vocab, q_cfg.max_len_query, true));
          Val d_row;
          if (cfg.pooling == DocPooling::concat) {
            d_row = encoder_forward(tape, d_bound, d_cfg,
                                    doc_tokens_concat(vocab, ex.doc, d_cfg.max_len_doc));
          } else {
            validate_document(ex.doc);
            std::vector<Val> entity_rows;
            entity_rows.reserve(ex.doc.entities.size());
            for (const DocEntity& e : ex.doc.entities) {
              entity_rows.push_back(encoder_forward(
                  tape, d_bound, d_cfg, encode(e.text, vocab, d_cfg.max_len_doc, true)));
            }
            d_row = attention_pool_node(tape, attn_bound, q_row, entity_rows).pooled;
          }
          q_rows.push_back(q_row);
          d_rows.push_back(d_row);
          labels.push_back(ex.label == PairLabel::positive ? 1 : 0);
        }

        Val loss;
        bool skip_update = false;
        if (task.loss == LossKind::cross_entropy) {
          loss = cross_entropy_loss_node(tape, q_rows, d_rows, labels);
        } else {
          auto node = triplet_loss_node(tape, q_rows, d_rows, task.triplet,
                                        mix_seed(cfg.seed, kMineTag,
                                                 static_cast<uint64_t>(iteration)));
          loss = node.loss;
          skip_update = node.all_skipped;
        }
        if (task.weight != 1.0) loss = tape.scale(loss, static_cast<float>(task.weight));
        loss_value = static_cast<double>(tape.value(loss).data[0]);
        if (!std::isfinite(loss_value)) {
          throw std::runtime_error("training diverged: non-finite loss at iteration " +
                                   std::to_string(iteration) + " (task " + task.name + ")");
        }
        if (!skip_update) {
          tape.backward(loss);
          ParamMap grads;
          collect_grads(tape, q_bound, DualEncoderModel::kQueryPrefix, grads);
          if (!shared) collect_grads(tape, d_bound, DualEncoderModel::kDocPrefix, grads);
          if (cfg.pooling == DocPooling::attention) {
            collect_grads(tape, attn_bound, DualEncoderModel::kAttnPrefix, grads);
          }
          adam.step(model.params, grads);
        }
      }

      window.push_back(loss_value);
      if (static_cast<int64_t>(window.size()) > cfg.loss_curve_window) window.pop_front();
      double sum = 0.0;
      for (double v : window) sum += v;
      curve.push_back(
          {iteration, task.name, loss_value, sum / static_cast<double>(window.size())});
    }
  }
  return curve;
}

void save_loss_curve(const std::string& path, const std::vector<LossCurvePoint>& curve) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write loss curve: " + path);
  out << "iteration,task,loss,running_avg_loss\n";
  char buf[64];
  for (const LossCurvePoint& p : curve) {
    out << p.iteration << ',' << p.task << ',';
    std::snprintf(buf, sizeof(buf), "%.17g", p.loss);
    out << buf << ',';
    std::snprintf(buf, sizeof(buf), "%.17g", p.running_avg);
    out << buf << '\n';
  }
  if (!out.flush()) throw std::runtime_error("failed writing loss curve: " + path);
}

}  // namespace denc
