#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lahn/checkpoint.hpp"
#include "lahn/config.hpp"
#include "lahn/encoder.hpp"
#include "lahn/error.hpp"
#include "lahn/metrics.hpp"
#include "lahn/momentum.hpp"
#include "lahn/objectives.hpp"
#include "lahn/optim.hpp"
#include "lahn/rng.hpp"
#include "lahn/sampler.hpp"
#include "lahn/text.hpp"

namespace lahn {

struct StepRecord {
  std::size_t step = 0;
  double l_cl = 0.0;
  double l_ce = 0.0;
  double total = 0.0;
  double queue_fill = 0.0;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double val_accuracy = 0.0;
  double val_macro_f1 = 0.0;
};

/// Per-step and per-epoch records in the order they happened.
class MetricsLog {
 public:
  void add(const StepRecord& r) {
    steps_.push_back(r);
    lines_.push_back(nlohmann::json{
        {"step", r.step}, {"l_cl", r.l_cl}, {"l_ce", r.l_ce}, {"total", r.total}, {"queue_fill", r.queue_fill}}
                         .dump());
  }
  void add(const EpochRecord& r) {
    epochs_.push_back(r);
    lines_.push_back(
        nlohmann::json{{"epoch", r.epoch}, {"val_accuracy", r.val_accuracy}, {"val_macro_f1", r.val_macro_f1}}
            .dump());
  }

  const std::vector<StepRecord>& steps() const { return steps_; }
  const std::vector<EpochRecord>& epochs() const { return epochs_; }

  std::string to_jsonl() const {
    std::string out;
    for (const auto& l : lines_) {
      out += l;
      out += '\n';
    }
    return out;
  }

 private:
  std::vector<StepRecord> steps_;
  std::vector<EpochRecord> epochs_;
  std::vector<std::string> lines_;
};

struct TrainState {
  EncoderParams main;
  EmaState ema;
  MomentumQueue queue;
  AdamOptimizer optimizer;
  std::size_t step = 0;
  Rng dropout_main;
  Rng dropout_momentum;
};

inline TrainState init_train_state(const TrainConfig& cfg, std::size_t vocab_size) {
  cfg.validate();
  EncoderParams main = init_params(Rng::derive(cfg.seed, "init").next(), cfg.encoder_dims(vocab_size));
  EmaState ema = make_ema_state(main, cfg.m);
  return TrainState{main,
                    std::move(ema),
                    MomentumQueue(cfg.q, cfg.d_feat),
                    AdamOptimizer(AdamHyper{cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps}),
                    0,
                    Rng::derive(cfg.seed, "dropout-main"),
                    Rng::derive(cfg.seed, "dropout-momentum")};
}

struct StepResult {
  LossBreakdown losses;
  double queue_fill = 0.0;
  bool sampled = false;  // hard-negative phase active this step
  std::vector<HardNegativeSet> negatives;
};

/// One optimization step.
///
/// LAHN: main forward (train mode) -> momentum forward (train mode, own
/// dropout stream, detached) -> enqueue -> if the queue is at least a quarter
/// full, sample hard negatives and add the contrastive term -> backward ->
/// Adam on main params -> EMA. Before that threshold the loss is L_CE alone.
/// CE uses L_CE; SCL_CE uses (1 - lambda) * SCL + lambda * L_CE.
inline StepResult train_step(TrainState& state, const Batch& batch, const TrainConfig& cfg) {
  if (batch.size < 2) throw ValidationError("train_step: batch must hold at least 2 examples");
  state.main.zero_grad();
  ad::Tape tape;
  StepResult result;
  result.losses.lambda = cfg.lambda;

  const EncoderOutput out = forward(tape, state.main, batch, true, state.dropout_main);
  const ad::Tensor l_ce = classification_loss(tape, out.logits, batch.labels);
  ad::Tensor total = l_ce;
  std::optional<ad::Tensor> l_cl;

  if (cfg.objective == Objective::LAHN) {
    ad::Tape no_grad(ad::Tape::Mode::NoGrad);
    const ad::Tensor x_aug =
        forward(no_grad, state.ema.momentum, batch, true, state.dropout_momentum).feature.detach();
    const auto entry_ids = state.queue.enqueue_batch(x_aug, batch.labels);
    result.queue_fill = state.queue.fill_fraction();
    if (result.queue_fill >= kSamplingFillThreshold) {
      result.sampled = true;
      const QueueSnapshot snap = state.queue.snapshot();
      std::vector<std::optional<std::uint64_t>> self(entry_ids.begin(), entry_ids.end());
      result.negatives = sample_for_batch(out.feature.detach(), batch.labels, snap, state.ema.momentum,
                                          SamplerConfig{cfg.strategy, cfg.k}, self);
      const auto inputs = anchor_similarities(tape, out.feature, x_aug, result.negatives);
      l_cl = contrastive_loss(tape, inputs, cfg.tau);
      total = combined_loss(tape, *l_cl, l_ce, cfg.lambda);
    }
  } else if (cfg.objective == Objective::SCL_CE) {
    l_cl = scl_loss(tape, out.feature, batch.labels, cfg.tau);
    total = combined_loss(tape, *l_cl, l_ce, cfg.lambda);
  }

  result.losses.l_ce = l_ce.item();
  result.losses.l_cl = l_cl ? l_cl->item() : 0.0;
  result.losses.total = total.item();
  if (!std::isfinite(result.losses.total) || !std::isfinite(result.losses.l_cl) ||
      !std::isfinite(result.losses.l_ce)) {
    std::ostringstream msg;
    msg << "non-finite loss at step " << state.step + 1 << " (lr " << cfg.learning_rate << ", l_cl "
        << result.losses.l_cl << ", l_ce " << result.losses.l_ce << ", total " << result.losses.total << ")";
    throw NumericalError(msg.str());
  }

  tape.backward(total);
  state.optimizer.step(state.main);
  ++state.step;
  if (cfg.objective == Objective::LAHN) ema_update(state.main, state.ema);
  return result;
}

/// Independent copy of trainable params (values only).
inline EncoderParams copy_params(const EncoderParams& p) {
  EncoderParams c = clone_params(p);
  c.set_requires_grad(true);
  return c;
}

struct TrainHooks {
  std::function<void(const StepRecord&)> on_step;
  std::function<void(const EpochRecord&)> on_epoch;
  // Called after each epoch with the latest and the best checkpoint so far.
  std::function<void(const Checkpoint& last, const Checkpoint& best)> on_checkpoint;
};

struct TrainingResult {
  Checkpoint best;
  Checkpoint last;
  MetricsLog log;
};

/// Epoch loop over shuffled batches; the checkpoint with the highest
/// validation macro-F1 is kept (earliest epoch wins ties).
inline TrainingResult run_training(const TrainConfig& cfg, const std::vector<Example>& train,
                                   const std::vector<Example>& val, std::size_t vocab_size,
                                   const TrainHooks& hooks = {}) {
  cfg.validate();
  if (train.empty()) throw ValidationError("run_training: empty training split");
  if (val.empty()) throw ValidationError("run_training: empty validation split");
  TrainState state = init_train_state(cfg, vocab_size);
  Rng shuffle = Rng::derive(cfg.seed, "shuffle");
  TrainingResult result;
  bool have_best = false;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (const Batch& batch : make_batches(train, cfg.batch_size, shuffle.next())) {
      const StepResult r = train_step(state, batch, cfg);
      StepRecord rec{state.step, r.losses.l_cl, r.losses.l_ce, r.losses.total, r.queue_fill};
      result.log.add(rec);
      if (hooks.on_step) hooks.on_step(rec);
    }
    const MetricsReport m = evaluate(state.main, val, cfg.batch_size);
    EpochRecord erec{epoch, m.accuracy, m.macro_f1};
    result.log.add(erec);
    if (hooks.on_epoch) hooks.on_epoch(erec);

    result.last = Checkpoint{cfg, copy_params(state.main), clone_params(state.ema.momentum), epoch, m.macro_f1};
    if (!have_best || m.macro_f1 > result.best.val_macro_f1) {
      result.best = result.last;
      have_best = true;
    }
    if (hooks.on_checkpoint) hooks.on_checkpoint(result.last, result.best);
  }
  return result;
}

}  // namespace lahn
