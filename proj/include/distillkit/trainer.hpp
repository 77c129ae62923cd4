#pragma once

#include "distillkit/adam.hpp"
#include "distillkit/corpus.hpp"
#include "distillkit/distill.hpp"
#include "distillkit/metrics.hpp"
#include "distillkit/seq2seq.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace dk {

enum class Method { SFT, KD, PL };
Method parse_method(const std::string& text);
std::string to_string(Method method);

/// Method selector with its loss weights and decoding settings.
struct DistillRecipe {
  Method method = Method::SFT;
  LossWeights weights;
  BeamParams beam;
  std::vector<int> phi;  // empty: build_phi for the two depths
  /// Share one encoder pass between teacher and student when the student's
  /// encoder side is frozen and bit-identical to the teacher's.
  bool share_encoder = true;
};

enum class StopMetric { ValLoss, ValRouge2 };

struct TrainingSchedule {
  int max_epochs = 5;
  int patience_evals = 4;
  int evals_per_epoch = 10;
  double lr = 3e-4;
  double warmup_fraction = 0.05;
  int batch_size = 8;
  bool freeze_encoder = false;
  bool freeze_embeddings = false;
  std::uint64_t seed = 0;
  double min_improvement = 1e-6;
  StopMetric stop_metric = StopMetric::ValLoss;
  /// Decode the validation set at every evaluation to log ROUGE-2.
  bool eval_rouge = false;
  BeamParams eval_beam;

  void validate() const;
};

struct EvalRecord {
  std::int64_t step = 0;
  double epoch = 0.0;
  double val_loss = 0.0;
  double val_rouge2 = std::numeric_limits<double>::quiet_NaN();
  double seconds = 0.0;
};

enum class StopReason { None, EpochCap, Patience };
std::string to_string(StopReason reason);

struct TrainHistory {
  std::vector<EvalRecord> evals;
  StopReason stop_reason = StopReason::None;
  std::size_t best_index = 0;

  /// One tab-separated line per evaluation: step, epoch, val_loss,
  /// val_rouge2 (nan when not computed), seconds.
  std::string to_log() const;
  void write_log(const std::filesystem::path& path) const;
};

struct StopDecision {
  bool stop = false;
  StopReason reason = StopReason::None;
};

/// Lower-is-better score of an evaluation under the schedule's metric.
double stop_score(const EvalRecord& record, StopMetric metric);

/// Stops once the last evaluation reaches max_epochs, or when each of the
/// last patience_evals evaluations failed to improve (by more than
/// min_improvement) on the best score recorded before it.
StopDecision should_stop(const TrainHistory& history, const TrainingSchedule& schedule);

/// True when `candidate` beats `best` (lower is better) by more than min_improvement.
bool improves(double candidate, double best, double min_improvement);

/// Marks frozen parameters as not requiring gradients. The encoder freeze
/// covers encoder layers, the encoder final norm and encoder positions; the
/// embedding freeze covers the token table and both position tables.
template <typename Scalar>
void apply_freezes(Seq2SeqModel<Scalar>& model, const TrainingSchedule& schedule) {
  model.visit_parameters([&](const std::string& name, Tensor<Scalar>& t) {
    const bool embedding = name == "embed.tokens" || name == "encoder.positions" || name == "decoder.positions";
    const bool encoder = name.rfind("encoder.", 0) == 0;
    if ((schedule.freeze_embeddings && embedding) || (schedule.freeze_encoder && encoder)) t.set_requires_grad(false);
  });
}

template <typename Scalar>
std::vector<Tensor<Scalar>*> trainable_parameters(Seq2SeqModel<Scalar>& model) {
  std::vector<Tensor<Scalar>*> out;
  model.visit_parameters([&](const std::string&, Tensor<Scalar>& t) {
    if (t.requires_grad()) out.push_back(&t);
  });
  return out;
}

namespace detail {

template <typename Scalar>
bool encoder_side_shared(const Seq2SeqModel<Scalar>& student, const Seq2SeqModel<Scalar>& teacher) {
  if (student.encoder_layers.size() != teacher.encoder_layers.size()) return false;
  std::vector<const Tensor<Scalar>*> s, t;
  auto collect = [](const Seq2SeqModel<Scalar>& m, std::vector<const Tensor<Scalar>*>& out) {
    m.visit_parameters([&](const std::string& name, const Tensor<Scalar>& x) {
      if (name.rfind("encoder.", 0) == 0 || name == "embed.tokens") out.push_back(&x);
    });
  };
  collect(student, s);
  collect(teacher, t);
  if (s.size() != t.size()) return false;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i]->requires_grad()) return false;
    if (s[i]->rows() != t[i]->rows() || s[i]->cols() != t[i]->cols()) return false;
    if (!(s[i]->value().array() == t[i]->value().array()).all()) return false;
  }
  return true;
}

inline std::size_t label_tokens(const std::vector<int>& labels) {
  return static_cast<std::size_t>(std::count_if(labels.begin(), labels.end(), [](int t) { return t != kPadId; }));
}

}  // namespace detail

/// Summed loss components over a batch (unweighted, unnormalized).
struct BatchLoss {
  double objective = 0.0;  // the value whose gradient was accumulated
  double data = 0.0;
  double logits = 0.0;
  double hidden = 0.0;
  std::size_t tokens = 0;
};

/// Accumulates the gradient of the batch objective into the student's
/// trainable parameters. Token-level terms are divided by the batch's label
/// token count and the hidden term by the batch size, so the objective is
///   alpha_logits * KL / N_tok + alpha_data * CE / N_tok + alpha_hidn * Hid / B
/// for KD, and CE / N_tok otherwise. Teacher quantities are constants.
template <typename Scalar>
BatchLoss accumulate_batch_gradients(const Seq2SeqModel<Scalar>& student, const Seq2SeqModel<Scalar>* teacher,
                                     std::span<const PairRecord* const> batch, const DistillRecipe& recipe) {
  if (batch.empty()) throw std::invalid_argument("accumulate_batch_gradients: empty batch");
  const bool kd = recipe.method == Method::KD;
  if (kd && !teacher) throw std::invalid_argument("the KD recipe needs a teacher");
  if (kd) recipe.weights.validate();
  std::vector<int> phi = recipe.phi;
  if (kd && phi.empty()) phi = build_phi(teacher->config.dec_layers, student.config.dec_layers);
  const bool share = kd && recipe.share_encoder && detail::encoder_side_shared(student, *teacher);

  BatchLoss out;
  for (const PairRecord* r : batch) out.tokens += detail::label_tokens(with_eos(r->target));
  const Scalar inv_tokens = Scalar(1) / static_cast<Scalar>(out.tokens);
  const Scalar inv_batch = Scalar(1) / static_cast<Scalar>(batch.size());

  for (const PairRecord* r : batch) {
    const std::vector<int> labels = with_eos(r->target);
    Graph<Scalar> g;
    if (!kd) {
      HiddenTrace<Scalar> trace = forward_teacher_forced(g, student, r->source, labels);
      Var<Scalar> ce = loss_data(trace, labels);
      out.data += static_cast<double>(ce.scalar());
      out.objective += static_cast<double>(ce.scalar() * inv_tokens);
      g.backward(ce, inv_tokens);
      continue;
    }

    Graph<Scalar> tg(false);
    TraceValues<Scalar> teacher_values;
    HiddenTrace<Scalar> trace;
    if (share) {
      EncoderOutput<Scalar> enc = encode(tg, *teacher, r->source);
      DecoderOutput<Scalar> tdec = decode(tg, *teacher, enc.memory, enc.mask, shift_right(labels));
      teacher_values.logits = tdec.logits.value();
      for (const auto& v : tdec.layer_states) teacher_values.decoder_states.push_back(v.value());
      DecoderOutput<Scalar> sdec = decode(g, student, g.constant(enc.memory.value()), enc.mask, shift_right(labels));
      trace.decoder_states = std::move(sdec.layer_states);
      trace.logits = sdec.logits;
    } else {
      teacher_values = detach(forward_teacher_forced(tg, *teacher, r->source, labels));
      trace = forward_teacher_forced(g, student, r->source, labels);
    }

    const LossWeights& w = recipe.weights;
    Var<Scalar> objective;
    auto add = [&objective](Scalar scale, const Var<Scalar>& term) {
      Var<Scalar> scaled = scale * term;
      objective = objective.valid() ? objective + scaled : scaled;
    };
    if (w.alpha_logits > 0) {
      Var<Scalar> kl = loss_logits(trace.logits, teacher_values.logits, non_pad_mask(labels));
      out.logits += static_cast<double>(kl.scalar());
      add(static_cast<Scalar>(w.alpha_logits) * inv_tokens, kl);
    }
    if (w.alpha_data > 0) {
      Var<Scalar> ce = loss_data(trace, labels);
      out.data += static_cast<double>(ce.scalar());
      add(static_cast<Scalar>(w.alpha_data) * inv_tokens, ce);
    }
    if (w.alpha_hidn > 0) {
      Var<Scalar> hid = loss_hidden(trace, teacher_values, phi);
      out.hidden += static_cast<double>(hid.scalar());
      add(static_cast<Scalar>(w.alpha_hidn) * inv_batch, hid);
    }
    out.objective += static_cast<double>(objective.scalar());
    g.backward(objective);
  }
  return out;
}

/// Per-token validation cross-entropy (gold targets, teacher forcing).
template <typename Scalar>
double validation_loss(const Seq2SeqModel<Scalar>& model, const PairDataset& data) {
  if (data.empty()) throw std::invalid_argument("validation_loss: empty dataset");
  double total = 0.0;
  std::size_t tokens = 0;
  for (const auto& r : data.records) {
    const std::vector<int> labels = with_eos(r.target);
    Graph<Scalar> g(false);
    HiddenTrace<Scalar> trace = forward_teacher_forced(g, model, r.source, labels);
    total += static_cast<double>(loss_data(trace, labels).scalar());
    tokens += detail::label_tokens(labels);
  }
  return total / static_cast<double>(tokens);
}

template <typename Scalar>
struct TrainResult {
  Seq2SeqModel<Scalar> model;  // best-validation snapshot
  TrainHistory history;
  std::int64_t steps = 0;
};

/// Linear warmup over the first warmup_fraction of all steps, then constant.
double learning_rate_at(const TrainingSchedule& schedule, std::int64_t step, std::int64_t total_steps);

/// Fine-tunes `student` on `train`, evaluating evals_per_epoch times per
/// epoch on `val` and stopping per should_stop. Returns the best-validation
/// snapshot. Freezes from the schedule are applied before the first step.
/// Deterministic given the schedule's seed.
template <typename Scalar>
TrainResult<Scalar> fine_tune(Seq2SeqModel<Scalar> student, const PairDataset& train, const PairDataset& val,
                              const TrainingSchedule& schedule, const DistillRecipe& recipe,
                              const Seq2SeqModel<Scalar>* teacher = nullptr,
                              const std::function<void(const EvalRecord&)>& on_eval = {}) {
  schedule.validate();
  if (train.empty() || val.empty()) throw std::invalid_argument("fine_tune: empty dataset");
  if (recipe.method == Method::KD && !teacher) throw std::invalid_argument("fine_tune: the KD recipe needs a teacher");
  if (recipe.method == Method::KD) {
    recipe.weights.validate();
    const int t_layers = teacher->config.dec_layers, s_layers = student.config.dec_layers;
    LayerMap map{std::vector<int>(static_cast<std::size_t>(s_layers), 0),
                 recipe.phi.empty() ? build_phi(t_layers, s_layers) : recipe.phi};
    map.validate(t_layers, s_layers, true);
  }

  apply_freezes(student, schedule);
  student.zero_grad();
  std::vector<Tensor<Scalar>*> params = trainable_parameters(student);
  if (params.empty()) throw std::invalid_argument("fine_tune: every parameter is frozen");
  AdamState<Scalar> adam = make_adam_state<Scalar>(params, static_cast<Scalar>(schedule.lr));

  const std::int64_t n = static_cast<std::int64_t>(train.size());
  const std::int64_t steps_per_epoch = (n + schedule.batch_size - 1) / schedule.batch_size;
  const std::int64_t total_steps = steps_per_epoch * schedule.max_epochs;
  std::mt19937_64 rng(schedule.seed);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainResult<Scalar> result{student, {}, 0};
  const auto start = std::chrono::steady_clock::now();
  std::int64_t step = 0;
  double best = std::numeric_limits<double>::infinity();

  for (int epoch = 0; epoch < schedule.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::int64_t s = 1; s <= steps_per_epoch; ++s) {
      const std::int64_t lo = (s - 1) * schedule.batch_size, hi = std::min(n, s * schedule.batch_size);
      std::vector<const PairRecord*> batch;
      for (std::int64_t i = lo; i < hi; ++i) batch.push_back(&train.records[order[static_cast<std::size_t>(i)]]);

      student.zero_grad();
      accumulate_batch_gradients(student, teacher, std::span<const PairRecord* const>(batch), recipe);
      ++step;
      adam.lr = static_cast<Scalar>(learning_rate_at(schedule, step, total_steps));
      adam_step<Scalar>(params, adam);

      const bool eval_now =
          (s * schedule.evals_per_epoch) / steps_per_epoch != ((s - 1) * schedule.evals_per_epoch) / steps_per_epoch;
      if (!eval_now) continue;

      EvalRecord rec;
      rec.step = step;
      rec.epoch = epoch + static_cast<double>(s) / static_cast<double>(steps_per_epoch);
      rec.val_loss = validation_loss(student, val);
      if (schedule.eval_rouge || schedule.stop_metric == StopMetric::ValRouge2) {
        rec.val_rouge2 = score_corpus(student, val, schedule.eval_beam).rouge2.f1;
      }
      rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      result.history.evals.push_back(rec);
      const double score = stop_score(rec, schedule.stop_metric);
      if (improves(score, best, schedule.min_improvement)) {
        best = score;
        result.history.best_index = result.history.evals.size() - 1;
        result.model = student;
      }
      if (on_eval) on_eval(rec);
      const StopDecision decision = should_stop(result.history, schedule);
      if (decision.stop) {
        result.history.stop_reason = decision.reason;
        result.steps = step;
        result.model.zero_grad();
        return result;
      }
    }
  }
  result.history.stop_reason = StopReason::EpochCap;
  result.steps = step;
  result.model.zero_grad();
  return result;
}

}  // namespace dk
