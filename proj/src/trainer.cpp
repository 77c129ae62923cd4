#include "distillkit/trainer.hpp"

#include <cstdio>
#include <sstream>

namespace dk {

Method parse_method(const std::string& text) {
  if (text == "sft") return Method::SFT;
  if (text == "kd") return Method::KD;
  if (text == "pl") return Method::PL;
  throw std::invalid_argument("unknown method '" + text + "' (expected sft, kd or pl)");
}

std::string to_string(Method method) {
  switch (method) {
    case Method::SFT: return "sft";
    case Method::KD: return "kd";
    case Method::PL: return "pl";
  }
  return "";
}

std::string to_string(StopReason reason) {
  switch (reason) {
    case StopReason::None: return "none";
    case StopReason::EpochCap: return "epoch_cap";
    case StopReason::Patience: return "patience";
  }
  return "";
}

void TrainingSchedule::validate() const {
  if (max_epochs < 1) throw std::invalid_argument("max_epochs must be at least 1");
  if (patience_evals < 1) throw std::invalid_argument("patience_evals must be at least 1");
  if (evals_per_epoch < 1) throw std::invalid_argument("evals_per_epoch must be at least 1");
  if (!(lr > 0.0)) throw std::invalid_argument("lr must be positive");
  if (!(warmup_fraction >= 0.0 && warmup_fraction <= 1.0)) throw std::invalid_argument("warmup_fraction must lie in [0, 1]");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be at least 1");
  if (!(min_improvement >= 0.0)) throw std::invalid_argument("min_improvement must be non-negative");
}

std::string TrainHistory::to_log() const {
  std::string out;
  char buf[256];
  for (const auto& r : evals) {
    std::snprintf(buf, sizeof buf, "%lld\t%.6f\t%.9g\t%.9g\t%.3f\n", static_cast<long long>(r.step), r.epoch,
                  r.val_loss, r.val_rouge2, r.seconds);
    out += buf;
  }
  return out;
}

void TrainHistory::write_log(const std::filesystem::path& path) const { write_file_atomic(path, to_log()); }

double stop_score(const EvalRecord& record, StopMetric metric) {
  return metric == StopMetric::ValLoss ? record.val_loss : -record.val_rouge2;
}

bool improves(double candidate, double best, double min_improvement) { return best - candidate > min_improvement; }

StopDecision should_stop(const TrainHistory& history, const TrainingSchedule& schedule) {
  if (history.evals.empty()) throw std::invalid_argument("should_stop: empty history");
  if (history.evals.back().epoch >= schedule.max_epochs) return {true, StopReason::EpochCap};

  double best = std::numeric_limits<double>::infinity();
  int stale = 0;
  for (const auto& r : history.evals) {
    const double score = stop_score(r, schedule.stop_metric);
    if (improves(score, best, schedule.min_improvement)) {
      best = score;
      stale = 0;
    } else {
      ++stale;
    }
  }
  if (stale >= schedule.patience_evals) return {true, StopReason::Patience};
  return {};
}

double learning_rate_at(const TrainingSchedule& schedule, std::int64_t step, std::int64_t total_steps) {
  const auto warmup = static_cast<std::int64_t>(std::ceil(schedule.warmup_fraction * static_cast<double>(total_steps)));
  if (warmup <= 0 || step >= warmup) return schedule.lr;
  return schedule.lr * static_cast<double>(step) / static_cast<double>(warmup);
}

}  // namespace dk
