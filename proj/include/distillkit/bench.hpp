#pragma once

#include "distillkit/config.hpp"
#include "distillkit/seq2seq.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dk {

enum class TimingMode { Forward, Beam };
std::string to_string(TimingMode mode);
TimingMode parse_timing_mode(const std::string& text);

struct TimingRecord {
  int enc_layers = 0;
  int dec_layers = 0;
  int d_model = 0;
  int ffn_dim = 0;
  TimingMode mode = TimingMode::Forward;
  int batch = 1;
  double median_ms = 0.0;
};

/// Candidate values per dimension; each draw picks one uniformly.
struct ConfigRanges {
  std::vector<int> enc_layers{1, 2, 3, 4, 5, 6};
  std::vector<int> dec_layers{1, 2, 3, 4, 5, 6};
  std::vector<int> d_model{16, 32, 48, 64};
  std::vector<int> ffn_dim{32, 64, 128};
  int n_heads = 4;
  int vocab_size = 64;
  int max_positions = 32;

  void validate() const;
};

/// Independent uniform draws per dimension; deterministic per seed.
std::vector<ModelConfig> sample_configs(const ConfigRanges& ranges, int count, std::uint64_t seed);

/// Raised when a configuration would exceed the timing memory budget.
class ResourceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TimingOptions {
  int batch = 1;
  int reps = 5;
  int warmups = 2;
  int source_len = 16;
  int target_len = 8;   // teacher-forced length, and generated length in beam mode
  int beam_size = 2;
  std::uint64_t seed = 0;
  std::size_t memory_budget_bytes = std::size_t{1} << 30;
};

/// Rough peak bytes for one timed run: float parameters plus activations.
std::size_t estimated_memory_bytes(const ModelConfig& config, const TimingOptions& options);

/// Median wall-clock milliseconds over `reps` runs after `warmups` untimed
/// runs, on a float model with seeded weights and inputs. Forward mode times
/// one teacher-forced pass per batch item; beam mode times beam search with
/// EOS blocked until target_len tokens, so the decoder runs once per emitted
/// token per live hypothesis.
TimingRecord time_model(const ModelConfig& config, TimingMode mode, const TimingOptions& options);

/// Ordinary least squares with an intercept.
struct RegressionFit {
  std::vector<std::string> predictors;
  double intercept = 0.0;
  std::vector<double> coefficients;  // aligned with predictors
  double r_squared = 0.0;
  std::size_t n = 0;
  bool log_time = false;

  double coefficient(const std::string& name) const;
  /// key=value lines.
  std::string to_text() const;
};

/// Fits y = b0 + X b. Rank deficiency raises std::invalid_argument naming the
/// collinear columns ("intercept" included when relevant).
RegressionFit fit_ols(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const std::vector<std::string>& names);

/// Regresses median_ms (or its log) on enc_layers, dec_layers, d_model, ffn_dim.
inline const std::vector<std::string> kTimingPredictors{"enc_layers", "dec_layers", "d_model", "ffn_dim"};
RegressionFit fit_ols(std::span<const TimingRecord> records, bool log_time = false,
                      const std::vector<std::string>& predictors = kTimingPredictors);

struct SpeedupRow {
  TimingRecord record;
  double speedup = 0.0;  // baseline.median_ms / record.median_ms
};

std::vector<SpeedupRow> speedup_report(const TimingRecord& baseline, std::span<const TimingRecord> others);

/// Header enc_layers,dec_layers,d_model,ffn_dim,mode,batch,median_ms.
std::string timing_csv(std::span<const TimingRecord> records);

}  // namespace dk
