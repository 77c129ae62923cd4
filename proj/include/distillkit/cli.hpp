#pragma once

#include "distillkit/metrics.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace dk {

/// Flat key=value experiment configuration. Blank lines and lines starting
/// with '#' are ignored; later assignments override earlier ones. Unknown
/// keys are rejected.
class ExperimentConfig {
 public:
  static ExperimentConfig parse(std::string_view text);
  static ExperimentConfig load(const std::filesystem::path& path);

  /// Applies one "key=value" assignment.
  void set(std::string_view assignment);
  void set(const std::string& key, const std::string& value);

  bool has(const std::string& key) const;
  std::string get(const std::string& key, const std::string& fallback) const;
  std::string require(const std::string& key) const;
  int get_int(const std::string& key, int fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  double get_double(const std::string& key, double fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::vector<int> get_int_list(const std::string& key, const std::vector<int>& fallback) const;

  /// Sorted key=value lines.
  std::string dump() const;

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

/// Every key the commands read.
const std::vector<std::string>& known_config_keys();

/// Writes train.jsonl, val.jsonl, test.jsonl and vocab.txt.
void cmd_gen_corpus(const ExperimentConfig& config, const std::filesystem::path& out);

/// Trains a model from random initialization; writes model.ckpt, vocab.txt,
/// history.tsv and rouge.json (validation set).
RougeReport cmd_train_teacher(const ExperimentConfig& config, const std::filesystem::path& out);

/// Builds a student from the teacher checkpoint and trains it with the
/// configured method; writes model.ckpt, vocab.txt, history.tsv, rouge.json
/// and appends one row to the results table.
RougeReport cmd_distill(const ExperimentConfig& config, const std::filesystem::path& out);

/// Writes the teacher's beam-search outputs on the training set to
/// pseudo_labels.jsonl.
void cmd_pseudo(const ExperimentConfig& config, const std::filesystem::path& out);

/// Scores a checkpoint on a dataset; writes rouge.json.
RougeReport cmd_eval(const ExperimentConfig& config, const std::filesystem::path& out);

/// Times sampled configurations; writes timings.csv, regression.txt and,
/// when a baseline size is set, speedup.tsv.
void cmd_bench(const ExperimentConfig& config, const std::filesystem::path& out);

/// Header of the results table appended to by cmd_distill.
inline constexpr const char* kResultsHeader =
    "method\tstudent\tinit\tsteps\tbest_val_loss\trouge1\trouge2\trougeL\tstop_reason\n";

/// Command-line entry point; returns the process exit status.
int run_cli(int argc, const char* const* argv);

}  // namespace dk
