#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace dk {

/// Token <-> id bijection with PAD=0, BOS=1, EOS=2, UNK=3 reserved.
class Vocabulary {
 public:
  /// Reserved tokens followed by `words` in the given order. Duplicates and
  /// reserved spellings in `words` are rejected.
  explicit Vocabulary(const std::vector<std::string>& words = {});

  /// Vocabulary over the distinct whitespace-separated tokens of `texts`,
  /// sorted so the result does not depend on text order.
  static Vocabulary build(std::span<const std::string> texts);

  int size() const { return static_cast<int>(tokens_.size()); }
  /// Id of `token`, or UNK.
  int id(std::string_view token) const;
  bool contains(std::string_view token) const;
  const std::string& token(int id) const;

  std::vector<int> encode(std::string_view text) const;
  /// Tokens joined by single spaces.
  std::string decode(std::span<const int> ids) const;

  /// One token per line in id order, reserved tokens included.
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  void add(const std::string& token);

  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

/// Splits on ASCII whitespace; no other normalization.
std::vector<std::string> split_whitespace(std::string_view text);

/// Provenance of a target sequence.
struct Origin {
  bool pseudo = false;
  std::string teacher_id;  // set when pseudo

  static Origin gold() { return {}; }
  static Origin pseudo_label(std::string teacher) { return {true, std::move(teacher)}; }
  std::string to_string() const;
  static Origin parse(std::string_view text);
  bool operator==(const Origin&) const = default;
};

struct PairRecord {
  std::vector<int> source;
  std::vector<int> target;  // content tokens, no EOS
  Origin origin;
};

/// (source, target) token-sequence pairs sharing one vocabulary.
struct PairDataset {
  std::vector<PairRecord> records;
  std::shared_ptr<const Vocabulary> vocab;

  std::size_t size() const { return records.size(); }
  bool empty() const { return records.empty(); }
  /// Longest source or target (+1 for the EOS label).
  int max_length() const;
  /// Throws if a sequence is empty or an id falls outside the vocabulary.
  void validate() const;
};

enum class ToyTask { LeadK, KeyTerm };

/// Synthetic summarization task.
///
/// LeadK: the target is the first k source tokens (extractive, CNN-like).
/// KeyTerm: the source is filler words with 2..max_keys distinct planted key
/// words; the target is the task token followed by the keys in vocabulary
/// order (abstractive, XSUM-like).
struct ToyTaskSpec {
  ToyTask task = ToyTask::LeadK;
  int k = 3;
  int min_doc_len = 8;
  int max_doc_len = 16;
  int vocab_size = 40;
  int max_keys = 3;
};

/// The vocabulary a toy task draws from (independent of the seed).
std::shared_ptr<const Vocabulary> toy_vocabulary(const ToyTaskSpec& spec);

inline constexpr const char* kKeyTermTaskToken = "<keys>";

PairDataset generate_toy_corpus(const ToyTaskSpec& spec, int n_examples, std::uint64_t seed);

/// Contiguous index-range split: [0, n_train), [n_train, n_train + n_val), rest.
struct DatasetSplits {
  PairDataset train, val, test;
};
DatasetSplits split_dataset(const PairDataset& data, std::size_t n_train, std::size_t n_val);

/// Reads line-delimited JSON records. Gold records use {source, target,
/// origin?}; pseudo-label records use {source_text, pseudo_target_text,
/// teacher_id, ...}. Blank lines are skipped. When `vocab` is null one is
/// built from the file's texts. Malformed lines raise std::runtime_error
/// naming the 1-based line number.
PairDataset load_jsonl(const std::filesystem::path& path, std::shared_ptr<const Vocabulary> vocab = nullptr);

/// Writes {source, target, origin} records; written to a temporary name and
/// renamed on success.
void save_jsonl(const PairDataset& data, const std::filesystem::path& path);

/// Writes `contents` to `path` via a temporary sibling and a rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

}  // namespace dk
