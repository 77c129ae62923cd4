#include "distillkit/corpus.hpp"

#include "distillkit/config.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

namespace dk {

namespace {

const std::vector<std::string>& reserved_tokens() {
  static const std::vector<std::string> tokens{"<pad>", "<s>", "</s>", "<unk>"};
  return tokens;
}

std::string padded_word(char prefix, int index, int width) {
  std::string digits = std::to_string(index);
  if (static_cast<int>(digits.size()) < width) digits.insert(0, static_cast<std::size_t>(width) - digits.size(), '0');
  return std::string(1, prefix) + digits;
}

int digit_width(int n) { return static_cast<int>(std::to_string(std::max(n - 1, 0)).size()); }

}  // namespace

Vocabulary::Vocabulary(const std::vector<std::string>& words) {
  for (const auto& t : reserved_tokens()) add(t);
  for (const auto& w : words) {
    if (w.empty() || std::any_of(w.begin(), w.end(), [](unsigned char c) { return std::isspace(c); })) {
      throw std::invalid_argument("vocabulary tokens must be non-empty and whitespace-free");
    }
    if (ids_.count(w)) throw std::invalid_argument("duplicate vocabulary token '" + w + "'");
    add(w);
  }
}

void Vocabulary::add(const std::string& token) {
  ids_.emplace(token, static_cast<int>(tokens_.size()));
  tokens_.push_back(token);
}

Vocabulary Vocabulary::build(std::span<const std::string> texts) {
  std::set<std::string> distinct;
  for (const auto& text : texts) {
    for (auto& w : split_whitespace(text)) distinct.insert(std::move(w));
  }
  for (const auto& r : reserved_tokens()) distinct.erase(r);
  return Vocabulary(std::vector<std::string>(distinct.begin(), distinct.end()));
}

int Vocabulary::id(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  return it == ids_.end() ? kUnkId : it->second;
}

bool Vocabulary::contains(std::string_view token) const { return ids_.count(std::string(token)) != 0; }

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size()) throw std::out_of_range("token id out of range");
  return tokens_[static_cast<std::size_t>(id)];
}

std::vector<int> Vocabulary::encode(std::string_view text) const {
  std::vector<int> out;
  for (const auto& w : split_whitespace(text)) out.push_back(id(w));
  return out;
}

std::string Vocabulary::decode(std::span<const int> ids) const {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ' ';
    out += token(ids[i]);
  }
  return out;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::string body;
  for (const auto& t : tokens_) body += t + '\n';
  write_file_atomic(path, body);
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open vocabulary " + path.string());
  std::vector<std::string> words;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno <= reserved_tokens().size()) {
      if (line != reserved_tokens()[lineno - 1]) {
        throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": reserved token mismatch");
      }
      continue;
    }
    words.push_back(line);
  }
  if (lineno < reserved_tokens().size()) throw std::runtime_error(path.string() + ": truncated vocabulary");
  return Vocabulary(words);
}

std::vector<std::string> split_whitespace(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t j = i;
    while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
    if (j > i) out.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return out;
}

std::string Origin::to_string() const { return pseudo ? "pseudo:" + teacher_id : "gold"; }

Origin Origin::parse(std::string_view text) {
  if (text == "gold") return gold();
  if (text.rfind("pseudo:", 0) == 0) return pseudo_label(std::string(text.substr(7)));
  throw std::invalid_argument("unknown origin '" + std::string(text) + "'");
}

int PairDataset::max_length() const {
  std::size_t longest = 0;
  for (const auto& r : records) longest = std::max({longest, r.source.size(), r.target.size() + 1});
  return static_cast<int>(longest);
}

void PairDataset::validate() const {
  const int limit = vocab ? vocab->size() : 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (r.source.empty() || r.target.empty()) {
      throw std::invalid_argument("record " + std::to_string(i) + " has an empty sequence");
    }
    for (const auto* seq : {&r.source, &r.target}) {
      for (int id : *seq) {
        if (id < 0 || (vocab && id >= limit)) {
          throw std::invalid_argument("record " + std::to_string(i) + " has an id outside the vocabulary");
        }
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Toy corpora
// ---------------------------------------------------------------------------

namespace {

struct ToyLayout {
  int first_filler = 0;
  int n_filler = 0;
  int first_key = 0;
  int n_keys = 0;
  int task_token = -1;
};

ToyLayout toy_layout(const ToyTaskSpec& spec) {
  ToyLayout l;
  const int content = spec.vocab_size - kReservedTokens;
  if (spec.task == ToyTask::LeadK) {
    l.first_filler = kReservedTokens;
    l.n_filler = content;
  } else {
    l.task_token = kReservedTokens;
    const int words = content - 1;
    l.n_keys = std::max(2, words / 4);
    l.n_filler = words - l.n_keys;
    l.first_filler = kReservedTokens + 1;
    l.first_key = l.first_filler + l.n_filler;
  }
  return l;
}

void check_spec(const ToyTaskSpec& spec) {
  if (spec.min_doc_len < 1 || spec.max_doc_len < spec.min_doc_len) {
    throw std::invalid_argument("toy corpus: invalid document length range");
  }
  if (spec.task == ToyTask::LeadK) {
    if (spec.vocab_size <= kReservedTokens + 1) throw std::invalid_argument("toy corpus: vocabulary too small");
    if (spec.k < 1 || spec.k >= spec.min_doc_len) throw std::invalid_argument("toy corpus: need 1 <= k < min doc length");
  } else {
    if (spec.max_keys < 2) throw std::invalid_argument("toy corpus: max_keys must be at least 2");
    const ToyLayout l = toy_layout(spec);
    if (l.n_filler < 1 || l.n_keys < spec.max_keys) throw std::invalid_argument("toy corpus: vocabulary too small");
    if (spec.min_doc_len < spec.max_keys + 1) {
      throw std::invalid_argument("toy corpus: documents must be longer than the key count");
    }
  }
}

}  // namespace

std::shared_ptr<const Vocabulary> toy_vocabulary(const ToyTaskSpec& spec) {
  check_spec(spec);
  const ToyLayout l = toy_layout(spec);
  std::vector<std::string> words;
  if (spec.task == ToyTask::KeyTerm) words.emplace_back(kKeyTermTaskToken);
  const int fw = digit_width(l.n_filler);
  for (int i = 0; i < l.n_filler; ++i) words.push_back(padded_word('w', i, fw));
  const int kw = digit_width(l.n_keys);
  for (int i = 0; i < l.n_keys; ++i) words.push_back(padded_word('k', i, kw));
  return std::make_shared<const Vocabulary>(words);
}

PairDataset generate_toy_corpus(const ToyTaskSpec& spec, int n_examples, std::uint64_t seed) {
  if (n_examples < 0) throw std::invalid_argument("toy corpus: negative example count");
  PairDataset data;
  data.vocab = toy_vocabulary(spec);
  const ToyLayout l = toy_layout(spec);
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> doc_len(spec.min_doc_len, spec.max_doc_len);
  std::uniform_int_distribution<int> filler(l.first_filler, l.first_filler + l.n_filler - 1);

  for (int e = 0; e < n_examples; ++e) {
    PairRecord r;
    const int len = doc_len(rng);
    r.source.resize(static_cast<std::size_t>(len));
    for (auto& t : r.source) t = filler(rng);
    if (spec.task == ToyTask::LeadK) {
      r.target.assign(r.source.begin(), r.source.begin() + spec.k);
    } else {
      const int n_keys = std::uniform_int_distribution<int>(2, spec.max_keys)(rng);
      std::vector<int> keys(static_cast<std::size_t>(l.n_keys));
      for (int i = 0; i < l.n_keys; ++i) keys[static_cast<std::size_t>(i)] = l.first_key + i;
      std::shuffle(keys.begin(), keys.end(), rng);
      keys.resize(static_cast<std::size_t>(n_keys));
      std::vector<int> slots(static_cast<std::size_t>(len));
      for (int i = 0; i < len; ++i) slots[static_cast<std::size_t>(i)] = i;
      std::shuffle(slots.begin(), slots.end(), rng);
      for (int i = 0; i < n_keys; ++i) {
        r.source[static_cast<std::size_t>(slots[static_cast<std::size_t>(i)])] = keys[static_cast<std::size_t>(i)];
      }
      std::sort(keys.begin(), keys.end());
      r.target.push_back(l.task_token);
      r.target.insert(r.target.end(), keys.begin(), keys.end());
    }
    data.records.push_back(std::move(r));
  }
  return data;
}

DatasetSplits split_dataset(const PairDataset& data, std::size_t n_train, std::size_t n_val) {
  if (n_train + n_val > data.size()) throw std::invalid_argument("split sizes exceed the dataset");
  DatasetSplits s;
  s.train.vocab = s.val.vocab = s.test.vocab = data.vocab;
  const auto begin = data.records.begin();
  s.train.records.assign(begin, begin + static_cast<std::ptrdiff_t>(n_train));
  s.val.records.assign(begin + static_cast<std::ptrdiff_t>(n_train),
                       begin + static_cast<std::ptrdiff_t>(n_train + n_val));
  s.test.records.assign(begin + static_cast<std::ptrdiff_t>(n_train + n_val), data.records.end());
  return s;
}

// ---------------------------------------------------------------------------
// JSONL I/O
// ---------------------------------------------------------------------------

PairDataset load_jsonl(const std::filesystem::path& path, std::shared_ptr<const Vocabulary> vocab) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open dataset " + path.string());

  struct TextRecord {
    std::string source, target;
    Origin origin;
  };
  std::vector<TextRecord> texts;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (split_whitespace(line).empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno) + ": ";
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error(where + "malformed JSON record (line " + std::to_string(lineno) + ")");
    }
    try {
      TextRecord r;
      if (!j.is_object()) throw std::runtime_error("record is not an object");
      if (j.contains("pseudo_target_text")) {
        r.source = j.at("source_text").get<std::string>();
        r.target = j.at("pseudo_target_text").get<std::string>();
        r.origin = Origin::pseudo_label(j.at("teacher_id").get<std::string>());
      } else {
        r.source = j.at("source").get<std::string>();
        r.target = j.at("target").get<std::string>();
        r.origin = j.contains("origin") ? Origin::parse(j.at("origin").get<std::string>()) : Origin::gold();
      }
      texts.push_back(std::move(r));
    } catch (const std::exception& e) {
      throw std::runtime_error(where + "bad record (line " + std::to_string(lineno) + "): " + e.what());
    }
  }

  PairDataset data;
  if (!vocab) {
    std::vector<std::string> all;
    for (const auto& t : texts) {
      all.push_back(t.source);
      all.push_back(t.target);
    }
    vocab = std::make_shared<const Vocabulary>(Vocabulary::build(all));
  }
  data.vocab = vocab;
  for (auto& t : texts) {
    data.records.push_back({vocab->encode(t.source), vocab->encode(t.target), std::move(t.origin)});
  }
  return data;
}

void save_jsonl(const PairDataset& data, const std::filesystem::path& path) {
  if (!data.vocab) throw std::invalid_argument("save_jsonl: dataset has no vocabulary");
  std::string body;
  for (const auto& r : data.records) {
    nlohmann::ordered_json j;
    j["source"] = data.vocab->decode(r.source);
    j["target"] = data.vocab->decode(r.target);
    j["origin"] = r.origin.to_string();
    body += j.dump() + '\n';
  }
  write_file_atomic(path, body);
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << contents;
    out.flush();
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace dk
