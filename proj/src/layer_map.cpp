#include "distillkit/distill.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>

namespace dk {

namespace {

void check_depths(int teacher_layers, int student_layers) {
  if (student_layers < 1) throw std::invalid_argument("student must have at least one layer");
  if (student_layers > teacher_layers) throw std::invalid_argument("student cannot be deeper than the teacher");
}

}  // namespace

std::vector<int> select_copy_layers(int teacher_layers, int student_layers) {
  check_depths(teacher_layers, student_layers);
  if (student_layers == 1) return {0};
  std::vector<int> out;
  const long span = teacher_layers - 1, steps = student_layers - 1;
  for (long i = 0; i < student_layers; ++i) {
    // round_half_up(i * span / steps) in integer arithmetic
    out.push_back(static_cast<int>((2 * i * span + steps) / (2 * steps)));
  }
  return out;
}

std::vector<int> build_phi(int teacher_layers, int student_layers) {
  check_depths(teacher_layers, student_layers);
  std::vector<int> out;
  for (long l = 0; l < student_layers; ++l) {
    out.push_back(static_cast<int>(((l + 1) * teacher_layers + student_layers - 1) / student_layers - 1));
  }
  return out;
}

void LayerMap::validate(int teacher_layers, int student_layers, bool allow_repeats) const {
  check_depths(teacher_layers, student_layers);
  if (static_cast<int>(copy_indices.size()) != student_layers || static_cast<int>(phi.size()) != student_layers) {
    throw std::invalid_argument("layer map length differs from student depth");
  }
  for (std::size_t i = 0; i < copy_indices.size(); ++i) {
    if (copy_indices[i] < 0 || copy_indices[i] >= teacher_layers) throw std::out_of_range("copy index out of range");
    if (i > 0 && !allow_repeats && copy_indices[i] <= copy_indices[i - 1]) {
      throw std::invalid_argument("copy indices must be strictly increasing");
    }
    if (phi[i] < 0 || phi[i] >= teacher_layers) throw std::out_of_range("phi entry out of range");
    if (i > 0 && phi[i] < phi[i - 1]) throw std::invalid_argument("phi must be non-decreasing");
  }
  if (phi.back() != teacher_layers - 1) throw std::invalid_argument("last student layer must map to the last teacher layer");
}

LayerMap default_layer_map(int teacher_layers, int student_layers) {
  return {select_copy_layers(teacher_layers, student_layers), build_phi(teacher_layers, student_layers)};
}

std::vector<int> InitStrategy::copy_indices(int teacher_layers, int student_layers) const {
  check_depths(teacher_layers, student_layers);
  std::vector<int> out;
  switch (kind) {
    case Kind::MaxSpaced:
      return select_copy_layers(teacher_layers, student_layers);
    case Kind::Contiguous:
      if (index < 0 || index + student_layers > teacher_layers) {
        throw std::out_of_range("contiguous block does not fit in the teacher");
      }
      for (int i = 0; i < student_layers; ++i) out.push_back(index + i);
      return out;
    case Kind::Repeat:
      if (index < 0 || index >= teacher_layers) throw std::out_of_range("repeat layer out of range");
      return std::vector<int>(static_cast<std::size_t>(student_layers), index);
    case Kind::Random:
      return out;
    case Kind::Explicit:
      if (static_cast<int>(layers.size()) != student_layers) {
        throw std::invalid_argument("explicit layer list length differs from student depth");
      }
      for (int i : layers) {
        if (i < 0 || i >= teacher_layers) throw std::out_of_range("explicit layer index out of range");
      }
      return layers;
  }
  return out;
}

InitStrategy InitStrategy::parse(const std::string& text) {
  const auto colon = text.find(':');
  const std::string head = text.substr(0, colon);
  const std::string arg = colon == std::string::npos ? "" : text.substr(colon + 1);
  auto number = [&](const std::string& s) {
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(s, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != s.size()) throw std::invalid_argument("bad init strategy '" + text + "'");
    return v;
  };
  if (head == "max_spaced" && arg.empty()) return max_spaced();
  if (head == "random") return random(arg.empty() ? 0 : static_cast<std::uint64_t>(number(arg)));
  if (head == "contiguous") return contiguous(number(arg));
  if (head == "repeat") return repeat(number(arg));
  if (head == "explicit") {
    std::vector<int> layers;
    std::stringstream ss(arg);
    std::string item;
    while (std::getline(ss, item, ',')) layers.push_back(number(item));
    if (layers.empty()) throw std::invalid_argument("bad init strategy '" + text + "'");
    return explicit_layers(std::move(layers));
  }
  throw std::invalid_argument("bad init strategy '" + text + "'");
}

std::string InitStrategy::to_string() const {
  switch (kind) {
    case Kind::MaxSpaced: return "max_spaced";
    case Kind::Contiguous: return "contiguous:" + std::to_string(index);
    case Kind::Repeat: return "repeat:" + std::to_string(index);
    case Kind::Random: return "random:" + std::to_string(seed);
    case Kind::Explicit: {
      std::string s = "explicit:";
      for (std::size_t i = 0; i < layers.size(); ++i) s += (i ? "," : "") + std::to_string(layers[i]);
      return s;
    }
  }
  return "";
}

// ---------------------------------------------------------------------------

void save_pseudolabels(const PseudoLabelSet& labels, const std::filesystem::path& path) {
  if (!labels.vocab) throw std::invalid_argument("save_pseudolabels: no vocabulary");
  std::string body;
  for (const auto& r : labels.records) {
    nlohmann::ordered_json j;
    j["source_text"] = labels.vocab->decode(r.source);
    j["pseudo_target_text"] = labels.vocab->decode(r.target);
    j["teacher_id"] = labels.teacher_id;
    j["beam_size"] = labels.beam_size;
    j["length_penalty"] = labels.length_penalty;
    body += j.dump() + '\n';
  }
  write_file_atomic(path, body);
}

PseudoLabelSet load_pseudolabels(const std::filesystem::path& path, std::shared_ptr<const Vocabulary> vocab) {
  PairDataset data = load_jsonl(path, vocab);
  PseudoLabelSet out;
  out.vocab = data.vocab;
  out.records = std::move(data.records);
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line)) {
    if (split_whitespace(line).empty()) continue;
    auto j = nlohmann::json::parse(line);
    if (!j.contains("teacher_id")) throw std::runtime_error(path.string() + ": not a pseudo-label file");
    out.teacher_id = j.at("teacher_id").get<std::string>();
    out.beam_size = j.value("beam_size", out.beam_size);
    out.length_penalty = j.value("length_penalty", out.length_penalty);
    break;
  }
  return out;
}

CombineMode parse_combine_mode(const std::string& text) {
  if (text == "orig") return CombineMode::Orig;
  if (text == "pl") return CombineMode::PL;
  if (text == "orig+pl") return CombineMode::OrigPlusPL;
  if (text == "orig+all_pl" || text == "orig+pl+pl") return CombineMode::OrigPlusAllPL;
  throw std::invalid_argument("unknown dataset combination '" + text + "'");
}

PairDataset combine_datasets(const PairDataset& orig, std::span<const PseudoLabelSet> pl_sets, CombineMode mode) {
  if (mode == CombineMode::Orig) return orig;
  if (pl_sets.empty()) throw std::invalid_argument("combine_datasets: mode needs at least one pseudo-label set");
  for (const auto& set : pl_sets) {
    if (set.size() != orig.size()) throw std::invalid_argument("combine_datasets: pseudo-label set size differs");
    for (std::size_t i = 0; i < set.size(); ++i) {
      if (set.records[i].source != orig.records[i].source) {
        throw std::invalid_argument("combine_datasets: pseudo-label sources differ from the original data");
      }
    }
  }
  PairDataset out;
  out.vocab = orig.vocab;
  if (mode != CombineMode::PL) out.records = orig.records;
  const std::size_t used = mode == CombineMode::OrigPlusAllPL ? pl_sets.size() : 1;
  for (std::size_t s = 0; s < used; ++s) {
    out.records.insert(out.records.end(), pl_sets[s].records.begin(), pl_sets[s].records.end());
  }
  return out;
}

}  // namespace dk
