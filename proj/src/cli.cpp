#include "distillkit/cli.hpp"

#include "distillkit/bench.hpp"
#include "distillkit/checkpoint.hpp"
#include "distillkit/distill.hpp"
#include "distillkit/trainer.hpp"

#include "CLI11.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

namespace dk {

namespace fs = std::filesystem;

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) throw std::invalid_argument("config: bad value for " + key + ": '" + text + "'");
  return value;
}

}  // namespace

const std::vector<std::string>& known_config_keys() {
  static const std::vector<std::string> keys{
      // shared
      "seed", "threads", "data_dir", "train", "val", "test", "vocab",
      // toy corpus
      "task", "k", "min_doc_len", "max_doc_len", "toy_vocab_size", "max_keys", "n_train", "n_val", "n_test",
      // model
      "size", "d_model", "n_heads", "ffn_dim", "max_positions", "tie_output_embedding", "init_std",
      // schedule
      "max_epochs", "patience", "evals_per_epoch", "lr", "warmup_fraction", "batch_size", "freeze_encoder",
      "freeze_embeddings", "min_improvement", "stop_metric", "eval_rouge",
      // decoding
      "beam_size", "max_len", "length_penalty", "min_len",
      // distillation
      "teacher", "teacher_id", "method", "student", "init", "copy_full_encoder", "alpha_logits", "alpha_data",
      "alpha_hidn", "phi", "share_encoder", "pseudo_labels", "combine", "results",
      // evaluation
      "model", "eval_data",
      // bench
      "bench_count", "bench_mode", "bench_enc", "bench_dec", "bench_d_model", "bench_ffn", "bench_heads",
      "bench_vocab", "bench_max_positions", "bench_batch", "bench_reps", "bench_warmups", "bench_source_len",
      "bench_target_len", "bench_beam_size", "bench_memory_mb", "bench_baseline", "bench_compare"};
  return keys;
}

ExperimentConfig ExperimentConfig::parse(std::string_view text) {
  ExperimentConfig c;
  std::size_t line_no = 0, pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    const std::string line = trim(text.substr(pos, nl == std::string_view::npos ? text.size() - pos : nl - pos));
    ++line_no;
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    if (line.empty() || line[0] == '#') continue;
    try {
      c.set(line);
    } catch (const std::invalid_argument& e) {
      throw std::invalid_argument("config line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return c;
}

ExperimentConfig ExperimentConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

void ExperimentConfig::set(std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) throw std::invalid_argument("config: expected key=value, got '" + std::string(assignment) + "'");
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

void ExperimentConfig::set(const std::string& key, const std::string& value) {
  const auto& keys = known_config_keys();
  if (std::find(keys.begin(), keys.end(), key) == keys.end()) throw std::invalid_argument("config: unknown key '" + key + "'");
  values_[key] = value;
}

bool ExperimentConfig::has(const std::string& key) const { return values_.count(key) != 0; }

std::string ExperimentConfig::get(const std::string& key, const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

std::string ExperimentConfig::require(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end() || it->second.empty()) throw std::invalid_argument("config: missing required key '" + key + "'");
  return it->second;
}

int ExperimentConfig::get_int(const std::string& key, int fallback) const {
  return has(key) ? parse_number<int>(key, values_.at(key)) : fallback;
}

std::uint64_t ExperimentConfig::get_u64(const std::string& key, std::uint64_t fallback) const {
  return has(key) ? parse_number<std::uint64_t>(key, values_.at(key)) : fallback;
}

double ExperimentConfig::get_double(const std::string& key, double fallback) const {
  return has(key) ? parse_number<double>(key, values_.at(key)) : fallback;
}

bool ExperimentConfig::get_bool(const std::string& key, bool fallback) const {
  if (!has(key)) return fallback;
  const std::string& v = values_.at(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw std::invalid_argument("config: bad boolean for " + key + ": '" + v + "'");
}

std::vector<int> ExperimentConfig::get_int_list(const std::string& key, const std::vector<int>& fallback) const {
  if (!has(key)) return fallback;
  std::vector<int> out;
  for (const auto& item : split_list(values_.at(key))) out.push_back(parse_number<int>(key, item));
  return out;
}

std::string ExperimentConfig::dump() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Command helpers
// ---------------------------------------------------------------------------

namespace {

void prepare_output(const ExperimentConfig& config, const fs::path& out) {
  if (out.empty()) throw std::invalid_argument("an output directory is required");
  fs::create_directories(out);
  write_file_atomic(out / "config.txt", config.dump());
}

fs::path data_path(const ExperimentConfig& c, const std::string& key, const std::string& file) {
  if (c.has(key)) return c.get(key, "");
  if (!c.has("data_dir")) throw std::invalid_argument("config: set data_dir or " + key);
  return fs::path(c.get("data_dir", "")) / file;
}

std::shared_ptr<const Vocabulary> resolve_vocab(const ExperimentConfig& c, const fs::path& checkpoint = {}) {
  fs::path p;
  if (c.has("vocab")) {
    p = c.get("vocab", "");
  } else if (c.has("data_dir") && fs::exists(fs::path(c.get("data_dir", "")) / "vocab.txt")) {
    p = fs::path(c.get("data_dir", "")) / "vocab.txt";
  } else if (!checkpoint.empty() && fs::exists(checkpoint.parent_path() / "vocab.txt")) {
    p = checkpoint.parent_path() / "vocab.txt";
  } else {
    throw std::invalid_argument("config: no vocabulary found; set vocab or data_dir");
  }
  return std::make_shared<const Vocabulary>(Vocabulary::load(p));
}

PairDataset load_split(const ExperimentConfig& c, const std::string& key, std::shared_ptr<const Vocabulary> vocab) {
  const fs::path p = data_path(c, key, key + ".jsonl");
  if (!fs::exists(p)) throw std::runtime_error("dataset not found: " + p.string());
  PairDataset d = load_jsonl(p, std::move(vocab));
  d.validate();
  return d;
}

void check_model_fits(const ModelConfig& m, const Vocabulary& vocab, std::initializer_list<const PairDataset*> sets) {
  if (m.vocab_size != vocab.size()) {
    throw std::invalid_argument("model vocabulary size " + std::to_string(m.vocab_size) +
                                " does not match vocabulary file size " + std::to_string(vocab.size()));
  }
  for (const PairDataset* d : sets) {
    if (d->max_length() > m.max_positions) {
      throw std::invalid_argument("dataset sequences exceed max_positions=" + std::to_string(m.max_positions));
    }
  }
}

BeamParams beam_from(const ExperimentConfig& c) {
  BeamParams b;
  b.beam_size = c.get_int("beam_size", b.beam_size);
  b.max_len = c.get_int("max_len", b.max_len);
  b.length_penalty = c.get_double("length_penalty", b.length_penalty);
  b.min_len = c.get_int("min_len", b.min_len);
  return b;
}

StopMetric parse_stop_metric(const std::string& text) {
  if (text == "val_loss") return StopMetric::ValLoss;
  if (text == "val_rouge2") return StopMetric::ValRouge2;
  throw std::invalid_argument("config: stop_metric must be val_loss or val_rouge2");
}

TrainingSchedule schedule_from(const ExperimentConfig& c, bool default_freeze) {
  TrainingSchedule s;
  s.max_epochs = c.get_int("max_epochs", s.max_epochs);
  s.patience_evals = c.get_int("patience", s.patience_evals);
  s.evals_per_epoch = c.get_int("evals_per_epoch", s.evals_per_epoch);
  s.lr = c.get_double("lr", s.lr);
  s.warmup_fraction = c.get_double("warmup_fraction", s.warmup_fraction);
  s.batch_size = c.get_int("batch_size", s.batch_size);
  s.freeze_encoder = c.get_bool("freeze_encoder", default_freeze);
  s.freeze_embeddings = c.get_bool("freeze_embeddings", default_freeze);
  s.seed = c.get_u64("seed", 0);
  s.min_improvement = c.get_double("min_improvement", s.min_improvement);
  s.stop_metric = parse_stop_metric(c.get("stop_metric", "val_loss"));
  s.eval_rouge = c.get_bool("eval_rouge", false);
  s.eval_beam = beam_from(c);
  s.validate();
  return s;
}

void write_outputs(const fs::path& out, const Seq2SeqModel<float>& model, const Vocabulary& vocab,
                   const TrainHistory& history, const RougeReport& rouge,
                   const std::map<std::string, std::string>& metadata) {
  save_model(model, out / "model.ckpt", metadata);
  vocab.save(out / "vocab.txt");
  history.write_log(out / "history.tsv");
  write_file_atomic(out / "rouge.json", rouge.to_record() + "\n");
}

std::string fixed(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

void append_result_row(const fs::path& table, const std::string& row) {
  std::string contents = kResultsHeader;
  if (fs::exists(table)) {
    std::ifstream in(table, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    contents = ss.str();
    if (contents.rfind(kResultsHeader, 0) != 0) throw std::runtime_error("results table has an unexpected header: " + table.string());
  }
  write_file_atomic(table, contents + row);
}

}  // namespace

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

void cmd_gen_corpus(const ExperimentConfig& c, const fs::path& out) {
  prepare_output(c, out);
  ToyTaskSpec spec;
  const std::string task = c.get("task", "leadk");
  if (task == "leadk") {
    spec.task = ToyTask::LeadK;
  } else if (task == "keyterm") {
    spec.task = ToyTask::KeyTerm;
  } else {
    throw std::invalid_argument("config: task must be leadk or keyterm");
  }
  spec.k = c.get_int("k", spec.k);
  spec.min_doc_len = c.get_int("min_doc_len", spec.min_doc_len);
  spec.max_doc_len = c.get_int("max_doc_len", spec.max_doc_len);
  spec.vocab_size = c.get_int("toy_vocab_size", spec.vocab_size);
  spec.max_keys = c.get_int("max_keys", spec.max_keys);
  const int n_train = c.get_int("n_train", 2000), n_val = c.get_int("n_val", 200), n_test = c.get_int("n_test", 200);
  if (n_train < 1 || n_val < 1 || n_test < 0) throw std::invalid_argument("config: split sizes must be positive");

  PairDataset all = generate_toy_corpus(spec, n_train + n_val + n_test, c.get_u64("seed", 0));
  DatasetSplits s = split_dataset(all, static_cast<std::size_t>(n_train), static_cast<std::size_t>(n_val));
  save_jsonl(s.train, out / "train.jsonl");
  save_jsonl(s.val, out / "val.jsonl");
  save_jsonl(s.test, out / "test.jsonl");
  all.vocab->save(out / "vocab.txt");
}

RougeReport cmd_train_teacher(const ExperimentConfig& c, const fs::path& out) {
  prepare_output(c, out);
  auto vocab = resolve_vocab(c);
  PairDataset train = load_split(c, "train", vocab), val = load_split(c, "val", vocab);

  ModelConfig m;
  const LayerCounts size = parse_size_spec(c.get("size", "4-4"));
  m.vocab_size = vocab->size();
  m.d_model = c.get_int("d_model", m.d_model);
  m.n_heads = c.get_int("n_heads", m.n_heads);
  m.ffn_dim = c.get_int("ffn_dim", m.ffn_dim);
  m.enc_layers = size.enc_layers;
  m.dec_layers = size.dec_layers;
  m.max_positions = c.get_int("max_positions", m.max_positions);
  m.tie_output_embedding = c.get_bool("tie_output_embedding", m.tie_output_embedding);
  m.init_std = c.get_double("init_std", m.init_std);
  m.validate();
  check_model_fits(m, *vocab, {&train, &val});

  const TrainingSchedule schedule = schedule_from(c, false);
  DistillRecipe recipe;
  auto result = fine_tune(make_model<float>(m, schedule.seed), train, val, schedule, recipe);
  const RougeReport rouge = score_corpus(result.model, val, beam_from(c));
  write_outputs(out, result.model, *vocab, result.history, rouge,
                {{"role", "teacher"}, {"seed", std::to_string(schedule.seed)}});
  return rouge;
}

RougeReport cmd_distill(const ExperimentConfig& c, const fs::path& out) {
  prepare_output(c, out);
  const Method method = parse_method(c.get("method", "sft"));
  const fs::path teacher_path = c.require("teacher");
  if (!fs::exists(teacher_path)) throw std::runtime_error("teacher checkpoint not found: " + teacher_path.string());
  const Seq2SeqModel<float> teacher = load_model<float>(teacher_path);
  auto vocab = resolve_vocab(c, teacher_path);
  PairDataset train = load_split(c, "train", vocab), val = load_split(c, "val", vocab);
  check_model_fits(teacher.config, *vocab, {&train, &val});

  const LayerCounts size = parse_size_spec(c.get("student", std::to_string(teacher.config.enc_layers) + "-" +
                                                                 std::to_string(teacher.config.dec_layers)));
  if (size.enc_layers > teacher.config.enc_layers || size.dec_layers > teacher.config.dec_layers) {
    throw std::invalid_argument("student size " + c.get("student", "") + " exceeds the teacher's " +
                                std::to_string(teacher.config.enc_layers) + "-" +
                                std::to_string(teacher.config.dec_layers));
  }
  ModelConfig student_cfg = teacher.config;
  student_cfg.enc_layers = size.enc_layers;
  student_cfg.dec_layers = size.dec_layers;

  const std::string init_text = c.get("init", "max_spaced");
  InitStrategy init = InitStrategy::parse(init_text);
  if (init.kind == InitStrategy::Kind::Random && init_text.find(':') == std::string::npos) init.seed = c.get_u64("seed", 0);
  const bool full_encoder = c.get_bool("copy_full_encoder", size.enc_layers == teacher.config.enc_layers);
  Seq2SeqModel<float> student = init_student(teacher, student_cfg, init, full_encoder);

  const TrainingSchedule schedule = schedule_from(c, full_encoder);
  DistillRecipe recipe;
  recipe.method = method;
  recipe.weights.alpha_logits = c.get_double("alpha_logits", recipe.weights.alpha_logits);
  recipe.weights.alpha_data = c.get_double("alpha_data", recipe.weights.alpha_data);
  recipe.weights.alpha_hidn = c.get_double("alpha_hidn", recipe.weights.alpha_hidn);
  recipe.beam = beam_from(c);
  recipe.phi = c.get_int_list("phi", {});
  recipe.share_encoder = c.get_bool("share_encoder", true);

  PairDataset train_set = train;
  if (method == Method::PL) {
    std::vector<PseudoLabelSet> sets;
    if (c.has("pseudo_labels")) {
      for (const auto& p : split_list(c.get("pseudo_labels", ""))) sets.push_back(load_pseudolabels(p, vocab));
    } else {
      sets.push_back(generate_pseudolabels(teacher, train, recipe.beam, c.get("teacher_id", teacher_path.string()),
                                           c.get_int("threads", 1)));
    }
    if (sets.empty()) throw std::invalid_argument("config: method pl needs a pseudo-label source");
    train_set = combine_datasets(train, sets, parse_combine_mode(c.get("combine", "pl")));
  }

  auto result = fine_tune(std::move(student), train_set, val, schedule, recipe, method == Method::KD ? &teacher : nullptr);
  const RougeReport rouge = score_corpus(result.model, val, recipe.beam);
  write_outputs(out, result.model, *vocab, result.history, rouge,
                {{"role", "student"},
                 {"method", to_string(method)},
                 {"init", init.to_string()},
                 {"seed", std::to_string(schedule.seed)}});

  const std::string row = to_string(method) + "\t" + std::to_string(size.enc_layers) + "-" +
                          std::to_string(size.dec_layers) + "\t" + init.to_string() + "\t" +
                          std::to_string(result.steps) + "\t" +
                          fixed(result.history.evals[result.history.best_index].val_loss) + "\t" +
                          fixed(rouge.rouge1.f1) + "\t" + fixed(rouge.rouge2.f1) + "\t" + fixed(rouge.rougeL.f1) +
                          "\t" + to_string(result.history.stop_reason) + "\n";
  append_result_row(c.has("results") ? fs::path(c.get("results", "")) : out / "results.tsv", row);
  return rouge;
}

void cmd_pseudo(const ExperimentConfig& c, const fs::path& out) {
  prepare_output(c, out);
  const fs::path teacher_path = c.require("teacher");
  const Seq2SeqModel<float> teacher = load_model<float>(teacher_path);
  auto vocab = resolve_vocab(c, teacher_path);
  PairDataset train = load_split(c, "train", vocab);
  check_model_fits(teacher.config, *vocab, {&train});
  PseudoLabelSet labels =
      generate_pseudolabels(teacher, train, beam_from(c), c.get("teacher_id", teacher_path.string()), c.get_int("threads", 1));
  save_pseudolabels(labels, out / "pseudo_labels.jsonl");
}

RougeReport cmd_eval(const ExperimentConfig& c, const fs::path& out) {
  prepare_output(c, out);
  const fs::path model_path = c.require("model");
  const Seq2SeqModel<float> model = load_model<float>(model_path);
  auto vocab = resolve_vocab(c, model_path);
  const fs::path data_file = c.has("eval_data") ? fs::path(c.get("eval_data", "")) : data_path(c, "test", "test.jsonl");
  PairDataset data = load_jsonl(data_file, vocab);
  data.validate();
  check_model_fits(model.config, *vocab, {&data});
  const RougeReport rouge = score_corpus(model, data, beam_from(c));
  write_file_atomic(out / "rouge.json", rouge.to_record() + "\n");
  return rouge;
}

void cmd_bench(const ExperimentConfig& c, const fs::path& out) {
  prepare_output(c, out);
  ConfigRanges r;
  r.enc_layers = c.get_int_list("bench_enc", r.enc_layers);
  r.dec_layers = c.get_int_list("bench_dec", r.dec_layers);
  r.d_model = c.get_int_list("bench_d_model", r.d_model);
  r.ffn_dim = c.get_int_list("bench_ffn", r.ffn_dim);
  r.n_heads = c.get_int("bench_heads", r.n_heads);
  r.vocab_size = c.get_int("bench_vocab", r.vocab_size);
  r.max_positions = c.get_int("bench_max_positions", r.max_positions);
  r.validate();

  TimingOptions o;
  o.batch = c.get_int("bench_batch", o.batch);
  o.reps = c.get_int("bench_reps", o.reps);
  o.warmups = c.get_int("bench_warmups", o.warmups);
  o.source_len = c.get_int("bench_source_len", o.source_len);
  o.target_len = c.get_int("bench_target_len", o.target_len);
  o.beam_size = c.get_int("bench_beam_size", o.beam_size);
  o.seed = c.get_u64("seed", 0);
  o.memory_budget_bytes = static_cast<std::size_t>(c.get_int("bench_memory_mb", 1024)) << 20;
  const TimingMode mode = parse_timing_mode(c.get("bench_mode", "beam"));

  std::vector<TimingRecord> records;
  for (const auto& cfg : sample_configs(r, c.get_int("bench_count", 300), o.seed)) records.push_back(time_model(cfg, mode, o));
  write_file_atomic(out / "timings.csv", timing_csv(records));
  std::vector<std::string> predictors;
  const std::vector<int>* dims[] = {&r.enc_layers, &r.dec_layers, &r.d_model, &r.ffn_dim};
  for (std::size_t i = 0; i < 4; ++i) {
    if (std::set<int>(dims[i]->begin(), dims[i]->end()).size() > 1) predictors.push_back(kTimingPredictors[i]);
  }
  const RegressionFit raw = fit_ols(records, false, predictors), logged = fit_ols(records, true, predictors);
  write_file_atomic(out / "regression.txt", raw.to_text() + "\n" + logged.to_text());

  if (c.has("bench_baseline")) {
    auto shaped = [&](const std::string& spec) {
      const LayerCounts s = parse_size_spec(spec);
      ModelConfig m;
      m.vocab_size = r.vocab_size;
      m.d_model = r.d_model.front();
      m.n_heads = r.n_heads;
      m.ffn_dim = r.ffn_dim.front();
      m.enc_layers = s.enc_layers;
      m.dec_layers = s.dec_layers;
      m.max_positions = r.max_positions;
      return time_model(m, mode, o);
    };
    const TimingRecord base = shaped(c.get("bench_baseline", ""));
    std::vector<TimingRecord> others;
    for (const auto& s : split_list(c.get("bench_compare", ""))) others.push_back(shaped(s));
    std::string table = "size\tmedian_ms\tspeedup\n";
    for (const auto& row : speedup_report(base, others)) {
      table += std::to_string(row.record.enc_layers) + "-" + std::to_string(row.record.dec_layers) + "\t" +
               fixed(row.record.median_ms) + "\t" + fixed(row.speedup) + "\n";
    }
    write_file_atomic(out / "speedup.tsv", table);
  }
}

// ---------------------------------------------------------------------------
// Entry point
// ---------------------------------------------------------------------------

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Seq2seq distillation toolkit", "distillkit"};
  app.require_subcommand(1);

  struct Flags {
    std::string config_path;
    std::vector<std::string> sets;
    std::string out;
    std::optional<std::uint64_t> seed;
  } flags;

  using Command = std::function<void(const ExperimentConfig&, const fs::path&)>;
  const std::vector<std::tuple<std::string, std::string, Command>> commands{
      {"gen-corpus", "Generate a toy summarization corpus", cmd_gen_corpus},
      {"train-teacher", "Train a model from scratch", [](auto& c, auto& o) { cmd_train_teacher(c, o); }},
      {"distill", "Build and train a student from a teacher", [](auto& c, auto& o) { cmd_distill(c, o); }},
      {"pseudo", "Write teacher pseudo-labels for the training set", cmd_pseudo},
      {"eval", "Score a checkpoint with ROUGE", [](auto& c, auto& o) { cmd_eval(c, o); }},
      {"bench", "Time sampled configurations and fit a cost model", cmd_bench},
  };

  Command selected;
  for (const auto& [name, help, fn] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", flags.config_path, "key=value config file")->check(CLI::ExistingFile);
    sub->add_option("--set", flags.sets, "Override one key (key=value); repeatable");
    sub->add_option("--out", flags.out, "Output directory")->required();
    sub->add_option("--seed", flags.seed, "Random seed");
    sub->callback([&selected, f = fn] { selected = f; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    ExperimentConfig config = flags.config_path.empty() ? ExperimentConfig{} : ExperimentConfig::load(flags.config_path);
    for (const auto& s : flags.sets) config.set(std::string_view(s));
    if (flags.seed) config.set("seed", std::to_string(*flags.seed));
    selected(config, flags.out);
  } catch (const std::exception& e) {
    std::cerr << "distillkit: error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace dk
