// Acceptance suite: one PASS/FAIL line per criterion.

#include "distillkit/bench.hpp"
#include "distillkit/checkpoint.hpp"
#include "distillkit/cli.hpp"
#include "distillkit/distill.hpp"
#include "distillkit/gradcheck.hpp"
#include "distillkit/metrics.hpp"
#include "distillkit/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>

namespace fs = std::filesystem;
using Mat = dk::Matrix<double>;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void expect(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      if (!detail.empty()) detail += "; ";
      detail += "failed: " + what;
    }
  }
  void note(const std::string& what) {
    if (!detail.empty()) detail += "; ";
    detail += what;
  }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

fs::path scratch() {
  static const fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / "distillkit_acceptance";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------------------
// Layer selection and phi oracles
// ---------------------------------------------------------------------------

int min_gap(const std::vector<int>& idx) {
  int gap = 1 << 30;
  for (std::size_t i = 1; i < idx.size(); ++i) gap = std::min(gap, idx[i] - idx[i - 1]);
  return gap;
}

int best_min_gap(int L, int k) {
  int best = 0;
  std::vector<bool> pick(static_cast<std::size_t>(L - 2), false);
  std::fill(pick.begin(), pick.begin() + (k - 2), true);
  do {
    std::vector<int> idx{0};
    for (int i = 0; i < L - 2; ++i) {
      if (pick[static_cast<std::size_t>(i)]) idx.push_back(i + 1);
    }
    idx.push_back(L - 1);
    best = std::max(best, min_gap(idx));
  } while (std::prev_permutation(pick.begin(), pick.end()));
  return best;
}

Outcome layer_selection() {
  Outcome o;
  o.expect(dk::select_copy_layers(12, 3) == std::vector<int>{0, 6, 11}, "(12,3) -> [0,6,11]");
  o.expect(dk::select_copy_layers(12, 1) == std::vector<int>{0}, "(12,1) -> [0]");
  int checked = 0;
  for (int L = 1; L <= 16; ++L) {
    for (int k = 1; k <= L; ++k) {
      const auto idx = dk::select_copy_layers(L, k);
      bool ok = static_cast<int>(idx.size()) == k && idx.front() == 0 && std::is_sorted(idx.begin(), idx.end()) &&
                std::adjacent_find(idx.begin(), idx.end()) == idx.end();
      if (k >= 2) ok = ok && idx.back() == L - 1 && min_gap(idx) == best_min_gap(L, k);
      o.expect(ok, "maximal spacing at L=" + std::to_string(L) + ", L'=" + std::to_string(k));
      ++checked;
    }
  }
  o.note(std::to_string(checked) + " (L, L') pairs brute-forced");
  return o;
}

Outcome phi_mapping() {
  Outcome o;
  o.expect(dk::build_phi(12, 3) == std::vector<int>{3, 7, 11}, "build_phi(12,3) -> [3,7,11]");
  int checked = 0;
  for (int L = 1; L <= 16; ++L) {
    for (int k = 1; k <= L; ++k) {
      const auto phi = dk::build_phi(L, k);
      bool ok = static_cast<int>(phi.size()) == k && phi.back() == L - 1;
      int smallest = L, largest = 0;
      for (int j = 0; ok && j < L; ++j) {
        int covering = 0;
        for (int l = 0; l < k; ++l) {
          const int lo = l == 0 ? -1 : phi[static_cast<std::size_t>(l - 1)];
          if (lo < j && j <= phi[static_cast<std::size_t>(l)]) ++covering;
        }
        ok = covering == 1;
      }
      for (int l = 0; ok && l < k; ++l) {
        const int size = phi[static_cast<std::size_t>(l)] - (l == 0 ? -1 : phi[static_cast<std::size_t>(l - 1)]);
        smallest = std::min(smallest, size);
        largest = std::max(largest, size);
      }
      o.expect(ok && largest - smallest <= 1, "partition at L=" + std::to_string(L) + ", L'=" + std::to_string(k));
      ++checked;
    }
  }
  o.note(std::to_string(checked) + " (L, L') pairs brute-forced");
  return o;
}

// ---------------------------------------------------------------------------
// Loss oracles
// ---------------------------------------------------------------------------

Mat random_mat(std::mt19937_64& rng, dk::Index r, dk::Index c, double scale = 1.0) {
  std::normal_distribution<double> d(0.0, scale);
  Mat m(r, c);
  for (dk::Index i = 0; i < m.size(); ++i) m.data()[i] = d(rng);
  return m;
}

double log_softmax_at(const Mat& logits, dk::Index row, int col) {
  double mx = -INFINITY;
  for (dk::Index j = 0; j < logits.cols(); ++j) mx = std::max(mx, logits(row, j));
  double z = 0.0;
  for (dk::Index j = 0; j < logits.cols(); ++j) z += std::exp(logits(row, j) - mx);
  return logits(row, col) - mx - std::log(z);
}

double oracle_ce(const Mat& logits, const std::vector<int>& labels) {
  double total = 0.0;
  for (std::size_t t = 0; t < labels.size(); ++t) {
    if (labels[t] != dk::kPadId) total -= log_softmax_at(logits, static_cast<dk::Index>(t), labels[t]);
  }
  return total;
}

double oracle_kl(const Mat& student, const Mat& teacher, const std::vector<int>& labels) {
  double total = 0.0;
  for (dk::Index t = 0; t < student.rows(); ++t) {
    if (labels[static_cast<std::size_t>(t)] == dk::kPadId) continue;
    for (int v = 0; v < student.cols(); ++v) {
      const double lq = log_softmax_at(teacher, t, v);
      total += std::exp(lq) * (lq - log_softmax_at(student, t, v));
    }
  }
  return total;
}

double oracle_hidden(const std::vector<Mat>& s, const std::vector<Mat>& t, const std::vector<int>& phi) {
  double total = 0.0;
  for (std::size_t l = 0; l < s.size(); ++l) {
    const Mat& a = s[l];
    const Mat& b = t[static_cast<std::size_t>(phi[l])];
    double sq = 0.0;
    for (dk::Index i = 0; i < a.size(); ++i) sq += (a.data()[i] - b.data()[i]) * (a.data()[i] - b.data()[i]);
    total += sq / static_cast<double>(a.size());
  }
  return total;
}

struct LeafTrace {
  dk::Tensor<double> logits;
  std::vector<dk::Tensor<double>> states;

  dk::HiddenTrace<double> bind(dk::Graph<double>& g) const {
    dk::HiddenTrace<double> t;
    t.logits = g.param(logits);
    for (const auto& s : states) t.decoder_states.push_back(g.param(s));
    return t;
  }
  dk::TraceValues<double> values() const {
    dk::TraceValues<double> v;
    v.logits = logits.value();
    for (const auto& s : states) v.decoder_states.push_back(s.value());
    return v;
  }
};

LeafTrace random_trace(std::mt19937_64& rng, int len, int vocab, int layers, int width) {
  LeafTrace t{dk::Tensor<double>(random_mat(rng, len, vocab, 2.0)), {}};
  for (int l = 0; l < layers; ++l) t.states.emplace_back(random_mat(rng, len, width));
  return t;
}

dk::ModelConfig tiny_config(int enc, int dec) {
  dk::ModelConfig c;
  c.vocab_size = 11;
  c.d_model = 8;
  c.n_heads = 2;
  c.ffn_dim = 12;
  c.enc_layers = enc;
  c.dec_layers = dec;
  c.max_positions = 10;
  c.init_std = 0.4;
  return c;
}

Outcome loss_correctness() {
  Outcome o;
  std::mt19937_64 rng(2024);
  double worst = 0.0;
  const int instances = 60;
  for (int trial = 0; trial < instances; ++trial) {
    const int len = std::uniform_int_distribution<int>(1, 6)(rng);
    const int vocab = std::uniform_int_distribution<int>(5, 9)(rng);
    const int width = std::uniform_int_distribution<int>(1, 5)(rng);
    const int t_layers = std::uniform_int_distribution<int>(1, 5)(rng);
    const int s_layers = std::uniform_int_distribution<int>(1, t_layers)(rng);
    std::vector<int> labels(static_cast<std::size_t>(len));
    for (auto& t : labels) t = std::uniform_int_distribution<int>(0, vocab - 1)(rng);
    auto student = random_trace(rng, len, vocab, s_layers, width);
    auto teacher = random_trace(rng, len, vocab, t_layers, width);
    const auto phi = dk::build_phi(t_layers, s_layers);

    dk::Graph<double> g(false);
    auto st = student.bind(g);
    auto tv = teacher.values();
    std::vector<Mat> s_states;
    for (const auto& s : student.states) s_states.push_back(s.value());
    const double ce = oracle_ce(student.logits.value(), labels);
    const double kl = oracle_kl(student.logits.value(), tv.logits, labels);
    const double hid = oracle_hidden(s_states, tv.decoder_states, phi);
    worst = std::max(worst, std::abs(dk::loss_data(st, labels).scalar() - ce));
    worst = std::max(worst, std::abs(dk::loss_logits(st.logits, tv.logits, dk::non_pad_mask(labels)).scalar() - kl));
    worst = std::max(worst, std::abs(dk::loss_hidden(st, tv, phi).scalar() - hid));
    worst = std::max(worst, std::abs(dk::loss_kd(st, tv, labels, dk::LossWeights{}, phi).total.scalar() -
                                     (0.8 * kl + ce + 3.0 * hid)));
  }
  o.expect(worst < 1e-9, "oracle agreement within 1e-9");
  o.note(std::to_string(instances) + " instances, max abs error " + fmt("%.2e", worst));

  double worst_grad = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    const int len = std::uniform_int_distribution<int>(1, 6)(rng);
    auto student = random_trace(rng, len, 6, 2, 4);
    auto teacher = random_trace(rng, len, 6, 3, 4).values();
    std::vector<int> labels(static_cast<std::size_t>(len));
    for (auto& t : labels) t = std::uniform_int_distribution<int>(0, 5)(rng);
    std::vector<dk::Tensor<double>*> inputs{&student.logits, &student.states[0], &student.states[1]};
    auto build = [&](dk::Graph<double>& g) {
      return dk::loss_kd(student.bind(g), teacher, labels, dk::LossWeights{}, {1, 2}).total;
    };
    worst_grad = std::max(worst_grad, dk::grad_check(build, std::span<dk::Tensor<double>* const>(inputs), 1e-5));
  }
  {
    auto teacher = dk::make_model<double>(tiny_config(2, 4), 31);
    auto student = dk::init_student(teacher, tiny_config(2, 2), dk::InitStrategy::max_spaced(), true);
    student.visit_parameters([&](const std::string&, dk::Tensor<double>& t) {
      t.value() += random_mat(rng, t.rows(), t.cols(), 0.1);
    });
    std::vector<int> src{4, 5, 0, 6}, labels{7, 8, 9, dk::kEosId, dk::kPadId};
    dk::Graph<double> tg(false);
    auto tv = dk::detach(dk::forward_teacher_forced(tg, teacher, src, labels));
    const auto phi = dk::build_phi(4, 2);
    auto params = student.parameters();
    auto build = [&](dk::Graph<double>& g) {
      return dk::loss_kd(dk::forward_teacher_forced(g, student, src, labels), tv, labels, dk::LossWeights{}, phi).total;
    };
    worst_grad = std::max(worst_grad, dk::grad_check(build, std::span<dk::Tensor<double>* const>(params), 1e-5));
  }
  o.expect(worst_grad < 1e-4, "finite-difference relative error < 1e-4");
  o.note("max gradient relative error " + fmt("%.2e", worst_grad));

  auto teacher = dk::make_model<double>(tiny_config(2, 3), 8);
  auto student = dk::init_student(teacher, tiny_config(2, 3), dk::InitStrategy::max_spaced(), true);
  std::vector<int> src{4, 5, 6, 7}, labels{8, 9, dk::kEosId, dk::kPadId};
  dk::Graph<double> tg(false);
  auto tv = dk::detach(dk::forward_teacher_forced(tg, teacher, src, labels));
  dk::Graph<double> g(false);
  auto st = dk::forward_teacher_forced(g, student, src, labels);
  o.expect(dk::loss_logits(st.logits, tv.logits, dk::non_pad_mask(labels)).scalar() == 0.0, "student==teacher L_logits == 0");
  o.expect(dk::loss_hidden(st, tv, dk::build_phi(3, 3)).scalar() == 0.0, "student==teacher L_hid == 0");
  return o;
}

// ---------------------------------------------------------------------------
// Parameter counts
// ---------------------------------------------------------------------------

Outcome parameter_counts() {
  Outcome o;
  dk::ModelConfig bart;
  bart.vocab_size = 50264;
  bart.d_model = 1024;
  bart.n_heads = 16;
  bart.ffn_dim = 4096;
  bart.max_positions = 1024;
  bart.enc_layers = 12;
  for (auto [dec, expected] : {std::pair{12, 406.0}, {6, 306.0}, {3, 255.0}, {1, 222.0}}) {
    bart.dec_layers = dec;
    const double m = static_cast<double>(dk::count_params(bart)) / 1e6;
    o.expect(std::abs(m - expected) / expected < 0.03, "12-" + std::to_string(dec) + " within 3%");
    o.note("12-" + std::to_string(dec) + " " + fmt("%.1fM", m) + " vs " + fmt("%.0fM", expected));
  }
  return o;
}

// ---------------------------------------------------------------------------
// Toy-task experiments
// ---------------------------------------------------------------------------

dk::ModelConfig toy_model(const dk::PairDataset& data, int enc, int dec) {
  dk::ModelConfig c;
  c.vocab_size = data.vocab->size();
  c.d_model = 32;
  c.n_heads = 4;
  c.ffn_dim = 64;
  c.enc_layers = enc;
  c.dec_layers = dec;
  c.max_positions = 24;
  c.init_std = 0.1;
  return c;
}

Outcome initialization_study() {
  Outcome o;
  dk::ToyTaskSpec spec;
  spec.task = dk::ToyTask::KeyTerm;
  spec.min_doc_len = 8;
  spec.max_doc_len = 14;
  auto data = dk::generate_toy_corpus(spec, 2200, 11);
  auto split = dk::split_dataset(data, 2000, 200);

  dk::TrainingSchedule ts;
  ts.lr = 3e-3;
  ts.max_epochs = 3;
  ts.seed = 1;
  auto teacher = dk::fine_tune(dk::make_model<float>(toy_model(data, 4, 4), 1), split.train, split.val, ts, {}).model;
  dk::BeamParams beam;
  beam.max_len = 8;
  const double teacher_r2 = dk::score_corpus(teacher, split.val, beam).rouge2.f1;
  o.expect(teacher_r2 > 0.9, "teacher converged (val ROUGE-2 > 0.9)");
  o.note("teacher 4-4 val loss " + fmt("%.4f", dk::validation_loss(teacher, split.val)) + ", ROUGE-2 " +
         fmt("%.3f", teacher_r2));

  const auto student_cfg = toy_model(data, 4, 2);
  std::map<std::string, std::vector<double>> losses;
  const char* strategies[] = {"max_spaced", "contiguous:0", "contiguous:2", "repeat:0", "random"};
  for (const char* name : strategies) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      auto init = dk::InitStrategy::parse(name);
      if (init.kind == dk::InitStrategy::Kind::Random) init.seed = 100 + seed;
      dk::TrainingSchedule s;
      s.lr = 1e-3;
      s.max_epochs = 1;
      s.seed = seed;
      s.freeze_encoder = true;
      s.freeze_embeddings = true;
      auto r = dk::fine_tune(dk::init_student(teacher, student_cfg, init, true), split.train, split.val, s, {});
      losses[name].push_back(r.history.evals[r.history.best_index].val_loss);
    }
  }
  const double best = median(losses["max_spaced"]);
  for (const char* name : strategies) o.note(std::string(name) + " " + fmt("%.4f", median(losses[name])));
  for (const char* rival : {"contiguous:0", "contiguous:2", "repeat:0"}) {
    o.expect(best <= median(losses[rival]), std::string("max_spaced <= ") + rival);
  }
  const auto& ms = losses["max_spaced"];
  const auto& rnd = losses["random"];
  o.expect(median(rnd) >= 1.5 * best, "random median >= 1.5x max_spaced median");
  o.expect(*std::max_element(ms.begin(), ms.end()) < *std::min_element(rnd.begin(), rnd.end()),
           "every max_spaced seed beats every random seed");
  return o;
}

Outcome pseudo_label_pipeline() {
  Outcome o;
  dk::ToyTaskSpec spec;
  auto data = dk::generate_toy_corpus(spec, 2200, 21);
  auto split = dk::split_dataset(data, 2000, 200);

  dk::TrainingSchedule ts;
  ts.lr = 3e-3;
  ts.max_epochs = 3;
  ts.seed = 2;
  auto teacher = dk::fine_tune(dk::make_model<float>(toy_model(data, 4, 4), 2), split.train, split.val, ts, {}).model;

  dk::BeamParams beam;
  beam.max_len = 8;
  auto pl = dk::generate_pseudolabels(teacher, split.train, beam, "teacher-4-4", 4);
  std::vector<std::string> hyps, refs;
  for (std::size_t i = 0; i < pl.size(); ++i) {
    hyps.push_back(data.vocab->decode(pl.records[i].target));
    refs.push_back(data.vocab->decode(split.train.records[i].target));
  }
  const double pl_r2 = dk::score_texts(hyps, refs).rouge2.f1;
  o.expect(pl_r2 > 0.9, "pseudo-labels ROUGE-2 vs gold > 0.9");
  o.note("pseudo-label ROUGE-2 " + fmt("%.4f", pl_r2));

  dk::PseudoLabelSet second = pl;
  second.teacher_id = "teacher-copy";
  const std::vector<dk::PseudoLabelSet> sets{pl, second};
  const auto orig_pl = dk::combine_datasets(split.train, std::span(sets.data(), 1), dk::CombineMode::OrigPlusPL);
  const auto orig_all = dk::combine_datasets(split.train, sets, dk::CombineMode::OrigPlusAllPL);
  o.expect(orig_pl.size() == split.train.size() + pl.size(), "|Orig+PL| = |Orig| + |PL|");
  o.expect(orig_all.size() == split.train.size() + 2 * pl.size(), "|Orig+all PL| = |Orig| + 2|PL|");
  o.expect(dk::combine_datasets(split.train, sets, dk::CombineMode::PL).size() == pl.size(), "|PL| alone");
  o.expect(dk::combine_datasets(split.train, sets, dk::CombineMode::Orig).size() == split.train.size(), "|Orig| alone");

  // equal step budgets: Orig+PL is twice as large, so it gets half the epochs
  const auto student_cfg = toy_model(data, 4, 2);
  auto train_student = [&](const dk::PairDataset& train, int epochs) {
    dk::TrainingSchedule s;
    s.lr = 1e-3;
    s.max_epochs = epochs;
    s.seed = 3;
    s.freeze_encoder = true;
    s.freeze_embeddings = true;
    auto r = dk::fine_tune(dk::init_student(teacher, student_cfg, dk::InitStrategy::max_spaced(), true), train,
                           split.val, s, {});
    return std::pair{r.steps, dk::score_corpus(r.model, split.val, beam).rouge2.f1};
  };
  const auto [sft_steps, sft_r2] = train_student(split.train, 2);
  const auto [pl_steps, orig_pl_r2] = train_student(orig_pl, 1);
  o.expect(sft_steps == pl_steps, "equal step budgets");
  o.expect(std::abs(sft_r2 - orig_pl_r2) <= 0.05, "Orig+PL within 0.05 ROUGE-2 of SFT");
  o.note("SFT ROUGE-2 " + fmt("%.4f", sft_r2) + ", Orig+PL ROUGE-2 " + fmt("%.4f", orig_pl_r2) + " over " +
         std::to_string(sft_steps) + " steps");
  return o;
}

// ---------------------------------------------------------------------------
// Early stopping
// ---------------------------------------------------------------------------

dk::TrainHistory history_of(const std::vector<double>& losses, double epoch_per_eval) {
  dk::TrainHistory h;
  for (std::size_t i = 0; i < losses.size(); ++i) {
    dk::EvalRecord r;
    r.step = static_cast<std::int64_t>(i + 1);
    r.epoch = static_cast<double>(i + 1) * epoch_per_eval;
    r.val_loss = losses[i];
    h.evals.push_back(r);
  }
  return h;
}

// Reference rule: stop at the epoch cap, or when each of the last `patience`
// evaluations fails to beat the best loss recorded before it.
bool reference_stop(const std::vector<double>& losses, double last_epoch, int patience, int max_epochs) {
  if (last_epoch >= max_epochs) return true;
  const int n = static_cast<int>(losses.size());
  if (n <= patience) return false;
  for (int k = n - patience; k < n; ++k) {
    const double best = *std::min_element(losses.begin(), losses.begin() + k);
    if (best - losses[static_cast<std::size_t>(k)] > 1e-6) return false;
  }
  return true;
}

Outcome early_stopping() {
  Outcome o;
  dk::TrainingSchedule s;
  s.evals_per_epoch = 4;
  o.expect(s.max_epochs == 5 && s.patience_evals == 4, "defaults: 5-epoch cap, patience of four evaluations");

  auto d = dk::should_stop(history_of({2.0, 1.9, 1.91, 1.92, 1.93, 1.94}, 0.25), s);
  o.expect(d.stop && d.reason == dk::StopReason::Patience, "four non-improving evaluations stop training");
  o.expect(!dk::should_stop(history_of({2.0, 1.9, 1.91, 1.92, 1.93}, 0.25), s).stop, "three do not");
  o.expect(!dk::should_stop(history_of({2.0, 1.9, 1.91, 1.92, 1.89}, 0.25), s).stop, "an improvement resets the window");

  // with four evaluations per epoch the window is exactly one epoch after the best
  auto full_epoch = history_of({3.0, 2.0, 2.1, 2.2, 2.3, 2.4}, 0.25);
  o.expect(dk::should_stop(full_epoch, s).stop &&
               full_epoch.evals.back().epoch - full_epoch.evals[1].epoch == 1.0,
           "patience window spans a full epoch");

  std::vector<double> falling;
  for (int i = 0; i < 20; ++i) falling.push_back(10.0 - i);
  auto capped = history_of(falling, 0.25);
  d = dk::should_stop(capped, s);
  o.expect(d.stop && d.reason == dk::StopReason::EpochCap && capped.evals.back().epoch == 5.0, "epoch-5 cap");
  capped.evals.pop_back();
  o.expect(!dk::should_stop(capped, s).stop, "no stop before the cap");

  std::mt19937_64 rng(5);
  int agreements = 0, trials = 0;
  for (int t = 0; t < 2000; ++t) {
    const int n = std::uniform_int_distribution<int>(1, 24)(rng);
    std::vector<double> losses;
    for (int i = 0; i < n; ++i) losses.push_back(std::uniform_int_distribution<int>(0, 5)(rng) * 0.5);
    const bool expected = reference_stop(losses, n * 0.25, 4, 5);
    agreements += dk::should_stop(history_of(losses, 0.25), s).stop == expected;
    ++trials;
  }
  o.expect(agreements == trials, "agrees with the reference rule on random histories");
  o.note(std::to_string(trials) + " random histories checked");
  return o;
}

// ---------------------------------------------------------------------------
// Freezing
// ---------------------------------------------------------------------------

Outcome freezing() {
  Outcome o;
  dk::ToyTaskSpec spec;
  auto data = dk::generate_toy_corpus(spec, 440, 31);
  auto split = dk::split_dataset(data, 400, 40);
  auto model = dk::make_model<double>(toy_model(data, 2, 2), 4);
  model.config.tie_output_embedding = false;
  model.output_projection = dk::Tensor<double>(Mat::Constant(32, data.vocab->size(), 0.01));

  std::map<std::string, Mat> before;
  model.visit_parameters([&](const std::string& n, const dk::Tensor<double>& t) { before[n] = t.value(); });
  dk::TrainingSchedule s;
  s.max_epochs = 1;
  s.batch_size = 4;
  s.evals_per_epoch = 1;
  s.lr = 1e-3;
  s.freeze_encoder = true;
  s.freeze_embeddings = true;
  auto r = dk::fine_tune(model, split.train, split.val, s, {});
  o.expect(r.steps == 100, "100 optimizer steps");

  int frozen = 0, moved = 0;
  r.model.visit_parameters([&](const std::string& n, const dk::Tensor<double>& t) {
    const Mat& b = before.at(n);
    const bool identical = std::memcmp(b.data(), t.value().data(), sizeof(double) * static_cast<std::size_t>(b.size())) == 0;
    const bool is_frozen = n.rfind("encoder.", 0) == 0 || n == "embed.tokens" || n == "decoder.positions";
    if (is_frozen) {
      ++frozen;
      o.expect(identical, n + " bit-identical");
    } else {
      moved += !identical;
    }
  });
  o.expect(moved > 0, "trainable parameters moved");
  o.note(std::to_string(frozen) + " frozen buffers bit-identical after " + std::to_string(r.steps) + " steps");
  return o;
}

// ---------------------------------------------------------------------------
// ROUGE oracle
// ---------------------------------------------------------------------------

std::vector<std::string> words(const std::string& s) { return dk::split_whitespace(s); }

double brute_overlap(const std::vector<std::string>& h, const std::vector<std::string>& r, int n, double& hyp_total,
                     double& ref_total) {
  auto grams = [n](const std::vector<std::string>& w) {
    std::vector<std::vector<std::string>> out;
    for (int i = 0; i + n <= static_cast<int>(w.size()); ++i) out.emplace_back(w.begin() + i, w.begin() + i + n);
    return out;
  };
  auto hg = grams(h), rg = grams(r);
  hyp_total = static_cast<double>(hg.size());
  ref_total = static_cast<double>(rg.size());
  std::vector<bool> used(rg.size(), false);
  double overlap = 0;
  for (const auto& g : hg) {
    for (std::size_t j = 0; j < rg.size(); ++j) {
      if (!used[j] && rg[j] == g) {
        used[j] = true;
        ++overlap;
        break;
      }
    }
  }
  return overlap;
}

double brute_lcs(const std::vector<std::string>& h, const std::vector<std::string>& r) {
  std::size_t best = 0;
  for (std::uint32_t mask = 0; mask < (1u << h.size()); ++mask) {
    std::vector<std::string> sub;
    for (std::size_t i = 0; i < h.size(); ++i) {
      if (mask & (1u << i)) sub.push_back(h[i]);
    }
    std::size_t i = 0;
    for (const auto& w : r) {
      if (i < sub.size() && sub[i] == w) ++i;
    }
    if (i == sub.size()) best = std::max(best, sub.size());
  }
  return static_cast<double>(best);
}

bool matches(const dk::RougeScore& s, double overlap, double hyp_total, double ref_total) {
  const double p = hyp_total > 0 ? overlap / hyp_total : 0.0;
  const double r = ref_total > 0 ? overlap / ref_total : 0.0;
  const double f = p + r > 0 ? 2 * p * r / (p + r) : 0.0;
  return s.precision == p && s.recall == r && s.f1 == f;
}

Outcome rouge_oracle() {
  Outcome o;
  static const char* pool[] = {"a", "b", "c", "d", "e", "A"};
  std::mt19937_64 rng(77);
  auto text = [&] {
    std::string out;
    const int len = std::uniform_int_distribution<int>(0, 10)(rng);
    for (int i = 0; i < len; ++i) out += (i ? " " : "") + std::string(pool[std::uniform_int_distribution<int>(0, 5)(rng)]);
    return out;
  };
  int mismatches = 0;
  for (int t = 0; t < 50; ++t) {
    const std::string hyp = text(), ref = text();
    const auto h = words(hyp), r = words(ref);
    for (int n : {1, 2}) {
      double ht = 0, rt = 0;
      const double ov = brute_overlap(h, r, n, ht, rt);
      mismatches += !matches(dk::rouge_n(hyp, ref, n), ov, ht, rt);
    }
    mismatches += !matches(dk::rouge_l(hyp, ref), brute_lcs(h, r), static_cast<double>(h.size()),
                           static_cast<double>(r.size()));
  }
  o.expect(mismatches == 0, "exact agreement with the brute-force scorer");
  o.note("50 random pairs, " + std::to_string(mismatches) + " mismatches");
  const auto ex = dk::rouge_n("the cat on the mat", "the cat sat on the mat", 2);
  o.expect(std::abs(ex.precision - 0.75) < 1e-15 && std::abs(ex.recall - 0.6) < 1e-15 &&
               std::abs(ex.f1 - 2.0 / 3.0) < 1e-15,
           "bigram example p=3/4 r=3/5 f1=2/3");
  return o;
}

// ---------------------------------------------------------------------------
// Inference-cost regression
// ---------------------------------------------------------------------------

Outcome inference_cost() {
  Outcome o;
  dk::ConfigRanges ranges;
  dk::TimingOptions opts;
  std::vector<dk::TimingRecord> records;
  for (const auto& c : dk::sample_configs(ranges, 320, 2024)) records.push_back(dk::time_model(c, dk::TimingMode::Beam, opts));
  const auto raw = dk::fit_ols(records, false), logged = dk::fit_ols(records, true);
  o.expect(records.size() >= 300, "at least 300 configurations");
  o.expect(raw.coefficient("dec_layers") > raw.coefficient("enc_layers"), "raw fit: dec_layers > enc_layers");
  o.expect(logged.coefficient("dec_layers") > logged.coefficient("enc_layers"), "log fit: dec_layers > enc_layers");
  o.note(std::to_string(records.size()) + " configs; raw dec " + fmt("%.4f", raw.coefficient("dec_layers")) + " enc " +
         fmt("%.4f", raw.coefficient("enc_layers")) + " ms/layer; log dec " +
         fmt("%.4f", logged.coefficient("dec_layers")) + " enc " + fmt("%.4f", logged.coefficient("enc_layers")));

  std::vector<dk::TimingRecord> planted = records;
  for (auto& r : planted) r.median_ms = 3.0 + 2.0 * r.dec_layers + 1.0 * r.enc_layers + 0.01 * r.d_model;
  const auto fit = dk::fit_ols(planted, false);
  const bool exact = std::abs(fit.intercept - 3.0) < 1e-9 && std::abs(fit.coefficient("dec_layers") - 2.0) < 1e-9 &&
                     std::abs(fit.coefficient("enc_layers") - 1.0) < 1e-9 &&
                     std::abs(fit.coefficient("d_model") - 0.01) < 1e-9 && std::abs(fit.coefficient("ffn_dim")) < 1e-9;
  o.expect(exact, "planted model recovered to 1e-9");

  dk::ModelConfig shape;
  shape.vocab_size = ranges.vocab_size;
  shape.max_positions = ranges.max_positions;
  shape.enc_layers = 12;
  shape.dec_layers = 12;
  const auto full = dk::time_model(shape, dk::TimingMode::Beam, opts);
  shape.dec_layers = 3;
  const auto small = dk::time_model(shape, dk::TimingMode::Beam, opts);
  const double speedup = dk::speedup_report(full, std::span(&small, 1))[0].speedup;
  o.expect(speedup > 1.0, "12-3 faster than 12-12");
  o.note("12-3 speedup over 12-12 " + fmt("%.2fx", speedup));
  return o;
}

// ---------------------------------------------------------------------------
// Determinism
// ---------------------------------------------------------------------------

Outcome determinism() {
  Outcome o;
  const fs::path root = scratch() / "determinism";
  dk::ExperimentConfig c = dk::ExperimentConfig::parse(
      "seed=5\nn_train=600\nn_val=60\nn_test=60\nd_model=32\nn_heads=4\nffn_dim=64\ninit_std=0.1\n"
      "lr=3e-3\nmax_epochs=2\nmax_len=8\nsize=2-2\n");
  dk::cmd_gen_corpus(c, root / "data");
  c.set("data_dir", (root / "data").string());
  dk::cmd_train_teacher(c, root / "teacher");
  c.set("teacher", (root / "teacher" / "model.ckpt").string());
  c.set("student", "2-1");
  c.set("max_epochs", "1");
  for (const char* method : {"kd", "pl"}) {
    c.set("method", method);
    dk::cmd_distill(c, root / (std::string(method) + "_a"));
    dk::cmd_distill(c, root / (std::string(method) + "_b"));
    const std::string a = slurp(root / (std::string(method) + "_a") / "model.ckpt");
    const std::string b = slurp(root / (std::string(method) + "_b") / "model.ckpt");
    o.expect(!a.empty() && a == b, std::string(method) + " checkpoints bit-identical");
    o.note(std::string(method) + ": " + std::to_string(a.size()) + " bytes identical");
  }
  return o;
}

struct Criterion {
  int id;
  const char* title;
  double budget_seconds;
  std::function<Outcome()> run;
};

}  // namespace

int main() {
  const std::vector<Criterion> criteria{
      {1, "layer-selection oracle", 1, layer_selection},
      {2, "phi oracle", 1, phi_mapping},
      {3, "loss correctness", 120, loss_correctness},
      {4, "parameter-count replication", 1, parameter_counts},
      {5, "initialization study", 1800, initialization_study},
      {6, "pseudo-label pipeline", 1800, pseudo_label_pipeline},
      {7, "early stopping", 1, early_stopping},
      {8, "freezing", 60, freezing},
      {9, "ROUGE oracle", 1, rouge_oracle},
      {10, "inference-cost regression", 1200, inference_cost},
      {11, "determinism", 600, determinism},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    const auto start = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out.pass = false;
      out.note(std::string("exception: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    out.expect(secs <= c.budget_seconds, "runtime within " + fmt("%.0fs", c.budget_seconds));
    failures += !out.pass;
    std::printf("AC%-2d %s  %-28s (%.2fs)  %s\n", c.id, out.pass ? "PASS" : "FAIL", c.title, secs, out.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu criteria, %d failed\n", criteria.size(), failures);
  return failures == 0 ? 0 : 1;
}
