#pragma once

#include "distillkit/corpus.hpp"
#include "distillkit/ops.hpp"
#include "distillkit/seq2seq.hpp"

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace dk {

// ---------------------------------------------------------------------------
// Layer selection
// ---------------------------------------------------------------------------

/// Maximally spaced teacher layers for a student of depth `student_layers`.
/// One layer maps to [0]; otherwise index i is round_half_up(i (L-1) / (L'-1)),
/// which always includes 0 and L-1.
std::vector<int> select_copy_layers(int teacher_layers, int student_layers);

/// Supervision map: student layer l imitates teacher layer ceil((l+1) L / L') - 1,
/// the last layer of the l-th of L' near-equal contiguous blocks.
std::vector<int> build_phi(int teacher_layers, int student_layers);

/// Student -> teacher index lists for initialization and hidden-state supervision.
struct LayerMap {
  std::vector<int> copy_indices;
  std::vector<int> phi;

  /// Checks lengths, ranges, ordering, and that the last student layer is
  /// supervised by the last teacher layer. Repeated copy indices are allowed
  /// only when `allow_repeats`.
  void validate(int teacher_layers, int student_layers, bool allow_repeats = false) const;
};

LayerMap default_layer_map(int teacher_layers, int student_layers);

/// How a student's decoder layers are initialized.
struct InitStrategy {
  enum class Kind { MaxSpaced, Contiguous, Repeat, Random, Explicit };

  Kind kind = Kind::MaxSpaced;
  int index = 0;            // first layer for Contiguous, the layer for Repeat
  std::vector<int> layers;  // Explicit
  std::string donor = "teacher";
  std::uint64_t seed = 0;   // Random

  static InitStrategy max_spaced() { return {}; }
  static InitStrategy contiguous(int start) { return make(Kind::Contiguous, start); }
  static InitStrategy repeat(int layer) { return make(Kind::Repeat, layer); }
  static InitStrategy random(std::uint64_t seed) {
    InitStrategy s = make(Kind::Random, 0);
    s.seed = seed;
    return s;
  }
  static InitStrategy explicit_layers(std::vector<int> layers) {
    InitStrategy s = make(Kind::Explicit, 0);
    s.layers = std::move(layers);
    return s;
  }

  /// Donor decoder layer copied into each student layer; empty for Random.
  std::vector<int> copy_indices(int teacher_layers, int student_layers) const;

  /// "max_spaced", "contiguous:N", "repeat:N", "random", "explicit:a,b,c".
  static InitStrategy parse(const std::string& text);
  std::string to_string() const;

 private:
  static InitStrategy make(Kind kind, int index) {
    InitStrategy s;
    s.kind = kind;
    s.index = index;
    return s;
  }
};

// ---------------------------------------------------------------------------
// Student initialization
// ---------------------------------------------------------------------------

namespace detail {

inline void check_student_dims(const ModelConfig& donor, const ModelConfig& student) {
  if (donor.vocab_size != student.vocab_size || donor.d_model != student.d_model ||
      donor.n_heads != student.n_heads || donor.ffn_dim != student.ffn_dim ||
      donor.max_positions != student.max_positions || donor.tie_output_embedding != student.tie_output_embedding) {
    throw std::invalid_argument("init_student: student dimensions must equal the donor's");
  }
  if (student.enc_layers > donor.enc_layers || student.dec_layers > donor.dec_layers) {
    throw std::invalid_argument("init_student: student is deeper than the donor");
  }
  if (student.dec_layers < 1) throw std::invalid_argument("init_student: student needs a decoder layer");
}

template <typename Layer>
Layer trainable_copy(const Layer& layer) {
  Layer out = layer;
  out.visit("", [](const std::string&, auto& t) { t.set_requires_grad(true); });
  return out;
}

}  // namespace detail

/// Builds a student by copying donor parameters.
///
/// Embeddings, final norms and an untied output projection are copied
/// verbatim. With `copy_full_encoder` every encoder layer is copied (the
/// student must have the donor's encoder depth); otherwise encoder layers are
/// chosen by select_copy_layers. Decoder layers follow `strategy`. All student
/// parameters start trainable.
template <typename Scalar>
Seq2SeqModel<Scalar> init_student(const Seq2SeqModel<Scalar>& donor, const ModelConfig& student_config,
                                  const InitStrategy& strategy, bool copy_full_encoder) {
  student_config.validate();
  detail::check_student_dims(donor.config, student_config);
  if (copy_full_encoder && student_config.enc_layers != donor.config.enc_layers) {
    throw std::invalid_argument("init_student: copy_full_encoder needs equal encoder depth");
  }

  Seq2SeqModel<Scalar> s;
  s.config = student_config;
  s.config.init_std = donor.config.init_std;
  s.token_embedding = donor.token_embedding;
  s.encoder_positions = donor.encoder_positions;
  s.decoder_positions = donor.decoder_positions;
  s.encoder_norm = donor.encoder_norm;
  s.decoder_norm = donor.decoder_norm;
  s.output_projection = donor.output_projection;

  if (student_config.enc_layers > 0) {
    for (int i : select_copy_layers(donor.config.enc_layers, student_config.enc_layers)) {
      s.encoder_layers.push_back(donor.encoder_layers[static_cast<std::size_t>(i)]);
    }
  }
  if (strategy.kind == InitStrategy::Kind::Random) {
    std::mt19937_64 rng(strategy.seed);
    for (int i = 0; i < student_config.dec_layers; ++i) {
      s.decoder_layers.push_back(random_decoder_layer<Scalar>(s.config, rng));
    }
  } else {
    for (int i : strategy.copy_indices(donor.config.dec_layers, student_config.dec_layers)) {
      s.decoder_layers.push_back(donor.decoder_layers[static_cast<std::size_t>(i)]);
    }
  }
  s.visit_parameters([](const std::string&, Tensor<Scalar>& t) {
    t.set_requires_grad(true);
    t.zero_grad();
  });
  return s;
}

// ---------------------------------------------------------------------------
// Losses (summed forms)
// ---------------------------------------------------------------------------

inline std::vector<bool> non_pad_mask(const std::vector<int>& labels, int pad_id = kPadId) {
  std::vector<bool> keep(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) keep[i] = labels[i] != pad_id;
  return keep;
}

/// -sum_t log p(y_t | y_<t, x) over non-PAD label positions.
template <typename Scalar>
Var<Scalar> loss_data(const HiddenTrace<Scalar>& trace, const std::vector<int>& labels, int pad_id = kPadId) {
  return cross_entropy_sum(trace.logits, labels, pad_id);
}

/// Same form as loss_data with teacher-generated labels in place of gold.
template <typename Scalar>
Var<Scalar> loss_pseudo(const HiddenTrace<Scalar>& trace, const std::vector<int>& pseudo_labels,
                        int pad_id = kPadId) {
  return cross_entropy_sum(trace.logits, pseudo_labels, pad_id);
}

/// sum_t KL(Q_t || P_t), Q the teacher softmax (constant) and P the student's.
template <typename Scalar>
Var<Scalar> loss_logits(const Var<Scalar>& student_logits, const Matrix<Scalar>& teacher_logits,
                        const std::vector<bool>& keep) {
  return kl_div_sum(student_logits, teacher_logits, keep);
}

/// sum_l MSE(H_l^student, H_phi(l)^teacher), each MSE averaged over
/// positions x width; teacher states are constants.
template <typename Scalar>
Var<Scalar> loss_hidden(const HiddenTrace<Scalar>& student, const TraceValues<Scalar>& teacher,
                        const std::vector<int>& phi) {
  if (phi.size() != student.decoder_states.size()) throw std::invalid_argument("loss_hidden: phi length mismatch");
  if (phi.empty()) throw std::invalid_argument("loss_hidden: student has no decoder layers");
  Var<Scalar> total;
  for (std::size_t l = 0; l < phi.size(); ++l) {
    if (phi[l] < 0 || phi[l] >= static_cast<int>(teacher.decoder_states.size())) {
      throw std::out_of_range("loss_hidden: phi entry out of range");
    }
    const auto& target = teacher.decoder_states[static_cast<std::size_t>(phi[l])];
    if (target.cols() != student.decoder_states[l].cols()) throw std::invalid_argument("loss_hidden: width mismatch");
    Var<Scalar> term = mse(student.decoder_states[l], target);
    total = total.valid() ? total + term : term;
  }
  return total;
}

/// Loss weights; at least one must be positive.
struct LossWeights {
  double alpha_logits = 0.8;
  double alpha_data = 1.0;
  double alpha_hidn = 3.0;

  void validate() const {
    if (alpha_logits < 0 || alpha_data < 0 || alpha_hidn < 0) {
      throw std::invalid_argument("loss weights must be non-negative");
    }
    if (alpha_logits == 0 && alpha_data == 0 && alpha_hidn == 0) {
      throw std::invalid_argument("at least one loss weight must be positive");
    }
  }
};

template <typename Scalar>
struct KdLoss {
  Var<Scalar> total;
  Scalar logits = 0;  // unweighted component values
  Scalar data = 0;
  Scalar hidden = 0;
};

/// alpha_logits * L_logits + alpha_data * L_data + alpha_hidn * L_hid.
/// Components with a zero weight are not built into the graph.
template <typename Scalar>
KdLoss<Scalar> loss_kd(const HiddenTrace<Scalar>& student, const TraceValues<Scalar>& teacher,
                       const std::vector<int>& labels, const LossWeights& weights, const std::vector<int>& phi,
                       int pad_id = kPadId) {
  weights.validate();
  KdLoss<Scalar> out;
  auto accumulate = [&out](Scalar w, const Var<Scalar>& term) {
    Var<Scalar> weighted = w * term;
    out.total = out.total.valid() ? out.total + weighted : weighted;
  };
  if (weights.alpha_logits > 0) {
    Var<Scalar> l = loss_logits(student.logits, teacher.logits, non_pad_mask(labels, pad_id));
    out.logits = l.scalar();
    accumulate(static_cast<Scalar>(weights.alpha_logits), l);
  }
  if (weights.alpha_data > 0) {
    Var<Scalar> l = loss_data(student, labels, pad_id);
    out.data = l.scalar();
    accumulate(static_cast<Scalar>(weights.alpha_data), l);
  }
  if (weights.alpha_hidn > 0) {
    Var<Scalar> l = loss_hidden(student, teacher, phi);
    out.hidden = l.scalar();
    accumulate(static_cast<Scalar>(weights.alpha_hidn), l);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Pseudo-labels and dataset combination
// ---------------------------------------------------------------------------

/// Teacher beam-search outputs for a set of sources.
struct PseudoLabelSet {
  std::vector<PairRecord> records;  // target holds the pseudo-label
  std::string teacher_id;
  int beam_size = 4;
  double length_penalty = 1.0;
  std::shared_ptr<const Vocabulary> vocab;

  std::size_t size() const { return records.size(); }
  PairDataset as_dataset() const { return {records, vocab}; }
};

/// One beam-search output per source, in dataset order. EOS is blocked at the
/// first step so every pseudo-target is non-empty. Records are split across
/// `threads` workers over a read-only teacher.
template <typename Scalar>
PseudoLabelSet generate_pseudolabels(const Seq2SeqModel<Scalar>& teacher, const PairDataset& data,
                                     const BeamParams& beam, const std::string& teacher_id, int threads = 1) {
  if (data.empty()) throw std::invalid_argument("generate_pseudolabels: empty dataset");
  BeamParams params = beam;
  params.min_len = std::max(params.min_len, 1);

  PseudoLabelSet out;
  out.teacher_id = teacher_id;
  out.beam_size = beam.beam_size;
  out.length_penalty = beam.length_penalty;
  out.vocab = data.vocab;
  out.records.resize(data.size());
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const auto& src = data.records[i].source;
      out.records[i] = {src, beam_search(teacher, src, params), Origin::pseudo_label(teacher_id)};
    }
  };
  const std::size_t n_threads = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), 1, data.size());
  if (n_threads == 1) {
    work(0, data.size());
  } else {
    std::vector<std::jthread> pool;
    const std::size_t chunk = (data.size() + n_threads - 1) / n_threads;
    for (std::size_t t = 0; t < n_threads; ++t) {
      const std::size_t begin = t * chunk, end = std::min(data.size(), begin + chunk);
      if (begin < end) pool.emplace_back(work, begin, end);
    }
  }
  return out;
}

/// Pseudo-label file: one JSON record per line with source_text,
/// pseudo_target_text, teacher_id, beam_size and length_penalty.
void save_pseudolabels(const PseudoLabelSet& labels, const std::filesystem::path& path);
PseudoLabelSet load_pseudolabels(const std::filesystem::path& path, std::shared_ptr<const Vocabulary> vocab);

enum class CombineMode { Orig, PL, OrigPlusPL, OrigPlusAllPL };
CombineMode parse_combine_mode(const std::string& text);

/// Orig: `orig` unchanged. PL: the first set (the teacher's own) alone.
/// OrigPlusPL: orig then the first set. OrigPlusAllPL: orig then every set in
/// argument order. Every set must cover orig's sources in the same order.
PairDataset combine_datasets(const PairDataset& orig, std::span<const PseudoLabelSet> pl_sets, CombineMode mode);

}  // namespace dk
