#pragma once

#include "distillkit/config.hpp"
#include "distillkit/ops.hpp"
#include "distillkit/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace dk {

template <typename Scalar>
struct Linear {
  Tensor<Scalar> weight;  // in x out
  Tensor<Scalar> bias;    // 1 x out

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + ".weight", weight);
    f(prefix + ".bias", bias);
  }
  template <typename F>
  void visit(const std::string& prefix, F&& f) const {
    f(prefix + ".weight", weight);
    f(prefix + ".bias", bias);
  }
};

template <typename Scalar>
struct NormParams {
  Tensor<Scalar> gain;
  Tensor<Scalar> bias;

  template <typename F>
  void visit(const std::string& prefix, F&& f) {
    f(prefix + ".gain", gain);
    f(prefix + ".bias", bias);
  }
  template <typename F>
  void visit(const std::string& prefix, F&& f) const {
    f(prefix + ".gain", gain);
    f(prefix + ".bias", bias);
  }
};

template <typename Scalar>
struct AttentionParams {
  Linear<Scalar> query, key, value, output;

  template <typename Self, typename F>
  static void visit_all(Self& self, const std::string& prefix, F&& f) {
    self.query.visit(prefix + ".query", f);
    self.key.visit(prefix + ".key", f);
    self.value.visit(prefix + ".value", f);
    self.output.visit(prefix + ".output", f);
  }
  template <typename F>
  void visit(const std::string& prefix, F&& f) { visit_all(*this, prefix, f); }
  template <typename F>
  void visit(const std::string& prefix, F&& f) const { visit_all(*this, prefix, f); }
};

template <typename Scalar>
struct EncoderLayer {
  NormParams<Scalar> self_attn_norm;
  AttentionParams<Scalar> self_attn;
  NormParams<Scalar> ffn_norm;
  Linear<Scalar> fc1, fc2;

  template <typename Self, typename F>
  static void visit_all(Self& self, const std::string& prefix, F&& f) {
    self.self_attn_norm.visit(prefix + ".self_attn_norm", f);
    self.self_attn.visit(prefix + ".self_attn", f);
    self.ffn_norm.visit(prefix + ".ffn_norm", f);
    self.fc1.visit(prefix + ".fc1", f);
    self.fc2.visit(prefix + ".fc2", f);
  }
  template <typename F>
  void visit(const std::string& prefix, F&& f) { visit_all(*this, prefix, f); }
  template <typename F>
  void visit(const std::string& prefix, F&& f) const { visit_all(*this, prefix, f); }
};

template <typename Scalar>
struct DecoderLayer {
  NormParams<Scalar> self_attn_norm;
  AttentionParams<Scalar> self_attn;
  NormParams<Scalar> cross_attn_norm;
  AttentionParams<Scalar> cross_attn;
  NormParams<Scalar> ffn_norm;
  Linear<Scalar> fc1, fc2;

  template <typename Self, typename F>
  static void visit_all(Self& self, const std::string& prefix, F&& f) {
    self.self_attn_norm.visit(prefix + ".self_attn_norm", f);
    self.self_attn.visit(prefix + ".self_attn", f);
    self.cross_attn_norm.visit(prefix + ".cross_attn_norm", f);
    self.cross_attn.visit(prefix + ".cross_attn", f);
    self.ffn_norm.visit(prefix + ".ffn_norm", f);
    self.fc1.visit(prefix + ".fc1", f);
    self.fc2.visit(prefix + ".fc2", f);
  }
  template <typename F>
  void visit(const std::string& prefix, F&& f) { visit_all(*this, prefix, f); }
  template <typename F>
  void visit(const std::string& prefix, F&& f) const { visit_all(*this, prefix, f); }
};

/// Pre-norm encoder-decoder transformer with learned positions.
///
/// Every sublayer is residual: x + f(norm(x)). The output projection is the
/// token embedding (transposed) unless `config.tie_output_embedding` is false,
/// in which case `output_projection` holds a separate d_model x vocab matrix.
template <typename Scalar>
struct Seq2SeqModel {
  ModelConfig config;
  Tensor<Scalar> token_embedding;
  Tensor<Scalar> encoder_positions;
  Tensor<Scalar> decoder_positions;
  std::vector<EncoderLayer<Scalar>> encoder_layers;
  std::vector<DecoderLayer<Scalar>> decoder_layers;
  NormParams<Scalar> encoder_norm;
  NormParams<Scalar> decoder_norm;
  Tensor<Scalar> output_projection;

  template <typename Self, typename F>
  static void visit_all(Self& self, F&& f) {
    f(std::string("embed.tokens"), self.token_embedding);
    f(std::string("encoder.positions"), self.encoder_positions);
    f(std::string("decoder.positions"), self.decoder_positions);
    for (std::size_t i = 0; i < self.encoder_layers.size(); ++i) {
      self.encoder_layers[i].visit("encoder.layers." + std::to_string(i), f);
    }
    self.encoder_norm.visit("encoder.final_norm", f);
    for (std::size_t i = 0; i < self.decoder_layers.size(); ++i) {
      self.decoder_layers[i].visit("decoder.layers." + std::to_string(i), f);
    }
    self.decoder_norm.visit("decoder.final_norm", f);
    if (!self.config.tie_output_embedding) f(std::string("output.projection"), self.output_projection);
  }

  /// Calls f(name, tensor) for every parameter in a fixed order.
  template <typename F>
  void visit_parameters(F&& f) { visit_all(*this, f); }
  template <typename F>
  void visit_parameters(F&& f) const { visit_all(*this, f); }

  std::int64_t parameter_count() const {
    std::int64_t total = 0;
    visit_parameters([&](const std::string&, const Tensor<Scalar>& t) { total += t.size(); });
    return total;
  }

  std::vector<Tensor<Scalar>*> parameters() {
    std::vector<Tensor<Scalar>*> out;
    visit_parameters([&](const std::string&, Tensor<Scalar>& t) { out.push_back(&t); });
    return out;
  }

  void zero_grad() const {
    visit_parameters([](const std::string&, const Tensor<Scalar>& t) { t.zero_grad(); });
  }
};

// ---------------------------------------------------------------------------
// Initialization
// ---------------------------------------------------------------------------

namespace detail {

template <typename Scalar>
Tensor<Scalar> normal_tensor(Index rows, Index cols, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix<Scalar> m(rows, cols);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<Scalar>(dist(rng));
  return Tensor<Scalar>(std::move(m));
}

template <typename Scalar>
Linear<Scalar> random_linear(Index in, Index out, double stddev, std::mt19937_64& rng) {
  return {normal_tensor<Scalar>(in, out, stddev, rng), Tensor<Scalar>(Matrix<Scalar>::Zero(1, out))};
}

template <typename Scalar>
NormParams<Scalar> unit_norm(Index d) {
  return {Tensor<Scalar>(Matrix<Scalar>::Ones(1, d)), Tensor<Scalar>(Matrix<Scalar>::Zero(1, d))};
}

template <typename Scalar>
AttentionParams<Scalar> random_attention(Index d, double stddev, std::mt19937_64& rng) {
  AttentionParams<Scalar> a;
  a.query = random_linear<Scalar>(d, d, stddev, rng);
  a.key = random_linear<Scalar>(d, d, stddev, rng);
  a.value = random_linear<Scalar>(d, d, stddev, rng);
  a.output = random_linear<Scalar>(d, d, stddev, rng);
  return a;
}

}  // namespace detail

template <typename Scalar>
EncoderLayer<Scalar> random_encoder_layer(const ModelConfig& c, std::mt19937_64& rng) {
  EncoderLayer<Scalar> layer;
  layer.self_attn_norm = detail::unit_norm<Scalar>(c.d_model);
  layer.self_attn = detail::random_attention<Scalar>(c.d_model, c.init_std, rng);
  layer.ffn_norm = detail::unit_norm<Scalar>(c.d_model);
  layer.fc1 = detail::random_linear<Scalar>(c.d_model, c.ffn_dim, c.init_std, rng);
  layer.fc2 = detail::random_linear<Scalar>(c.ffn_dim, c.d_model, c.init_std, rng);
  return layer;
}

template <typename Scalar>
DecoderLayer<Scalar> random_decoder_layer(const ModelConfig& c, std::mt19937_64& rng) {
  DecoderLayer<Scalar> layer;
  layer.self_attn_norm = detail::unit_norm<Scalar>(c.d_model);
  layer.self_attn = detail::random_attention<Scalar>(c.d_model, c.init_std, rng);
  layer.cross_attn_norm = detail::unit_norm<Scalar>(c.d_model);
  layer.cross_attn = detail::random_attention<Scalar>(c.d_model, c.init_std, rng);
  layer.ffn_norm = detail::unit_norm<Scalar>(c.d_model);
  layer.fc1 = detail::random_linear<Scalar>(c.d_model, c.ffn_dim, c.init_std, rng);
  layer.fc2 = detail::random_linear<Scalar>(c.ffn_dim, c.d_model, c.init_std, rng);
  return layer;
}

/// Randomly initialized model: N(0, init_std) weights and embeddings, zero
/// biases, unit norms. Deterministic in `seed`.
template <typename Scalar>
Seq2SeqModel<Scalar> make_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  Seq2SeqModel<Scalar> m;
  m.config = config;
  const Index positions = config.max_positions + kPositionOffset;
  m.token_embedding = detail::normal_tensor<Scalar>(config.vocab_size, config.d_model, config.init_std, rng);
  m.encoder_positions = detail::normal_tensor<Scalar>(positions, config.d_model, config.init_std, rng);
  m.decoder_positions = detail::normal_tensor<Scalar>(positions, config.d_model, config.init_std, rng);
  for (int i = 0; i < config.enc_layers; ++i) m.encoder_layers.push_back(random_encoder_layer<Scalar>(config, rng));
  for (int i = 0; i < config.dec_layers; ++i) m.decoder_layers.push_back(random_decoder_layer<Scalar>(config, rng));
  m.encoder_norm = detail::unit_norm<Scalar>(config.d_model);
  m.decoder_norm = detail::unit_norm<Scalar>(config.d_model);
  if (!config.tie_output_embedding) {
    m.output_projection = detail::normal_tensor<Scalar>(config.d_model, config.vocab_size, config.init_std, rng);
  }
  return m;
}

/// Converts every parameter to another scalar type, preserving freeze flags.
template <typename To, typename From>
Seq2SeqModel<To> cast_model(const Seq2SeqModel<From>& src) {
  Seq2SeqModel<To> dst;
  dst.config = src.config;
  dst.encoder_layers.resize(src.encoder_layers.size());
  dst.decoder_layers.resize(src.decoder_layers.size());
  std::vector<const Tensor<From>*> from;
  src.visit_parameters([&](const std::string&, const Tensor<From>& t) { from.push_back(&t); });
  std::size_t i = 0;
  dst.visit_parameters([&](const std::string&, Tensor<To>& t) {
    t = Tensor<To>(from[i]->value().template cast<To>(), from[i]->requires_grad());
    ++i;
  });
  return dst;
}

// ---------------------------------------------------------------------------
// Forward pass
// ---------------------------------------------------------------------------

inline constexpr double kLayerNormEps = 1e-5;

template <typename Scalar>
struct EncoderOutput {
  Var<Scalar> memory;                  // final-normed encoder output
  std::vector<bool> mask;              // true where the source token is not PAD
  std::vector<Var<Scalar>> layer_states;
};

template <typename Scalar>
struct DecoderOutput {
  Var<Scalar> logits;
  std::vector<Var<Scalar>> layer_states;
};

/// Graph-bound record of a teacher-forced pass. `decoder_states[l]` is the
/// residual stream leaving decoder layer l.
template <typename Scalar>
struct HiddenTrace {
  std::vector<Var<Scalar>> encoder_states;
  std::vector<Var<Scalar>> decoder_states;
  Var<Scalar> logits;  // target_len x vocab
};

/// Plain values of a HiddenTrace, detached from any graph.
template <typename Scalar>
struct TraceValues {
  std::vector<Matrix<Scalar>> encoder_states;
  std::vector<Matrix<Scalar>> decoder_states;
  Matrix<Scalar> logits;
};

template <typename Scalar>
TraceValues<Scalar> detach(const HiddenTrace<Scalar>& trace) {
  TraceValues<Scalar> out;
  for (const auto& v : trace.encoder_states) out.encoder_states.push_back(v.value());
  for (const auto& v : trace.decoder_states) out.decoder_states.push_back(v.value());
  out.logits = trace.logits.value();
  return out;
}

namespace detail {

inline void check_tokens(const ModelConfig& c, const std::vector<int>& ids, const char* what) {
  if (ids.empty()) throw std::invalid_argument(std::string(what) + " sequence is empty");
  if (static_cast<int>(ids.size()) > c.max_positions) {
    throw std::length_error(std::string(what) + " sequence longer than max_positions");
  }
  for (int id : ids) {
    if (id < 0 || id >= c.vocab_size) throw std::out_of_range(std::string(what) + " token id out of range");
  }
}

inline std::vector<int> position_ids(std::size_t n) {
  std::vector<int> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = static_cast<int>(i) + kPositionOffset;
  return ids;
}

template <typename Scalar>
Var<Scalar> linear(Graph<Scalar>& g, const Var<Scalar>& x, const Linear<Scalar>& p) {
  return add_row(matmul(x, g.param(p.weight)), g.param(p.bias));
}

template <typename Scalar>
Var<Scalar> norm(Graph<Scalar>& g, const Var<Scalar>& x, const NormParams<Scalar>& p) {
  return layer_norm(x, g.param(p.gain), g.param(p.bias), static_cast<Scalar>(kLayerNormEps));
}

template <typename Scalar>
Var<Scalar> attend(Graph<Scalar>& g, const AttentionParams<Scalar>& p, const Var<Scalar>& queries,
                   const Var<Scalar>& keys_values, int n_heads, bool causal, const std::vector<bool>& key_mask) {
  Var<Scalar> q = linear(g, queries, p.query);
  Var<Scalar> k = linear(g, keys_values, p.key);
  Var<Scalar> v = linear(g, keys_values, p.value);
  return linear(g, attention(q, k, v, n_heads, causal, key_mask), p.output);
}

template <typename Scalar>
Var<Scalar> feed_forward(Graph<Scalar>& g, const Var<Scalar>& x, const Linear<Scalar>& fc1,
                         const Linear<Scalar>& fc2) {
  return linear(g, gelu(linear(g, x, fc1)), fc2);
}

}  // namespace detail

template <typename Scalar>
EncoderOutput<Scalar> encode(Graph<Scalar>& g, const Seq2SeqModel<Scalar>& m, const std::vector<int>& source) {
  detail::check_tokens(m.config, source, "source");
  EncoderOutput<Scalar> out;
  out.mask.resize(source.size());
  for (std::size_t i = 0; i < source.size(); ++i) out.mask[i] = source[i] != kPadId;
  Var<Scalar> x = embedding(g.param(m.token_embedding), source) +
                  embedding(g.param(m.encoder_positions), detail::position_ids(source.size()));
  const std::vector<bool> no_causal_mask;
  for (const auto& layer : m.encoder_layers) {
    Var<Scalar> h = detail::norm(g, x, layer.self_attn_norm);
    x = x + detail::attend(g, layer.self_attn, h, h, m.config.n_heads, false, out.mask);
    x = x + detail::feed_forward(g, detail::norm(g, x, layer.ffn_norm), layer.fc1, layer.fc2);
    out.layer_states.push_back(x);
  }
  out.memory = detail::norm(g, x, m.encoder_norm);
  return out;
}

/// Runs the decoder stack on `decoder_input` against `memory`. The memory may
/// come from another model's encoder (shared-encoder distillation).
template <typename Scalar>
DecoderOutput<Scalar> decode(Graph<Scalar>& g, const Seq2SeqModel<Scalar>& m, const Var<Scalar>& memory,
                             const std::vector<bool>& memory_mask, const std::vector<int>& decoder_input) {
  detail::check_tokens(m.config, decoder_input, "decoder input");
  if (memory.cols() != m.config.d_model) throw std::invalid_argument("decode: memory width mismatch");
  DecoderOutput<Scalar> out;
  const std::vector<bool> self_mask(decoder_input.size(), true);
  Var<Scalar> x = embedding(g.param(m.token_embedding), decoder_input) +
                  embedding(g.param(m.decoder_positions), detail::position_ids(decoder_input.size()));
  for (const auto& layer : m.decoder_layers) {
    Var<Scalar> h = detail::norm(g, x, layer.self_attn_norm);
    x = x + detail::attend(g, layer.self_attn, h, h, m.config.n_heads, true, self_mask);
    x = x + detail::attend(g, layer.cross_attn, detail::norm(g, x, layer.cross_attn_norm), memory,
                           m.config.n_heads, false, memory_mask);
    x = x + detail::feed_forward(g, detail::norm(g, x, layer.ffn_norm), layer.fc1, layer.fc2);
    out.layer_states.push_back(x);
  }
  Var<Scalar> final_hidden = detail::norm(g, x, m.decoder_norm);
  out.logits = m.config.tie_output_embedding ? matmul_nt(final_hidden, g.param(m.token_embedding))
                                             : matmul(final_hidden, g.param(m.output_projection));
  return out;
}

/// Decoder input for teacher forcing: BOS followed by all but the last label.
inline std::vector<int> shift_right(const std::vector<int>& labels) {
  std::vector<int> out;
  out.reserve(labels.size());
  out.push_back(kBosId);
  if (!labels.empty()) out.insert(out.end(), labels.begin(), labels.end() - 1);
  return out;
}

/// Labels for a content sequence: the tokens followed by EOS.
inline std::vector<int> with_eos(std::vector<int> tokens) {
  tokens.push_back(kEosId);
  return tokens;
}

/// Teacher-forced pass. Row t of the logits scores labels[t] given the source
/// and labels[0..t-1].
template <typename Scalar>
HiddenTrace<Scalar> forward_teacher_forced(Graph<Scalar>& g, const Seq2SeqModel<Scalar>& m,
                                           const std::vector<int>& source, const std::vector<int>& labels) {
  detail::check_tokens(m.config, labels, "target");
  EncoderOutput<Scalar> enc = encode(g, m, source);
  DecoderOutput<Scalar> dec = decode(g, m, enc.memory, enc.mask, shift_right(labels));
  return {std::move(enc.layer_states), std::move(dec.layer_states), dec.logits};
}

// ---------------------------------------------------------------------------
// Decoding
// ---------------------------------------------------------------------------

struct BeamParams {
  int beam_size = 4;
  int max_len = 32;
  double length_penalty = 1.0;
  int min_len = 0;  // EOS is not allowed before this many tokens
};

namespace detail {

inline bool token_allowed(int token, std::size_t generated, int min_len) {
  if (token == kPadId || token == kBosId) return false;
  if (token == kEosId && static_cast<int>(generated) < min_len) return false;
  return true;
}

template <typename Scalar>
RowVector<double> next_log_probs(const Seq2SeqModel<Scalar>& m, const Matrix<Scalar>& memory,
                                 const std::vector<bool>& mask, const std::vector<int>& prefix) {
  Graph<Scalar> g(false);
  std::vector<int> input;
  input.reserve(prefix.size() + 1);
  input.push_back(kBosId);
  input.insert(input.end(), prefix.begin(), prefix.end());
  DecoderOutput<Scalar> out = decode(g, m, g.constant(memory), mask, input);
  const auto& logits = out.logits.value();
  Matrix<Scalar> last = logits.row(logits.rows() - 1);
  return log_softmax_rows(last).template cast<double>().row(0);
}

template <typename Scalar>
Matrix<Scalar> encode_memory(const Seq2SeqModel<Scalar>& m, const std::vector<int>& source, std::vector<bool>& mask) {
  Graph<Scalar> g(false);
  EncoderOutput<Scalar> enc = encode(g, m, source);
  mask = enc.mask;
  return enc.memory.value();
}

inline void check_max_len(const ModelConfig& c, int max_len) {
  if (max_len < 1) throw std::invalid_argument("max_len must be at least 1");
  if (max_len > c.max_positions) throw std::invalid_argument("max_len exceeds max_positions");
}

}  // namespace detail

/// Argmax decoding until EOS or max_len tokens; the EOS is not returned.
/// Ties go to the lower token id.
template <typename Scalar>
std::vector<int> greedy_decode(const Seq2SeqModel<Scalar>& m, const std::vector<int>& source, int max_len,
                               int min_len = 0) {
  detail::check_max_len(m.config, max_len);
  std::vector<bool> mask;
  const Matrix<Scalar> memory = detail::encode_memory(m, source, mask);
  std::vector<int> out;
  while (static_cast<int>(out.size()) < max_len) {
    const RowVector<double> logp = detail::next_log_probs(m, memory, mask, out);
    int best = -1;
    for (int t = 0; t < logp.size(); ++t) {
      if (!detail::token_allowed(t, out.size(), min_len)) continue;
      if (best < 0 || logp(t) > logp(best)) best = t;
    }
    if (best < 0) throw std::runtime_error("greedy_decode: no token may be generated");
    if (best == kEosId) break;
    out.push_back(best);
  }
  return out;
}

/// Beam search scored by sum(log p) / length^length_penalty, where length
/// counts generated tokens including a final EOS. A hypothesis completes on
/// EOS or at max_len tokens. Candidates are ranked by cumulative log-prob,
/// ties going to the lexicographically smaller token sequence; among
/// completed hypotheses ties go to the smaller sequence, then the earlier
/// completion. The returned sequence excludes EOS.
template <typename Scalar>
std::vector<int> beam_search(const Seq2SeqModel<Scalar>& m, const std::vector<int>& source, const BeamParams& params) {
  if (params.beam_size < 1) throw std::invalid_argument("beam_size must be at least 1");
  detail::check_max_len(m.config, params.max_len);
  std::vector<bool> mask;
  const Matrix<Scalar> memory = detail::encode_memory(m, source, mask);

  struct Hyp {
    std::vector<int> tokens;
    double logp = 0.0;
  };
  struct Done {
    std::vector<int> tokens;
    double score = 0.0;
    int step = 0;
  };
  auto by_logp = [](const Hyp& a, const Hyp& b) {
    if (a.logp != b.logp) return a.logp > b.logp;
    return a.tokens < b.tokens;
  };

  std::vector<Hyp> live{Hyp{}};
  std::vector<Done> done;
  for (int step = 1; step <= params.max_len && !live.empty(); ++step) {
    std::vector<Hyp> candidates;
    for (const Hyp& h : live) {
      const RowVector<double> logp = detail::next_log_probs(m, memory, mask, h.tokens);
      for (int t = 0; t < logp.size(); ++t) {
        if (!detail::token_allowed(t, h.tokens.size(), params.min_len)) continue;
        Hyp c{h.tokens, h.logp + logp(t)};
        c.tokens.push_back(t);
        candidates.push_back(std::move(c));
      }
    }
    if (candidates.empty()) throw std::runtime_error("beam_search: no token may be generated");
    const std::size_t keep = std::min<std::size_t>(candidates.size(), static_cast<std::size_t>(params.beam_size));
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep), candidates.end(),
                      by_logp);
    candidates.resize(keep);
    live.clear();
    for (Hyp& c : candidates) {
      if (c.tokens.back() == kEosId || step == params.max_len) {
        const double length = static_cast<double>(c.tokens.size());
        done.push_back({std::move(c.tokens), c.logp / std::pow(length, params.length_penalty), step});
      } else {
        live.push_back(std::move(c));
      }
    }
  }

  const Done* best = nullptr;
  for (const Done& d : done) {
    if (!best || d.score > best->score ||
        (d.score == best->score && (d.tokens < best->tokens || (d.tokens == best->tokens && d.step < best->step)))) {
      best = &d;
    }
  }
  std::vector<int> out = best->tokens;
  if (!out.empty() && out.back() == kEosId) out.pop_back();
  return out;
}

}  // namespace dk
