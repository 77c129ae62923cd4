#include "distillkit/config.hpp"

#include <stdexcept>

namespace dk {

void ModelConfig::validate() const {
  if (vocab_size <= kReservedTokens) throw std::invalid_argument("vocab_size must exceed the reserved tokens");
  if (d_model <= 0) throw std::invalid_argument("d_model must be positive");
  if (n_heads <= 0) throw std::invalid_argument("n_heads must be positive");
  if (d_model % n_heads != 0) throw std::invalid_argument("d_model must be divisible by n_heads");
  if (ffn_dim <= 0) throw std::invalid_argument("ffn_dim must be positive");
  if (enc_layers < 0 || dec_layers < 0) throw std::invalid_argument("layer counts must be non-negative");
  if (max_positions <= 0) throw std::invalid_argument("max_positions must be positive");
  if (!(init_std > 0.0)) throw std::invalid_argument("init_std must be positive");
}

namespace {

std::int64_t attention_params(std::int64_t d) { return 4 * (d * d + d); }
std::int64_t norm_params(std::int64_t d) { return 2 * d; }
std::int64_t ffn_params(std::int64_t d, std::int64_t f) { return d * f + f + f * d + d; }

}  // namespace

std::int64_t encoder_layer_params(const ModelConfig& c) {
  const std::int64_t d = c.d_model;
  return attention_params(d) + ffn_params(d, c.ffn_dim) + 2 * norm_params(d);
}

std::int64_t decoder_layer_params(const ModelConfig& c) {
  const std::int64_t d = c.d_model;
  return 2 * attention_params(d) + ffn_params(d, c.ffn_dim) + 3 * norm_params(d);
}

std::int64_t count_params(const ModelConfig& c) {
  c.validate();
  const std::int64_t d = c.d_model;
  const std::int64_t vocab = c.vocab_size;
  const std::int64_t positions = c.max_positions + kPositionOffset;
  std::int64_t total = vocab * d;               // token embedding (shared by both stacks)
  total += 2 * positions * d;                   // encoder and decoder position tables
  total += 2 * norm_params(d);                  // final encoder and decoder norms
  if (!c.tie_output_embedding) total += d * vocab;
  total += c.enc_layers * encoder_layer_params(c);
  total += c.dec_layers * decoder_layer_params(c);
  return total;
}

LayerCounts parse_size_spec(const std::string& spec) {
  const auto dash = spec.find('-');
  if (dash == std::string::npos || dash == 0 || dash + 1 == spec.size()) {
    throw std::invalid_argument("size spec must look like E-D, got '" + spec + "'");
  }
  LayerCounts out;
  std::size_t used = 0;
  try {
    const std::string enc = spec.substr(0, dash);
    const std::string dec = spec.substr(dash + 1);
    out.enc_layers = std::stoi(enc, &used);
    if (used != enc.size()) throw std::invalid_argument("");
    out.dec_layers = std::stoi(dec, &used);
    if (used != dec.size()) throw std::invalid_argument("");
  } catch (const std::exception&) {
    throw std::invalid_argument("size spec must look like E-D, got '" + spec + "'");
  }
  if (out.enc_layers < 0 || out.dec_layers < 1) throw std::invalid_argument("size spec needs E >= 0 and D >= 1");
  return out;
}

}  // namespace dk
