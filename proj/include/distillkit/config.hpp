#pragma once

#include <cstdint>
#include <string>

namespace dk {

inline constexpr int kPadId = 0;
inline constexpr int kBosId = 1;
inline constexpr int kEosId = 2;
inline constexpr int kUnkId = 3;
inline constexpr int kReservedTokens = 4;

/// Learned position tables carry this many extra leading rows (BART layout).
inline constexpr int kPositionOffset = 2;

/// Architecture hyperparameters of an encoder-decoder transformer.
struct ModelConfig {
  int vocab_size = 64;
  int d_model = 32;
  int n_heads = 4;
  int ffn_dim = 64;
  int enc_layers = 2;
  int dec_layers = 2;
  int max_positions = 64;
  bool tie_output_embedding = true;
  double init_std = 0.02;

  /// Throws std::invalid_argument naming the first violated constraint.
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

/// Parameters in one encoder layer: self-attention, FFN and two norms.
std::int64_t encoder_layer_params(const ModelConfig& config);

/// Parameters in one decoder layer: adds cross-attention and its norm.
std::int64_t decoder_layer_params(const ModelConfig& config);

/// Exact parameter count, counting a tied output projection once.
std::int64_t count_params(const ModelConfig& config);

/// Parses the "E-D" size notation (encoder layers - decoder layers).
struct LayerCounts {
  int enc_layers = 0;
  int dec_layers = 0;
};
LayerCounts parse_size_spec(const std::string& spec);

}  // namespace dk
